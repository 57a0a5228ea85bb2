import numpy as np
import pytest

import topoclust.autodiff as ad
from conftest import check_gradient, tape_gradient


def weighted_sum(node, rmat):
    return ad.reduce_sum(ad.multiply(node, ad.constant(rmat)))


class TestForwardValues:
    def test_sigmoid_at_zero(self):
        out = ad.sigmoid(ad.constant(np.zeros((3, 3))))
        np.testing.assert_allclose(out.value, 0.5)

    def test_row_minmax_simple(self):
        out = ad.row_minmax(ad.constant([[1.0, 3.0, 5.0]]))
        np.testing.assert_allclose(out.value, [[0.0, 0.5, 1.0]])

    def test_row_minmax_degenerate_row(self):
        out = ad.row_minmax(ad.constant([[2.0, 2.0, 2.0, 2.0]]))
        np.testing.assert_allclose(out.value, 0.25)

    def test_row_sum_normalize(self):
        out = ad.row_sum_normalize(ad.constant([[1.0, 3.0]]))
        np.testing.assert_allclose(out.value, [[0.25, 0.75]])
        with pytest.raises(ad.ShapeError):
            ad.row_sum_normalize(ad.constant([[0.0, 0.0]]))

    def test_relu(self):
        out = ad.relu(ad.constant([[-1.0, 2.0]]))
        np.testing.assert_allclose(out.value, [[0.0, 2.0]])

    def test_nan_rejected_at_creation(self):
        with pytest.raises(ad.NonFiniteError):
            ad.constant([[np.nan]])

    def test_shape_mismatch(self):
        a = ad.constant(np.ones((2, 3)))
        with pytest.raises(ad.ShapeError):
            ad.add(a, ad.constant(np.ones((3, 2))))
        with pytest.raises(ad.ShapeError):
            ad.matmul(a, ad.constant(np.ones((2, 2))))

    def test_singular_inverse_rejected(self):
        with pytest.raises(ad.SingularMatrixError):
            ad.matrix_inverse(ad.constant(np.ones((2, 2))))


class TestGradients:
    """Analytic vs central finite differences, h=1e-5, tolerance 1e-4."""

    def test_each_primitive(self, rng):
        x = rng.normal(size=(5, 4))
        r = rng.normal(size=(5, 4))
        cases = {
            "add": lambda n: weighted_sum(ad.add(n, ad.constant(x + 1)), r),
            "subtract": lambda n: weighted_sum(ad.subtract(n, ad.constant(x - 2)), r),
            "scale": lambda n: weighted_sum(ad.scale(n, -1.7), r),
            "multiply": lambda n: weighted_sum(ad.multiply(n, ad.constant(x * 2 + 1)), r),
            "transpose": lambda n: weighted_sum(ad.transpose(n), r.T),
            "sigmoid": lambda n: weighted_sum(ad.sigmoid(n), r),
            "relu": lambda n: weighted_sum(ad.relu(n), r),
            "row_minmax": lambda n: weighted_sum(ad.row_minmax(n), r),
            "row_sum_normalize": lambda n: weighted_sum(
                ad.row_sum_normalize(ad.sigmoid(n)), r),
            "reduce_sum": lambda n: ad.reduce_sum(n),
            "mse": lambda n: ad.mse_loss(n, ad.constant(x * 0.3)),
        }
        for name, build in cases.items():
            check_gradient(build, x.copy())

    def test_matmul_both_sides(self, rng):
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(3, 5))
        r = rng.normal(size=(4, 5))
        check_gradient(lambda n: weighted_sum(ad.matmul(n, ad.constant(b)), r), a)
        check_gradient(lambda n: weighted_sum(ad.matmul(ad.constant(a), n), r), b)

    def test_matrix_inverse(self, rng):
        a = rng.normal(size=(4, 4)) + 4 * np.eye(4)
        r = rng.normal(size=(4, 4))
        check_gradient(lambda n: weighted_sum(ad.matrix_inverse(n), r), a)

    def test_weighted_bce(self, rng):
        p = rng.uniform(0.05, 0.95, size=(6, 6))
        t = (rng.random((6, 6)) < 0.3).astype(float)
        check_gradient(
            lambda n: ad.weighted_bce_loss(n, ad.constant(t), pos_weight=4.0), p)

    def test_random_compositions(self, rng):
        # chains of depth <= 6 through mixed primitives
        for trial in range(5):
            w = rng.normal(size=(4, 3))
            x = rng.normal(size=(5, 4))
            r = rng.normal(size=(5, 3))

            def build(n, x=x, r=r):
                z = ad.matmul(ad.constant(x), n)
                z = ad.sigmoid(z)
                z = ad.row_minmax(z)
                z = ad.add(z, ad.scale(z, 0.5))
                return weighted_sum(z, r)

            check_gradient(build, w)

    def test_backward_linearity_exact(self, rng):
        x = rng.normal(size=(3, 3))
        r1, r2 = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        a_coef, b_coef = 2.0, -0.5  # powers of two keep float products exact

        def combined(n):
            return ad.add(ad.scale(weighted_sum(ad.sigmoid(n), r1), a_coef),
                          ad.scale(ad.mse_loss(n, ad.constant(r2)), b_coef))

        g_comb = tape_gradient(combined, x)
        g_f = tape_gradient(lambda n: weighted_sum(ad.sigmoid(n), r1), x)
        g_g = tape_gradient(lambda n: ad.mse_loss(n, ad.constant(r2)), x)
        np.testing.assert_array_equal(g_comb, a_coef * g_f + b_coef * g_g)


class TestRegularizedPinv:
    def test_identity(self):
        out = ad.regularized_pinv(ad.constant(np.eye(4)), lam=0.0)
        np.testing.assert_allclose(out.value, np.eye(4), atol=1e-12)

    def test_orthonormal_rows(self, rng):
        q, _ = np.linalg.qr(rng.normal(size=(8, 3)))
        c = q.T  # 3x8 with orthonormal rows
        out = ad.regularized_pinv(ad.constant(c), lam=0.0)
        np.testing.assert_allclose(out.value, c.T, atol=1e-10)

    def test_residual_small(self, rng):
        c = rng.normal(size=(3, 8))
        pinv = ad.regularized_pinv(ad.constant(c), lam=1e-6).value
        assert np.max(np.abs(c @ pinv - np.eye(3))) < 1e-4

    def test_residual_monotone_in_lambda(self, rng):
        c = rng.normal(size=(4, 9))
        residuals = []
        for lam in (1e-2, 1e-4, 1e-6):
            pinv = ad.regularized_pinv(ad.constant(c), lam=lam).value
            residuals.append(np.max(np.abs(c @ pinv - np.eye(4))))
        assert residuals[0] > residuals[1] > residuals[2]

    def test_rank_error(self, rng):
        with pytest.raises(ad.RankError):
            ad.regularized_pinv(ad.constant(rng.normal(size=(5, 3))))

    def test_gradient(self, rng):
        c = rng.normal(size=(3, 8))
        r = rng.normal(size=(8, 3))
        check_gradient(lambda n: weighted_sum(ad.regularized_pinv(n, 1e-6), r), c)


class TestTapeContract:
    def test_non_scalar_loss(self, rng):
        tape = ad.GradientTape()
        x = tape.parameter(rng.normal(size=(2, 2)))
        y = ad.sigmoid(x)
        with pytest.raises(ad.TapeError):
            tape.backward(y)

    def test_double_backward(self, rng):
        tape = ad.GradientTape()
        x = tape.parameter(rng.normal(size=(2, 2)))
        loss = ad.reduce_sum(x)
        tape.backward(loss)
        with pytest.raises(ad.TapeError):
            tape.backward(loss)

    def test_mixed_tapes(self, rng):
        t1, t2 = ad.GradientTape(), ad.GradientTape()
        with pytest.raises(ad.TapeError):
            ad.add(t1.parameter(np.ones((2, 2))), t2.parameter(np.ones((2, 2))))

    def test_unreachable_parameter_gets_zeros(self, rng):
        tape = ad.GradientTape()
        x = tape.parameter(rng.normal(size=(2, 2)))
        unused = tape.parameter(rng.normal(size=(3, 3)))
        tape.backward(ad.reduce_sum(x), [x, unused])
        np.testing.assert_array_equal(unused.grad, np.zeros((3, 3)))
        assert x.grad is not None

    def test_matmul_sum_identity(self, rng):
        # d/dA sum(A B) = 1 B^T, the textbook pattern
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        g = tape_gradient(lambda n: ad.reduce_sum(ad.matmul(n, ad.constant(b))), a)
        np.testing.assert_allclose(g, np.ones((3, 2)) @ b.T, rtol=1e-12)


class TestAdam:
    def test_zero_gradient_no_move(self):
        opt = ad.Adam(lr=0.01)
        p0 = np.ones((2, 2))
        (p1,) = opt.step([p0], [np.zeros((2, 2))])
        np.testing.assert_array_equal(p1, p0)

    def test_first_step_magnitude(self):
        # bias correction makes the first step ~lr for unit gradients
        opt = ad.Adam(lr=0.001)
        (p,) = opt.step([np.zeros((3, 3))], [np.ones((3, 3))])
        np.testing.assert_allclose(np.abs(p), 0.001 * (1 / (1 + 1e-8)))

    def test_quadratic_bowl_convergence(self):
        opt = ad.Adam(lr=0.01)
        x = np.array([[3.0, -2.0]])
        for _ in range(5000):
            (x,) = opt.step([x], [2 * x])
            if np.max(np.abs(x)) < 1e-3:
                break
        assert np.max(np.abs(x)) < 1e-3

    def test_nan_gradient_aborts(self):
        opt = ad.Adam()
        with pytest.raises(ad.OptimizerError):
            opt.step([np.ones((1, 1))], [np.array([[np.nan]])])


class TestGlorot:
    def test_bounds(self):
        w = ad.glorot_init(40, 60, seed=0)
        limit = np.sqrt(6.0 / 100)
        assert np.all(np.abs(w) <= limit)

    def test_variance(self):
        w = ad.glorot_init(1000, 1000, seed=1)
        expected = 2.0 / 2000  # variance of U(-sqrt(6/2000), +sqrt(6/2000))
        assert abs(w.var() - expected) / expected < 0.1

    def test_seed_determinism(self):
        np.testing.assert_array_equal(ad.glorot_init(10, 10, seed=3),
                                      ad.glorot_init(10, 10, seed=3))
