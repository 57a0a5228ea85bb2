import numpy as np
import pytest

import topoclust.autodiff as ad


def rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


def fd_gradient(build, x0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar build(constant(x)) in x."""
    fd = np.zeros_like(x0)
    for idx in np.ndindex(*x0.shape):
        xp = x0.copy()
        xp[idx] += h
        xm = x0.copy()
        xm[idx] -= h
        fd[idx] = (build(ad.constant(xp)).item()
                   - build(ad.constant(xm)).item()) / (2 * h)
    return fd


def tape_gradient(build, x0: np.ndarray) -> np.ndarray:
    tape = ad.GradientTape()
    xn = tape.parameter(x0)
    loss = build(xn)
    tape.backward(loss, [xn])
    return xn.grad.copy()


def check_gradient(build, x0: np.ndarray, tol: float = 1e-4,
                   h: float = 1e-5) -> float:
    """Assert analytic vs central-difference gradients agree; returns error."""
    err = rel_err(tape_gradient(build, x0), fd_gradient(build, x0, h=h))
    assert err < tol, f"gradient mismatch: relative error {err}"
    return err


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def weight_matrix(n: int, edges) -> np.ndarray:
    w = np.zeros((n, n))
    for u, v, x in edges:
        w[u, v] = w[v, u] = float(x)
    return w
