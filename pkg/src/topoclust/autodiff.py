"""Dense reverse-mode autodiff over float64 matrices.

Small tape-based engine: every operation appends a node to the active tape
(inferred from its inputs) and registers a closure that maps the output
gradient to input gradients. One backward pass is allowed per recorded
forward pass; training loops build a fresh tape per step, so gradient
buffers never leak across steps.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class AutodiffError(Exception):
    pass


class ShapeError(AutodiffError):
    """Operand shapes incompatible with the requested primitive."""


class NonFiniteError(AutodiffError):
    """NaN or Inf encountered in a matrix value or gradient."""


class SingularMatrixError(AutodiffError):
    """Matrix inverse requested for a (near-)singular input."""


class RankError(AutodiffError):
    """Pseudo-inverse requested for C with fewer columns than rows."""


class TapeError(AutodiffError):
    """Tape misuse: double backward, mixed tapes, non-scalar loss."""


class OptimizerError(AutodiffError):
    pass


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("matrix contains NaN or Inf")
    return arr


class DiffMatrix:
    """A dense matrix value, optionally tracked on a GradientTape."""

    __slots__ = ("value", "tape", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, value, tape: Optional["GradientTape"] = None,
                 requires_grad: bool = False,
                 parents: Sequence["DiffMatrix"] = (),
                 backward: Optional[Callable] = None):
        self.value = _as_matrix(value)
        self.tape = tape
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = tuple(parents)
        self._backward = backward
        if tape is not None:
            tape._nodes.append(self)

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() on non-scalar shape {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        return f"DiffMatrix(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return subtract(self, other)

    def __mul__(self, other):
        return multiply(self, other)


class GradientTape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self):
        self._nodes: list[DiffMatrix] = []
        self._consumed = False

    def parameter(self, value) -> DiffMatrix:
        return DiffMatrix(value, tape=self, requires_grad=True)

    def watch(self, value) -> DiffMatrix:
        return self.parameter(value)

    def backward(self, loss: DiffMatrix,
                 parameters: Sequence[DiffMatrix] = ()) -> None:
        """Accumulate d loss / d node into .grad for every reachable node.

        `loss` must be a 1x1 matrix recorded on this tape. Parameters listed
        in `parameters` that are unreachable from the loss get zero
        gradients. A second backward without a fresh forward raises.
        """
        if self._consumed:
            raise TapeError("backward called twice on the same forward pass")
        if loss.tape is not self:
            raise TapeError("loss was not recorded on this tape")
        if loss.shape != (1, 1):
            raise TapeError(f"loss must be 1x1, got {loss.shape}")
        self._consumed = True
        loss.grad = np.ones((1, 1))
        for node in reversed(self._nodes):
            if node.grad is None or node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if not np.all(np.isfinite(g)):
                    raise NonFiniteError("non-finite gradient during backward")
                if parent.grad is None:
                    parent.grad = g.copy()
                else:
                    parent.grad = parent.grad + g
        for p in parameters:
            if p.grad is None:
                p.grad = np.zeros_like(p.value)


def constant(value) -> DiffMatrix:
    """Untracked matrix; gradients never flow into it."""
    return DiffMatrix(value)


def _result_tape(inputs) -> Optional[GradientTape]:
    tape = None
    for x in inputs:
        if x.tape is None:
            continue
        if tape is None:
            tape = x.tape
        elif tape is not x.tape:
            raise TapeError("operands recorded on different tapes")
    return tape


def _node(value, inputs, backward) -> DiffMatrix:
    tape = _result_tape(inputs)
    requires = any(x.requires_grad for x in inputs)
    return DiffMatrix(value, tape=tape, requires_grad=requires,
                      parents=inputs, backward=backward if requires else None)


# ---------------------------------------------------------------------------
# Primitives.
# ---------------------------------------------------------------------------

def matmul(a: DiffMatrix, b: DiffMatrix) -> DiffMatrix:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        return g @ bv.T, av.T @ g

    return _node(av @ bv, (a, b), backward)


def transpose(a: DiffMatrix) -> DiffMatrix:
    def backward(g):
        return (g.T,)

    return _node(a.value.T, (a,), backward)


def add(a: DiffMatrix, b: DiffMatrix) -> DiffMatrix:
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")

    def backward(g):
        return g, g

    return _node(a.value + b.value, (a, b), backward)


def subtract(a: DiffMatrix, b: DiffMatrix) -> DiffMatrix:
    if a.shape != b.shape:
        raise ShapeError(f"subtract: {a.shape} vs {b.shape}")

    def backward(g):
        return g, -g

    return _node(a.value - b.value, (a, b), backward)


def scale(a: DiffMatrix, s: float) -> DiffMatrix:
    s = float(s)

    def backward(g):
        return (g * s,)

    return _node(a.value * s, (a,), backward)


def multiply(a: DiffMatrix, b: DiffMatrix) -> DiffMatrix:
    """Elementwise (Hadamard) product."""
    if a.shape != b.shape:
        raise ShapeError(f"multiply: {a.shape} vs {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        return g * bv, g * av

    return _node(av * bv, (a, b), backward)


def sigmoid(a: DiffMatrix) -> DiffMatrix:
    # Evaluate through exp of the negative magnitude to avoid overflow.
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _node(out, (a,), backward)


def relu(a: DiffMatrix) -> DiffMatrix:
    mask = a.value > 0

    def backward(g):
        return (g * mask,)

    return _node(np.where(mask, a.value, 0.0), (a,), backward)


def matrix_inverse(a: DiffMatrix, pivot_tol: float = 1e-12) -> DiffMatrix:
    """Inverse of a square matrix; d(X^-1) = -X^-1 dX X^-1.

    Rejects inputs whose smallest singular value falls below pivot_tol.
    """
    if a.rows != a.cols:
        raise ShapeError(f"inverse of non-square {a.shape}")
    smin = np.linalg.svd(a.value, compute_uv=False)[-1]
    if smin < pivot_tol:
        raise SingularMatrixError(
            f"smallest singular value {smin:.3e} below {pivot_tol:.0e}")
    inv = np.linalg.inv(a.value)

    def backward(g):
        return (-inv.T @ g @ inv.T,)

    return _node(inv, (a,), backward)


def row_minmax(a: DiffMatrix) -> DiffMatrix:
    """Row-wise min-max normalization (q - min) / (max - min).

    Degenerate rows (max == min) map to the uniform value 1/cols. The
    backward differentiates the quotient with the argmin/argmax indices
    held constant (the piecewise subgradient a central difference sees).
    """
    x = a.value
    n, k = x.shape
    mins = x.min(axis=1, keepdims=True)
    maxs = x.max(axis=1, keepdims=True)
    rng = maxs - mins
    degenerate = rng[:, 0] == 0.0
    safe = np.where(degenerate[:, None], 1.0, rng)
    out = (x - mins) / safe
    if k > 0 and degenerate.any():
        out[degenerate, :] = 1.0 / k
    imin = x.argmin(axis=1)
    imax = x.argmax(axis=1)

    def backward(g):
        gx = np.zeros_like(x)
        live = ~degenerate
        r = safe[live]
        gx[live] = g[live] / r
        rows = np.nonzero(live)[0]
        # dy_j/dq_imin = (y_j - 1)/r and dy_j/dq_imax = -y_j/r, summed over j.
        sum_g = g[live].sum(axis=1) / r[:, 0]
        sum_gy = (g[live] * out[live]).sum(axis=1) / r[:, 0]
        np.add.at(gx, (rows, imin[live]), -(sum_g - sum_gy))
        np.add.at(gx, (rows, imax[live]), -sum_gy)
        return (gx,)

    return _node(out, (a,), backward)


def row_sum_normalize(a: DiffMatrix) -> DiffMatrix:
    """Divide each row by its sum, projecting onto the probability simplex.

    Rows must have positive sums. Unlike the min-max map, every entry of a
    normalized row keeps a nonzero derivative, so downstream losses can
    push retained assignment mass around continuously.
    """
    x = a.value
    sums = x.sum(axis=1, keepdims=True)
    if np.any(sums <= 0.0):
        raise ShapeError("row_sum_normalize requires positive row sums")
    out = x / sums

    def backward(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return ((g - inner) / sums,)

    return _node(out, (a,), backward)


def reduce_sum(a: DiffMatrix) -> DiffMatrix:
    shape = a.shape

    def backward(g):
        return (np.full(shape, g[0, 0]),)

    return _node(np.array([[a.value.sum()]]), (a,), backward)


def mse_loss(pred: DiffMatrix, target: DiffMatrix) -> DiffMatrix:
    """Mean squared error over all entries, as a 1x1 matrix."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: {pred.shape} vs {target.shape}")
    diff = pred.value - target.value
    n = diff.size

    def backward(g):
        gd = (2.0 / n) * diff * g[0, 0]
        return gd, -gd

    return _node(np.array([[np.mean(diff * diff)]]), (pred, target), backward)


def weighted_bce_loss(pred: DiffMatrix, target: DiffMatrix,
                      pos_weight: float = 1.0) -> DiffMatrix:
    """Mean binary cross entropy with a positive-class weight.

    `pred` holds probabilities in (0, 1); values are clipped to
    [1e-12, 1 - 1e-12] before the logs. `target` is an equal-shaped 0/1
    matrix and is treated as constant.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"bce: {pred.shape} vs {target.shape}")
    eps = 1e-12
    p = np.clip(pred.value, eps, 1.0 - eps)
    t = target.value
    n = p.size
    pw = float(pos_weight)
    value = -(pw * t * np.log(p) + (1.0 - t) * np.log1p(-p)).mean()

    def backward(g):
        gp = (-pw * t / p + (1.0 - t) / (1.0 - p)) * (g[0, 0] / n)
        return gp, None

    return _node(np.array([[value]]), (pred, target), backward)


def regularized_pinv(c: DiffMatrix, lam: float = 1e-6) -> DiffMatrix:
    """Damped right pseudo-inverse C^T (C C^T + lam I)^{-1}, shape d x K.

    Requires K <= d (rows <= cols). The K > d case is a genuine rank
    failure of the factorization: a wide assignment cannot be recovered
    from a deficient embedding.
    """
    k, d = c.shape
    if d < k:
        raise RankError(
            f"pseudo-inverse needs embedding dim >= cluster count, got {d} < {k}")
    ct = transpose(c)
    gram = matmul(c, ct)
    if lam != 0.0:
        gram = add(gram, constant(lam * np.eye(k)))
    return matmul(ct, matrix_inverse(gram))


def glorot_init(rows: int, cols: int, seed: int) -> np.ndarray:
    """Uniform Glorot/Xavier init in +- sqrt(6 / (rows + cols))."""
    if rows <= 0 or cols <= 0:
        raise ShapeError("glorot_init needs positive dimensions")
    limit = np.sqrt(6.0 / (rows + cols))
    rng = np.random.default_rng(seed)
    return rng.uniform(-limit, limit, size=(rows, cols))


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: list[np.ndarray] = []
        self._v: list[np.ndarray] = []

    def step(self, params: Sequence[np.ndarray],
             grads: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Return updated copies of `params`; moment state advances by one."""
        if len(params) != len(grads):
            raise OptimizerError("params/grads length mismatch")
        if not self._m:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != g.shape:
                raise OptimizerError(f"param {i}: shape {p.shape} vs grad {g.shape}")
            if not np.all(np.isfinite(g)):
                raise OptimizerError(f"param {i}: non-finite gradient at step {t}")
            self._m[i] = self.beta1 * self._m[i] + (1 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1 - self.beta2) * g * g
            m_hat = self._m[i] / (1 - self.beta1 ** t)
            v_hat = self._v[i] / (1 - self.beta2 ** t)
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def adam_step(state: Adam, params, grads):
    return state.step(params, grads)


def backward(tape: GradientTape, loss: DiffMatrix, parameters=()):
    tape.backward(loss, parameters)
