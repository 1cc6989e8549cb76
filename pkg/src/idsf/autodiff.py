"""Minimal reverse-mode differentiation on numpy arrays.

The primitive set is exactly what the recommender's forward pass needs:
embedding gather, dense products, elementwise maps, row softmax, cosine
similarity, log-sigmoid, reductions, sparse neighbor aggregation and L2
norms.  A Tape records executed primitives in creation order (which is
already topological); backward walks it once in reverse, accumulating
gradients into a table keyed by tensor.

Training runs in float32; gradient checks run in float64.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

EPS_NORM = 1e-12  # denominator clamp for cosine / row normalization


class Tape:
    """Ordered record of executed primitives.

    Creation order is topological by construction: a node's inputs always
    exist before the node itself.  Single-owner during forward/backward.
    """

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Tensor] = []
        self.check_finite = check_finite

    def record(self, tensor: "Tensor") -> None:
        self.nodes.append(tensor)


class Tensor:
    """A value node: numpy array plus optional backward closure."""

    __slots__ = ("values", "tape", "requires_grad", "parents", "vjp", "op")

    def __init__(
        self,
        values,
        tape: Tape | None = None,
        requires_grad: bool = False,
        parents: tuple = (),
        vjp: Callable | None = None,
        op: str = "leaf",
    ):
        self.values = np.asarray(values)
        self.tape = tape
        self.requires_grad = requires_grad
        self.parents = parents
        self.vjp = vjp
        self.op = op

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.values.shape}, grad={self.requires_grad})"


def constant(values, tape: Tape | None = None) -> Tensor:
    return Tensor(np.asarray(values), tape, requires_grad=False, op="const")


def parameter(values, tape: Tape | None = None) -> Tensor:
    return Tensor(np.asarray(values), tape, requires_grad=True, op="param")


def _result(tape: Tape | None, values: np.ndarray, parents: tuple, vjp, op: str) -> Tensor:
    if tape is not None and tape.check_finite and not np.all(np.isfinite(values)):
        raise NumericError(f"non-finite output from primitive '{op}'")
    needs_grad = any(p.requires_grad for p in parents)
    out = Tensor(values, tape, needs_grad, parents if needs_grad else (),
                 vjp if needs_grad else None, op)
    if tape is not None and needs_grad:
        tape.record(out)
    return out


def _tape_of(*tensors: Tensor) -> Tape | None:
    for t in tensors:
        if t.tape is not None:
            return t.tape
    return None


# ---------------------------------------------------------------------------
# elementwise / arithmetic primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: {a.shape} vs {b.shape}")
    return _result(_tape_of(a, b), a.values + b.values, (a, b),
                   lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub: {a.shape} vs {b.shape}")
    return _result(_tape_of(a, b), a.values - b.values, (a, b),
                   lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul: {a.shape} vs {b.shape}")
    av, bv = a.values, b.values
    return _result(_tape_of(a, b), av * bv, (a, b),
                   lambda g: (g * bv, g * av), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.tape, a.values * c, (a,), lambda g: (g * c,), "scale")


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _result(a.tape, a.values + float(c), (a,), lambda g: (g,), "add_scalar")


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a width-d vector to every row of an (n, d) matrix."""
    if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f"add_bias: {x.shape} vs {b.shape}")
    return _result(_tape_of(x, b), x.values + b.values[None, :], (x, b),
                   lambda g: (g, g.sum(axis=0)), "add_bias")


def rowscale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply row k of an (n, d) matrix by scalar s[k]."""
    if x.ndim != 2 or s.ndim != 1 or x.shape[0] != s.shape[0]:
        raise DimensionError(f"rowscale: {x.shape} vs {s.shape}")
    xv, sv = x.values, s.values
    return _result(_tape_of(x, s), xv * sv[:, None], (x, s),
                   lambda g: (g * sv[:, None], (g * xv).sum(axis=1)), "rowscale")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.values)
    return _result(a.tape, y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.values)
    return _result(a.tape, y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(a.values)
    av = a.values
    return _result(a.tape, y, (a,), lambda g: (g / av,), "log")


def log_sigmoid(a: Tensor) -> Tensor:
    # stable: log sigma(x) = min(x, 0) - log1p(exp(-|x|))
    x = a.values
    y = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    sig_neg = 1.0 / (1.0 + np.exp(np.clip(x, -60.0, 60.0)))  # sigma(-x)
    return _result(a.tape, y, (a,), lambda g: (g * sig_neg,), "log_sigmoid")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("matmul requires 2-D operands")
    bv = b.values.T if transpose_b else b.values
    if a.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul: {a.shape} x {b.shape} (transpose_b={transpose_b})")
    y = a.values @ bv
    av = a.values

    def vjp(g):
        ga = g @ bv.T
        gb = av.T @ g
        if transpose_b:
            gb = gb.T
        return (ga, gb)

    return _result(_tape_of(a, b), y, (a, b), vjp, "matmul")


def matvec(a: Tensor, v: Tensor) -> Tensor:
    """(n, d) @ (d,) -> (n,)."""
    if a.ndim != 2 or v.ndim != 1 or a.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec: {a.shape} x {v.shape}")
    y = a.values @ v.values
    av, vv = a.values, v.values
    return _result(_tape_of(a, v), y, (a, v),
                   lambda g: (np.outer(g, vv), av.T @ g), "matvec")


def gather(x: Tensor, idx) -> Tensor:
    """Select rows of an embedding table; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.int64)
    if x.ndim != 2:
        raise DimensionError("gather expects a 2-D table")
    y = x.values[idx]
    n_rows = x.values.shape[0]

    def vjp(g):
        gx = np.zeros((n_rows, x.values.shape[1]), dtype=g.dtype)
        np.add.at(gx, idx, g)
        return (gx,)

    return _result(x.tape, y, (x,), vjp, "gather")


def csr_aggregate(matrix, matrix_t, x: Tensor, op: str = "csr_aggregate") -> Tensor:
    """Sparse neighbor aggregation y = matrix @ x.

    `matrix` is a scipy CSR matrix (targets x sources); `matrix_t` is its
    precomputed transpose, used for the backward pass (aggregation along
    reversed edges).
    """
    if x.ndim != 2 or matrix.shape[1] != x.shape[0]:
        raise DimensionError(f"csr_aggregate: {matrix.shape} x {x.shape}")
    y = matrix @ x.values
    return _result(x.tape, y, (x,), lambda g: (matrix_t @ g,), op)


# ---------------------------------------------------------------------------
# softmax / cosine / reductions
# ---------------------------------------------------------------------------

def softmax(x: Tensor) -> Tensor:
    """Row softmax with max-subtraction for overflow safety."""
    xv = x.values
    shifted = xv - xv.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    return _result(x.tape, y, (x,), vjp, "softmax")


def normalize_rows(x: Tensor) -> Tensor:
    """L2-normalize each row; denominator clamped at EPS_NORM."""
    if x.ndim != 2:
        raise DimensionError("normalize_rows expects a 2-D matrix")
    xv = x.values
    norms = np.maximum(np.sqrt((xv * xv).sum(axis=1, keepdims=True)), EPS_NORM)
    y = xv / norms

    def vjp(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return ((g - y * dot) / norms,)

    return _result(x.tape, y, (x,), vjp, "normalize_rows")


def cosine_rows(a: Tensor, b: Tensor) -> Tensor:
    """Per-row cosine similarity of two (n, d) matrices -> (n,)."""
    na = normalize_rows(a)
    nb = normalize_rows(b)
    return sum_axis1(mul(na, nb))


def sum_all(a: Tensor) -> Tensor:
    shape = a.values.shape
    return _result(a.tape, np.asarray(a.values.sum()), (a,),
                   lambda g: (np.broadcast_to(g, shape).astype(g.dtype, copy=True),), "sum")


def mean_all(a: Tensor) -> Tensor:
    n = a.values.size
    return scale(sum_all(a), 1.0 / n)


def sum_axis1(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError("sum_axis1 expects a 2-D matrix")
    cols = a.shape[1]
    return _result(a.tape, a.values.sum(axis=1), (a,),
                   lambda g: (np.repeat(g[:, None], cols, axis=1),), "sum_axis1")


def sum_squares(a: Tensor) -> Tensor:
    """Scalar sum of squared entries (the L2-regularization primitive)."""
    av = a.values
    return _result(a.tape, np.asarray((av * av).sum()), (a,),
                   lambda g: (2.0 * g * av,), "sum_squares")


def take_per_row(x: Tensor, cols) -> Tensor:
    """y[k] = x[k, cols[k]] for an (n, m) matrix."""
    cols = np.asarray(cols, dtype=np.int64)
    if x.ndim != 2 or cols.shape != (x.shape[0],):
        raise DimensionError("take_per_row: need (n, m) matrix and n column indices")
    n, m = x.shape
    rows = np.arange(n)

    def vjp(g):
        gx = np.zeros((n, m), dtype=g.dtype)
        gx[rows, cols] = g
        return (gx,)

    return _result(x.tape, x.values[rows, cols].copy(), (x,), vjp, "take_per_row")


def diag_part(x: Tensor) -> Tensor:
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError("diag_part expects a square matrix")
    n = x.shape[0]

    def vjp(g):
        gx = np.zeros((n, n), dtype=g.dtype)
        np.fill_diagonal(gx, g)
        return (gx,)

    return _result(x.tape, np.diagonal(x.values).copy(), (x,), vjp, "diag_part")


def stack_cols(columns: Sequence[Tensor]) -> Tensor:
    """Stack k length-n vectors into an (n, k) matrix."""
    if not columns:
        raise ContractError("stack_cols needs at least one column")
    n = columns[0].shape[0]
    for c in columns:
        if c.ndim != 1 or c.shape[0] != n:
            raise DimensionError("stack_cols: inconsistent column shapes")
    y = np.stack([c.values for c in columns], axis=1)
    k = len(columns)

    def vjp(g):
        return tuple(g[:, j] for j in range(k))

    return _result(_tape_of(*columns), y, tuple(columns), vjp, "stack_cols")


def column(x: Tensor, j: int) -> Tensor:
    if x.ndim != 2:
        raise DimensionError("column expects a 2-D matrix")
    shape = x.shape

    def vjp(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[:, j] = g
        return (gx,)

    return _result(x.tape, x.values[:, j].copy(), (x,), vjp, "column")


# ---------------------------------------------------------------------------
# backward and finite-difference checking
# ---------------------------------------------------------------------------

def backward(tape: Tape, loss: Tensor) -> dict:
    """Reverse sweep over the tape; returns {tensor_id: gradient array}.

    Visits each node exactly once, in fixed (reverse-creation) order, so
    two runs on identical inputs produce bit-identical gradients.
    """
    if loss.values.ndim != 0:
        raise ContractError("backward: loss must be a scalar")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.values.dtype)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        parent_grads = node.vjp(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg
    return grads


def grad_of(grads: dict, tensor: Tensor) -> np.ndarray:
    """Gradient for a tensor; zero if it is off every path from the loss."""
    g = grads.get(id(tensor))
    if g is None:
        return np.zeros_like(tensor.values)
    return np.asarray(g, dtype=tensor.values.dtype).reshape(tensor.values.shape)


def grad_check(build: Callable, inputs: dict, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-FD gradients.

    `build(tensors, tape)` must construct and return a scalar loss Tensor
    from `tensors`, a dict name -> parameter Tensor created from `inputs`
    (name -> float64 array).  Error metric per entry:
    |analytic - fd| / max(|analytic|, |fd|, 1e-8).
    """
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in inputs.items()}

    def run(vals: dict) -> tuple[float, dict]:
        tape = Tape()
        tensors = {k: parameter(v, tape) for k, v in vals.items()}
        loss = build(tensors, tape)
        grads = backward(tape, loss)
        return float(loss.values), {k: grad_of(grads, t) for k, t in tensors.items()}

    _, analytic = run(arrays)
    worst = 0.0
    for name, base in arrays.items():
        flat = base.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up, _ = _loss_only(build, arrays)
            flat[idx] = orig - eps
            down, _ = _loss_only(build, arrays)
            flat[idx] = orig
            fd = (up - down) / (2.0 * eps)
            an = float(analytic[name].ravel()[idx])
            err = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst


def _loss_only(build, arrays):
    tape = Tape()
    tensors = {k: parameter(v, tape) for k, v in arrays.items()}
    loss = build(tensors, tape)
    return float(loss.values), None
