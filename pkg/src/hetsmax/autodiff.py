"""Reverse-mode automatic differentiation over dense float64 tensors.

Define-by-run: while a Tape is active, every primitive application is
recorded together with a closure that maps the output gradient to input
gradients (a vector-Jacobian product). Calling ``Tape.gradients`` on a
scalar loss walks the records in exact reverse order and accumulates
gradients additively into a map keyed by node id.

The primitive set is the minimum needed to train small MLPs with the
stochastic softmax head: matmul, add, elementwise-mul, scalar-scale, exp,
log, softplus, leaky-relu, mean-reduce, index-select, plus a fused
temperature softmax. Broadcasting is deliberately restricted: two operands
must have equal shapes, or the smaller shape must equal a trailing suffix
of the larger (a missing leading batch/sample axis). General size-1
broadcasting is rejected.
"""

from __future__ import annotations

import itertools
import threading

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NonFiniteError",
    "apply_primitive",
    "backward",
    "matmul",
    "add",
    "mul",
    "scale",
    "exp",
    "log",
    "softplus",
    "leaky_relu",
    "mean_reduce",
    "index_select",
    "tempered_softmax",
    "finite_difference_gradient",
    "LOG_UNDERFLOW_FLOOR",
]

# exp(z) underflows to exactly 0.0 a little below this; clamping shifted
# log-probabilities here keeps softmax outputs strictly positive.
LOG_UNDERFLOW_FLOOR = -745.0


class ShapeError(ValueError):
    """Operand shapes violate a primitive's contract."""


class NonFiniteError(FloatingPointError):
    """A tensor operation produced NaN or Inf."""


_node_ids = itertools.count(1)
_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


class Tensor:
    """Dense row-major float64 array, the value type flowing through tapes.

    Every entry is finite by construction; primitives raise NonFiniteError
    rather than propagate NaN/Inf.
    """

    __slots__ = ("data", "node_id")

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor holds non-finite values")
        self.data = arr
        self.node_id = next(_node_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, node_id={self.node_id})"

    # Operator sugar; everything routes through the recorded primitives.
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def mean(self, axis=None):
        return mean_reduce(self, axis=axis)


class Tape:
    """Ordered record of one forward pass, replayed in reverse for grads."""

    def __init__(self):
        self._records = []  # (output_id, input_ids, vjp)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self, "tapes must be exited in LIFO order"
        return False

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, output_id, input_ids, vjp):
        self._records.append((output_id, input_ids, vjp))

    def gradients(self, loss: Tensor) -> dict:
        """Gradients of a scalar loss w.r.t. every node on this tape.

        Returns a map node_id -> Tensor. Nodes not reachable from the loss
        are absent; looking them up raises KeyError (a detached node).
        """
        if loss.shape != ():
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        grads = {loss.node_id: np.ones(())}
        for output_id, input_ids, vjp in reversed(self._records):
            g = grads.get(output_id)
            if g is None:
                continue
            for input_id, gi in zip(input_ids, vjp(g)):
                if gi is None:
                    continue
                acc = grads.get(input_id)
                grads[input_id] = gi if acc is None else acc + gi
        return {nid: Tensor(g) for nid, g in grads.items()}


def backward(loss: Tensor, tape: Tape | None = None) -> dict:
    """Gradient map of a scalar loss; uses the innermost active tape."""
    if tape is None:
        stack = _tape_stack()
        if not stack:
            raise RuntimeError("backward() requires an active tape")
        tape = stack[-1]
    return tape.gradients(loss)


def _out(inputs, data, vjp) -> Tensor:
    """Wrap a primitive result and record it on the active tape."""
    out = Tensor(data)  # raises NonFiniteError on bad values
    stack = _tape_stack()
    if stack:
        stack[-1]._record(out.node_id, tuple(t.node_id for t in inputs), vjp)
    return out


def _suffix_shape(sa: tuple, sb: tuple):
    """Output shape for the restricted leading-axis broadcast, or None."""
    if sa == sb:
        return sa
    if len(sa) > len(sb) and sa[len(sa) - len(sb):] == sb:
        return sa
    if len(sb) > len(sa) and sb[len(sb) - len(sa):] == sa:
        return sb
    return None


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum(axis=tuple(range(g.ndim - len(shape))))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        return g @ bd.T, ad.T @ g

    return _out((a, b), ad @ bd, vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    if _suffix_shape(a.shape, b.shape) is None:
        raise ShapeError(f"add shapes incompatible: {a.shape} + {b.shape}")
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _out((a, b), a.data + b.data, vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if _suffix_shape(a.shape, b.shape) is None:
        raise ShapeError(f"mul shapes incompatible: {a.shape} * {b.shape}")
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * bd, sa), _unbroadcast(g * ad, sb)

    return _out((a, b), ad * bd, vjp)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    if not np.isfinite(factor):
        raise NonFiniteError("scale factor must be finite")

    def vjp(g):
        return (g * factor,)

    return _out((a,), a.data * factor, vjp)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def vjp(g):
        return (g * out_data,)

    return _out((a,), out_data, vjp)


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = np.log(a.data)
    ad = a.data

    def vjp(g):
        return (g / ad,)

    return _out((a,), out_data, vjp)


def softplus(a: Tensor) -> Tensor:
    ad = a.data

    def vjp(g):
        return (g * _sigmoid(ad),)

    return _out((a,), np.logaddexp(0.0, ad), vjp)


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    ad = a.data
    slope = float(slope)

    def vjp(g):
        return (g * np.where(ad > 0, 1.0, slope),)

    return _out((a,), np.where(ad > 0, ad, slope * ad), vjp)


def mean_reduce(a: Tensor, axis: int | None = None) -> Tensor:
    ad = a.data
    if axis is None:
        n = ad.size
        shape = ad.shape

        def vjp(g):
            return (np.broadcast_to(g / n, shape),)

        return _out((a,), ad.mean(), vjp)
    if not -ad.ndim <= axis < ad.ndim:
        raise ShapeError(f"mean-reduce axis {axis} out of range for shape {a.shape}")
    n = ad.shape[axis]
    shape = ad.shape

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g / n, axis), shape),)

    return _out((a,), ad.mean(axis=axis), vjp)


def index_select(a: Tensor, indices) -> Tensor:
    """Gather: rows of a 1-D tensor, or one entry per row of a 2-D tensor."""
    idx = np.asarray(indices)
    if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("index-select needs a 1-D integer index array")
    ad = a.data
    if ad.ndim == 1:
        if idx.size and (idx.min() < 0 or idx.max() >= ad.shape[0]):
            raise IndexError(f"index out of range for length-{ad.shape[0]} tensor")
        shape = ad.shape

        def vjp(g):
            z = np.zeros(shape)
            np.add.at(z, idx, g)
            return (z,)

        return _out((a,), ad[idx], vjp)
    if ad.ndim == 2:
        if idx.shape[0] != ad.shape[0]:
            raise ShapeError(
                f"index-select needs one index per row: {idx.shape[0]} != {ad.shape[0]}"
            )
        if idx.size and (idx.min() < 0 or idx.max() >= ad.shape[1]):
            raise IndexError(f"column index out of range for shape {a.shape}")
        rows = np.arange(ad.shape[0])
        shape = ad.shape

        def vjp(g):
            z = np.zeros(shape)
            np.add.at(z, (rows, idx), g)
            return (z,)

        return _out((a,), ad[rows, idx], vjp)
    raise ShapeError(f"index-select supports 1-D or 2-D tensors, got {a.shape}")


def tempered_softmax(logits: Tensor, tau: float) -> Tensor:
    """Softmax of logits/tau over the last axis, stable via max-subtraction.

    Shifted log-probabilities are clamped at LOG_UNDERFLOW_FLOOR so no
    output entry underflows to exactly zero. Output rows sum to 1 and the
    argmax equals the argmax of the logits for every tau > 0.
    """
    tau = float(tau)
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = logits.data / tau
    z = z - z.max(axis=-1, keepdims=True)
    np.maximum(z, LOG_UNDERFLOW_FLOOR, out=z)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        return ((g - inner) * p / tau,)

    return _out((logits,), p, vjp)


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "elementwise-mul": mul,
    "mul": mul,
    "scalar-scale": scale,
    "scale": scale,
    "exp": exp,
    "log": log,
    "softplus": softplus,
    "leaky-relu": leaky_relu,
    "leaky_relu": leaky_relu,
    "mean-reduce": mean_reduce,
    "mean_reduce": mean_reduce,
    "index-select": index_select,
    "index_select": index_select,
}


def apply_primitive(kind: str, *inputs: Tensor, **params) -> Tensor:
    """Apply a named primitive, recording it on the active tape."""
    fn = _PRIMITIVES.get(kind)
    if fn is None:
        raise KeyError(f"unknown primitive {kind!r}")
    return fn(*inputs, **params)


def finite_difference_gradient(scalar_fn, point, h: float = 1e-5) -> Tensor:
    """Central-difference gradient of scalar_fn at point, one step per coord.

    The independent oracle for checking reverse-mode gradients; it never
    touches the tape. scalar_fn receives a plain ndarray and must return a
    finite float for every perturbed point.
    """
    if not h > 0:
        raise ValueError("step size h must be positive")
    base = np.array(point.data if isinstance(point, Tensor) else point,
                    dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = float(scalar_fn(base))
        flat[i] = orig - h
        f_minus = float(scalar_fn(base))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"scalar_fn non-finite at coordinate {i}")
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return Tensor(grad)
