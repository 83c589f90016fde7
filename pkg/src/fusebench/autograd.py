"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Tensors wrap float64 numpy arrays (row-major). Every differentiable
operation records itself onto an implicit tape: a monotonically increasing
sequence number per operation guarantees that recording order is a
topological order of the computation graph, and ``Tensor.backward`` replays
the recorded operations in exact reverse order.

Only the handful of operations needed by the fusion models live here:
matmul, elementwise add/mul/relu, bias broadcast, row concatenation,
inverted dropout, and softmax cross-entropy. Everything runs in float64 so
gradients can be validated against central finite differences.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "matmul",
    "add",
    "add_bias",
    "mul",
    "relu",
    "dropout",
    "concat",
    "softmax",
    "softmax_cross_entropy",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


_op_counter = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / finite differences)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class _OpRecord:
    """One recorded operation: inputs, output, and its backward rule."""

    __slots__ = ("name", "inputs", "output", "backward_fn", "seq")

    def __init__(self, name, inputs, output, backward_fn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.seq = next(_op_counter)


class Tensor:
    """Dense float64 array with an optional gradient slot.

    ``data`` is always a C-contiguous float64 ndarray; ``grad`` is either
    None or an ndarray of identical shape. Tensors produced by recorded
    operations keep a reference to the op that created them so ``backward``
    can replay the tape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self):
        """Accumulate gradients of this scalar into every reachable
        tensor with ``requires_grad``.

        Walks the recorded operations in exact reverse recording order,
        which is a reverse topological order by construction.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        if self._node is None:
            return

        # Gather the op records reachable from this output.
        records = []
        seen = set()
        stack = [self._node]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            records.append(node)
            for inp in node.inputs:
                if inp._node is not None:
                    stack.append(inp._node)
        records.sort(key=lambda r: r.seq)

        self.grad = np.ones_like(self.data)
        for node in reversed(records):
            out_grad = node.output.grad
            if out_grad is None:
                continue  # dead branch, e.g. an unused tap
            input_grads = node.backward_fn(out_grad)
            for inp, g in zip(node.inputs, input_grads):
                if g is None or not inp.requires_grad:
                    continue
                if inp.grad is None:
                    inp.grad = g
                else:
                    inp.grad = inp.grad + g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(name, inputs, output, backward_fn):
    if _grad_enabled and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        output._node = _OpRecord(name, inputs, output, backward_fn)
    return output


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [m,k] and b [k,n]."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _record("matmul", (a, b), out, backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; shapes must match exactly."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: shape mismatch {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data)
    return _record("add", (a, b), out, lambda g: (g, g))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-n bias row to every row of x [m,n]."""
    x, b = _as_tensor(x), _as_tensor(b)
    if x.data.ndim != 2 or b.data.ndim != 1 or x.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"add_bias: cannot broadcast bias {b.data.shape} onto {x.data.shape}"
        )
    out = Tensor(x.data + b.data)
    return _record("add_bias", (x, b), out, lambda g: (g, g.sum(axis=0)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; shapes must match exactly."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: shape mismatch {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data * b.data)
    return _record("mul", (a, b), out, lambda g: (g * b.data, g * a.data))


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is taken as 0."""
    x = _as_tensor(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0))
    return _record("relu", (x,), out, lambda g: (g * mask,))


def dropout(x: Tensor, rate: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: zero each element with probability ``rate`` and
    scale survivors by 1/(1-rate) in train mode; identity in eval mode.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_tensor(x)
    if not train or rate == 0.0:
        out = Tensor(x.data.copy())
        return _record("dropout_eval", (x,), out, lambda g: (g,))
    keep = rng.random(x.data.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = Tensor(x.data * keep * scale)
    return _record("dropout", (x,), out, lambda g: (g * keep * scale,))


def concat(tensors, axis: int = 1) -> Tensor:
    """Concatenate 2-D tensors along columns (axis=1) or rows (axis=0)."""
    tensors = tuple(_as_tensor(t) for t in tensors)
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    widths = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return _record("concat", tensors, out, backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stabilized softmax on a plain ndarray (no grad)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Weighted softmax cross-entropy over a [b,2] logit batch.

    ``targets`` holds class indices in {0,1}. ``weights`` defaults to 1/b
    (the plain batch mean); the training loop passes per-instance weights of
    1/micro_batch_size so a single forward reproduces gradient accumulation
    over micro-batches exactly.
    """
    logits = _as_tensor(logits)
    if not np.all(np.isfinite(logits.data)):
        raise FloatingPointError("softmax_cross_entropy: non-finite logits")
    t = np.asarray(targets, dtype=np.intp)
    if logits.data.ndim != 2 or t.shape != (logits.data.shape[0],):
        raise ShapeError(
            f"softmax_cross_entropy: logits {logits.data.shape} vs targets {t.shape}"
        )
    if t.min(initial=0) < 0 or t.max(initial=0) >= logits.data.shape[1]:
        raise ValueError("targets must be valid class indices")
    b = logits.data.shape[0]
    w = np.full(b, 1.0 / b) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (b,):
        raise ShapeError(f"weights shape {w.shape} does not match batch {b}")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    losses = -log_probs[np.arange(b), t]
    out = Tensor(np.array(float(np.dot(w, losses))))

    def backward(g):
        g_scalar = float(np.asarray(g).reshape(-1)[0])
        probs = np.exp(log_probs)
        probs[np.arange(b), t] -= 1.0
        return (probs * (w * g_scalar)[:, None],)

    return _record("softmax_cross_entropy", (logits,), out, backward)
