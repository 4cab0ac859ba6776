"""
Reverse-mode autodiff over real float64 matrices.

Every op builds a new ``Tensor`` that remembers its parents and a closure
mapping the output gradient to parent gradients. ``backward`` walks the graph
in reverse topological order, accumulates gradients per node and then cuts the
links so the recorded graph can be collected.
"""
import logging
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int]


class TapeError(RuntimeError):
    """Backward requested on something that is not a taped scalar"""
    pass


class NonFiniteError(FloatingPointError):
    """NaN or Inf produced by an op; training aborts on it"""
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        op: str = "leaf",
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
    ):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ValueError(f"tensors are at most rank 2, got shape {arr.shape}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = op
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op})"

    # Operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __matmul__(self, other): return matmul(self, other)
    def __neg__(self): return scale(self, -1.0)

    def sum(self) -> "Tensor":
        return sum_all(self)


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data: ArrayLike, name: str) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _record(data: np.ndarray, op: str, parents: Tuple[Tensor, ...], backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        logger.error(f"Non-finite value produced by op '{op}'")
        raise NonFiniteError(f"non-finite value produced by op '{op}'")
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, _parents=parents, _backward=backward)
    return Tensor(data, op=op)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum grad over the axes numpy broadcast to reach it"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ─── Linear algebra ───

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, "matmul", (a, b), backward)


def spmm(op: sp.spmatrix, x) -> Tensor:
    """Constant sparse (real) operator times a taped matrix"""
    x = as_tensor(x)
    if op.shape[1] != x.shape[0]:
        raise ValueError(f"operator has {op.shape[1]} columns, input has {x.shape[0]} rows")
    out = np.asarray(op @ x.data)
    op_t = op.T.tocsr()

    def backward(g):
        return (np.asarray(op_t @ g),)

    return _record(out, "spmm", (x,), backward)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, "add", (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _record(a.data - b.data, "sub", (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, "mul", (a, b), backward)


hadamard = mul


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _record(a.data * c, "scale", (a,), lambda g: (g * c,))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return _record(out, "concat", tuple(tensors), backward)


def cols(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return _record(x.data[:, start:stop].copy(), "cols", (x,), backward)


# ─── Elementwise ───

def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _record(y, "tanh", (x,), lambda g: (g * (1.0 - y * y),))


def sign_equ_activation(x) -> Tensor:
    """Odd activation: sigma(-x) = -sigma(x)"""
    return tanh(x)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _record(np.where(mask, x.data, 0.0), "relu", (x,), lambda g: (g * mask,))


def abs_op(x) -> Tensor:
    x = as_tensor(x)
    s = np.sign(x.data)
    return _record(np.abs(x.data), "abs", (x,), lambda g: (g * s,))


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def dropout(x, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0"""
    if not (0.0 <= p < 1.0):
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _record(x.data * mask, "dropout", (x,), lambda g: (g * mask,))


# ─── Reductions and losses ───

def sum_all(x) -> Tensor:
    x = as_tensor(x)
    return _record(np.asarray(x.data.sum()), "sum", (x,), lambda g: (np.full(x.shape, float(g)),))


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    n = max(x.data.size, 1)
    return _record(np.asarray(x.data.mean() if x.data.size else 0.0), "mean", (x,), lambda g: (np.full(x.shape, float(g) / n),))


def _row_mask(mask: Optional[np.ndarray], rows: int) -> np.ndarray:
    if mask is None:
        return np.ones(rows, dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if len(mask) != rows:
        raise ValueError(f"mask has {len(mask)} entries, prediction has {rows} rows")
    return mask


def mse_loss(pred, target: np.ndarray, mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean squared error over masked rows"""
    pred = as_tensor(pred)
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    rows = _row_mask(mask, pred.shape[0])
    count = int(rows.sum()) * (pred.shape[1] if pred.data.ndim == 2 else 1)
    if count == 0:
        raise ValueError("loss mask selects no edge")
    diff = np.where(rows[:, None] if pred.data.ndim == 2 else rows, pred.data - target, 0.0)
    loss = np.asarray((diff ** 2).sum() / count)
    return _record(loss, "mse", (pred,), lambda g: (float(g) * 2.0 * diff / count,))


def bce_with_logits(logits, labels: np.ndarray, mask: Optional[np.ndarray] = None) -> Tensor:
    """Binary cross-entropy on raw scores, averaged over masked rows"""
    logits = as_tensor(logits)
    z = logits.data
    y = np.asarray(labels, dtype=np.float64).reshape(z.shape)
    rows = _row_mask(mask, z.shape[0])
    sel = rows[:, None] if z.ndim == 2 else rows
    count = int(rows.sum()) * (z.shape[1] if z.ndim == 2 else 1)
    if count == 0:
        raise ValueError("loss mask selects no edge")
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = np.asarray(np.where(sel, per, 0.0).sum() / count)
    grad = np.where(sel, sigmoid_array(z) - y, 0.0) / count
    return _record(loss, "bce", (logits,), lambda g: (float(g) * grad,))


# ─── Backward pass ───

def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    seen = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> Dict[str, np.ndarray]:
    """Gradients of a scalar loss for every named leaf; frees the recorded graph

    Leaves in ``params`` that the loss does not reach get zero gradients.
    """
    if loss.data.size != 1:
        raise TapeError(f"loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TapeError("loss is detached from every parameter")

    order = _topological_order(loss)
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None) if node._parents else grads.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg

    result: Dict[str, np.ndarray] = {}
    leaves = [n for n in order if not n._parents]
    for leaf in leaves:
        g = grads.get(id(leaf))
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for '{leaf.name}'")
        leaf.grad = g
        if leaf.name is not None:
            result[leaf.name] = g
    if params is not None:
        for p in params:
            if p.name not in result:
                p.grad = np.zeros_like(p.data)
                result[p.name] = p.grad

    # Free the recorded graph
    for node in order:
        if node._parents:
            node._parents = ()
            node._backward = None
    return result
