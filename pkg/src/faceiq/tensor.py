"""Dense 64-bit tensors with reverse-mode differentiation.

Every value in the package flows through :class:`Tensor`. An operation
records its parents and a vector-Jacobian closure on the output tensor;
``backward`` on a scalar loss walks the recorded graph in reverse
topological order and accumulates gradients additively into ``grad``.
The graph is per-call state: nothing here is shared between training
contexts, so independent contexts may run concurrently.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, ContractError, DimensionError

Array = np.ndarray


class Tensor:
    """A dense float64 array with an optional gradient slot.

    Attributes:
        data: the values, row-major float64.
        grad: accumulated gradient of the last ``backward`` call, or None.
        requires_grad: whether gradients should flow into this tensor.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``grad`` of every reachable tensor.

        Only defined for scalars; gradients add across multiple uses of the
        same tensor, so callers zero parameter grads between steps.
        """
        if self.data.size != 1:
            raise ContractError("backward() requires a scalar tensor")
        order = _toposort(self)
        grads: dict[int, Array] = {id(self): np.ones_like(self.data)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad = node.grad + g
            if node._vjp is None:
                continue
            parent_grads = node._vjp(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative DFS; returns reverse topological order (root first).
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    order.reverse()
    return order


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: Array, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``g`` down to ``shape``, inverting numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Parameter(Tensor):
    """A named, trainable tensor. Names are dot paths unique within a model."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


# -- elementwise and linear-algebra primitives -------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(data, (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul expects 2-D tensors")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _make(data, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError("transpose expects a 2-D tensor")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    data = a.data.reshape(shape)
    return _make(data, (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(data, tuple(tensors), vjp)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` entries along ``axis``."""
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = a.data[idx].copy()

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(data, (a,), vjp)


def sum_all(a: Tensor) -> Tensor:
    return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return _make(np.asarray(a.data.mean()), (a,),
                 lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def softplus(a: Tensor) -> Tensor:
    """Smooth rectifier log(1 + exp(x)), computed overflow-free."""
    data = np.logaddexp(0.0, a.data)

    def vjp(g):
        sig = 1.0 / (1.0 + np.exp(-a.data))
        return (g * sig,)

    return _make(data, (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)
    return _make(data, (a,), lambda g: (g * (1.0 - data * data),))


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x); smooth, rectifier-like, zero at zero."""
    sig = 1.0 / (1.0 + np.exp(-a.data))
    data = a.data * sig

    def vjp(g):
        return (g * (sig + data * (1.0 - sig)),)

    return _make(data, (a,), vjp)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax with max-subtraction stabilization along ``axis``."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        gs = g * s
        return (gs - s * gs.sum(axis=axis, keepdims=True),)

    return _make(s, (a,), vjp)


# -- spatial kernels ----------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (C_in,H,W) with (C_out,C_in,k,k), zero padding."""
    if x.data.ndim != 3 or weight.data.ndim != 4:
        raise DimensionError("conv2d expects x of rank 3 and weight of rank 4")
    c_in, h, w = x.shape
    c_out, c_w, kh, kw = weight.shape
    if c_w != c_in:
        raise DimensionError(f"conv2d channel mismatch: input {c_in}, weight {c_w}")
    if kh != kw:
        raise DimensionError("conv2d supports square kernels only")
    k, s, p = kh, int(stride), int(padding)
    if h + 2 * p < k or w + 2 * p < k:
        raise DimensionError(f"kernel {k} larger than padded input {(h + 2 * p, w + 2 * p)}")
    h2 = (h + 2 * p - k) // s + 1
    w2 = (w + 2 * p - k) // s + 1

    xp = np.zeros((c_in, h + 2 * p, w + 2 * p))
    xp[:, p:p + h, p:p + w] = x.data
    # windows: (C_in, h2, w2, k, k)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(h2 * w2, c_in * k * k)
    wmat = weight.data.reshape(c_out, c_in * k * k)
    out = (cols @ wmat.T).T.reshape(c_out, h2, w2)

    def vjp(g):
        g2 = g.reshape(c_out, h2 * w2)
        gw = (g2 @ cols).reshape(weight.shape)
        dcols = (g2.T @ wmat).reshape(h2, w2, c_in, k, k).transpose(2, 3, 4, 0, 1)
        gxp = np.zeros_like(xp)
        for ki in range(k):
            for kj in range(k):
                gxp[:, ki:ki + s * (h2 - 1) + 1:s, kj:kj + s * (w2 - 1) + 1:s] += dcols[:, ki, kj]
        gx = gxp[:, p:p + h, p:p + w]
        return gx, gw

    return _make(out, (x, weight), vjp)


def global_average_pool(x: Tensor) -> Tensor:
    """Mean over the spatial extent of a (C,H,W) map, giving (C,)."""
    if x.data.ndim != 3:
        raise DimensionError("global_average_pool expects a (C,H,W) tensor")
    c, h, w = x.shape
    if h < 1 or w < 1:
        raise DimensionError("empty spatial extent")
    data = x.data.mean(axis=(1, 2))

    def vjp(g):
        return (np.broadcast_to(g[:, None, None] / (h * w), x.shape).copy(),)

    return _make(data, (x,), vjp)


def adaptive_average_pool(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Average-pool a (C,H,W) map onto an (out_h, out_w) grid.

    Bin i along an axis of length n covers [floor(i*n/out), ceil((i+1)*n/out));
    for integer ratios this is plain uniform pooling.
    """
    if x.data.ndim != 3:
        raise DimensionError("adaptive_average_pool expects a (C,H,W) tensor")
    c, h, w = x.shape
    if out_h < 1 or out_w < 1:
        raise DimensionError("target size must be positive")

    def bounds(n, out):
        return [(math.floor(i * n / out), math.ceil((i + 1) * n / out)) for i in range(out)]

    hb, wb = bounds(h, out_h), bounds(w, out_w)
    data = np.empty((c, out_h, out_w))
    for i, (h0, h1) in enumerate(hb):
        for j, (w0, w1) in enumerate(wb):
            data[:, i, j] = x.data[:, h0:h1, w0:w1].mean(axis=(1, 2))

    def vjp(g):
        gx = np.zeros_like(x.data)
        for i, (h0, h1) in enumerate(hb):
            for j, (w0, w1) in enumerate(wb):
                gx[:, h0:h1, w0:w1] += g[:, i, j, None, None] / ((h1 - h0) * (w1 - w0))
        return (gx,)

    return _make(data, (x,), vjp)


# -- attention ----------------------------------------------------------------

def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, heads: int = 1) -> Tensor:
    """Multi-head softmax(Q Kᵀ / sqrt(d_h)) V over the last-dim head slices.

    Q is (n,d); K and V are (m,d). The d columns are split into ``heads``
    contiguous slices of width d_h = d/heads, attention runs per slice, and
    the head outputs are concatenated. No projections are applied.
    """
    if q.data.ndim != 2 or k.data.ndim != 2 or v.data.ndim != 2:
        raise DimensionError("attention expects 2-D Q, K, V")
    n, d = q.shape
    m, dk = k.shape
    mv, dv = v.shape
    if dk != d or dv != d or mv != m:
        raise DimensionError(f"attention shape mismatch: Q{q.shape} K{k.shape} V{v.shape}")
    if n < 1 or m < 1:
        raise DimensionError("attention requires at least one query and one key")
    if heads < 1 or d % heads != 0:
        raise ConfigError(f"heads={heads} must divide embedding width {d}")
    d_h = d // heads
    inv = 1.0 / math.sqrt(d_h)
    outs = []
    for i in range(heads):
        qi = narrow(q, 1, i * d_h, d_h)
        ki = narrow(k, 1, i * d_h, d_h)
        vi = narrow(v, 1, i * d_h, d_h)
        logits = scale(matmul(qi, transpose(ki)), inv)
        outs.append(matmul(softmax(logits, axis=-1), vi))
    return outs[0] if heads == 1 else concat(outs, axis=1)
