"""Reverse-mode differentiation on a recorded tape of numpy operations.

Each :class:`TapeValue` holds a value (a float64 array, possibly 0-d), an adjoint
filled in by :func:`backward`, and the operation that produced it. Values built
only from constants are not recorded, so a forward pass without trainable leaves
costs no more than plain numpy.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "TapeError",
    "TapeValue",
    "leaf",
    "constant",
    "backward",
    "add",
    "mul",
    "matmul",
    "affine",
    "relu",
    "gather",
    "scatter_add",
    "concat",
    "reshape",
    "total",
    "mean",
    "conv_gather",
    "mirror_window",
    "path_conv",
    "segment_sum",
]


class TapeError(RuntimeError):
    pass


class TapeValue:
    __slots__ = ("value", "adjoint", "requires_grad", "_parents", "_vjp", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.adjoint: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[TapeValue, ...] = ()
        self._vjp: Callable | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return self._vjp is None

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"TapeValue{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, key):
        return getitem(self, key)


def leaf(value, name: str | None = None) -> TapeValue:
    """A trainable input: its adjoint is filled in by :func:`backward`."""
    return TapeValue(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def constant(value) -> TapeValue:
    return TapeValue(value, requires_grad=False)


def _wrap(x) -> TapeValue:
    return x if isinstance(x, TapeValue) else constant(x)


def _record(value, parents: Sequence[TapeValue], vjp: Callable) -> TapeValue:
    out = TapeValue(value)
    live = tuple(p for p in parents)
    if any(p.requires_grad for p in live):
        out.requires_grad = True
        out._parents = live
        out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss: TapeValue) -> None:
    """Fill ``adjoint`` on every recorded value reachable from a scalar ``loss``."""
    if not isinstance(loss, TapeValue) or not loss.requires_grad:
        raise TapeError("backward called on a value that was not recorded on the tape")
    if loss.value.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    order: list[TapeValue] = []
    seen: set[int] = set()
    stack: list[tuple[TapeValue, bool]] = [(loss, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    for node in order:
        node.adjoint = None
    loss.adjoint = np.ones_like(loss.value)
    for node in reversed(order):
        if node._vjp is None or node.adjoint is None:
            continue
        grads = node._vjp(node.adjoint)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.adjoint is None:
                # vjps never write into their incoming gradient, so sharing is safe
                parent.adjoint = np.asarray(g, dtype=np.float64)
            else:
                parent.adjoint = parent.adjoint + g
    for node in order:
        if node.adjoint is None:
            node.adjoint = np.zeros_like(node.value)


def add(a, b) -> TapeValue:
    a, b = _wrap(a), _wrap(b)
    sa, sb = a.shape, b.shape
    return _record(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def mul(a, b) -> TapeValue:
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    return _record(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def power(a: TapeValue, exponent: float) -> TapeValue:
    av = a.value
    return _record(av**exponent, (a,), lambda g: (g * exponent * av ** (exponent - 1),))


def matmul(a, b) -> TapeValue:
    """``a @ b`` with ``a`` of shape (..., k) and ``b`` a (k, n) matrix."""
    return affine(a, b, None)


def affine(a, w, bias=None) -> TapeValue:
    """``a @ w + bias`` over the last axis of ``a``, as one 2-d matrix product."""
    a, w = _wrap(a), _wrap(w)
    av, wv = a.value, w.value
    if wv.ndim != 2:
        raise TapeError("matmul expects a 2-d right operand")
    lead = av.shape[:-1]
    a2 = av.reshape(-1, av.shape[-1])
    out = a2 @ wv
    parents = (a, w)
    if bias is not None:
        bias = _wrap(bias)
        out += bias.value
        parents = (a, w, bias)

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        da = (g2 @ wv.T).reshape(av.shape)
        dw = a2.T @ g2
        if bias is None:
            return da, dw
        return da, dw, g2.sum(axis=0).reshape(bias.shape)

    return _record(out.reshape(lead + (wv.shape[1],)), parents, vjp)


def relu(a: TapeValue) -> TapeValue:
    av = a.value
    out = np.maximum(av, 0.0)
    return _record(out, (a,), lambda g: (g * (av > 0),))


def getitem(a: TapeValue, key) -> TapeValue:
    av = a.value

    def vjp(g):
        out = np.zeros_like(av)
        out[key] = g
        return (out,)

    return _record(av[key], (a,), vjp)


_plans: dict[int, tuple] = {}


def _segment_plan(index: np.ndarray):
    """Sort order, run starts and run targets for ``index``.

    Read-only index arrays are memoised by identity; the cache entry keeps the
    array alive so the id cannot be reused while it is cached.
    """
    hit = _plans.get(id(index))
    if hit is not None and hit[0] is index:
        return hit[1:]
    flat_idx = index.reshape(-1)
    order = np.argsort(flat_idx, kind="stable")
    sorted_idx = flat_idx[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    plan = (order, starts, sorted_idx[starts])
    if not index.flags.writeable:
        if len(_plans) >= 512:
            _plans.clear()
        _plans[id(index)] = (index,) + plan
    return plan


def segment_sum(values: np.ndarray, index: np.ndarray, size: int) -> np.ndarray:
    """``out[index[i]] += values[i]``, summed in a fixed (stable-sorted) order."""
    index = np.asarray(index, dtype=np.int64)
    vals = np.asarray(values).reshape((index.size,) + np.shape(values)[index.ndim:])
    out = np.zeros((size,) + vals.shape[1:])
    if index.size == 0:
        return out
    order, starts, targets = _segment_plan(index)
    out[targets] = np.add.reduceat(vals[order], starts, axis=0)
    return out


def gather(a: TapeValue, index: np.ndarray) -> TapeValue:
    """Rows of ``a`` along axis 0: ``out = a[index]``."""
    index = np.asarray(index, dtype=np.int64)
    av = a.value

    def vjp(g):
        return (segment_sum(g, index, av.shape[0]),)

    return _record(av[index], (a,), vjp)


def scatter_add(a: TapeValue, index: np.ndarray, size: int) -> TapeValue:
    """Segment sum: ``out[index[i]] += a[i]`` into ``size`` rows."""
    index = np.asarray(index, dtype=np.int64)
    av = a.value
    return _record(segment_sum(av, index, size), (a,), lambda g: (g[index],))


def concat(values: Sequence[TapeValue], axis: int = 0) -> TapeValue:
    values = [_wrap(v) for v in values]
    sizes = [v.shape[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(np.concatenate([v.value for v in values], axis=axis), values, vjp)


def reshape(a: TapeValue, shape: tuple[int, ...]) -> TapeValue:
    old = a.shape
    return _record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def total(a: TapeValue, axis=None) -> TapeValue:
    av = a.value

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, av.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), av.shape).copy(),)

    return _record(av.sum(axis=axis), (a,), vjp)


def mean(a: TapeValue) -> TapeValue:
    return mul(total(a), 1.0 / a.value.size)


_checked: dict[int, tuple] = {}


def _check_injective(index: np.ndarray, k: int) -> None:
    hit = _checked.get(id(index))
    if hit is not None and hit[0] is index and hit[1] == k:
        return
    for j in range(index.shape[1]):
        col = index[:, j]
        real = col[col < k]
        if len(np.unique(real)) != len(real):
            raise TapeError("conv index column is not injective")
    if not index.flags.writeable:
        _checked[id(index)] = (index, k)


def conv_gather(x: TapeValue, w: TapeValue, index: np.ndarray, bias=None) -> TapeValue:
    """Gather-and-mix convolution shared by the path and dihedral layers.

    ``out[n, u] = sum_j xpad[n, index[u, j]] @ w[j]`` where ``x`` has shape
    (N, K, C_in), ``w`` has shape (J, C_in, C_out), and index value K selects a
    zero row. Every column of ``index`` must be injective apart from K. An
    optional ``bias`` of shape (C_out,) is added to every output row.
    """
    index = np.asarray(index, dtype=np.int64)
    xv, wv = x.value, w.value
    n, k, c_in = xv.shape
    n_taps, _, c_out = wv.shape
    u = index.shape[0]
    if index.shape[1] != n_taps:
        raise TapeError(f"index has {index.shape[1]} taps, filter has {n_taps}")
    _check_injective(index, k)
    xpad = np.concatenate([xv, np.zeros((n, 1, c_in))], axis=1).reshape(n * (k + 1), c_in)
    rows = (np.arange(n)[:, None, None] * (k + 1) + index[None]).reshape(-1)
    gathered = xpad[rows].reshape(n * u, n_taps * c_in)
    wflat = wv.reshape(n_taps * c_in, c_out)
    out = gathered @ wflat
    parents = (x, w)
    if bias is not None:
        bias = _wrap(bias)
        out += bias.value
        parents = (x, w, bias)

    def vjp(g):
        gflat = g.reshape(n * u, c_out)
        dw = (gathered.T @ gflat).reshape(n_taps, c_in, c_out)
        dg = (gflat @ wflat.T).reshape(n, u, n_taps, c_in)
        dxpad = np.zeros((n, k + 1, c_in))
        for j in range(n_taps):
            dxpad[:, index[:, j]] += dg[:, :, j]
        if bias is None:
            return dxpad[:, :k], dw
        return dxpad[:, :k], dw, gflat.sum(axis=0).reshape(bias.shape)

    return _record(out.reshape(n, u, c_out), parents, vjp)


def mirror_window(x: TapeValue, half_width: int) -> TapeValue:
    """Stack ``x[u]`` and the mirrored pairs ``x[u-j] + x[u+j]`` (j = 1..h, zero padded).

    Input (N, K, C), output (N, K, (h+1)*C). Contracting this against symmetric
    taps w(0), ..., w(h) gives the zero-padded window convolution with the
    mirrored taps counted once.
    """
    xv = x.value
    n, k, c = xv.shape
    h = half_width
    out = _fill_window(xv, h, np.empty((n, k, h + 1, c)))

    def vjp(g):
        return (_fold_window(g, n, k, h, c),)

    return _record(out.reshape(n, k, (h + 1) * c), (x,), vjp)


def _fill_window(xv: np.ndarray, h: int, buf: np.ndarray) -> np.ndarray:
    m, k, c = xv.shape
    b = buf[:m]
    b[:, :, 0] = xv
    reach = min(h, k - 1)
    b[:, :, reach + 1 :] = 0.0
    for j in range(1, reach + 1):
        b[:, :j, j] = 0.0
        b[:, j:, j] = xv[:, : k - j]
        b[:, : k - j, j] += xv[:, j:]
    return b.reshape(m * k, (h + 1) * c)


def _fold_window(d: np.ndarray, m: int, k: int, h: int, c: int) -> np.ndarray:
    d = d.reshape(m, k, h + 1, c)
    dx = d[:, :, 0].copy()
    for j in range(1, min(h, k - 1) + 1):
        dx[:, : k - j] += d[:, j:, j]
        dx[:, j:] += d[:, : k - j, j]
    return dx


def path_conv(x, taps, half_width: int, bias=None, residual=None, *, relu: bool = False,
              rows: int = 128) -> TapeValue:
    """``mirror_window(x) @ taps + bias + residual`` without materialising the window.

    ``relu=True`` applies the rectifier to the sum in place.

    ``taps`` has shape (h+1, C_in, C_out). The window is rebuilt in blocks of
    ``rows`` instances in both passes, which keeps it in cache; the block order
    is fixed, so results are deterministic.
    """
    x, taps = _wrap(x), _wrap(taps)
    xv, tv = x.value, taps.value
    n, k, c_in = xv.shape
    h = half_width
    if tv.shape[:2] != (h + 1, c_in):
        raise TapeError(f"taps of shape {tv.shape} do not fit half-width {h} and {c_in} channels")
    c_out = tv.shape[2]
    wflat = tv.reshape((h + 1) * c_in, c_out)
    buf = np.empty((min(rows, max(n, 1)), k, h + 1, c_in))
    out = np.empty((n * k, c_out))
    for s in range(0, n, rows):
        m = min(rows, n - s)
        np.matmul(_fill_window(xv[s : s + m], h, buf), wflat, out=out[s * k : (s + m) * k])
    parents = [x, taps]
    if bias is not None:
        bias = _wrap(bias)
        out += bias.value
        parents.append(bias)
    if residual is not None:
        residual = _wrap(residual)
        out += residual.value.reshape(n * k, c_out)
        parents.append(residual)
    if relu:
        np.maximum(out, 0.0, out=out)

    def vjp(g):
        if relu:
            g = g * (out > 0).reshape(g.shape)
        gflat = g.reshape(n * k, c_out)
        dw = np.zeros_like(wflat)
        dx = np.empty_like(xv)
        for s in range(0, n, rows):
            m = min(rows, n - s)
            gc = gflat[s * k : (s + m) * k]
            dw += _fill_window(xv[s : s + m], h, buf).T @ gc
            dx[s : s + m] = _fold_window(gc @ wflat.T, m, k, h, c_in)
        grads = [dx, dw.reshape(tv.shape)]
        if bias is not None:
            grads.append(gflat.sum(axis=0).reshape(bias.shape))
        if residual is not None:
            grads.append(g)
        return tuple(grads)

    return _record(out.reshape(n, k, c_out), tuple(parents), vjp)


def parameters_of(values: Iterable[TapeValue]) -> list[TapeValue]:
    return [v for v in values if v.requires_grad and v.is_leaf]
