"""Reverse-mode automatic differentiation over dense float64 arrays.

A small tape: every operation returns a new :class:`Tensor` holding the
forward value and a closure that scatters the incoming adjoint to its
parents. ``backward`` topologically sorts the graph from a scalar loss and
accumulates ``.grad`` on every tensor with ``requires_grad`` set.

All math is double precision. Convolution uses the true-convolution
orientation (kernel flipped relative to cross-correlation): with kernel
``[1, 0, 0]`` the output is the input shifted one step to the left, with
zero fill. GeLU uses the exact erf form, not the tanh approximation.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .exceptions import InvalidConfigError, InvalidInputError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """Dense float64 array with optional gradient tracking.

    Parameters
    ----------
    data : array_like
        Values, converted to a row-major float64 ndarray.
    requires_grad : bool
        Track operations on this tensor so ``backward`` can reach it.
    name : str, optional
        Identifier used when collecting gradients of model parameters.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _lift(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    def _child(self, data, parents, vjp) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        return out

    # -- elementwise arithmetic ---------------------------------------------

    def __add__(self, other):
        other = self._lift(other)
        data = self.data + other.data

        def vjp(g):
            return _sum_to(g, self.data.shape), _sum_to(g, other.data.shape)

        return self._child(data, (self, other), vjp)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        data = self.data - other.data

        def vjp(g):
            return _sum_to(g, self.data.shape), _sum_to(-g, other.data.shape)

        return self._child(data, (self, other), vjp)

    def __rsub__(self, other):
        return self._lift(other).__sub__(self)

    def __neg__(self):
        return self._child(-self.data, (self,), lambda g: (-g,))

    def __mul__(self, other):
        other = self._lift(other)
        data = self.data * other.data
        a, b = self.data, other.data

        def vjp(g):
            return _sum_to(g * b, a.shape), _sum_to(g * a, b.shape)

        return self._child(data, (self, other), vjp)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        data = self.data / other.data
        a, b = self.data, other.data

        def vjp(g):
            return _sum_to(g / b, a.shape), _sum_to(-g * a / (b * b), b.shape)

        return self._child(data, (self, other), vjp)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise InvalidInputError("only scalar exponents are supported")
        data = self.data ** exponent
        x = self.data

        def vjp(g):
            return (g * exponent * x ** (exponent - 1),)

        return self._child(data, (self,), vjp)

    # -- linear algebra ------------------------------------------------------

    def __matmul__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data
        data = a @ b

        def vjp(g):
            if a.ndim == 1:
                ga = g @ b.T if b.ndim == 2 else g * b
            else:
                ga = g @ b.T if b.ndim == 2 else np.outer(g, b)
            if b.ndim == 1:
                gb = a.T @ g if a.ndim == 2 else g * a
            else:
                gb = a.T @ g if a.ndim == 2 else np.outer(a, g)
            return _sum_to(ga, a.shape), _sum_to(gb, b.shape)

        return self._child(data, (self, other), vjp)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None) -> "Tensor":
        data = self.data.sum(axis=axis)
        shape = self.data.shape

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape).astype(np.float64, copy=True),)
            expanded = np.expand_dims(g, axis)
            return (np.broadcast_to(expanded, shape).astype(np.float64, copy=True),)

        return self._child(data, (self,), vjp)

    def mean(self, axis=None) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    # -- shape manipulation ----------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        data = self.data.reshape(shape)

        def vjp(g):
            return (g.reshape(old),)

        return self._child(data, (self,), vjp)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        data = self.data.transpose(axes)

        def vjp(g):
            return (g.transpose(inv),)

        return self._child(data, (self,), vjp)

    def __getitem__(self, index) -> "Tensor":
        data = self.data[index]
        shape = self.data.shape

        def vjp(g):
            full = np.zeros(shape, dtype=np.float64)
            full[index] = g
            return (full,)

        return self._child(data, (self,), vjp)

    def pad_last(self, total: int) -> "Tensor":
        """Zero-pad the last axis on the right up to length ``total``."""
        length = self.data.shape[-1]
        if total < length:
            raise InvalidInputError(f"cannot pad last axis of {length} down to {total}")
        data = _zero_pad_last(self.data, 0, total - length)

        def vjp(g):
            return (g[..., :length],)

        return self._child(data, (self,), vjp)


def _sum_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(grad.shape, shape)) if s == 1 and gs != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def parameter(data, name: str) -> Tensor:
    """Create a named trainable tensor."""
    return Tensor(data, requires_grad=True, name=name)


# -- neural primitives ---------------------------------------------------------


def gelu(x: Tensor) -> Tensor:
    """Elementwise x * Phi(x) with Phi the exact standard normal CDF."""
    x = Tensor._lift(x)
    v = x.data
    cdf = 0.5 * (1.0 + erf(v / _SQRT2))
    data = v * cdf

    def vjp(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * v * v)
        return (g * (cdf + v * pdf),)

    return x._child(data, (x,), vjp)


def softmax(x: Tensor) -> Tensor:
    """Stable softmax over the last axis; outputs sum to 1."""
    x = Tensor._lift(x)
    if x.data.size == 0:
        raise InvalidInputError("softmax of an empty tensor")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - inner),)

    return x._child(s, (x,), vjp)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-length 1D convolution over the last axis.

    Parameters
    ----------
    x : Tensor
        Shape ``(..., C_in, L)``; leading axes are treated as batch.
    kernels : Tensor
        Shape ``(C_out, C_in, K)`` with K odd and K <= L.
    bias : Tensor, optional
        Shape ``(C_out,)``, added per output channel.

    Returns
    -------
    Tensor
        Shape ``(..., C_out, L)``. True-convolution orientation; the input
        is zero-padded by (K-1)/2 on each side.
    """
    x = Tensor._lift(x)
    kernels = Tensor._lift(kernels)
    if kernels.data.ndim != 3:
        raise InvalidConfigError("kernels must have shape (C_out, C_in, K)")
    c_out, c_in, k = kernels.data.shape
    if x.data.ndim < 2 or x.data.shape[-2] != c_in:
        raise InvalidConfigError(
            f"input channels {x.data.shape} incompatible with kernels {kernels.data.shape}"
        )
    length = x.data.shape[-1]
    if k % 2 == 0:
        raise InvalidConfigError(f"kernel size {k} must be odd")
    if k > length:
        raise InvalidConfigError(f"kernel size {k} exceeds signal length {length}")
    pad = (k - 1) // 2

    batch = x.data.shape[:-2]
    xp = _zero_pad_last(x.data, pad, pad)
    # (..., C_in, L, K) view -> (..., L, C_in*K) copy, one GEMM per conv.
    windows = sliding_window_view(xp, k, axis=-1)
    wt = np.ascontiguousarray(windows.swapaxes(-3, -2)).reshape(*batch, length, c_in * k)
    wflat = kernels.data[:, :, ::-1].reshape(c_out, c_in * k)
    data = (wt @ wflat.T).swapaxes(-2, -1)
    if bias is not None:
        data = data + bias.data[..., :, None]

    w_orig = kernels.data

    def vjp(g):
        gt = np.ascontiguousarray(g.swapaxes(-2, -1))  # (..., L, C_out)
        g2 = gt.reshape(-1, c_out)
        gwf = g2.T @ wt.reshape(-1, c_in * k)
        gw = np.ascontiguousarray(gwf.reshape(c_out, c_in, k)[:, :, ::-1])
        gp = _zero_pad_last(g, k - 1, k - 1)
        gwin = sliding_window_view(gp, k, axis=-1)  # (..., C_out, L+2p, K)
        gwt = np.ascontiguousarray(gwin.swapaxes(-3, -2)).reshape(*batch, length + 2 * pad, c_out * k)
        w2 = np.ascontiguousarray(w_orig.transpose(0, 2, 1)).reshape(c_out * k, c_in)
        gx = (gwt @ w2).swapaxes(-2, -1)[..., pad : pad + length]
        gx = np.ascontiguousarray(gx)
        if bias is not None:
            gb = g2.sum(axis=0)
            return gx, gw, gb
        return gx, gw

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _zero_pad_last(a: np.ndarray, before: int, after: int) -> np.ndarray:
    out = np.zeros(a.shape[:-1] + (a.shape[-1] + before + after,), dtype=a.dtype)
    out[..., before : before + a.shape[-1]] = a
    return out


# -- backward pass --------------------------------------------------------------


def scatter_rows(t: Tensor, rows: np.ndarray, total: int) -> Tensor:
    """Place the rows of ``t`` at positions ``rows`` of a zero tensor with
    ``total`` leading rows. Row indices must be unique."""
    rows = np.asarray(rows, dtype=np.int64)
    data = np.zeros((total,) + t.data.shape[1:], dtype=np.float64)
    data[rows] = t.data

    def vjp(g):
        return (g[rows],)

    return t._child(data, (t,), vjp)


def concat_rows(tensors: list[Tensor]) -> Tensor:
    """Concatenate tensors along axis 0."""
    if len(tensors) == 1:
        return tensors[0]
    data = np.concatenate([t.data for t in tensors], axis=0)
    sizes = [t.data.shape[0] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    out = Tensor(data)
    if any(t.requires_grad for t in tensors):
        out.requires_grad = True
        out._parents = tuple(tensors)
        out._vjp = vjp
    return out


def _toposort(root: Tensor) -> list[Tensor]:
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, free_graph: bool = True) -> None:
    """Accumulate d(loss)/d(tensor) into ``.grad`` of every reachable tensor.

    The loss must be a scalar produced by operations from this module.
    ``free_graph`` drops the tape while walking it, breaking the reference
    cycles between nodes and their closures so memory returns promptly.
    """
    if loss.data.size != 1:
        raise InvalidInputError(f"loss must be scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = _toposort(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        for p, g in zip(node._parents, node._vjp(node.grad)):
            if not p.requires_grad:
                continue
            if p.grad is None:
                p.grad = np.array(g, dtype=np.float64, copy=True)
            else:
                p.grad += g
        if free_graph:
            node._parents = ()
            node._vjp = None
            if node is not loss:
                node.grad = None


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Run ``backward`` and return one gradient per named parameter.

    Parameters not reached by the graph get zero gradients of matching shape.
    """
    for p in params.values():
        p.zero_grad()
    backward(loss)
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
