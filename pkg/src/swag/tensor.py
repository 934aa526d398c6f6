"""Dense tensors with a small reverse-mode autodiff tape.

Arrays live in numpy; every differentiable op records its parents and a
backward rule on the output tensor. :func:`backward` linearises the graph
reachable from a scalar loss into a :class:`Tape` (topological order) and
walks it in reverse, summing gradients from multiple consumers.

Precision is global: ``float32`` by default, ``float64`` via
:func:`set_precision` or the ``SWAG_PRECISION`` environment variable.
Scalar reductions (:func:`sum`) always accumulate and return float64 so that
finite-difference checks of losses are not swamped by f32 rounding.
"""

from __future__ import annotations

import os
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, NumericFault, UsageError

_PRECISIONS = {"f32": np.float32, "f64": np.float64}
_dtype = _PRECISIONS.get(os.environ.get("SWAG_PRECISION", "f32"), np.float32)


def set_precision(name: str) -> None:
    """Select the global scalar type, ``"f32"`` or ``"f64"``."""
    global _dtype
    try:
        _dtype = _PRECISIONS[name]
    except KeyError:
        raise UsageError(f"unknown precision {name!r}; expected f32 or f64") from None


def get_dtype() -> type:
    return _dtype


def precision_name() -> str:
    return "f64" if _dtype is np.float64 else "f32"


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """N-d array that optionally participates in gradient recording."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype or _dtype)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        if any(d < 1 for d in arr.shape):
            raise ConfigurationError(f"tensor dims must be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, _as_tensor(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self) -> "Tensor":
        return sum(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _as_tensor(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full(like.shape, value, dtype=like.dtype), dtype=like.dtype)


def _check_finite(out: np.ndarray, op: str) -> None:
    # f64 accumulation cannot overflow from finite f32 inputs, so a
    # non-finite sum means a non-finite element.
    if not np.isfinite(out.sum(dtype=np.float64)):
        raise NumericFault("non-finite value produced", op=op)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn,
            op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data if data.flags.c_contiguous else np.ascontiguousarray(data)
    out.grad = None
    out.op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def custom_op(data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn,
              op: str) -> Tensor:
    """Wrap ``data`` as the output of a user-defined differentiable op.

    ``backward`` maps the upstream gradient to one gradient (or None) per
    parent, in order.
    """
    return _result(np.asarray(data), tuple(parents), backward, op)


# ---------------------------------------------------------------------------
# tape


class Tape:
    """Operations reachable from one output, in topological order."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
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
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def run(self, seed: np.ndarray) -> None:
        output = self.nodes[-1]
        grads: dict[int, np.ndarray] = {id(output): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    g = g.astype(node.data.dtype, copy=False)
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf with ``requires_grad`` reachable from ``loss``."""
    if loss.data.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any tensor that requires grad")
    tape = Tape.from_output(loss)
    tape.run(np.ones_like(loss.data))


# ---------------------------------------------------------------------------
# elementwise and shape ops


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ConfigurationError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)
    return _result(out, (x,), lambda g: (g * mask,), "relu")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = (x.data * c).astype(x.dtype, copy=False)
    return _result(out, (x,), lambda g: (g * c,), "scale")


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape, dtype = x.shape, x.dtype
    total = np.asarray(x.data.sum(dtype=np.float64))

    def back(g):
        return (np.full(shape, g, dtype=dtype),)

    return _result(total, (x,), back, "sum")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ConfigurationError("transpose expects a matrix")
    return _result(x.data.T, (x,), lambda g: (np.ascontiguousarray(g.T),), "transpose")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return _result(ad @ bd, (a, b), back, "matmul")


def softmax_all(x: Tensor, temperature: float = 1.0) -> Tensor:
    """Softmax over every entry of ``x`` jointly, shifted by the global max."""
    if not temperature > 0:
        raise UsageError("temperature must be > 0")
    t = float(temperature)
    z = x.data.astype(np.float64) / t
    e = np.exp(z - z.max())
    p64 = e / e.sum()
    p = p64.astype(x.dtype)

    def back(g):
        g64 = g.astype(np.float64)
        return (((g64 - (g64 * p64).sum()) * p64 / t).astype(x.dtype),)

    return _result(p, (x,), back, "softmax_all")


# ---------------------------------------------------------------------------
# convolution, pooling, normalization


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]
    # (n, c, ho, wo, kh, kw) -> (n, c, kh, kw, ho, wo) -> (n, c*kh*kw, ho*wo)
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding, lowered to im2col + matmul."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ConfigurationError("conv2d expects NCHW input and OIHW weight")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ConfigurationError(f"conv2d: weight expects {wcin} input channels, got {cin}")
    if stride < 1 or padding < 0:
        raise ConfigurationError("conv2d: stride must be >= 1 and padding >= 0")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ConfigurationError(f"conv2d: input {h}x{w} too small for {kh}x{kw} kernel")
    if bias is not None and bias.shape != (cout,):
        raise ConfigurationError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    w2 = weight.data.reshape(cout, cin * kh * kw)

    pointwise = kh == 1 and kw == 1 and padding == 0
    if pointwise:
        xs = x.data[:, :, ::stride, ::stride] if stride > 1 else x.data
        cols = xs.reshape(n, cin, ho * wo)
    else:
        xp = x.data
        if padding:
            xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        cols = _im2col(xp, kh, kw, stride, ho, wo)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(n, cout, ho, wo)
    keep_cols = cols if weight.requires_grad else None
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        g2 = g.reshape(n, cout, ho * wo)
        gx = gw = gb = None
        if x.requires_grad:
            dcols = np.matmul(w2.T, g2)
            if pointwise:
                if stride > 1:
                    gx = np.zeros_like(x.data)
                    gx[:, :, ::stride, ::stride] = dcols.reshape(n, cin, ho, wo)
                else:
                    gx = dcols.reshape(x.shape)
            else:
                dcols = dcols.reshape(n, cin, kh, kw, ho, wo)
                gxp = np.zeros((n, cin, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i : i + stride * (ho - 1) + 1 : stride,
                            j : j + stride * (wo - 1) + 1 : stride] += dcols[:, :, i, j]
                gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        if weight.requires_grad:
            gw = np.tensordot(g2, keep_cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _result(out, parents, back, "conv2d")


def conv2d_naive(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None,
                 stride: int = 1, padding: int = 0) -> np.ndarray:
    """Direct-loop convolution; the reference the im2col path is tested against."""
    n, cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    xp = np.zeros((n, cin, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    xp[:, :, padding : padding + h, padding : padding + w] = x
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    for b in range(n):
        for o in range(cout):
            for r in range(ho):
                for s in range(wo):
                    acc = 0.0 if bias is None else float(bias[o])
                    for c in range(cin):
                        for i in range(kh):
                            for j in range(kw):
                                acc += xp[b, c, r * stride + i, s * stride + j] * weight[o, c, i, j]
                    out[b, o, r, s] = acc
    return out


def maxpool2d(x: Tensor, k: int = 2, stride: int = 2) -> Tensor:
    """2x2/2 max pooling; gradient goes to the first row-major argmax."""
    if k != 2 or stride != 2:
        raise ConfigurationError("maxpool2d supports only k=2, stride=2")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigurationError(f"maxpool2d needs even spatial dims, got {h}x{w}")
    ho, wo = h // 2, w // 2
    win = x.data.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    idx = win.argmax(axis=-1)[..., None]
    out = np.take_along_axis(win, idx, axis=-1)[..., 0]

    def back(g):
        gw = np.zeros((n, c, ho, wo, 4), dtype=g.dtype)
        np.put_along_axis(gw, idx, g[..., None], axis=-1)
        return (gw.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return _result(out, (x,), back, "maxpool2d")


BN_EPS = 1e-5


def batchnorm2d_eval(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: Tensor,
                     running_var: Tensor, eps: float = BN_EPS) -> Tensor:
    """Per-channel affine normalization with stored statistics."""
    c = x.shape[1]
    for name, t in (("gamma", gamma), ("beta", beta), ("running_mean", running_mean),
                    ("running_var", running_var)):
        if t.shape != (c,):
            raise ConfigurationError(f"batchnorm: {name} has shape {t.shape}, expected ({c},)")
    if (running_var.data < 0).any():
        raise ConfigurationError("batchnorm: running_var must be non-negative")
    inv_std = (1.0 / np.sqrt(running_var.data.astype(np.float64) + eps)).astype(x.dtype)
    mul_c = (gamma.data * inv_std)[:, None, None]
    shift = (beta.data - running_mean.data * gamma.data * inv_std)[:, None, None]
    out = x.data * mul_c + shift

    def back(g):
        gx = g * mul_c if x.requires_grad else None
        ggamma = gbeta = None
        if gamma.requires_grad:
            xhat = (x.data - running_mean.data[:, None, None]) * inv_std[:, None, None]
            ggamma = (g * xhat).sum(axis=(0, 2, 3))
        if beta.requires_grad:
            gbeta = g.sum(axis=(0, 2, 3))
        return gx, ggamma, gbeta, None, None

    return _result(out, (x, gamma, beta, running_mean, running_var), back, "batchnorm2d_eval")

