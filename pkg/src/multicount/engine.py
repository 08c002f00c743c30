"""Minimal deterministic tensor core with reverse-mode differentiation.

Everything is float64 and numpy-backed.  The operator set is exactly what
the counting network's forward pass and training objective need: dilated
convolution, 2x2 max pooling, integer-scale bilinear upsampling, channel
concatenation/slicing, a handful of pointwise ops, and full reductions.
No broadcasting, no GPU, no graph serialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_AXIS_NAMES = ("batch", "channels", "height", "width")


def _axis_name(ndim: int, axis: int) -> str:
    if ndim == 4:
        return _AXIS_NAMES[axis]
    return f"axis {axis}"


def _check_same_shape(a: "Tensor", b: "Tensor", op: str) -> None:
    if a.shape == b.shape:
        return
    if len(a.shape) == len(b.shape):
        for i, (x, y) in enumerate(zip(a.shape, b.shape)):
            if x != y:
                raise ValueError(
                    f"{op}: {_axis_name(len(a.shape), i)} mismatch ({x} vs {y})"
                )
    raise ValueError(f"{op}: rank mismatch ({a.shape} vs {b.shape})")


class Tensor:
    """Dense float64 array participating in a differentiable graph.

    ``grad`` is populated lazily by :meth:`backward`; it always matches the
    shape of ``data``.  Tensors built by operators remember their parents
    and a closure that routes the incoming gradient to them.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _from_op(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor with requires_grad.

        Only scalar (single-element) tensors can seed a backward pass.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        order = []
        pushed = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in pushed:
                continue
            pushed.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in pushed:
                    stack.append((parent, False))
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------------

    def _binary(self, other, op: str):
        if isinstance(other, Tensor):
            _check_same_shape(self, other, op)
            return other, None
        return None, float(other)

    def __add__(self, other):
        t, c = self._binary(other, "add")
        if t is not None:
            def backward(g):
                self.accumulate_grad(g)
                t.accumulate_grad(g)
            return Tensor._from_op(self.data + t.data, (self, t), backward)

        def backward(g):
            self.accumulate_grad(g)
        return Tensor._from_op(self.data + c, (self,), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self.accumulate_grad(-g)
        return Tensor._from_op(-self.data, (self,), backward)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return self + (-other)
        return self + (-float(other))

    def __rsub__(self, other):
        return (-self) + float(other)

    def __mul__(self, other):
        t, c = self._binary(other, "multiply")
        if t is not None:
            def backward(g):
                self.accumulate_grad(g * t.data)
                t.accumulate_grad(g * self.data)
            return Tensor._from_op(self.data * t.data, (self, t), backward)

        def backward(g):
            self.accumulate_grad(g * c)
        return Tensor._from_op(self.data * c, (self,), backward)

    __rmul__ = __mul__

    # -- pointwise -----------------------------------------------------------

    def relu(self):
        mask = self.data > 0.0

        def backward(g):
            self.accumulate_grad(g * mask)
        return Tensor._from_op(self.data * mask, (self,), backward)

    def sigmoid(self):
        x = self.data
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)

        def backward(g):
            self.accumulate_grad(g * out * (1.0 - out))
        return Tensor._from_op(out, (self,), backward)

    def log(self):
        def backward(g):
            self.accumulate_grad(g / self.data)
        return Tensor._from_op(np.log(self.data), (self,), backward)

    def clamp(self, lo: float, hi: float):
        mask = (self.data >= lo) & (self.data <= hi)

        def backward(g):
            self.accumulate_grad(g * mask)
        return Tensor._from_op(np.clip(self.data, lo, hi), (self,), backward)

    # -- reductions ----------------------------------------------------------

    def sum(self):
        shape = self.data.shape

        def backward(g):
            self.accumulate_grad(np.broadcast_to(g, shape))
        return Tensor._from_op(self.data.sum(), (self,), backward)

    def mean(self):
        n = self.data.size
        shape = self.data.shape

        def backward(g):
            self.accumulate_grad(np.broadcast_to(g / n, shape))
        return Tensor._from_op(self.data.mean(), (self,), backward)


def pointwise(kind: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Elementwise op dispatcher: relu, sigmoid (unary); multiply, add (binary)."""
    if kind == "relu":
        return a.relu()
    if kind == "sigmoid":
        return a.sigmoid()
    if kind in ("multiply", "add"):
        if b is None:
            raise ValueError(f"pointwise {kind} needs two operands")
        return a * b if kind == "multiply" else a + b
    raise ValueError(f"unknown pointwise kind: {kind!r}")


# -- convolution ---------------------------------------------------------------


@dataclass(frozen=True)
class ConvSpec:
    """Square-kernel convolution hyperparameters."""

    kernel_size: int
    stride: int = 1
    padding: int = 0
    dilation: int = 1
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        for field in ("kernel_size", "stride", "dilation", "in_channels",
                      "out_channels"):
            if getattr(self, field) < 1:
                raise ValueError(f"ConvSpec.{field} must be positive")
        if self.padding < 0:
            raise ValueError("ConvSpec.padding must be nonnegative")

    @property
    def effective_kernel(self) -> int:
        return self.dilation * (self.kernel_size - 1) + 1

    def output_extent(self, extent: int) -> int:
        padded = extent + 2 * self.padding
        if self.effective_kernel > padded:
            raise ValueError(
                f"effective kernel {self.effective_kernel} exceeds padded "
                f"extent {padded}"
            )
        return (padded - self.effective_kernel) // self.stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, spec: ConvSpec) -> Tensor:
    """Zero-padded dilated cross-correlation plus per-channel bias.

    Forward runs as im2col + GEMM; the backward closure reuses the gathered
    columns for the weight gradient and scatters the input gradient with one
    strided add per kernel tap.
    """
    if x.data.ndim != 4:
        raise ValueError(f"conv2d input must be 4-axis, got {x.shape}")
    B, C, H, W = x.shape
    k, s, p, d = spec.kernel_size, spec.stride, spec.padding, spec.dilation
    if C != spec.in_channels:
        raise ValueError(
            f"conv2d: channels mismatch (input has {C}, spec expects "
            f"{spec.in_channels})"
        )
    if weight.shape != (spec.out_channels, spec.in_channels, k, k):
        raise ValueError(
            f"conv2d: weight shape {weight.shape} does not match spec "
            f"({spec.out_channels}, {spec.in_channels}, {k}, {k})"
        )
    if bias.shape != (spec.out_channels,):
        raise ValueError(f"conv2d: bias shape {bias.shape} is not per-channel")
    Ho, Wo = spec.output_extent(H), spec.output_extent(W)
    O = spec.out_channels

    if p > 0:
        xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    else:
        xp = x.data
    cols = np.empty((B, C, k, k, Ho, Wo))
    for ki in range(k):
        for kj in range(k):
            cols[:, :, ki, kj] = xp[:, :, ki * d: ki * d + s * Ho: s,
                                          kj * d: kj * d + s * Wo: s]
    cols2 = cols.reshape(B, C * k * k, Ho * Wo)
    w2 = weight.data.reshape(O, C * k * k)
    out = np.matmul(w2, cols2).reshape(B, O, Ho, Wo)
    out += bias.data.reshape(1, O, 1, 1)

    def backward(g):
        gy = g.reshape(B, O, Ho * Wo)
        if weight.requires_grad:
            gyt = gy.transpose(1, 0, 2).reshape(O, B * Ho * Wo)
            colst = cols2.transpose(1, 0, 2).reshape(C * k * k, B * Ho * Wo)
            weight.accumulate_grad((gyt @ colst.T).reshape(weight.shape))
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gcols = np.matmul(w2.T, gy).reshape(B, C, k, k, Ho, Wo)
            gxp = np.zeros_like(xp)
            for ki in range(k):
                for kj in range(k):
                    gxp[:, :, ki * d: ki * d + s * Ho: s,
                              kj * d: kj * d + s * Wo: s] += gcols[:, :, ki, kj]
            if p > 0:
                gxp = gxp[:, :, p:-p, p:-p]
            x.accumulate_grad(gxp)

    return Tensor._from_op(out, (x, weight, bias), backward)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; gradient goes to the first argmax in
    row-major scan order within each window."""
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ValueError(f"maxpool2d needs even spatial extents, got {H}x{W}")
    Hh, Wh = H // 2, W // 2
    windows = (x.data.reshape(B, C, Hh, 2, Wh, 2)
               .transpose(0, 1, 2, 4, 3, 5)
               .reshape(B, C, Hh, Wh, 4))
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros((B, C, Hh, Wh, 4))
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = (gw.reshape(B, C, Hh, Wh, 2, 2)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(B, C, H, W))
        x.accumulate_grad(gx)

    return Tensor._from_op(out, (x,), backward)


def _interp_matrix(n_in: int, scale: int) -> np.ndarray:
    """Dense 1-D bilinear interpolation operator, half-pixel-center convention."""
    n_out = n_in * scale
    src = (np.arange(n_out) + 0.5) / scale - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


def upsample_bilinear(x: Tensor, scale: int) -> Tensor:
    """Bilinear upsampling by an integer factor (identity when scale is 1)."""
    if int(scale) != scale or scale < 1:
        raise ValueError(f"upsample scale must be a positive integer, got {scale}")
    scale = int(scale)
    if scale == 1:
        def backward(g):
            x.accumulate_grad(g)
        return Tensor._from_op(x.data.copy(), (x,), backward)

    _, _, H, W = x.shape
    my = _interp_matrix(H, scale)
    mx = _interp_matrix(W, scale)
    out = np.matmul(np.matmul(my, x.data), mx.T)

    def backward(g):
        x.accumulate_grad(np.matmul(np.matmul(my.T, g), mx))

    return Tensor._from_op(out, (x,), backward)


def concat_channels(xs: list[Tensor]) -> Tensor:
    """Concatenate along the channel axis, preserving argument order."""
    if not xs:
        raise ValueError("concat_channels needs at least one input")
    first = xs[0]
    for t in xs[1:]:
        for axis in (0, 2, 3):
            if t.shape[axis] != first.shape[axis]:
                raise ValueError(
                    f"concat_channels: {_axis_name(4, axis)} mismatch "
                    f"({t.shape[axis]} vs {first.shape[axis]})"
                )
    out = np.concatenate([t.data for t in xs], axis=1)
    offsets = np.cumsum([0] + [t.shape[1] for t in xs])

    def backward(g):
        for t, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
            t.accumulate_grad(g[:, lo:hi])

    return Tensor._from_op(out, tuple(xs), backward)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Take channels [start, stop); the mirror of concat_channels."""
    C = x.shape[1]
    if not (0 <= start < stop <= C):
        raise ValueError(f"slice_channels [{start}:{stop}] out of range for {C}")

    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[:, start:stop] += g

    return Tensor._from_op(x.data[:, start:stop].copy(), (x,), backward)
