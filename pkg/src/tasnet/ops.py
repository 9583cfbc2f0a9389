"""Differentiable sequence operations used by the separation network.

Sequence tensors are laid out channels-first, ``[C, T]`` or batched
``[batch, C, T]``. All contractions are carried out in float64 and rounded to
the storage dtype of the inputs afterwards.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import ShapeError
from .tensor import ACC, Tensor, make_result, result_dtype

NORM_EPS = 1e-8


def _as3d(a: np.ndarray, what: str) -> tuple[np.ndarray, bool]:
    if a.ndim == 2:
        return a[None], False
    if a.ndim == 3:
        return a, True
    raise ShapeError(f"{what}: expected [C, T] or [batch, C, T], got shape {a.shape}")


def _positive(name: str, value: int) -> int:
    if int(value) != value or value < 1:
        raise ShapeError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    dilation: int = 1,
    pad_left: int = 0,
    pad_right: int = 0,
    groups: int = 1,
) -> Tensor:
    """1-D cross-correlation with zero padding, dilation and channel groups.

    Args:
        x: input ``[Cin, T]`` or ``[batch, Cin, T]``.
        weight: kernel ``[Cout, Cin // groups, P]``.
        bias: optional ``[Cout]``.
        stride, dilation: positive step sizes.
        pad_left, pad_right: zeros added on each side of the time axis.
        groups: number of channel groups; ``groups == Cin == Cout`` gives a
            depthwise convolution, ``P == 1`` a pointwise one.

    Returns:
        ``[Cout, T']`` (or batched) with
        ``T' = (T + pad_left + pad_right - (P - 1) * dilation - 1) // stride + 1``.
    """
    stride = _positive("stride", stride)
    dilation = _positive("dilation", dilation)
    groups = _positive("groups", groups)
    if pad_left < 0 or pad_right < 0:
        raise ShapeError(f"padding must be non-negative, got ({pad_left}, {pad_right})")
    xd, batched = _as3d(x.data, "conv1d")
    if weight.ndim != 3:
        raise ShapeError(f"conv1d: kernel must be [Cout, Cin/groups, P], got {weight.shape}")
    nb, cin, t = xd.shape
    cout, cg, p = weight.shape
    if cin % groups or cout % groups or cg != cin // groups:
        raise ShapeError(
            f"conv1d: input channels {cin}, kernel {weight.shape} and groups={groups} are inconsistent"
        )
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv1d: bias must have shape ({cout},), got {bias.shape}")
    span = (p - 1) * dilation + 1
    tp = t + pad_left + pad_right
    if tp < span:
        raise ShapeError(f"conv1d: padded length {tp} is shorter than the kernel span {span}")
    tout = (tp - span) // stride + 1
    dt = result_dtype(x, weight) if bias is None else result_dtype(x, weight, bias)

    xp = xd.astype(ACC)
    if pad_left or pad_right:
        xp = np.pad(xp, ((0, 0), (0, 0), (pad_left, pad_right)))
    w64 = weight.data.astype(ACC)
    last = (tout - 1) * stride + 1

    def tap(k: int) -> np.ndarray:
        o = k * dilation
        return xp[:, :, o : o + last : stride]

    depthwise = cg == 1 and cout == cin and groups == cin and groups > 1
    if groups == 1:
        if p == 1:
            cols = tap(0)
            w2 = w64[:, :, 0]
        else:
            cols = np.stack([tap(k) for k in range(p)], axis=2).reshape(nb, cin * p, tout)
            w2 = w64.reshape(cout, cin * p)
        out = np.matmul(w2, cols)
    elif depthwise:
        out = w64[:, 0, 0, None] * tap(0)
        for k in range(1, p):
            out += w64[:, 0, k, None] * tap(k)
    else:
        cols = np.stack([tap(k) for k in range(p)], axis=2).reshape(nb, groups, cg, p, tout)
        wg = w64.reshape(groups, cout // groups, cg, p)
        out = np.einsum("bgikt,goik->bgot", cols, wg).reshape(nb, cout, tout)
    if bias is not None:
        out += bias.data.astype(ACC)[:, None]
    result = out.astype(dt)
    if not batched:
        result = result[0]

    def bw(g):
        g64 = _as3d(g, "conv1d grad")[0].astype(ACC)
        gxp = np.zeros_like(xp)
        if groups == 1:
            gw = np.tensordot(g64, cols, axes=([0, 2], [0, 2])).reshape(cout, cin, p)
            gcols = np.matmul(w2.T, g64).reshape(nb, cin, p, tout)
            for k in range(p):
                o = k * dilation
                gxp[:, :, o : o + last : stride] += gcols[:, :, k]
        elif depthwise:
            gw = np.empty_like(w64)
            for k in range(p):
                o = k * dilation
                gw[:, 0, k] = (g64 * tap(k)).sum(axis=(0, 2))
                gxp[:, :, o : o + last : stride] += w64[:, 0, k, None] * g64
        else:
            gg = g64.reshape(nb, groups, cout // groups, tout)
            gw = np.einsum("bgot,bgikt->goik", gg, cols).reshape(cout, cg, p)
            gcols = np.einsum("bgot,goik->bgikt", gg, wg).reshape(nb, cin, p, tout)
            for k in range(p):
                o = k * dilation
                gxp[:, :, o : o + last : stride] += gcols[:, :, k]
        gx = gxp[:, :, pad_left : pad_left + t]
        if not batched:
            gx = gx[0]
        gb = None if bias is None else g64.sum(axis=(0, 2))
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return make_result(result, inputs, bw)


def transposed_conv1d(x: Tensor, weight: Tensor, stride: int) -> Tensor:
    """Adjoint of :func:`conv1d` with the same kernel: frame synthesis + overlap-add.

    ``x`` is ``[Cin, T]`` (or batched), ``weight`` is ``[Cin, Cout, P]``; the
    result has ``(T - 1) * stride + P`` samples with overlapping contributions
    summed.
    """
    stride = _positive("stride", stride)
    xd, batched = _as3d(x.data, "transposed_conv1d")
    nb, cin, t = xd.shape
    if t == 0 or cin == 0 or nb == 0:
        raise ShapeError("transposed_conv1d: empty input")
    if weight.ndim != 3 or weight.shape[0] != cin:
        raise ShapeError(f"transposed_conv1d: kernel {weight.shape} does not match {cin} input channels")
    _, cout, p = weight.shape
    if stride > p:
        raise ShapeError(f"transposed_conv1d: stride {stride} exceeds kernel size {p}")
    dt = result_dtype(x, weight)
    x64 = xd.astype(ACC)
    w2 = weight.data.astype(ACC).reshape(cin, cout * p)
    frames = np.matmul(w2.T, x64).reshape(nb, cout, p, t)
    tout = (t - 1) * stride + p
    last = (t - 1) * stride + 1
    out = np.zeros((nb, cout, tout), dtype=ACC)
    for k in range(p):
        out[:, :, k : k + last : stride] += frames[:, :, k]
    result = out.astype(dt)
    if not batched:
        result = result[0]

    def bw(g):
        g64 = _as3d(g, "transposed_conv1d grad")[0].astype(ACC)
        gf = np.stack([g64[:, :, k : k + last : stride] for k in range(p)], axis=2)
        gf = gf.reshape(nb, cout * p, t)
        gx = np.matmul(w2, gf)
        gw = np.tensordot(x64, gf, axes=([0, 2], [0, 2])).reshape(cin, cout, p)
        return (gx if batched else gx[0]), gw

    return make_result(result, (x, weight), bw)


def _channel_param(param: Tensor, x: Tensor, what: str) -> np.ndarray:
    """Return ``param`` as an array broadcastable against ``[..., C, T]``."""
    if param.size == 1:
        return param.data.reshape(())
    if x.ndim >= 2 and param.shape == (x.shape[-2], 1):
        return param.data
    raise ShapeError(f"{what}: parameter shape {param.shape} must be scalar or ({x.shape[-2]}, 1)")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if len(shape) == 0 or int(np.prod(shape)) == 1:
        return np.asarray(g.sum(dtype=ACC)).reshape(shape)
    axes = tuple(range(g.ndim - 2)) + (g.ndim - 1,)
    return g.sum(axis=axes, dtype=ACC).reshape(shape)


def prelu(x: Tensor, alpha: Tensor) -> Tensor:
    """``x`` where non-negative, ``alpha * x`` elsewhere (scalar or per-channel slope)."""
    a = _channel_param(alpha, x, "prelu")
    xd = x.data
    neg = xd < 0
    dt = result_dtype(x, alpha)
    out = np.where(neg, a * xd, xd).astype(dt, copy=False)

    def bw(g):
        gx = np.where(neg, a * g, g)
        ga = _reduce_to(np.where(neg, g * xd, 0.0), alpha.shape)
        return gx, ga

    return make_result(out, (x, alpha), bw)


ACTIVATIONS = ("sigmoid", "softmax_over_sources", "relu")


def activation(kind: str, x: Tensor, source_axis: int = -3) -> Tensor:
    """Pointwise nonlinearity; softmax normalizes along ``source_axis``."""
    xd = x.data
    if kind == "sigmoid":
        s = expit(xd)
        return make_result(s, (x,), lambda g: (g * s * (1.0 - s),))
    if kind == "relu":
        pos = xd > 0
        return make_result(np.where(pos, xd, 0.0).astype(x.dtype), (x,), lambda g: (g * pos,))
    if kind in ("softmax", "softmax_over_sources"):
        if x.ndim < 1 or not -x.ndim <= source_axis < x.ndim:
            raise ShapeError(f"softmax: source axis {source_axis} out of range for shape {x.shape}")
        z = xd.astype(ACC)
        z = np.exp(z - z.max(axis=source_axis, keepdims=True))
        s64 = z / z.sum(axis=source_axis, keepdims=True)
        s = s64.astype(x.dtype)

        def bw(g):
            return (s64 * (g - (g * s64).sum(axis=source_axis, keepdims=True)),)

        return make_result(s, (x,), bw)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def _norm_params(f: Tensor, gamma: Tensor, beta: Tensor, what: str):
    if f.ndim not in (2, 3):
        raise ShapeError(f"{what}: expected [N, T] or [batch, N, T], got {f.shape}")
    n, t = f.shape[-2:]
    if n < 1 or t < 1:
        raise ShapeError(f"{what}: empty feature map {f.shape}")
    for name, p in (("gamma", gamma), ("beta", beta)):
        if p.shape != (n, 1):
            raise ShapeError(f"{what}: {name} must have shape ({n}, 1), got {p.shape}")
    return gamma.data.astype(ACC), beta.data.astype(ACC)


def global_layer_norm(F: Tensor, gamma: Tensor, beta: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Normalize each sample over all channels and frames, then scale and shift."""
    g_, b_ = _norm_params(F, gamma, beta, "global_layer_norm")
    f = F.data.astype(ACC)
    axes = (-2, -1)
    cnt = f.shape[-2] * f.shape[-1]
    mu = f.mean(axis=axes, keepdims=True)
    c = f - mu
    flat = f.max(axis=axes, keepdims=True) == f.min(axis=axes, keepdims=True)
    c = np.where(flat, 0.0, c)
    var = (c * c).mean(axis=axes, keepdims=True)
    r = 1.0 / np.sqrt(var + eps)
    xh = c * r
    dt = result_dtype(F, gamma, beta)
    out = (xh * g_ + b_).astype(dt)

    def bw(g):
        g64 = g.astype(ACC)
        # a guarded (constant) sample has a constant output: no gradient flows to F
        gxh = np.where(flat, 0.0, g64 * g_)
        dr = (gxh * c).sum(axis=axes, keepdims=True)
        dvar = -0.5 * r**3 * dr
        dmu = -r * gxh.sum(axis=axes, keepdims=True)
        gf = gxh * r + (2.0 / cnt) * c * dvar + dmu / cnt
        return gf, _reduce_to(g64 * xh, gamma.shape), _reduce_to(g64, beta.shape)

    return make_result(out, (F, gamma, beta), bw)


def cumulative_layer_norm(F: Tensor, gamma: Tensor, beta: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Causal normalization: frame k uses the statistics of frames 1..k only."""
    g_, b_ = _norm_params(F, gamma, beta, "cumulative_layer_norm")
    f = F.data.astype(ACC)
    n, t = f.shape[-2:]
    cnt = n * np.arange(1, t + 1, dtype=ACC)
    s1 = np.cumsum(f.sum(axis=-2), axis=-1)
    s2 = np.cumsum((f * f).sum(axis=-2), axis=-1)
    mu = s1 / cnt
    var = np.maximum(s2 / cnt - mu * mu, 0.0)
    r = 1.0 / np.sqrt(var + eps)
    hi = np.maximum.accumulate(f.max(axis=-2), axis=-1)
    lo = np.minimum.accumulate(f.min(axis=-2), axis=-1)
    flat = (hi == lo)[..., None, :]
    c = f - mu[..., None, :]
    xh = np.where(flat, 0.0, c * r[..., None, :])
    dt = result_dtype(F, gamma, beta)
    out = (xh * g_ + b_).astype(dt)

    def bw(g):
        g64 = g.astype(ACC)
        gxh = np.where(flat, 0.0, g64 * g_)
        dr = (gxh * c).sum(axis=-2)
        dvar = -0.5 * r**3 * dr
        dmu = -r * gxh.sum(axis=-2) - 2.0 * mu * dvar
        rev1 = np.cumsum((dmu / cnt)[..., ::-1], axis=-1)[..., ::-1]
        rev2 = np.cumsum((dvar / cnt)[..., ::-1], axis=-1)[..., ::-1]
        gf = gxh * r[..., None, :] + rev1[..., None, :] + 2.0 * f * rev2[..., None, :]
        return gf, _reduce_to(g64 * xh, gamma.shape), _reduce_to(g64, beta.shape)

    return make_result(out, (F, gamma, beta), bw)
