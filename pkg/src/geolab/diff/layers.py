"""Differentiable operations.

Every op takes/returns `Tensor`s, computes the standard forward semantics and
installs an analytic backward closure. Layers accept a leading batch
dimension everywhere; the per-sample shapes quoted in docstrings get an
implicit batch of one when passed unbatched.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from ..geometry import CorrespondenceSet
from ..kernels import col2im3x3, im2col3x3
from .tensor import Tensor, result

__all__ = [
    "add", "mul", "scale", "tsum", "tmean", "take", "reshape", "concat",
    "relu", "tanh", "linear", "conv3x3", "batchnorm", "depth_concat",
    "flatten", "avgpool2x2", "location_aware_max_pool",
    "rank_constraint_layer", "frobenius_normalize_layer",
    "mse_loss", "huber_loss", "sed_loss",
]


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- arithmetic --------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return result(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * b.data)
        if b.requires_grad:
            b.accumulate(g * a.data)

    return result(a.data * b.data, (a, b), backward)


def scale(a, s: float) -> Tensor:
    a = _t(a)
    s = float(s)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * s)

    return result(a.data * s, (a,), backward)


def tsum(a) -> Tensor:
    a = _t(a)

    def backward(g):
        if a.requires_grad:
            a.accumulate(np.broadcast_to(g, a.shape))

    return result(np.sum(a.data), (a,), backward)


def tmean(a) -> Tensor:
    return scale(tsum(a), 1.0 / _t(a).data.size)


def take(a, index: int) -> Tensor:
    """Select one sample along the leading axis."""
    a = _t(a)

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[index] = g
            a.accumulate(buf)

    return result(a.data[index], (a,), backward)


def slice_cols(a, lo: int, hi: int) -> Tensor:
    """Select columns [lo, hi) of a (B, n) tensor."""
    a = _t(a)
    if a.data.ndim != 2 or not 0 <= lo < hi <= a.shape[1]:
        raise ShapeMismatch(f"slice_cols: [{lo}, {hi}) of {a.shape}")

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[:, lo:hi] = g
            a.accumulate(buf)

    return result(a.data[:, lo:hi], (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _t(a)
    old = a.shape

    def backward(g):
        if a.requires_grad:
            a.accumulate(g.reshape(old))

    return result(a.data.reshape(shape), (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_t(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate(g[tuple(idx)])

    return result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


# -- activations -------------------------------------------------------------

def relu(x) -> Tensor:
    x = _t(x)
    mask = x.data > 0

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * mask)

    return result(x.data * mask, (x,), backward)


def tanh(x) -> Tensor:
    x = _t(x)
    y = np.tanh(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * (1.0 - y * y))

    return result(y, (x,), backward)


# -- dense / conv ------------------------------------------------------------

def linear(x, W, b) -> Tensor:
    """y = x W^T + b with W of shape (out, in)."""
    x, W, b = _t(x), _t(W), _t(b)
    batched = x.data.ndim == 2
    xd = x.data if batched else x.data[None, :]
    if xd.ndim != 2 or W.data.ndim != 2 or xd.shape[1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ShapeMismatch(f"linear: x{x.shape} W{W.shape} b{b.shape}")
    y = xd @ W.data.T + b.data

    def backward(g):
        gd = g if batched else g[None, :]
        if W.requires_grad:
            W.accumulate(gd.T @ xd)
        if b.requires_grad:
            b.accumulate(gd.sum(axis=0))
        if x.requires_grad:
            gx = gd @ W.data
            x.accumulate(gx if batched else gx[0])

    return result(y if batched else y[0], (x, W, b), backward)


def conv3x3(x, W, b) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1. x: (C, H, W) [+batch],
    W: (F, C, 3, 3), b: (F,)."""
    x, W, b = _t(x), _t(W), _t(b)
    batched = x.data.ndim == 4
    xd = x.data if batched else x.data[None]
    if xd.ndim != 4 or W.data.ndim != 4 or W.shape[2:] != (3, 3):
        raise ShapeMismatch(f"conv3x3: x{x.shape} W{W.shape}")
    B, C, H, Wd = xd.shape
    F = W.shape[0]
    if W.shape[1] != C or b.shape != (F,):
        raise ShapeMismatch(f"conv3x3: x{x.shape} W{W.shape} b{b.shape}")
    cols = im2col3x3(xd).reshape(C * 9, B * H * Wd)
    Wf = W.data.reshape(F, C * 9)
    y = (Wf @ cols).reshape(F, B, H, Wd).transpose(1, 0, 2, 3)
    y += b.data[None, :, None, None]

    def backward(g):
        gd = (g if batched else g[None]).transpose(1, 0, 2, 3).reshape(F, B * H * Wd)
        if W.requires_grad:
            W.accumulate((gd @ cols.T).reshape(W.shape))
        if b.requires_grad:
            b.accumulate(gd.sum(axis=1))
        if x.requires_grad:
            dcols = (Wf.T @ gd).reshape(C, 9, B, H, Wd)
            dx = col2im3x3(dcols, B, C, H, Wd)
            x.accumulate(dx if batched else dx[0])

    return result(y if batched else y[0], (x, W, b), backward)


def batchnorm(x, gamma, beta, running_mean, running_var, training: bool,
              momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Channel-wise batch normalization. x: (B, C) or (B, C, H, W); running
    stats are plain arrays updated in place during training."""
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    if x.data.ndim == 2:
        axes = (0,)
        cshape = (1, -1)
    elif x.data.ndim == 4:
        axes = (0, 2, 3)
        cshape = (1, -1, 1, 1)
    else:
        raise ShapeMismatch(f"batchnorm: x{x.shape}")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeMismatch(f"batchnorm: x{x.shape} gamma{gamma.shape} beta{beta.shape}")
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(cshape)) * inv_std.reshape(cshape)
    y = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)
    m = x.data.size // C

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate(np.sum(g * xhat, axis=axes))
        if beta.requires_grad:
            beta.accumulate(np.sum(g, axis=axes))
        if x.requires_grad:
            gscaled = g * gamma.data.reshape(cshape)
            if training:
                gm = gscaled.mean(axis=axes).reshape(cshape)
                gxm = (gscaled * xhat).mean(axis=axes).reshape(cshape)
                dx = inv_std.reshape(cshape) * (gscaled - gm - xhat * gxm)
            else:
                dx = gscaled * inv_std.reshape(cshape)
            x.accumulate(dx)

    return result(y, (x, gamma, beta), backward)


def depth_concat(a, b) -> Tensor:
    """Concatenate feature grids along the channel axis."""
    a, b = _t(a), _t(b)
    axis = 1 if a.data.ndim == 4 else 0
    if a.data.ndim != b.data.ndim or a.shape[axis + 1 :] != b.shape[axis + 1 :]:
        raise ShapeMismatch(f"depth_concat: {a.shape} vs {b.shape}")
    return concat([a, b], axis=axis)


def flatten(x) -> Tensor:
    """Flatten to (B, -1), or to a vector when unbatched 1..3-D input."""
    x = _t(x)
    if x.data.ndim in (2, 4):
        return reshape(x, (x.shape[0], -1))
    return reshape(x, (-1,))


def avgpool2x2(x) -> Tensor:
    """2x2 average pooling with stride 2 (used by the stand-in backbone)."""
    x = _t(x)
    batched = x.data.ndim == 4
    xd = x.data if batched else x.data[None]
    B, C, H, W = xd.shape
    if H % 2 or W % 2:
        raise ShapeMismatch(f"avgpool2x2: odd spatial size {x.shape}")
    y = xd.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))

    def backward(g):
        gd = g if batched else g[None]
        dx = np.repeat(np.repeat(gd, 2, axis=2), 2, axis=3) * 0.25
        x.accumulate(dx if batched else dx[0])

    return result(y if batched else y[0], (x,), backward)


def location_aware_max_pool(x) -> Tensor:
    """Global max pool that keeps locations: per channel output is
    (max value, argmax row/(H-1), argmax col/(W-1)), laid out as
    [all maxes | all row indices | all col indices] -> (3C,). Ties resolve to
    the first row-major position; index outputs carry zero gradient."""
    x = _t(x)
    batched = x.data.ndim == 4
    xd = x.data if batched else x.data[None]
    if xd.ndim != 4:
        raise ShapeMismatch(f"location_aware_max_pool: x{x.shape}")
    B, C, H, W = xd.shape
    flat = xd.reshape(B, C, H * W)
    idx = np.argmax(flat, axis=2)
    vals = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]
    rows = idx // W
    cols = idx % W
    rnorm = rows / (H - 1) if H > 1 else np.zeros_like(rows)
    cnorm = cols / (W - 1) if W > 1 else np.zeros_like(cols)
    y = np.concatenate([vals, rnorm.astype(xd.dtype), cnorm.astype(xd.dtype)], axis=1)

    def backward(g):
        gd = g if batched else g[None]
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, idx[:, :, None], gd[:, :C, None], axis=2)
        dx = dflat.reshape(B, C, H, W)
        x.accumulate(dx if batched else dx[0])

    return result(y if batched else y[0], (x,), backward)


def rank_constraint_layer(v) -> Tensor:
    """Map an 8-vector to a rank-2 3x3 matrix: columns f1 = v[0:3],
    f2 = v[3:6], f3 = v[6] f1 + v[7] f2."""
    v = _t(v)
    batched = v.data.ndim == 2
    vd = v.data if batched else v.data[None]
    if vd.ndim != 2 or vd.shape[1] != 8:
        raise ShapeMismatch(f"rank_constraint_layer: v{v.shape}")
    f1 = vd[:, 0:3]
    f2 = vd[:, 3:6]
    u = vd[:, 6:7]
    w = vd[:, 7:8]
    F = np.stack([f1, f2, u * f1 + w * f2], axis=2)  # columns

    def backward(g):
        gd = g if batched else g[None]
        dv = np.empty_like(vd)
        dv[:, 0:3] = gd[:, :, 0] + u * gd[:, :, 2]
        dv[:, 3:6] = gd[:, :, 1] + w * gd[:, :, 2]
        dv[:, 6] = np.sum(f1 * gd[:, :, 2], axis=1)
        dv[:, 7] = np.sum(f2 * gd[:, :, 2], axis=1)
        v.accumulate(dv if batched else dv[0])

    return result(F if batched else F[0], (v,), backward)


def frobenius_normalize_layer(m, eps: float = 1e-8) -> Tensor:
    """m / max(||m||_Fr, eps), per sample; the eps guard keeps the layer
    differentiable at zero (unlike geometry.normalize_frobenius, which
    raises)."""
    m = _t(m)
    batched = m.data.ndim == 3
    md = m.data if batched else m.data[None]
    if md.ndim != 3 or md.shape[1:] != (3, 3):
        raise ShapeMismatch(f"frobenius_normalize_layer: m{m.shape}")
    norms = np.sqrt(np.sum(md**2, axis=(1, 2)))
    guarded = np.maximum(norms, eps)
    y = md / guarded[:, None, None]

    def backward(g):
        gd = g if batched else g[None]
        dm = gd / guarded[:, None, None]
        live = norms >= eps  # below the guard the denominator is constant
        if np.any(live):
            dot = np.sum(gd * md, axis=(1, 2))
            corr = md * (dot / guarded**3)[:, None, None]
            dm = dm - np.where(live[:, None, None], corr, 0.0)
        m.accumulate(dm if batched else dm[0])

    return result(y if batched else y[0], (m,), backward)


# -- losses ------------------------------------------------------------------

def mse_loss(pred, target) -> Tensor:
    pred = _t(pred)
    target = np.asarray(target, dtype=pred.data.dtype)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse_loss: {pred.shape} vs {target.shape}")
    e = pred.data - target
    n = e.size

    def backward(g):
        if pred.requires_grad:
            pred.accumulate(g * 2.0 * e / n)

    return result(np.mean(e**2), (pred,), backward)


def huber_loss(pred, target, delta: float = 1.0) -> Tensor:
    pred = _t(pred)
    target = np.asarray(target, dtype=pred.data.dtype)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"huber_loss: {pred.shape} vs {target.shape}")
    e = pred.data - target
    n = e.size
    ae = np.abs(e)
    val = np.mean(np.where(ae <= delta, 0.5 * e**2, delta * (ae - 0.5 * delta)))

    def backward(g):
        if pred.requires_grad:
            pred.accumulate(g * np.clip(e, -delta, delta) / n)

    return result(val, (pred,), backward)


def sed_loss(F, corrs: CorrespondenceSet) -> Tensor:
    """Symmetric epipolar distance of a (3, 3) tensor as a differentiable
    scalar; the backward pass is the exact analytic gradient."""
    F = _t(F)
    if F.shape != (3, 3):
        raise ShapeMismatch(f"sed_loss: F{F.shape}")
    P, Q = corrs.homogeneous()
    P = P.astype(F.data.dtype)
    Q = Q.astype(F.data.dtype)
    A = P @ F.data.T           # rows F p_i (lines in image 2)
    Bm = Q @ F.data            # rows F^T q_i (lines in image 1)
    r = np.einsum("nk,nk->n", Q, A)
    n2a = A[:, 0] ** 2 + A[:, 1] ** 2
    n2b = Bm[:, 0] ** 2 + Bm[:, 1] ** 2
    wa = 1.0 / n2a
    wb = 1.0 / n2b
    w = wa + wb
    val = np.sum(w * r**2)

    def backward(g):
        if not F.requires_grad:
            return
        At = A.copy()
        At[:, 2] = 0.0
        Bt = Bm.copy()
        Bt[:, 2] = 0.0
        G = (
            2.0 * ((w * r)[:, None] * Q).T @ P
            - 2.0 * ((r**2 * wa**2)[:, None] * At).T @ P
            - 2.0 * Q.T @ ((r**2 * wb**2)[:, None] * Bt)
        )
        F.accumulate(g * G)

    return result(val, (F,), backward)
