"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Set GEOLAB_DISABLE_NUMBA=1 to force the numpy path (used by the benchmark in
benchmarks/bench_kernels.py and as a safety hatch on platforms without a
working numba install). Both paths compute identical quantities; any
difference is floating-point summation order only.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("GEOLAB_DISABLE_NUMBA", "0") not in ("0", "", "false")

if not _DISABLE:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        _DISABLE = True

USING_NUMBA = not _DISABLE


# -- im2col / col2im for 3x3 stride-1 pad-1 convolution ----------------------

def _im2col3x3_np(x):
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((C, 9, B, H, W), dtype=x.dtype)
    for k in range(9):
        di, dj = divmod(k, 3)
        np.copyto(cols[:, k], xp[:, :, di : di + H, dj : dj + W].transpose(1, 0, 2, 3))
    return cols


def _col2im3x3_np(dcols, B, C, H, W):
    dxp = np.zeros((B, C, H + 2, W + 2), dtype=dcols.dtype)
    for k in range(9):
        di, dj = divmod(k, 3)
        dxp[:, :, di : di + H, dj : dj + W] += dcols[:, k].transpose(1, 0, 2, 3)
    return dxp[:, :, 1 : H + 1, 1 : W + 1]


if USING_NUMBA:

    @njit(cache=True)
    def _im2col3x3_nb(x):  # pragma: no cover - exercised via dispatch
        B, C, H, W = x.shape
        cols = np.zeros((C, 9, B, H, W), dtype=x.dtype)
        for b in range(B):
            for c in range(C):
                for k in range(9):
                    di = k // 3 - 1
                    dj = k % 3 - 1
                    for i in range(H):
                        si = i + di
                        if si < 0 or si >= H:
                            continue
                        for j in range(W):
                            sj = j + dj
                            if 0 <= sj < W:
                                cols[c, k, b, i, j] = x[b, c, si, sj]
        return cols

    @njit(cache=True)
    def _col2im3x3_nb(dcols, B, C, H, W):  # pragma: no cover
        dx = np.zeros((B, C, H, W), dtype=dcols.dtype)
        for b in range(B):
            for c in range(C):
                for k in range(9):
                    di = k // 3 - 1
                    dj = k % 3 - 1
                    for i in range(H):
                        si = i + di
                        if si < 0 or si >= H:
                            continue
                        for j in range(W):
                            sj = j + dj
                            if 0 <= sj < W:
                                dx[b, c, si, sj] += dcols[c, k, b, i, j]
        return dx


def im2col3x3(x):
    """(B, C, H, W) -> (C, 9, B, H, W) patch matrix for pad-1 3x3 conv."""
    if USING_NUMBA:
        return _im2col3x3_nb(np.ascontiguousarray(x))
    return _im2col3x3_np(x)


def col2im3x3(dcols, B, C, H, W):
    """Adjoint of im2col3x3: scatter-add patches back to (B, C, H, W)."""
    if USING_NUMBA:
        return _col2im3x3_nb(np.ascontiguousarray(dcols), B, C, H, W)
    return _col2im3x3_np(dcols, B, C, H, W)


# -- bilinear sampling -------------------------------------------------------

def _bilinear_np(img, sx, sy):
    H, W = img.shape
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros(sx.shape, dtype=img.dtype)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            wgt = (fx if dx else 1 - fx) * (fy if dy else 1 - fy)
            valid = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
            out[valid] += wgt[valid] * img[yi[valid], xi[valid]]
    return out


if USING_NUMBA:

    @njit(cache=True)
    def _bilinear_nb(img, sx, sy):  # pragma: no cover
        H, W = img.shape
        Ho, Wo = sx.shape
        out = np.zeros((Ho, Wo), dtype=img.dtype)
        for i in range(Ho):
            for j in range(Wo):
                x = sx[i, j]
                y = sy[i, j]
                x0 = int(np.floor(x))
                y0 = int(np.floor(y))
                fx = x - x0
                fy = y - y0
                acc = 0.0
                for dy in range(2):
                    yi = y0 + dy
                    if yi < 0 or yi >= H:
                        continue
                    wy = fy if dy == 1 else 1.0 - fy
                    for dx in range(2):
                        xi = x0 + dx
                        if xi < 0 or xi >= W:
                            continue
                        wx = fx if dx == 1 else 1.0 - fx
                        acc += wx * wy * img[yi, xi]
                out[i, j] = acc
        return out


def bilinear_sample(img, sx, sy):
    """Sample img at float coordinates (sx, sy); out-of-bounds reads are 0."""
    img = np.ascontiguousarray(img)
    if USING_NUMBA:
        return _bilinear_nb(img, np.ascontiguousarray(sx), np.ascontiguousarray(sy))
    return _bilinear_np(img, sx, sy)


# -- fused Adam update -------------------------------------------------------

def _adam_np(p, g, m, v, lr, b1, b2, eps, t):
    m *= b1
    m += (1 - b1) * g
    v *= b2
    v += (1 - b2) * g * g
    mhat = m / (1 - b1**t)
    vhat = v / (1 - b2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


if USING_NUMBA:

    @njit(cache=True)
    def _adam_nb(p, g, m, v, lr, b1, b2, eps, t):  # pragma: no cover
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for i in range(p.size):
            gi = g[i]
            m[i] = b1 * m[i] + (1 - b1) * gi
            v[i] = b2 * v[i] + (1 - b2) * gi * gi
            p[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)


def adam_update(p, g, m, v, lr, b1, b2, eps, t):
    """In-place Adam step with bias correction on flat float arrays."""
    if USING_NUMBA:
        _adam_nb(p.ravel(), g.ravel(), m.ravel(), v.ravel(), lr, b1, b2, eps, t)
    else:
        _adam_np(p.ravel(), g.ravel(), m.ravel(), v.ravel(), lr, b1, b2, eps, t)
