"""Dense numerical primitives shared by the clustering, matching and
enhancement stages.

All functions are pure and return new float64 arrays.  Maps are either
``(H, W)`` or channel-first ``(C, H, W)``; spatial operations act on the last
two axes.
"""

from functools import lru_cache

import numpy as np

from .validation import check_map, check_scalar_map, check_size, check_vector

#: Stabiliser used by min-max normalisation and cosine similarity.
EPS = 1e-7


@lru_cache(maxsize=256)
def _pool_matrix(n_in, n_out):
    """Row ``i`` averages the window ``[floor(i*n/o), ceil((i+1)*n/o))``."""
    mat = np.zeros((n_out, n_in))
    for i in range(n_out):
        start = (i * n_in) // n_out
        stop = -((-(i + 1) * n_in) // n_out)
        mat[i, start:stop] = 1.0 / (stop - start)
    mat.flags.writeable = False
    return mat


@lru_cache(maxsize=256)
def _bilinear_matrix(n_in, n_out):
    mat = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        mat[i, lo] += 1.0 - frac
        mat[i, hi] += frac
    mat.flags.writeable = False
    return mat


def _separable(x, rows, cols):
    # (out_h, H) @ (..., H, W) @ (W, out_w)
    return np.matmul(np.matmul(rows, x), cols.T)


def adaptive_avg_pool(x, out_h, out_w):
    """Adaptive average pooling over the last two axes.

    Output cell ``(i, j)`` is the mean of the input rows
    ``[floor(i*H/out_h), ceil((i+1)*H/out_h))`` and the analogous columns.
    """
    x = check_map(x)
    out_h, out_w = check_size(out_h, out_w)
    h, w = x.shape[-2:]
    if out_h > h or out_w > w:
        raise ValueError(f"cannot pool {h}x{w} up to {out_h}x{out_w}")
    if (out_h, out_w) == (h, w):
        return x.copy()
    return _separable(x, _pool_matrix(h, out_h), _pool_matrix(w, out_w))


def bilinear_resize(x, out_h, out_w):
    """Bilinear resize with half-pixel centres and border clamping."""
    x = check_map(x)
    out_h, out_w = check_size(out_h, out_w)
    h, w = x.shape[-2:]
    if (out_h, out_w) == (h, w):
        return x.copy()
    return _separable(x, _bilinear_matrix(h, out_h), _bilinear_matrix(w, out_w))


def softmax2(fg, bg):
    """Two-channel softmax, pixelwise.  Returns ``(p_fg, p_bg)``."""
    fg = check_scalar_map(fg, "fg")
    bg = check_scalar_map(bg, "bg")
    if fg.shape != bg.shape:
        raise ValueError(f"fg {fg.shape} and bg {bg.shape} differ in shape")
    top = np.maximum(fg, bg)
    ef = np.exp(fg - top)
    eb = np.exp(bg - top)
    total = ef + eb
    return ef / total, eb / total


def minmax_normalize(x):
    """``(x - min) / (max - min + EPS)`` over the whole map."""
    x = check_map(x)
    lo = x.min()
    return (x - lo) / (x.max() - lo + EPS)


def affine_pm1(x, alpha=2.0, beta=1.0):
    """``alpha * x - beta``; with the defaults maps [0, 1] onto [-1, 1]."""
    return alpha * check_map(x) - beta


def cosine(a, b):
    """Stabilised cosine similarity of two vectors, clamped to [-1, 1]."""
    a = check_vector(a, name="a")
    b = check_vector(b, size=a.size, name="b")
    value = float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b) + EPS)
    return min(1.0, max(-1.0, value))


def cosine_map(vectors, features):
    """Cosine of each row of ``vectors`` against every pixel of ``features``.

    ``vectors`` is ``(N, C)`` and ``features`` is ``(C, H, W)``; the result is
    ``(N, H, W)``.  Uses the same stabiliser and clamp as :func:`cosine`.
    """
    c, h, w = features.shape
    flat = features.reshape(c, h * w)
    dots = vectors @ flat
    norms = np.outer(np.linalg.norm(vectors, axis=1), np.linalg.norm(flat, axis=0))
    return np.clip(dots / (norms + EPS), -1.0, 1.0).reshape(-1, h, w)
