"""Recurrent prediction enhancement.

A parameter-free corrector for the probability map.  The multi-scale term
pools the decoder output, turns it into a foreground probability and
rescales it to [-1, 1]; the self-contrast term measures how similar every
query pixel is to the query's own pseudo-masked prototype.  Both are added to
the per-scale probability maps.
"""

from dataclasses import dataclass

import numpy as np

from .ops import (adaptive_avg_pool, affine_pm1, cosine_map, minmax_normalize,
                  softmax2)
from .validation import check_feature_map, check_mask, check_scalar_map

ALPHA = 2.0
BETA = 1.0


@dataclass(frozen=True)
class TwoChannelMap:
    """Foreground and background logits (or probabilities) of equal shape."""

    fg: np.ndarray
    bg: np.ndarray

    def __post_init__(self):
        fg = check_scalar_map(self.fg, "fg")
        bg = check_scalar_map(self.bg, "bg")
        if fg.shape != bg.shape:
            raise ValueError(f"fg {fg.shape} and bg {bg.shape} differ in shape")
        object.__setattr__(self, "fg", fg)
        object.__setattr__(self, "bg", bg)

    @property
    def shape(self):
        return self.fg.shape

    def softmax(self):
        return TwoChannelMap(*softmax2(self.fg, self.bg))


def _check_scales(shape, scales):
    h, w = shape
    out = []
    for sh, sw in scales:
        if sh > h or sw > w:
            raise ValueError(f"scale {sh}x{sw} exceeds map size {h}x{w}")
        out.append((int(sh), int(sw)))
    return out


def msie(g, scales):
    """Multi-scale terms from the decoder output ``g``, one map per scale."""
    out = []
    for sh, sw in _check_scales(g.shape, scales):
        fg, _ = softmax2(adaptive_avg_pool(g.fg, sh, sw), adaptive_avg_pool(g.bg, sh, sw))
        out.append(affine_pm1(minmax_normalize(fg), ALPHA, BETA))
    return out


def pseudo_mask(g):
    """Foreground where ``fg > bg``; ties are background."""
    return g.fg > g.bg


def query_prototype(query, pm):
    """Masked average of the query features.

    An all-background mask falls back to the unmasked global mean.
    """
    query = check_feature_map(query, "query")
    pm = check_mask(pm, query.shape[1:], "pseudo mask")
    if not pm.any():
        return query.reshape(query.shape[0], -1).mean(axis=1)
    return query[:, pm].sum(axis=1) / pm.sum()


def self_contrast(query, g, p):
    """Full-resolution self-contrast term before the affine step, in [0, 1]."""
    query = check_feature_map(query, "query")
    p = check_scalar_map(p, "probability map")
    if query.shape[1:] != g.shape or p.shape != g.shape:
        raise ValueError("query, decoder output and probability map must share spatial dims")
    q = query_prototype(query, pseudo_mask(g))
    sim = cosine_map(q[None, :], query)[0]
    return minmax_normalize(p) * (sim + 1.0) / 2.0


def qsce(query, g, p, scales):
    """Self-contrast terms, one per scale, each in [-1, 1]."""
    scales = _check_scales(g.shape, scales)
    term = affine_pm1(self_contrast(query, g, p), ALPHA, BETA)
    return [adaptive_avg_pool(term, sh, sw) for sh, sw in scales]


def enhance(p_scales, ms, sc):
    """``P_i + M_i^ms + M_i^sc`` for every scale."""
    if not (len(p_scales) == len(ms) == len(sc)):
        raise ValueError("probability maps and enhancement terms differ in length")
    out = []
    for p, a, b in zip(p_scales, ms, sc):
        p, a, b = (np.asarray(v, dtype=np.float64) for v in (p, a, b))
        if not (p.shape == a.shape == b.shape):
            raise ValueError(f"shape mismatch: {p.shape}, {a.shape}, {b.shape}")
        out.append(p + a + b)
    return out
