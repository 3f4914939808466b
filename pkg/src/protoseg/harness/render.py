"""Greyscale and colour renderings of maps and masks."""

import numpy as np

from ..validation import check_mask, check_scalar_map

# true positive, false positive, false negative; true negatives stay black
OVERLAY_COLOURS = {"tp": (255, 255, 255), "fp": (255, 0, 0), "fn": (0, 128, 255)}


def to_grey(x):
    """Scale a scalar map or mask to uint8 over its own value range."""
    x = np.asarray(x)
    if x.dtype == np.bool_:
        return x.astype(np.uint8) * 255
    x = check_scalar_map(x)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros(x.shape, dtype=np.uint8)
    return np.round((x - lo) / (hi - lo) * 255).astype(np.uint8)


def overlay(pred, truth):
    """``(H, W, 3)`` colour-coded comparison of a prediction with the truth."""
    truth = check_mask(truth, name="truth")
    pred = check_mask(pred, truth.shape, name="prediction")
    img = np.zeros(truth.shape + (3,), dtype=np.uint8)
    img[pred & truth] = OVERLAY_COLOURS["tp"]
    img[pred & ~truth] = OVERLAY_COLOURS["fp"]
    img[~pred & truth] = OVERLAY_COLOURS["fn"]
    return img
