"""Intersection-over-union for binary foreground/background predictions."""

import numpy as np

from ..validation import check_mask

CLASS_NAMES = ("background", "foreground")


def _class_counts(pred, truth):
    counts = np.zeros((2, 2), dtype=np.int64)  # [class, (intersection, union)]
    for c, (p, t) in enumerate(((~pred, ~truth), (pred, truth))):
        counts[c, 0] = np.count_nonzero(p & t)
        counts[c, 1] = np.count_nonzero(p | t)
    return counts


def _iou(counts):
    inter, union = counts[:, 0], counts[:, 1]
    absent = union == 0
    iou = np.where(absent, 1.0, inter / np.maximum(union, 1))
    return iou, absent


def miou(preds, truths, n_classes=2):
    """Mean IoU over {background, foreground}.

    Intersections and unions are accumulated over the whole set before
    dividing.  A class absent from every prediction and truth scores 1 and is
    listed under ``"absent_classes"``.  Per-episode scores are reported
    alongside.
    """
    if n_classes != 2:
        raise ValueError("only binary segmentation (n_classes=2) is supported")
    if len(preds) != len(truths):
        raise ValueError(f"{len(preds)} predictions but {len(truths)} ground truths")
    if not preds:
        raise ValueError("need at least one prediction")
    total = np.zeros((2, 2), dtype=np.int64)
    per_episode_fg, per_episode_miou = [], []
    for i, (p, t) in enumerate(zip(preds, truths)):
        t = check_mask(t, name=f"truth {i}")
        p = check_mask(p, t.shape, name=f"prediction {i}")
        counts = _class_counts(p, t)
        total += counts
        iou, _ = _iou(counts)
        per_episode_fg.append(float(iou[1]))
        per_episode_miou.append(float(iou.mean()))
    iou, absent = _iou(total)
    return {
        "iou": {name: float(v) for name, v in zip(CLASS_NAMES, iou)},
        "miou": float(iou.mean()),
        "absent_classes": [name for name, a in zip(CLASS_NAMES, absent) if a],
        "per_episode_fg_iou": per_episode_fg,
        "per_episode_miou": per_episode_miou,
        "mean_episode_fg_iou": float(np.mean(per_episode_fg)),
        "mean_episode_miou": float(np.mean(per_episode_miou)),
    }
