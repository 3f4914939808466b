"""Guided prototype allocation.

Every prototype is compared with every query pixel by cosine similarity.
The per-pixel argmax selects a guide prototype; the sum over prototypes
gives the probability map.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvariantError
from .ops import cosine_map
from .validation import check_feature_map


@dataclass(frozen=True)
class MatchResult:
    guide: np.ndarray           # (H, W) int, index into the prototype set
    guide_features: np.ndarray  # (C, H, W)
    prob: np.ndarray            # (H, W)


def similarity_stack(query, protos):
    """``(N, H, W)`` cosine similarity of each prototype with each query pixel."""
    query = check_feature_map(query, "query")
    if query.shape[0] != protos.channels:
        raise ValueError(f"query has {query.shape[0]} channels, prototypes {protos.channels}")
    return cosine_map(protos.vectors, query)


def _check_stack(stack):
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[0] == 0:
        raise ValueError("similarity stack must be a non-empty (N, H, W) array")
    return stack


def guide_map(stack):
    """Index of the most similar prototype per pixel; ties go to the lowest index."""
    return np.argmax(_check_stack(stack), axis=0)


def gather_guide_features(guide, protos):
    """Copy the selected prototype vector into every pixel, ``(C, H, W)``."""
    guide = np.asarray(guide)
    if guide.size and (guide.min() < 0 or guide.max() >= len(protos)):
        raise InvariantError(f"guide index out of range for {len(protos)} prototypes")
    return np.moveaxis(protos.vectors[guide], -1, 0).copy()


def probability_map(stack):
    """Sum of all similarity maps, accumulated in prototype order."""
    stack = _check_stack(stack)
    total = stack[0].copy()
    for layer in stack[1:]:
        total += layer
    return total


def allocate(query, protos):
    """Run the whole allocation step and bundle its outputs."""
    stack = similarity_stack(query, protos)
    guide = guide_map(stack)
    return MatchResult(guide, gather_guide_features(guide, protos), probability_map(stack))
