"""Rich prototype generation.

Two complementary ways of summarising the foreground of a support feature
map: masked K-means, which always yields ``n_clusters`` part prototypes, and
superpixel-guided clustering, whose prototype count follows the size of the
object.  :func:`merge_prototypes` concatenates the two sets, K-means first.
"""

import enum
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import EmptyForegroundError
from .validation import check_feature_map, check_mask

MAX_LLOYD_ITER = 20


class Source(enum.Enum):
    KMEANS = "kmeans"
    SUPERPIXEL = "superpixel"


@dataclass(frozen=True)
class Prototype:
    vector: np.ndarray
    source: Source
    index: int


class PrototypeSet:
    """Ordered prototypes with provenance tags.

    Stored as an ``(N, C)`` matrix plus a parallel tuple of sources.  All
    K-means prototypes precede all superpixel prototypes.
    """

    def __init__(self, vectors, sources):
        vectors = np.array(vectors, dtype=np.float64, ndmin=2)
        sources = tuple(Source(s) for s in sources)
        if vectors.ndim != 2 or vectors.shape[0] == 0 or vectors.shape[1] == 0:
            raise ValueError("a prototype set needs at least one non-empty vector")
        if len(sources) != vectors.shape[0]:
            raise ValueError("one source tag is required per prototype")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("prototype vectors must be finite")
        seen_superpixel = False
        for s in sources:
            if s is Source.SUPERPIXEL:
                seen_superpixel = True
            elif seen_superpixel:
                raise ValueError("K-means prototypes must precede superpixel prototypes")
        vectors.setflags(write=False)
        self.vectors = vectors
        self.sources = sources

    @property
    def channels(self):
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def __getitem__(self, i):
        return Prototype(self.vectors[i], self.sources[i], range(len(self))[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def count(self, source):
        return sum(s is Source(source) for s in self.sources)

    def __repr__(self):
        return (f"PrototypeSet(n={len(self)}, channels={self.channels}, "
                f"kmeans={self.count(Source.KMEANS)}, "
                f"superpixel={self.count(Source.SUPERPIXEL)})")


@dataclass
class ClusterAssignment:
    """Partition of the foreground pixels.

    ``labels[j]`` is the cluster of the ``j``-th foreground pixel in flat
    (row-major) order.  ``objective`` is the final sum of squared distances and
    ``history`` the objective after every Lloyd update.
    """

    labels: np.ndarray
    objective: float
    history: list
    n_iter: int


def _foreground(features, mask):
    features = check_feature_map(features)
    mask = check_mask(mask, features.shape[1:])
    if not mask.any():
        raise EmptyForegroundError("mask has no foreground pixels")
    # (m, C) in flat pixel order
    return features, mask, features[:, mask].T


def _sq_dists(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("mkc,mkc->mk", diff, diff)


def _farthest_point_init(points, k, rng):
    norms = np.einsum("mc,mc->m", points, points)
    first = int(np.flatnonzero(norms == norms.max())[0])
    chosen = [first]
    nearest = _sq_dists(points, points[[first]])[:, 0]
    for _ in range(1, k):
        candidates = nearest.copy()
        candidates[chosen] = -np.inf
        ties = np.flatnonzero(candidates == candidates.max())
        pick = int(ties[0] if ties.size == 1 else rng.choice(ties))
        chosen.append(pick)
        nearest = np.minimum(nearest, _sq_dists(points, points[[pick]])[:, 0])
    return points[chosen].copy()


def _repair_empty(points, centers, labels, k):
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        donor = int(np.argmax(counts))
        members = np.flatnonzero(labels == donor)
        d = _sq_dists(points[members], centers[[donor]])[:, 0]
        moved = members[int(np.argmax(d))]
        labels[moved] = j
        counts[donor] -= 1
        counts[j] += 1
    return labels


def _means(points, labels, k):
    onehot = (labels[:, None] == np.arange(k)).astype(np.float64)
    return (onehot.T @ points) / onehot.sum(axis=0)[:, None]


def _objective(points, centers, labels):
    diff = points - centers[labels]
    return float(np.einsum("mc,mc->", diff, diff))


def masked_kmeans(features, mask, n_clusters=5, seed=0, max_iter=MAX_LLOYD_ITER):
    """Lloyd K-means on the foreground feature vectors.

    Initialisation is a farthest-point traversal starting at the foreground
    pixel of largest norm (lowest flat index on ties); ``seed`` only breaks
    exact distance ties.  Empty clusters are re-seeded from the largest
    cluster.  When the mask has fewer than ``n_clusters`` pixels each pixel
    becomes its own cluster.

    Returns
    -------
    prototypes : PrototypeSet
        Per-cluster means, all tagged ``Source.KMEANS``.
    assignment : ClusterAssignment
    """
    if int(n_clusters) < 1:
        raise ValueError("n_clusters must be >= 1")
    _, _, points = _foreground(features, mask)
    m = points.shape[0]
    k = min(int(n_clusters), m)
    if k == m:
        labels = np.arange(m)
        protos = PrototypeSet(points.copy(), [Source.KMEANS] * m)
        return protos, ClusterAssignment(labels, 0.0, [0.0], 0)

    rng = np.random.default_rng(seed)
    centers = _farthest_point_init(points, k, rng)
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_labels = np.argmin(_sq_dists(points, centers), axis=1)
        new_labels = _repair_empty(points, centers, new_labels, k)
        if labels is not None and np.array_equal(new_labels, labels):
            n_iter -= 1
            break
        labels = new_labels
        centers = _means(points, labels, k)
        history.append(_objective(points, centers, labels))
    protos = PrototypeSet(centers, [Source.KMEANS] * k)
    return protos, ClusterAssignment(labels, history[-1], history, n_iter)


def superpixel_count(n_foreground, n_pixels, max_superpixels):
    """Number of superpixel prototypes for an object of ``n_foreground`` pixels."""
    ratio = n_foreground / (n_pixels / max_superpixels)
    return int(min(max(np.floor(ratio + 0.5), 1), max_superpixels))


def _grid_seeds(mask, n_seeds):
    """Seed pixels on a uniform grid over the mask's bounding box.

    Grid points are snapped to the nearest foreground pixel and duplicates
    dropped, so fewer than ``n_seeds`` seeds may come back.
    """
    ys, xs = np.nonzero(mask)
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    bh, bw = y1 - y0, x1 - x0
    cols = max(1, int(np.ceil(np.sqrt(n_seeds * bw / bh))))
    rows = max(1, int(np.ceil(n_seeds / cols)))
    gy = y0 + (np.arange(rows) + 0.5) * bh / rows
    gx = x0 + (np.arange(cols) + 0.5) * bw / cols
    grid = np.array([(y, x) for y in gy for x in gx])
    pick = np.unique(np.floor(np.linspace(0, len(grid) - 1, n_seeds) + 0.5).astype(int))
    fg = np.stack([ys + 0.5, xs + 0.5], axis=1)
    seeds = []
    for gy_, gx_ in grid[pick]:
        d = (fg[:, 0] - gy_) ** 2 + (fg[:, 1] - gx_) ** 2
        j = int(np.argmin(d))
        if j not in seeds:
            seeds.append(j)
    return seeds


def _augment(points, ys, xs, h, w, coord_weight):
    coords = np.stack([xs / w, ys / h], axis=1) * coord_weight
    return np.concatenate([points, coords], axis=1)


def association(aug_points, aug_centers):
    """Soft pixel-to-superpixel association, ``softmax_r(-||p - S_r||^2)``."""
    logits = -_sq_dists(aug_points, aug_centers)
    logits -= logits.max(axis=1, keepdims=True)
    a = np.exp(logits)
    return a / a.sum(axis=1, keepdims=True)


def superpixel_cluster(features, mask, max_superpixels=5, iterations=10, coord_weight=1.0):
    """Superpixel-guided clustering of the foreground features.

    The prototype count adapts to the object size (see
    :func:`superpixel_count`).  Centres live in a feature space augmented with
    ``coord_weight * (x/W, y/H)`` and are refined for ``iterations`` rounds of
    soft association followed by an association-weighted mean.  Background
    pixels carry no association.
    """
    if int(max_superpixels) < 1:
        raise ValueError("max_superpixels must be >= 1")
    if int(iterations) < 1:
        raise ValueError("iterations must be >= 1")
    features, mask, points = _foreground(features, mask)
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    n_s = superpixel_count(points.shape[0], h * w, int(max_superpixels))
    aug = _augment(points, ys, xs, h, w, coord_weight)
    centers = aug[_grid_seeds(mask, n_s)]
    for _ in range(int(iterations)):
        a = association(aug, centers)
        centers = (a.T @ aug) / a.sum(axis=0)[:, None]
    c = features.shape[0]
    return PrototypeSet(centers[:, :c], [Source.SUPERPIXEL] * len(centers))


def merge_prototypes(kmc, sgc):
    """Concatenate two prototype sets, ``kmc`` first."""
    if kmc.channels != sgc.channels:
        raise ValueError(f"channel mismatch: {kmc.channels} vs {sgc.channels}")
    return PrototypeSet(np.concatenate([kmc.vectors, sgc.vectors]),
                        kmc.sources + sgc.sources)


class MaskedKMeans(BaseEstimator):
    """Estimator wrapper around :func:`masked_kmeans`.

    ``fit`` takes a ``(C, H, W)`` feature map and an ``(H, W)`` mask.
    ``predict`` assigns every pixel of a feature map to its nearest centre.
    """

    def __init__(self, n_clusters=5, seed=0, max_iter=MAX_LLOYD_ITER):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter

    def fit(self, X, mask):
        protos, assignment = masked_kmeans(X, mask, self.n_clusters, self.seed, self.max_iter)
        self.prototypes_ = protos
        self.cluster_centers_ = protos.vectors
        self.labels_ = assignment.labels
        self.inertia_ = assignment.objective
        self.n_iter_ = assignment.n_iter
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_feature_map(X)
        c, h, w = X.shape
        d = _sq_dists(X.reshape(c, -1).T, self.cluster_centers_)
        return np.argmin(d, axis=1).reshape(h, w)


class SuperpixelClustering(BaseEstimator):
    """Estimator wrapper around :func:`superpixel_cluster`."""

    def __init__(self, max_superpixels=5, iterations=10, coord_weight=1.0):
        self.max_superpixels = max_superpixels
        self.iterations = iterations
        self.coord_weight = coord_weight

    def fit(self, X, mask):
        self.prototypes_ = superpixel_cluster(
            X, mask, self.max_superpixels, self.iterations, self.coord_weight)
        self.cluster_centers_ = self.prototypes_.vectors
        return self
