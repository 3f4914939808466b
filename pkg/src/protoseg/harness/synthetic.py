"""Synthetic few-shot episodes built directly in feature space.

Each episode draws a class direction; foreground pixels carry that direction
scaled by ``separation`` plus Gaussian noise, while the background is split
into Voronoi regions whose means are orthogonal to the class direction.
``noise`` is the RMS norm of the per-pixel noise vector.
Support and query objects share the class but differ in geometry and, via
``support_scale`` / ``query_scale``, in size.
"""

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..pipeline import Episode

SHAPES = ("ellipse", "rectangle")


@dataclass(frozen=True)
class SyntheticSpec:
    channels: int = 32
    height: int = 60
    width: int = 60
    shape: str = "ellipse"
    support_scale: float = 0.2
    query_scale: float = 0.2
    separation: float = 4.0
    noise: float = 1.0
    n_background: int = 3
    shots: int = 1
    # query-specific offset of the foreground mean, relative to separation
    appearance_shift: float = 0.0
    # objects made of angular sectors whose means differ by part_shift
    n_parts: int = 1
    part_shift: float = 0.0
    # cosine between the background means and the class direction
    bg_similarity: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.channels < 2 or self.height < 1 or self.width < 1:
            raise ValueError("need channels >= 2 and positive grid dims")
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}")
        for name in ("support_scale", "query_scale"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.noise < 0 or self.separation < 0 or self.appearance_shift < 0:
            raise ValueError("noise, separation and appearance_shift must be >= 0")
        if self.n_background < 1 or self.shots < 1 or self.n_parts < 1:
            raise ValueError("n_background, n_parts and shots must be >= 1")
        if self.part_shift < 0 or not 0.0 <= self.bg_similarity < 1.0:
            raise ValueError("part_shift must be >= 0 and bg_similarity in [0, 1)")
        if self.channels < self._n_directions():
            raise ValueError(f"channels must be >= {self._n_directions()} for this spec")

    def _n_directions(self):
        return 1 + self.n_background + 2 + self.n_parts

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown synthetic option(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def rasterize(shape, height, width, cy, cx, ry, rx):
    """Boolean mask of an axis-aligned ellipse or rectangle.

    A pixel belongs to the shape when its centre ``(y + 0.5, x + 0.5)`` does.
    """
    y = np.arange(height)[:, None] + 0.5
    x = np.arange(width)[None, :] + 0.5
    if shape == "ellipse":
        return ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1.0
    if shape == "rectangle":
        return (np.abs(y - cy) <= ry) & (np.abs(x - cx) <= rx)
    raise ValueError(f"unknown shape {shape!r}")


def shape_radii(shape, area, aspect):
    """Half-extents ``(ry, rx)`` giving ``area`` pixels at ``rx / ry = aspect``."""
    unit = math.pi if shape == "ellipse" else 4.0
    ry = math.sqrt(area / (unit * aspect))
    return ry, ry * aspect


def _place_object(rng, spec, scale):
    h, w = spec.height, spec.width
    area = scale * h * w
    aspect = float(np.exp(rng.uniform(np.log(0.6), np.log(1 / 0.6))))
    ry, rx = shape_radii(spec.shape, area, aspect)
    # squeeze the aspect towards 1 until the shape fits the grid
    while (ry > h / 2 or rx > w / 2) and abs(np.log(aspect)) > 1e-3:
        aspect = aspect ** 0.5
        ry, rx = shape_radii(spec.shape, area, aspect)
    ry, rx = min(ry, h / 2), min(rx, w / 2)
    cy = rng.uniform(ry, h - ry) if h > 2 * ry else h / 2
    cx = rng.uniform(rx, w - rx) if w > 2 * rx else w / 2
    mask = rasterize(spec.shape, h, w, cy, cx, ry, rx)
    if not mask.any():
        mask[min(int(cy), h - 1), min(int(cx), w - 1)] = True
    rotation = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    angle = np.mod(np.arctan2(yy - cy, xx - cx) - rotation, 2 * np.pi)
    parts = np.minimum((angle / (2 * np.pi) * spec.n_parts).astype(int), spec.n_parts - 1)
    geo = {"cy": cy, "cx": cx, "ry": ry, "rx": rx, "rotation": rotation}
    return mask, parts, geo


def _orthonormal(rng, c, k):
    q, _ = np.linalg.qr(rng.standard_normal((c, k)))
    return q.T


def _image(rng, spec, mask, parts, fg_means, bg_means):
    h, w = mask.shape
    sites = rng.uniform([0, 0], [h, w], size=(len(bg_means), 2))
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    d = (yy[None] - sites[:, 0, None, None]) ** 2 + (xx[None] - sites[:, 1, None, None]) ** 2
    region = np.argmin(d, axis=0)
    means = bg_means[region]                  # (H, W, C)
    means[mask] = fg_means[parts[mask]]
    # noise vectors have RMS norm `noise`, so separation / noise is the SNR
    sigma = spec.noise / math.sqrt(spec.channels)
    feats = means + sigma * rng.standard_normal(means.shape)
    return np.ascontiguousarray(np.moveaxis(feats, -1, 0))


def make_episode(spec, index):
    """Episode ``index`` of the stream defined by ``spec`` (pure in both)."""
    rng = np.random.default_rng([int(spec.seed), int(index)])
    basis = _orthonormal(rng, spec.channels, spec._n_directions())
    direction = basis[0]
    nb = spec.n_background
    rho = spec.bg_similarity
    bg_means = spec.separation * (rho * direction + np.sqrt(1 - rho ** 2) * basis[1:1 + nb])
    shift_s, shift_q = basis[1 + nb], basis[2 + nb]
    part_dirs = basis[3 + nb:]
    if spec.n_parts == 1:
        part_dirs = np.zeros_like(part_dirs)
    fg_support = spec.separation * (direction + spec.appearance_shift * shift_s
                                    + spec.part_shift * part_dirs)
    fg_query = spec.separation * (direction + spec.appearance_shift * shift_q
                                  + spec.part_shift * part_dirs)

    supports, geometry = [], []
    for _ in range(spec.shots):
        mask, parts, geo = _place_object(rng, spec, spec.support_scale)
        supports.append((_image(rng, spec, mask, parts, fg_support, bg_means), mask))
        geometry.append(geo)
    truth, parts, qgeo = _place_object(rng, spec, spec.query_scale)
    query = _image(rng, spec, truth, parts, fg_query, bg_means)
    info = {"index": int(index), "support_geometry": geometry, "query_geometry": qgeo}
    return Episode(supports, query, truth, info)


def gen_episodes(spec, count, start=0):
    """``count`` episodes with indices ``start, start + 1, ...``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return [make_episode(spec, i) for i in range(start, start + count)]
