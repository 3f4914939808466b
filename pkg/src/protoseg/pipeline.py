"""Episode-level orchestration.

Support shots are summarised into prototypes, the query is matched against
them, and a decoder turns the match into foreground/background logits.  The
enhancement loop then feeds the decoder output back into the probability map
``n_iterations`` times before the final prediction.
"""

import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .clustering import PrototypeSet, Source, masked_kmeans, merge_prototypes, superpixel_cluster
from .enhancement import TwoChannelMap, enhance, msie, pseudo_mask, qsce
from .exceptions import EmptyEpisodeError, EmptyForegroundError
from .matching import MatchResult, allocate
from .ops import adaptive_avg_pool, affine_pm1, bilinear_resize, cosine_map, minmax_normalize, softmax2
from .validation import check_feature_map, check_mask

PROTOTYPE_MODES = ("merged", "kmeans", "superpixel")
REFRESH_MODES = ("mean", "finest")


@dataclass(frozen=True)
class PipelineConfig:
    n_clusters: int = 5
    max_superpixels: int = 5
    scales: tuple = ((60, 60), (30, 30), (15, 15), (8, 8))
    n_iterations: int = 4
    sgc_iterations: int = 10
    coord_weight: float = 1.0
    lambda_p: float = 1.0
    lambda_g: float = 1.0
    seed: int = 0
    prototype_mode: str = "merged"
    use_msie: bool = True
    use_qsce: bool = True
    # False re-derives P_i from the allocation step every round instead of
    # carrying the enhanced map forward.
    carry_enhanced: bool = True
    # "mean" fuses the enhancement of every scale into the full-resolution
    # map; "finest" keeps only the finest enhanced scale.
    refresh: str = "mean"

    def __post_init__(self):
        scales = tuple((int(h), int(w)) for h, w in self.scales)
        object.__setattr__(self, "scales", scales)
        if not scales:
            raise ValueError("at least one scale is required")
        if any(h < 1 or w < 1 for h, w in scales):
            raise ValueError("scales must be positive")
        for (h0, w0), (h1, w1) in zip(scales, scales[1:]):
            if h1 > h0 or w1 > w0:
                raise ValueError("scales must be non-increasing")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if self.n_clusters < 1 or self.max_superpixels < 1 or self.sgc_iterations < 1:
            raise ValueError("cluster counts and sgc_iterations must be positive")
        if self.refresh not in REFRESH_MODES:
            raise ValueError(f"refresh must be one of {REFRESH_MODES}")
        if self.prototype_mode not in PROTOTYPE_MODES:
            raise ValueError(f"prototype_mode must be one of {PROTOTYPE_MODES}")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline option(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["scales"] = [list(s) for s in self.scales]
        return d


@dataclass
class Episode:
    """K support shots (features, mask), a query feature map and optional truth."""

    supports: list
    query: np.ndarray
    truth: np.ndarray = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.supports) < 1:
            raise ValueError("an episode needs at least one support shot")
        self.query = check_feature_map(self.query, "query")
        shots = []
        for i, (f, m) in enumerate(self.supports):
            f = check_feature_map(f, f"support {i} features")
            if f.shape[0] != self.query.shape[0]:
                raise ValueError(f"support {i} has {f.shape[0]} channels, query {self.query.shape[0]}")
            shots.append((f, check_mask(m, f.shape[1:], f"support {i} mask")))
        self.supports = shots
        if self.truth is not None:
            self.truth = check_mask(self.truth, self.query.shape[1:], "truth")

    @property
    def shots(self):
        return len(self.supports)


@dataclass
class RunMetrics:
    iterations: int = 0
    fallbacks: int = 0
    empty_shots: int = 0
    n_prototypes: int = 0
    timings: dict = field(default_factory=dict, compare=False)


@dataclass
class PipelineResult:
    mask: np.ndarray              # (H, W) bool at query resolution
    per_iteration_maps: list      # n+1 probability maps at working resolution
    per_iteration_masks: list     # n+1 masks at query resolution
    prototypes: PrototypeSet
    fg_prob: np.ndarray           # final foreground probability, query resolution
    metrics: RunMetrics


def shot_prototypes(features, mask, cfg):
    """Prototypes of a single support shot according to ``cfg.prototype_mode``."""
    sets = []
    if cfg.prototype_mode in ("merged", "kmeans"):
        sets.append(masked_kmeans(features, mask, cfg.n_clusters, cfg.seed)[0])
    if cfg.prototype_mode in ("merged", "superpixel"):
        sets.append(superpixel_cluster(features, mask, cfg.max_superpixels,
                                       cfg.sgc_iterations, cfg.coord_weight))
    return sets[0] if len(sets) == 1 else merge_prototypes(*sets)


def _fuse_shots(sets):
    # keep every K-means prototype ahead of every superpixel prototype
    blocks = []
    for source in Source:
        for s in sets:
            keep = [i for i, t in enumerate(s.sources) if t is source]
            if keep:
                blocks.append((s.vectors[keep], [source] * len(keep)))
    return PrototypeSet(np.concatenate([b[0] for b in blocks]),
                        [t for b in blocks for t in b[1]])


def extract_prototypes(episode, cfg, metrics=None):
    """Prototype union over all shots.

    Shots with an empty mask are skipped; an episode whose shots are all
    empty raises :class:`EmptyEpisodeError`.
    """
    sets = []
    for features, mask in episode.supports:
        try:
            sets.append(shot_prototypes(features, mask, cfg))
        except EmptyForegroundError:
            if metrics is not None:
                metrics.empty_shots += 1
    if not sets:
        raise EmptyEpisodeError("every support shot has an empty mask")
    return _fuse_shots(sets)


def normalize_prob(p):
    """Min-max normalise a probability map into [-1, 1]."""
    return affine_pm1(minmax_normalize(p))


class ParameterFreeDecoder(BaseEstimator):
    """Stand-in for a trained decoder.

    Foreground logit ``lambda_p * normalize(P) + lambda_g * cos(F_q, F_g)``,
    background logit its negation.  Any callable with the signature
    ``decoder(query, match) -> TwoChannelMap`` can replace it.
    """

    def __init__(self, lambda_p=1.0, lambda_g=1.0):
        self.lambda_p = lambda_p
        self.lambda_g = lambda_g

    def __call__(self, query, match):
        query = check_feature_map(query, "query")
        if query.shape != match.guide_features.shape or query.shape[1:] != match.prob.shape:
            raise ValueError("query, guide features and probability map disagree in shape")
        c, h, w = query.shape
        q = query.reshape(c, -1)
        g = match.guide_features.reshape(c, -1)
        # per-pixel cosine, same stabiliser as ops.cosine
        num = np.einsum("cp,cp->p", q, g)
        den = np.linalg.norm(q, axis=0) * np.linalg.norm(g, axis=0) + 1e-7
        sim = np.clip(num / den, -1.0, 1.0).reshape(h, w)
        fg = self.lambda_p * normalize_prob(match.prob) + self.lambda_g * sim
        return TwoChannelMap(fg, -fg)


def decode(query, match, cfg, decoder=None):
    if decoder is None:
        decoder = ParameterFreeDecoder(cfg.lambda_p, cfg.lambda_g)
    return decoder(query, match)


def refresh_prob(base, p_scales, enhanced, mode="mean"):
    """Full-resolution probability map after one enhancement round.

    ``"mean"`` adds to ``base`` the average of the per-scale increments
    ``enhanced[i] - p_scales[i]``, each upsampled to full resolution.
    ``"finest"`` upsamples the finest enhanced map alone.
    """
    size = base.shape
    if mode == "finest":
        return bilinear_resize(enhanced[0], *size)
    total = np.zeros(size)
    for p, e in zip(p_scales, enhanced):
        total += bilinear_resize(e - p, *size)
    return base + total / len(p_scales)


def _upsample_mask(mask, shape):
    if mask.shape == tuple(shape):
        return mask.copy()
    return bilinear_resize(mask.astype(np.float64), *shape) >= 0.5


def run_episode(episode, cfg=None, decoder=None, prototypes=None):
    """Segment the query of ``episode``.

    The query is brought to the finest scale (the working resolution), matched
    against the support prototypes and decoded.  Each of the ``n_iterations``
    rounds pools the probability map to every scale, adds the multi-scale and
    self-contrast terms there, fuses the result back to full resolution and
    decodes again.
    Precomputed ``prototypes`` skip the support clustering.
    """
    cfg = cfg or PipelineConfig()
    metrics = RunMetrics()
    t0 = time.perf_counter()
    protos = prototypes if prototypes is not None else extract_prototypes(episode, cfg, metrics)
    metrics.n_prototypes = len(protos)
    t1 = time.perf_counter()

    qh, qw = episode.query.shape[1:]
    work = cfg.scales[0]
    query = bilinear_resize(episode.query, *work)
    match = allocate(query, protos)
    initial = match.prob
    t2 = time.perf_counter()

    maps = [initial]
    g = decode(query, match, cfg, decoder)
    masks = [_upsample_mask(pseudo_mask(g), (qh, qw))]
    zeros = [np.zeros(s) for s in cfg.scales]
    for _ in range(cfg.n_iterations):
        base = match.prob if cfg.carry_enhanced else initial
        p_scales = [adaptive_avg_pool(base, *s) for s in cfg.scales]
        ms = msie(g, cfg.scales) if cfg.use_msie else zeros
        if cfg.use_qsce:
            if not pseudo_mask(g).any():
                metrics.fallbacks += 1
            sc = qsce(query, g, base, cfg.scales)
        else:
            sc = zeros
        enhanced = enhance(p_scales, ms, sc)
        match = replace(match, prob=refresh_prob(base, p_scales, enhanced, cfg.refresh))
        maps.append(match.prob)
        g = decode(query, match, cfg, decoder)
        masks.append(_upsample_mask(pseudo_mask(g), (qh, qw)))
        metrics.iterations += 1
    t3 = time.perf_counter()

    fg_prob = bilinear_resize(softmax2(g.fg, g.bg)[0], qh, qw)
    metrics.timings = {"prototypes": t1 - t0, "matching": t2 - t1, "recurrence": t3 - t2}
    return PipelineResult(masks[-1], maps, masks, protos, fg_prob, metrics)


class FewShotSegmenter(BaseEstimator):
    """Prototype-based few-shot segmenter with a scikit-learn interface.

    ``fit`` consumes the support set, ``predict`` segments a query feature map.

    Parameters
    ----------
    n_clusters : int
        K-means prototypes per shot.
    max_superpixels : int
        Upper bound on superpixel prototypes per shot.
    scales : sequence of (h, w)
        Working scales, finest first.  The finest is the resolution at which
        matching and decoding happen.
    n_iterations : int
        Enhancement rounds; 0 disables the loop.
    decoder : callable, optional
        ``decoder(query, match) -> TwoChannelMap``.  Defaults to
        :class:`ParameterFreeDecoder` built from ``lambda_p`` and ``lambda_g``.

    Attributes
    ----------
    prototypes_ : PrototypeSet
    result_ : PipelineResult
        Output of the most recent ``predict`` call.
    """

    def __init__(self, n_clusters=5, max_superpixels=5,
                 scales=((60, 60), (30, 30), (15, 15), (8, 8)), n_iterations=4,
                 sgc_iterations=10, coord_weight=1.0, lambda_p=1.0, lambda_g=1.0,
                 seed=0, prototype_mode="merged", use_msie=True, use_qsce=True,
                 carry_enhanced=True, refresh="mean", decoder=None):
        self.n_clusters = n_clusters
        self.max_superpixels = max_superpixels
        self.scales = scales
        self.n_iterations = n_iterations
        self.sgc_iterations = sgc_iterations
        self.coord_weight = coord_weight
        self.lambda_p = lambda_p
        self.lambda_g = lambda_g
        self.seed = seed
        self.prototype_mode = prototype_mode
        self.use_msie = use_msie
        self.use_qsce = use_qsce
        self.carry_enhanced = carry_enhanced
        self.refresh = refresh
        self.decoder = decoder

    def _config(self):
        params = self.get_params()
        params.pop("decoder")
        return PipelineConfig(**params)

    def fit(self, X, y):
        """``X``: list of support feature maps; ``y``: list of support masks.

        A single ``(C, H, W)`` map with one ``(H, W)`` mask is accepted too.
        """
        if isinstance(X, np.ndarray) and X.ndim == 3:
            X, y = [X], [y]
        if len(X) != len(y):
            raise ValueError(f"{len(X)} support maps but {len(y)} masks")
        self.config_ = self._config()
        probe = np.zeros_like(check_feature_map(X[0]))
        self.support_episode_ = Episode(list(zip(X, y)), probe)
        metrics = RunMetrics()
        self.prototypes_ = extract_prototypes(self.support_episode_, self.config_, metrics)
        self.n_features_in_ = self.prototypes_.channels
        return self

    def _run(self, X):
        check_is_fitted(self, "prototypes_")
        X = check_feature_map(X, "query")
        if X.shape[0] != self.n_features_in_:
            raise ValueError(f"query has {X.shape[0]} channels, expected {self.n_features_in_}")
        self.result_ = run_episode(Episode(self.support_episode_.supports, X),
                                   self.config_, self.decoder, self.prototypes_)
        return self.result_

    def predict(self, X):
        """Binary foreground mask at the query resolution."""
        return self._run(X).mask

    def predict_proba(self, X):
        """``(2, H, W)`` background/foreground probabilities."""
        fg = self._run(X).fg_prob
        return np.stack([1.0 - fg, fg])
