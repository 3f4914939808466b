"""Suite evaluation and ablation sweeps.

Configuration and reports are JSON documents; see ``README.md`` for the
schema.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..pipeline import PipelineConfig, run_episode
from .metrics import miou
from .synthetic import SyntheticSpec, gen_episodes

log = logging.getLogger(__name__)

TABLE_VARIANTS = ("baseline", "+RPGM", "+RPGM+MSIE", "+RPGM+QSCE", "+RPGM+RPEM")

VARIANTS = {
    # single-mode prototypes, no enhancement; mode set by benchmark.baseline_mode
    "baseline": {"n_iterations": 0},
    "+RPGM": {"prototype_mode": "merged", "n_iterations": 0},
    "+RPGM+MSIE": {"prototype_mode": "merged", "use_msie": True, "use_qsce": False},
    "+RPGM+QSCE": {"prototype_mode": "merged", "use_msie": False, "use_qsce": True},
    "+RPGM+RPEM": {"prototype_mode": "merged", "use_msie": True, "use_qsce": True},
    "kmc-only": {"prototype_mode": "kmeans", "n_iterations": 0},
    "sgc-only": {"prototype_mode": "superpixel", "n_iterations": 0},
}

DEFAULT_BENCHMARK = {
    "episodes": 200,
    "folds": 4,
    "variants": list(TABLE_VARIANTS),
    "iteration_sweep": [0, 2, 4, 6],
    "baseline_mode": "superpixel",
    "render": 0,
}


@dataclass
class EvalReport:
    variant: str
    config: dict
    episodes: int
    fold_miou: list
    mean_miou: float
    aggregate: dict
    iteration_curve: list
    fallbacks: int
    empty_shots: int
    wall_time: float = field(default=0.0, compare=False)

    @property
    def mean_fg_iou(self):
        return self.aggregate["mean_episode_fg_iou"]

    def to_dict(self):
        return asdict(self)


def variant_config(name, base=None, baseline_mode="superpixel"):
    """``base`` with the overrides of variant ``name`` applied."""
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
    base = base or PipelineConfig()
    overrides = dict(VARIANTS[name])
    if name == "baseline":
        overrides["prototype_mode"] = baseline_mode
    return replace(base, **overrides)


def evaluate(episodes, cfg, n_folds=4, variant="custom", decoder=None):
    """Run every episode and score the predictions.

    Folds are contiguous, disjoint slices of ``episodes``; the headline
    ``mean_miou`` is the arithmetic mean of the fold scores.
    """
    if not episodes:
        raise ValueError("cannot evaluate an empty episode list")
    t0 = time.perf_counter()
    results = [run_episode(ep, cfg, decoder) for ep in episodes]
    wall = time.perf_counter() - t0
    truths = [ep.truth for ep in episodes]
    if any(t is None for t in truths):
        raise ValueError("every evaluated episode needs a ground-truth mask")

    preds = [r.mask for r in results]
    folds = [f for f in np.array_split(np.arange(len(episodes)), min(n_folds, len(episodes)))]
    fold_miou = [miou([preds[i] for i in f], [truths[i] for i in f])["miou"] for f in folds]
    curve = [miou([r.per_iteration_masks[t] for r in results], truths)["miou"]
             for t in range(cfg.n_iterations + 1)]
    return EvalReport(
        variant=variant,
        config=cfg.to_dict(),
        episodes=len(episodes),
        fold_miou=fold_miou,
        mean_miou=float(np.mean(fold_miou)),
        aggregate=miou(preds, truths),
        iteration_curve=curve,
        fallbacks=sum(r.metrics.fallbacks for r in results),
        empty_shots=sum(r.metrics.empty_shots for r in results),
        wall_time=wall,
    )


def load_config(path=None):
    """Read a JSON config; missing sections and keys take their defaults."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    unknown = set(raw) - {"pipeline", "synthetic", "benchmark"}
    if unknown:
        raise ValueError(f"{path}: unknown section(s) {sorted(unknown)}")
    bench = dict(DEFAULT_BENCHMARK)
    extra = set(raw.get("benchmark", {})) - set(bench)
    if extra:
        raise ValueError(f"{path}: unknown benchmark option(s) {sorted(extra)}")
    bench.update(raw.get("benchmark", {}))
    return {
        "pipeline": PipelineConfig.from_dict(raw.get("pipeline", {})),
        "synthetic": SyntheticSpec.from_dict(raw.get("synthetic", {})),
        "benchmark": bench,
    }


def ablate(episodes, base, variants=TABLE_VARIANTS, iteration_sweep=(0, 2, 4, 6),
           n_folds=4, baseline_mode="superpixel"):
    """Evaluate the variant rows and the iteration sweep on one suite."""
    done = {}  # identical configs (e.g. n=0 and +RPGM) are evaluated once

    def run(cfg, label):
        if cfg not in done:
            log.info("evaluating %s", label)
            done[cfg] = evaluate(episodes, cfg, n_folds, label)
        return replace(done[cfg], variant=label)

    reports = {name: run(variant_config(name, base, baseline_mode), name) for name in variants}
    sweep = {}
    for n in iteration_sweep:
        cfg = replace(variant_config("+RPGM+RPEM", base), n_iterations=int(n))
        sweep[int(n)] = run(cfg, f"+RPGM+RPEM n={n}")
    return reports, sweep


def trend_checks(reports, slack=0.01):
    """Directional comparisons between variant rows, where both are present."""
    checks = {}
    score = {k: r.mean_miou for k, r in reports.items()}
    if "+RPGM" in score and "baseline" in score:
        checks["rpgm_ge_baseline"] = score["+RPGM"] >= score["baseline"]
    if "+RPGM+RPEM" in score and "+RPGM" in score:
        checks["rpem_ge_rpgm_minus_slack"] = score["+RPGM+RPEM"] >= score["+RPGM"] - slack
    return checks


def sweep_is_monotone(sweep):
    values = [sweep[n].mean_miou for n in sorted(sweep)]
    return all(b >= a for a, b in zip(values, values[1:]))


def run_benchmark(config_path, out_path, episodes=None):
    """Generate a suite from the config, run the ablations, write the report.

    Returns the report as a dict (the same content written to ``out_path``).
    """
    cfg = load_config(config_path)
    bench = cfg["benchmark"]
    count = int(bench["episodes"] if episodes is None else episodes)
    if count < 1:
        raise ValueError("benchmark needs at least one episode")
    suite = gen_episodes(cfg["synthetic"], count)
    reports, sweep = ablate(suite, cfg["pipeline"], bench["variants"],
                            bench["iteration_sweep"], int(bench["folds"]),
                            bench["baseline_mode"])
    report = {
        "config": {"pipeline": cfg["pipeline"].to_dict(),
                   "synthetic": cfg["synthetic"].to_dict(),
                   "benchmark": bench},
        "variants": {k: r.to_dict() for k, r in reports.items()},
        "iteration_sweep": {str(n): r.to_dict() for n, r in sweep.items()},
        "iteration_curve": sweep[max(sweep)].iteration_curve if sweep else [],
        "sweep_monotone": sweep_is_monotone(sweep) if sweep else None,
        "checks": trend_checks(reports),
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(report, indent=2))
    if bench.get("render"):
        render_suite(suite, cfg["pipeline"], out_path.with_suffix(""), int(bench["render"]))
    return report


def render_suite(episodes, cfg, directory, limit):
    """Write prediction overlays for the first ``limit`` episodes."""
    from .fileio import write_pgm, write_ppm
    from .render import overlay, to_grey

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, ep in enumerate(episodes[:limit]):
        res = run_episode(ep, cfg)
        write_ppm(directory / f"episode_{i:05d}_overlay.ppm", overlay(res.mask, ep.truth))
        write_pgm(directory / f"episode_{i:05d}_prob.pgm", to_grey(res.per_iteration_maps[-1]))
