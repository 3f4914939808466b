"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..exceptions import EmptyForegroundError
from ..pipeline import run_episode
from .benchmark import TABLE_VARIANTS, VARIANTS, ablate, evaluate, load_config, trend_checks, variant_config
from .fileio import (FormatError, load_episode, read_mask, read_tensor, save_episode,
                     write_mask, write_pgm, write_ppm, write_tensor)
from .metrics import miou
from .render import overlay, to_grey
from .synthetic import gen_episodes, make_episode

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, out_help):
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--seed", type=int, help="seed for episode generation and clustering")
    p.add_argument("--out", type=Path, required=True, help=out_help)


def build_parser():
    parser = _Parser(prog="protoseg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a synthetic episode suite")
    _common(p, "suite directory")
    p.add_argument("--episodes", type=int)

    p = sub.add_parser("run", help="segment one episode and dump per-iteration maps")
    _common(p, "output directory")
    p.add_argument("--episode", type=Path, help="episode directory (default: generate one)")
    p.add_argument("--index", type=int, default=0, help="index of the generated episode")
    p.add_argument("--iterations", type=int)
    p.add_argument("--variant", choices=sorted(VARIANTS))

    p = sub.add_parser("eval", help="evaluate a suite and write a report")
    _common(p, "report file (JSON)")
    p.add_argument("--suite", type=Path, help="suite directory (default: generate)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--variant", choices=sorted(VARIANTS))

    p = sub.add_parser("ablate", help="variant rows and iteration sweep")
    _common(p, "report file (JSON)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--variant", action="append", choices=sorted(VARIANTS),
                   help="restrict to these variants (repeatable)")
    p.add_argument("--iterations", type=int, action="append",
                   help="iteration counts for the sweep (repeatable)")

    p = sub.add_parser("render", help="render maps/masks as PGM, or an overlay as PPM")
    p.add_argument("inputs", nargs="+", type=Path, help=".fmap (2-D) or .bmsk files")
    p.add_argument("--truth", type=Path, help="ground-truth mask; with one mask input writes an overlay")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    return parser


def _settings(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["pipeline"] = replace(cfg["pipeline"], seed=args.seed)
        cfg["synthetic"] = replace(cfg["synthetic"], seed=args.seed)
    return cfg


def _pipeline_cfg(args, cfg):
    pcfg = cfg["pipeline"]
    if getattr(args, "variant", None):
        pcfg = variant_config(args.variant, pcfg, cfg["benchmark"]["baseline_mode"])
    if getattr(args, "iterations", None) is not None:
        if args.iterations < 0:
            raise UsageError("--iterations must be >= 0")
        pcfg = replace(pcfg, n_iterations=args.iterations)
    return pcfg


def _count(args, cfg):
    count = args.episodes if args.episodes is not None else cfg["benchmark"]["episodes"]
    if count < 1:
        raise UsageError("--episodes must be >= 1")
    return count


def cmd_gen(args):
    cfg = _settings(args)
    count = _count(args, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    for i, ep in enumerate(gen_episodes(cfg["synthetic"], count)):
        save_episode(args.out / f"episode_{i:05d}", ep)
    manifest = {"synthetic": cfg["synthetic"].to_dict(), "episodes": count}
    (args.out / "suite.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote {count} episodes to {args.out}")


def cmd_run(args):
    cfg = _settings(args)
    pcfg = _pipeline_cfg(args, cfg)
    ep = load_episode(args.episode) if args.episode else make_episode(cfg["synthetic"], args.index)
    res = run_episode(ep, pcfg)
    args.out.mkdir(parents=True, exist_ok=True)
    for t, (p, m) in enumerate(zip(res.per_iteration_maps, res.per_iteration_masks)):
        write_tensor(args.out / f"iter_{t:02d}_prob.fmap", p)
        write_mask(args.out / f"iter_{t:02d}_mask.bmsk", m)
    write_mask(args.out / "mask.bmsk", res.mask)
    summary = {"config": pcfg.to_dict(), "prototypes": len(res.prototypes),
               "iterations": res.metrics.iterations, "fallbacks": res.metrics.fallbacks,
               "empty_shots": res.metrics.empty_shots, "timings": res.metrics.timings}
    if ep.truth is not None:
        scores = miou([res.mask], [ep.truth])
        summary["iou"] = scores["iou"]
        summary["miou"] = scores["miou"]
    (args.out / "result.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps({k: summary[k] for k in summary if k != "config"}, indent=2))


def _load_suite(path):
    dirs = sorted(d for d in path.iterdir() if d.is_dir() and d.name.startswith("episode_"))
    if not dirs:
        raise FileNotFoundError(f"{path}: no episode_* directories")
    return [load_episode(d) for d in dirs]


def cmd_eval(args):
    cfg = _settings(args)
    pcfg = _pipeline_cfg(args, cfg)
    episodes = _load_suite(args.suite) if args.suite else gen_episodes(cfg["synthetic"], _count(args, cfg))
    report = evaluate(episodes, pcfg, int(cfg["benchmark"]["folds"]), args.variant or "custom")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(report.to_dict(), indent=2))
    print(f"mIoU {report.mean_miou:.4f}  folds {np.round(report.fold_miou, 4).tolist()}")


def cmd_ablate(args):
    cfg = _settings(args)
    bench = cfg["benchmark"]
    episodes = gen_episodes(cfg["synthetic"], _count(args, cfg))
    variants = args.variant or bench["variants"] or list(TABLE_VARIANTS)
    sweep_ns = args.iterations or bench["iteration_sweep"]
    if any(n < 0 for n in sweep_ns):
        raise UsageError("--iterations must be >= 0")
    reports, sweep = ablate(episodes, cfg["pipeline"], variants, sweep_ns,
                            int(bench["folds"]), bench["baseline_mode"])
    out = {
        "config": {"pipeline": cfg["pipeline"].to_dict(), "synthetic": cfg["synthetic"].to_dict(),
                   "benchmark": bench},
        "variants": {k: r.to_dict() for k, r in reports.items()},
        "iteration_sweep": {str(n): r.to_dict() for n, r in sweep.items()},
        "checks": trend_checks(reports),
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(out, indent=2))
    for k, r in reports.items():
        print(f"{k:<14s} mIoU {r.mean_miou:.4f}")
    for n, r in sweep.items():
        print(f"n={n:<12d} mIoU {r.mean_miou:.4f}  curve {np.round(r.iteration_curve, 4).tolist()}")


def cmd_render(args):
    args.out.mkdir(parents=True, exist_ok=True)
    truth = read_mask(args.truth) if args.truth else None
    for path in args.inputs:
        if path.suffix == ".bmsk":
            data = read_mask(path)
        elif path.suffix == ".fmap":
            data = read_tensor(path)
        else:
            raise UsageError(f"{path}: expected a .fmap or .bmsk file")
        if data.ndim != 2:
            raise FormatError(f"{path}: only 2-D maps can be rendered, got shape {data.shape}")
        if truth is not None and data.dtype == np.bool_:
            write_ppm(args.out / f"{path.stem}_overlay.ppm", overlay(data, truth))
        write_pgm(args.out / f"{path.stem}.pgm", to_grey(data))
    print(f"rendered {len(args.inputs)} file(s) to {args.out}")


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "eval": cmd_eval, "ablate": cmd_ablate,
            "render": cmd_render}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"protoseg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, EmptyForegroundError) as exc:
        print(f"protoseg: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
