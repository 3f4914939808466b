"""Synthetic episodes, evaluation, file formats and the command line."""

from .benchmark import VARIANTS, EvalReport, evaluate, run_benchmark
from .metrics import miou
from .synthetic import SyntheticSpec, gen_episodes

__all__ = ["VARIANTS", "EvalReport", "SyntheticSpec", "evaluate", "gen_episodes",
           "miou", "run_benchmark"]
