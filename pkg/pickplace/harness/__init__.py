# pickplace/harness/__init__.py
"""Run configuration, training loop, held-out evaluation and acceptance suites."""
from ..dataset import dataset_stats
from .bench import FAST_SUITES, SUITES, run_bench
from .config import RunConfig, load_run_config, run_config_from_text
from .evaluation import evaluate_policy, evaluate_snapshot, load_policy
from .training import build_model, train_run

__all__ = [
    "FAST_SUITES", "RunConfig", "SUITES", "build_model", "dataset_stats", "evaluate_policy",
    "evaluate_snapshot", "load_policy", "load_run_config", "run_bench", "run_config_from_text", "train_run",
]
