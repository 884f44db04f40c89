# pickplace/cli.py
"""Command-line entry point: generate, train, eval, render, bench, stats."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import orjson
import structlog
from tqdm import tqdm

from .config import Settings
from .dataset import dataset_stats, generate_dataset, load_episode, read_manifest
from .errors import ArgumentError, ConfigError, PickPlaceError
from .logging import setup_logging
from .nn.tensor import set_finite_checks
from .render import write_heatmap, write_pgm16, write_ppm

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BENCH = 3


class TqdmEmitter:
    """Progress bar for interactive runs; other events go to structlog."""

    def __init__(self, desc: str):
        self._bar = tqdm(total=100, desc=desc, unit="%")
        self._pct = 0
        self._log = structlog.get_logger("pickplace.cli")

    def progress(self, pct: int, msg: str) -> None:
        pct = max(self._pct, min(100, int(pct)))
        self._bar.update(pct - self._pct)
        self._bar.set_postfix_str(msg)
        self._pct = pct

    def log(self, level: str, msg: str) -> None:
        self._bar.write(f"[{level}] {msg}")

    def artifact(self, artifact: Dict[str, Any]) -> None:
        self._log.info("artifact", **artifact)

    def done(self, **extra: Any) -> None:
        self._bar.update(100 - self._pct)
        self._bar.close()

    def cancelled(self) -> bool:
        return False


def _print_json(obj: Any) -> None:
    sys.stdout.write(orjson.dumps(obj, option=orjson.OPT_INDENT_2).decode() + "\n")


def cmd_generate(args: argparse.Namespace, settings: Settings) -> int:
    from .tasks.registry import get_task

    spec = get_task(args.task, args.max_steps)
    out = Path(args.out or Path(settings.DATA_DIR) / f"{args.task}-train")
    emitter = TqdmEmitter(f"generate {args.task}")
    manifest = generate_dataset(
        spec, args.count, args.seed, out, settings.calib(), settings.motion_params(), settings.PERTURB_MAGNITUDE, emitter,
    )
    emitter.done()
    _print_json(dataset_stats(manifest).model_dump())
    return EXIT_OK


def cmd_stats(args: argparse.Namespace, settings: Settings) -> int:
    _print_json(dataset_stats(read_manifest(args.manifest)).model_dump())
    return EXIT_OK


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    from .harness.config import load_run_config
    from .harness.training import train_run

    cfg = load_run_config(args.config)
    emitter = TqdmEmitter(f"train {cfg.task}")
    report = train_run(cfg, emitter)
    _print_json(report.model_dump())
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, settings: Settings) -> int:
    from .harness.evaluation import evaluate_snapshot
    from .tasks.registry import get_task

    spec = get_task(args.task, args.max_steps)
    summary = evaluate_snapshot(
        args.checkpoint, spec, args.episodes, args.seed0, settings.calib(), settings.motion_params(),
        args.model, settings.PERTURB_MAGNITUDE,
    )
    _print_json(summary.model_dump(exclude={"results"} if not args.verbose else None))
    return EXIT_OK


def cmd_render(args: argparse.Namespace, settings: Settings) -> int:
    ep = load_episode(args.episode)
    out = Path(args.out or Path(args.episode) / "render")
    out.mkdir(parents=True, exist_ok=True)
    for k, obs in enumerate(ep.observations):
        write_ppm(out / f"frame_{k:03d}.ppm", obs[..., :3])
        write_pgm16(out / f"depth_{k:03d}.pgm", obs[..., 3])
    if args.qmaps:
        if not args.checkpoint:
            raise ConfigError("--qmaps needs --checkpoint")
        from .transporter import TransportModel, attention_infer, transport_infer

        model, _ = TransportModel.load(args.checkpoint)
        goal = ep.goal_image if model.needs_goal else None
        for k in range(ep.length):
            q, pick = attention_infer(model, ep.observations[k], goal)
            write_heatmap(out / f"attention_{k:03d}.pgm", q)
            qt = transport_infer(model, ep.observations[k], pick, goal)
            r = int(np.unravel_index(int(np.argmax(qt)), qt.shape)[0])
            write_heatmap(out / f"transport_{k:03d}.pgm", qt[r])
    _print_json({"episode": str(args.episode), "frames": len(ep.observations), "out": str(out)})
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, settings: Settings) -> int:
    from .harness.bench import run_bench

    suites = [int(s) for s in args.suites.split(",")] if args.suites else None
    results = run_bench(suites, args.full, args.seed, args.workdir)
    _print_json([r.model_dump() for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_BENCH


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pickplace", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="roll the scripted demonstrator and write a dataset")
    g.add_argument("--task", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.add_argument("--max-steps", type=int)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("stats", help="demonstration statistics for a dataset manifest")
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=cmd_stats)

    t = sub.add_parser("train", help="train from a key=value run config")
    t.add_argument("--config", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on held-out seeds")
    e.add_argument("--checkpoint")
    e.add_argument("--task", required=True)
    e.add_argument("--episodes", type=int, default=20)
    e.add_argument("--seed0", type=int, default=100_000)
    e.add_argument("--model", help="expected model kind; 'demonstrator' needs no checkpoint")
    e.add_argument("--max-steps", type=int)
    e.add_argument("--verbose", action="store_true")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render", help="write PPM/PGM frames for a stored episode")
    r.add_argument("--episode", required=True)
    r.add_argument("--out")
    r.add_argument("--qmaps", action="store_true")
    r.add_argument("--checkpoint")
    r.set_defaults(func=cmd_render)

    b = sub.add_parser("bench", help="run the acceptance suites")
    b.add_argument("--suites", help="comma-separated suite numbers")
    b.add_argument("--full", action="store_true")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--workdir")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = Settings()
    log = setup_logging(settings.LOG_LEVEL)
    set_finite_checks(settings.DEBUG_FINITE_CHECKS)
    try:
        return args.func(args, settings)
    except (ConfigError, ArgumentError, FileNotFoundError) as exc:
        log.error("cli.config_error", verb=args.verb, error=str(exc))
        return EXIT_CONFIG
    except PickPlaceError as exc:
        log.error("cli.failed", verb=args.verb, error=str(exc), kind=type(exc).__name__)
        return 1


if __name__ == "__main__":
    sys.exit(main())
