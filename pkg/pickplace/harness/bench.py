# pickplace/harness/bench.py
"""Acceptance suites behind the ``bench`` CLI verb.

Fast suites run by default; the statistical and training suites need ``full=True``.
"""
from __future__ import annotations

import math
import tempfile
import time
from pathlib import Path
from typing import Callable

import numpy as np
import structlog

from ..baselines import STATE_DIMS, ground_truth_state, mdn_head_loss, mdn_output_size
from ..dataset import Episode, EpisodeStore, TrainingSample, action_labels, augment_consistent, generate_dataset
from ..geometry import regular_polygon_area
from ..models import CheckResult
from ..nn.fcn import fcn_backward, fcn_forward, fcn_init, hourglass_spec
from ..nn.gradcheck import finite_diff_grad_check
from ..nn.layers import conv2d_backward, conv2d_forward
from ..nn.tensor import ParamSet, Tensor
from ..oracle import DemonstratorPolicy, best_ring_assignment
from ..render import OBSERVATION_FILL
from ..sim.scene import LINK_LENGTH, RING_BEADS, ring_positions
from ..spatial import WorkspaceCalib, transform_image_se2
from ..tasks.episode import run_episode
from ..tasks.metrics import convex_hull_area
from ..tasks.registry import TASK_IDS, get_task
from ..tasks.reset import reset_task
from ..transporter import (
    TransportModel,
    argmax_first,
    attention_infer,
    correlate_crop,
    correlate_crop_backward,
    policy_act,
    preprocess,
    transport_goal_split_infer,
    transport_infer,
)
from .config import RunConfig
from .evaluation import evaluate_snapshot
from .oracles import brute_force_ring_cost, naive_goal_split, naive_transport
from .training import train_run

log = structlog.get_logger(__name__)

FAST_SUITES = frozenset({1, 2, 3, 4, 5, 6, 11})
DEMO_FLOORS = {"ring": 0.9, "cable": 0.9, "fabric-cover": 0.9, "fabric-flat": 0.9}


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-12))


def _features(model: TransportModel, obs: np.ndarray, goal: np.ndarray | None) -> tuple[np.ndarray, ...]:
    x = preprocess(obs)
    kf = fcn_forward(model.key_spec, model.key, x, prefix="key.")[0]
    qf = fcn_forward(model.query_spec, model.query, x, prefix="query.")[0]
    if goal is None:
        return qf, kf
    return qf, kf, fcn_forward(model.goal_spec, model.goal, preprocess(goal), prefix="goal.")[0]


def check_crosscorr(rng: np.random.Generator) -> tuple[bool, str]:
    worst = 0.0
    for i in range(20):
        d = int(rng.integers(1, 4))
        n_rots = (1, 4)[i % 2]
        q, k, g = (rng.normal(size=(16, 16, d)) for _ in range(3))
        pick = (int(rng.integers(16)), int(rng.integers(16)))
        fast, _ = correlate_crop(q, k, pick, 6, n_rots)
        worst = max(worst, _rel(fast, naive_transport(q, k, pick, 6, n_rots)))
        split, _ = correlate_crop(q * g, k * g, pick, 6, n_rots)
        worst = max(worst, _rel(split, naive_goal_split(q, k, g, pick, 6, n_rots)))
    # whole networks: the rotation-stack argmax must score the naive maximum
    argmax_ok = True
    for i, mode in enumerate(("none", "split", "none", "split")):
        model = TransportModel(mode, crop_size=6, n_rots=4, feature_dim=2, width=4, seed=i, dtype=np.float64)
        obs, goal = rng.random((16, 16, 6)), rng.random((16, 16, 6))
        pick = (int(rng.integers(16)), int(rng.integers(16)))
        if mode == "split":
            fast = transport_goal_split_infer(model, obs, goal, pick)
            ref = naive_goal_split(*_features(model, obs, goal), pick, 6, 4)
        else:
            fast = transport_infer(model, obs, pick)
            ref = naive_transport(*_features(model, obs, None), pick, 6, 4)
        worst = max(worst, _rel(fast, ref))
        argmax_ok &= bool(ref[argmax_first(fast)] >= ref.max() - 1e-9 * max(1.0, float(np.abs(ref).max())))
    return worst <= 1e-4 and argmax_ok, f"max rel err {worst:.2e}, argmax {'ok' if argmax_ok else 'mismatch'}"



def _linear_loss(out: np.ndarray, r: np.ndarray) -> float:
    return float(np.sum(out * r))


def check_gradients(rng: np.random.Generator) -> tuple[bool, str]:
    errs: dict[str, float] = {"conv": 0.0, "fcn": 0.0, "correlate": 0.0, "mdn": 0.0}
    for _ in range(10):
        x = rng.normal(size=(8, 8, 2))
        p = ParamSet([Tensor(rng.normal(size=(3, 3, 2, 4)), "w"), Tensor(rng.normal(size=4), "b")])
        r = rng.normal(size=(4, 4, 4))
        _, dk, db = conv2d_backward(r, x, p["w"].data, 2, 1)
        p["w"].accumulate(dk)
        p["b"].accumulate(db)
        errs["conv"] = max(errs["conv"], finite_diff_grad_check(
            lambda: _linear_loss(conv2d_forward(x, p["w"].data, 2, 1, p["b"].data), r), p, h=1e-6, rng=rng))

        spec = hourglass_spec(2, 2, width=4)
        fp = fcn_init(spec, rng, np.float64)
        for t in fp:
            t.data = t.data + rng.normal(scale=0.05, size=t.shape)
        xf = rng.normal(size=(8, 8, 2))
        rf = rng.normal(size=(8, 8, 2))
        _, cache = fcn_forward(spec, fp, xf)
        fcn_backward(spec, fp, cache, rf)
        errs["fcn"] = max(errs["fcn"], finite_diff_grad_check(
            lambda: _linear_loss(fcn_forward(spec, fp, xf)[0], rf), fp, h=1e-6, rng=rng))

        cp = ParamSet([Tensor(rng.normal(size=(8, 8, 2)), "query"), Tensor(rng.normal(size=(8, 8, 2)), "key")])
        pick = (int(rng.integers(8)), int(rng.integers(8)))
        rq = rng.normal(size=(2, 8, 8))
        _, cc = correlate_crop(cp["query"].data, cp["key"].data, pick, 4, 2)
        dq, dk2 = correlate_crop_backward(rq, cc)
        cp["query"].accumulate(dq)
        cp["key"].accumulate(dk2)
        errs["correlate"] = max(errs["correlate"], finite_diff_grad_check(
            lambda: _linear_loss(correlate_crop(cp["query"].data, cp["key"].data, pick, 4, 2)[0], rq), cp, h=1e-6, rng=rng))

        for dim in (3, 6):
            k = 3
            raw = Tensor(rng.normal(size=(4, mdn_output_size(k, dim))), "raw")
            target = rng.normal(size=(4, dim))
            _, graw = mdn_head_loss(raw.data, target, k)
            raw.accumulate(graw)
            errs["mdn"] = max(errs["mdn"], finite_diff_grad_check(
                lambda: mdn_head_loss(raw.data, target, k)[0], ParamSet([raw]), h=1e-6, rng=rng))
    ok = all(v < 1e-3 for v in errs.values())
    return ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items())


def _ones_goal(model: TransportModel) -> None:
    """Make the goal network output exactly one everywhere."""
    assert model.goal is not None
    last = max(i for i, l in enumerate(model.goal_spec.layers) if l.kind == "conv")  # type: ignore[union-attr]
    w, b = model.goal[f"goal.l{last}.w"], model.goal[f"goal.l{last}.b"]
    w.data = np.zeros_like(w.data)
    b.data = np.ones_like(b.data)


def check_goal_split_reduction(rng: np.random.Generator) -> tuple[bool, str]:
    worst = 0.0
    for i in range(20):
        split = TransportModel("split", 8, 2, 3, 4, seed=i)
        plain = TransportModel("none", 8, 2, 3, 4, seed=i)
        plain.key.load_arrays(split.key.arrays())
        plain.query.load_arrays(split.query.arrays())
        _ones_goal(split)
        obs = rng.uniform(size=(16, 16, 6)).astype(np.float32)
        goal = rng.uniform(size=(16, 16, 6)).astype(np.float32)
        pick = (int(rng.integers(16)), int(rng.integers(16)))
        a = transport_goal_split_infer(split, obs, goal, pick)
        b = transport_infer(plain, obs, pick)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst <= 1e-5, f"max abs diff {worst:.2e}"


def check_equivariance(rng: np.random.Generator, calib: WorkspaceCalib | None = None) -> tuple[bool, str]:
    c = calib or WorkspaceCalib()
    h, w = c.shape
    crop = 32
    model = TransportModel("none", crop, 1, 3, 16, seed=7)
    base = np.zeros((h, w, 6), dtype=np.float32)
    base[..., :3] = 0.5
    hits = 0
    for _ in range(100):
        obs = base.copy()
        pu = 2 * int(rng.integers(h // 4 - 2, h // 4 + 3))
        pv = 2 * int(rng.integers(crop // 2 + 4, w // 2 - crop // 2 - 3))
        obs[pu - 4 : pu + 4, pv - 4 : pv + 4] = rng.uniform(size=(8, 8, 6))
        du, dv = 2 * int(rng.integers(-1, 2)), 2 * int(rng.integers(-3, 4))
        moved = np.roll(obs, (du, dv), axis=(0, 1))
        _, (u0, v0) = attention_infer(model, obs)
        _, (u1, v1) = attention_infer(model, moved)
        hits += int((u1 - u0, v1 - v0) == (du, dv))
    return hits >= 95, f"{hits}/100 trials shifted with the input"


def check_augmentation(rng: np.random.Generator) -> tuple[bool, str]:
    h, w = 80, 160
    bad = 0
    for _ in range(1000):
        n_rots = int(rng.choice([1, 8, 24]))
        pick = (int(rng.integers(20, h - 20)), int(rng.integers(30, w - 30)))
        place = (int(rng.integers(20, h - 20)), int(rng.integers(30, w - 30)))
        obs = np.zeros((h, w, 6), dtype=np.float32)
        obs[pick[0] - 1 : pick[0] + 2, pick[1] - 1 : pick[1] + 2, 3] = 1.0
        obs[place[0] - 1 : place[0] + 2, place[1] - 1 : place[1] + 2, 4] = 1.0
        goal = rng.uniform(size=(h, w, 6)).astype(np.float32)
        s = TrainingSample(obs, pick, place, int(rng.integers(n_rots)), n_rots, goal)
        out = augment_consistent(s, rng, 32)
        if out.transform is None:
            continue
        for ch, label in ((3, out.pick), (4, out.place)):
            ys, xs = np.nonzero(out.obs[..., ch] > 0.5)
            if len(ys) == 0 or abs(ys.mean() - label[0]) > 1.0 or abs(xs.mean() - label[1]) > 1.0:
                bad += 1
        if not np.array_equal(out.goal, transform_image_se2(goal, out.transform, "nearest", OBSERVATION_FILL)):
            bad += 1
        j = round(out.transform.alpha / (2.0 * math.pi / n_rots))
        if out.rot_bin != (s.rot_bin + j) % n_rots:
            bad += 1
    return bad == 0, f"{bad} label or transform mismatches"


def check_state_dims(rng: np.random.Generator) -> tuple[bool, str]:
    wrong = []
    for tid in TASK_IDS:
        spec = get_task(tid)
        scene, goal = reset_task(spec, np.random.default_rng(int(rng.integers(1 << 30))))
        n = ground_truth_state(spec, scene, goal).size
        if n != STATE_DIMS[tid]:
            wrong.append(f"{tid}={n}")
    return not wrong, "all 13 match" if not wrong else ", ".join(wrong)


def check_hull_and_ring(rng: np.random.Generator) -> tuple[bool, str]:
    poly = ring_positions(np.zeros(2), RING_BEADS, LINK_LENGTH)
    area_err = abs(convex_hull_area(poly) - regular_polygon_area(RING_BEADS, LINK_LENGTH))
    mismatch = 0
    for n in (3, 4, 5, 6):
        for _ in range(5):
            b, t = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
            if abs(best_ring_assignment(b, t).cost - brute_force_ring_cost(b, t)) > 1e-9:
                mismatch += 1
    return area_err <= 1e-9 and mismatch == 0, f"area err {area_err:.1e}, {mismatch} assignment mismatches"


def check_demonstrator(rng: np.random.Generator) -> tuple[bool, str]:
    notes, ok = [], True
    for tid in TASK_IDS:
        spec = get_task(tid)
        if spec.family == "block":
            continue
        traces = [run_episode(spec, DemonstratorPolicy(), s, record=False) for s in range(100)]
        rate = float(np.mean([t.result.success for t in traces]))
        need = DEMO_FLOORS.get(spec.family, 0.0) if tid != "bag-alone-open" else 0.5
        if tid == "fabric-cover" and any(t.length != 2 for t in traces if t.result.success):
            ok = False
        ok = ok and rate >= need
        notes.append(f"{tid} {rate:.2f}")
    return ok, "; ".join(notes)


def _train(work: Path, task: str, model: str, demos: int, iterations: int, interval: int, seed: int,
           episodes: int = 20, **extra) -> float:
    data = work / f"{task}-data"
    if not (data / "manifest.csv").exists():
        generate_dataset(get_task(task), demos, 0, data)
    cfg = RunConfig(task=task, model=model, dataset=str(data / "manifest.csv"), demos=demos, iterations=iterations,
                    snapshot_interval=interval, eval_episodes=episodes, seed=seed,
                    out_dir=str(work / f"{task}-{model}-{seed}-{iterations}"), **extra)
    return train_run(cfg).best_success


def overfit_deviation(model: TransportModel, ep: Episode, calib: WorkspaceCalib) -> tuple[int, int]:
    """Worst (pixel, rotation-bin) gap between the model's action and each demo step's labels."""
    px = rb = 0
    for k in range(ep.length):
        want = action_labels(ep.action(k), calib, model.n_rots)
        got = action_labels(policy_act(model, ep.observations[k], ep.goal_image, calib), calib, model.n_rots)
        for a, b in zip(want[:2], got[:2]):
            px = max(px, abs(a[0] - b[0]), abs(a[1] - b[1]))
        d = abs(want[2] - got[2]) % model.n_rots
        rb = max(rb, min(d, model.n_rots - d))
    return px, rb


def check_overfit(rng: np.random.Generator, work: Path) -> tuple[bool, str]:
    data = work / "overfit"
    spec = get_task("cable-line-notarget")
    manifest = generate_dataset(spec, 1, 0, data)
    cfg = RunConfig(task=spec.id, dataset=str(data / "manifest.csv"), demos=1, iterations=500,
                    snapshot_interval=500, eval_episodes=0, augment=False, out_dir=str(work / "overfit-run"))
    report = train_run(cfg)
    ckpt = report.snapshots[-1].path
    model, _ = TransportModel.load(ckpt)
    px, rb = overfit_deviation(model, EpisodeStore(manifest).episode(0), cfg.calib())
    summary = evaluate_snapshot(ckpt, spec, 1, manifest.entries[0].seed, cfg.calib())
    ok = px <= 1 and rb <= 1 and summary.success_rate == 1.0
    return ok, f"worst deviation {px} px / {rb} bins; demo seed replay success {summary.success_rate:.2f}"



def check_learning(rng: np.random.Generator, work: Path) -> tuple[bool, str]:
    wins = sum(_train(work, "cable-line-notarget", "transporter-goal-split", 10, 2000, 200, s) >= 0.5 for s in range(3))
    block = sum(_train(work, "block-notarget", "transporter-goal-split", 10, 2000, 200, s, augment_rotations=False) >= 0.6
                for s in range(3))
    return wins >= 2 and block >= 2, f"cable {wins}/3, block {block}/3 seeds over threshold"


def check_baseline_order(rng: np.random.Generator, work: Path) -> tuple[bool, str]:
    wins = 0
    for s in range(3):
        mlp = _train(work, "block-notarget", "gt-mlp", 10, 2000, 200, s)
        stack = _train(work, "block-notarget", "transporter-goal-stack", 10, 2000, 200, s, augment_rotations=False)
        split = _train(work, "block-notarget", "transporter-goal-split", 10, 2000, 200, s, augment_rotations=False)
        wins += int(stack > mlp and split > mlp)
    return wins >= 2, f"goal-conditioned models ahead in {wins}/3 runs"


def check_determinism(rng: np.random.Generator, work: Path) -> tuple[bool, str]:
    outs = []
    for run in ("a", "b"):
        root = work / f"determinism-{run}"
        generate_dataset(get_task("fabric-flat"), 5, 0, root / "data")
        cfg = RunConfig(task="fabric-flat", model="transporter", dataset=str(root / "data" / "manifest.csv"), demos=5,
                        iterations=100, snapshot_interval=100, eval_episodes=5, out_dir=str(root / "run"))
        report = train_run(cfg)
        outs.append((Path(report.loss_log).read_bytes(), Path(report.eval_log).read_bytes()))
    return outs[0] == outs[1], "identical CSV logs" if outs[0] == outs[1] else "CSV logs differ"


SUITES: dict[int, tuple[str, Callable[..., tuple[bool, str]]]] = {
    1: ("crosscorr-oracle", check_crosscorr),
    2: ("gradient-checks", check_gradients),
    3: ("goal-split-reduction", check_goal_split_reduction),
    4: ("attention-equivariance", check_equivariance),
    5: ("augmentation-consistency", check_augmentation),
    6: ("state-dimensions", check_state_dims),
    7: ("demonstrator-quality", check_demonstrator),
    8: ("overfit-one-demo", check_overfit),
    9: ("learning-analog", check_learning),
    10: ("baseline-ordering", check_baseline_order),
    11: ("hull-and-ring-assignment", check_hull_and_ring),
    12: ("pipeline-determinism", check_determinism),
}
_NEEDS_WORKDIR = frozenset({8, 9, 10, 12})


def run_bench(suites: list[int] | None = None, full: bool = False, seed: int = 0, workdir: str | Path | None = None) -> list[CheckResult]:
    chosen = sorted(suites) if suites else sorted(SUITES if full else FAST_SUITES)
    results: list[CheckResult] = []
    with tempfile.TemporaryDirectory(prefix="pickplace-bench-") as tmp:
        work = Path(workdir) if workdir else Path(tmp)
        work.mkdir(parents=True, exist_ok=True)
        for n in chosen:
            name, fn = SUITES[n]
            if n not in FAST_SUITES and not full:
                results.append(CheckResult(name=name, passed=False, detail="needs --full"))
                continue
            rng = np.random.default_rng([seed, n])
            t0 = time.perf_counter()
            try:
                passed, detail = fn(rng, work) if n in _NEEDS_WORKDIR else fn(rng)
            except Exception as exc:  # noqa: BLE001
                log.exception("bench.error", suite=name)
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            res = CheckResult(name=name, passed=passed, detail=detail, seconds=time.perf_counter() - t0)
            log.info("bench.check", name=name, passed=passed, detail=detail, seconds=round(res.seconds, 2))
            results.append(res)
    return results
