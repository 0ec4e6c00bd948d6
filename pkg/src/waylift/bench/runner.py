"""Benchmark harness: run planning methods over task suites and emit reports.

Five methods are supported: the initial-distance baseline, the unconditioned
policy, CEM in low-level joint space, and lifted CEM with 2D or 3D waypoints.
Per-task randomness is derived from (suite seed, task index, method), so
results are byte-identical across runs and worker counts. Wall time is the
one observational column; disable it (``timing=False``) for byte-identical
output files.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..camera import Camera, WaypointSet
from ..cem import CemConfig, PlanResult, cem_plan, observation_cost
from ..kinematics import KinematicModel, default_model
from ..policy import PolicyConfig, PolicyContext, generate_actions
from ..world import WorldModelState, wm_step
from .metrics import SUBSETS, integrate_plan, mje, mje_report
from .tasks import Task

METHODS = ("initial", "uncond", "ll", "hl2d", "hl3d")

CSV_COLUMNS = ("method", "task_id", "subset", "mje_m", "cost", "iters", "samples", "wall_ms", "seed")

_METHOD_SPACE = {"ll": "low-level", "hl2d": "lifted-2d", "hl3d": "lifted-3d"}


@dataclass(frozen=True)
class BenchConfig:
    """One benchmark run: planner budget, noise levels, and output knobs."""

    iterations: int = 6
    samples: int = 64
    elites: int = 16
    sigma_ll: float = 0.05
    sigma_hl: float = 0.3
    sigma_floor: float = 0.01
    sigma_wm: float = 0.005
    resample_count: int = 64
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    use_cummin: bool = True
    lambda_miss: float = 0.5
    workers: int = 1
    timing: bool = True
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    def __post_init__(self):
        for method in self.methods:
            if method not in METHODS:
                raise ValueError(f"unknown method {method!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.resample_count < 1:
            raise ValueError("resample_count must be >= 1")


def _derived_seed(seed: int, task_idx: int, method: str, role: int) -> int:
    ss = np.random.SeedSequence(
        entropy=seed, spawn_key=(task_idx, METHODS.index(method), role)
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _fresh_state(task: Task, m, cam, cfg: BenchConfig, rng_seed: int) -> WorldModelState:
    return WorldModelState(
        scene=task.scene,
        model=m,
        camera=cam,
        pose=task.start_pose,
        context=list(task.context_observations),
        sigma_wm=cfg.sigma_wm,
        rng=np.random.default_rng(rng_seed),
    )


def _resample_mje(
    task: Task,
    best_hl: list[WaypointSet],
    m: KinematicModel,
    cam: Camera,
    policy_cfg: PolicyConfig,
    count: int,
    seed: int,
) -> dict[str, float]:
    """Mean MJE over ``count`` stochastic policy expansions of winning waypoints.

    Only single-step waypoint plans take this path (the policy alone
    determines the actions, no simulator needed).
    """
    ctx = PolicyContext.from_history(
        list(task.context_observations), list(task.context_poses), policy_cfg.K_pi
    )
    totals = {s: 0.0 for s in SUBSETS}
    for k in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(k,)))
        actions = generate_actions(ctx, best_hl[0], m, cam, policy_cfg, rng)
        final = integrate_plan(task.start_pose, actions)
        for s in SUBSETS:
            totals[s] += mje(final, task.goal_pose, m, s)
    return {s: totals[s] / count for s in SUBSETS}


def _run_method(task: Task, task_idx: int, method: str, cfg: BenchConfig,
                m: KinematicModel, cam: Camera) -> dict:
    policy_cfg = cfg.policy
    ctx = PolicyContext.from_history(
        list(task.context_observations), list(task.context_poses), policy_cfg.K_pi
    )
    o_g = task.goal_observation
    record: dict = {"task_id": task.task_id, "method": method}
    started = time.perf_counter()

    if method == "initial":
        final = task.start_pose
        record.update(actions=[], cost=observation_cost(ctx.observations[-1], o_g, cfg.lambda_miss))
        plan = None
    elif method == "uncond":
        actions = generate_actions(ctx, WaypointSet(), m, cam, policy_cfg, rng=None)
        state = _fresh_state(task, m, cam, cfg, _derived_seed(cfg.seed, task_idx, method, 0))
        pred = None
        for a in actions:
            pred = wm_step(state, a)
        final = integrate_plan(task.start_pose, actions)
        record.update(
            actions=[a.flatten().tolist() for a in actions],
            cost=observation_cost(pred, o_g, cfg.lambda_miss),
        )
        plan = None
    else:
        cem_cfg = CemConfig(
            iterations=cfg.iterations,
            samples=cfg.samples,
            elites=cfg.elites,
            sigma_ll=cfg.sigma_ll,
            sigma_hl=cfg.sigma_hl,
            sigma_floor=cfg.sigma_floor,
            horizon=task.horizon if method == "ll" else 1,
            space=_METHOD_SPACE[method],
            seed=_derived_seed(cfg.seed, task_idx, method, 1),
            use_cummin=cfg.use_cummin,
        )
        state = _fresh_state(task, m, cam, cfg, _derived_seed(cfg.seed, task_idx, method, 0))
        plan = cem_plan(state, ctx, o_g, cem_cfg, m, cam, policy_cfg, cfg.lambda_miss)
        final = integrate_plan(task.start_pose, plan.best_actions)
        record.update(
            actions=[a.flatten().tolist() for a in plan.best_actions],
            cost=plan.best_cost,
            cost_history=plan.cost_history,
            raw_cost_history=plan.raw_cost_history,
            cem_seed=cem_cfg.seed,
        )
        if plan.best_hl is not None:
            record["hl"] = [json.loads(ws.to_json()) for ws in plan.best_hl]

    direct = {s: mje(final, task.goal_pose, m, s) for s in SUBSETS}
    record["mje_direct"] = direct
    report = mje_report(final, task.goal_pose, m, cam, task.start_pose)
    record["visibility"] = {"visible": report.visible, "not_visible": report.not_visible}

    # Lifted methods report the average MJE over fresh stochastic expansions
    # of the winning waypoints; other methods report the plan directly.
    if method in ("hl2d", "hl3d") and plan is not None and plan.best_hl is not None:
        resample_seed = _derived_seed(cfg.seed, task_idx, method, 2)
        resample_policy = cfg.policy if method == "hl2d" else replace(cfg.policy, depth_mode="given-3d")
        record["resample"] = {"count": cfg.resample_count, "seed": resample_seed}
        record["mje_resampled"] = _resample_mje(
            task, plan.best_hl, m, cam, resample_policy, cfg.resample_count, resample_seed
        )
        record["mje_reported"] = record["mje_resampled"]
    else:
        record["mje_reported"] = direct

    record["seed"] = _derived_seed(cfg.seed, task_idx, method, 1)
    record["wall_ms"] = (time.perf_counter() - started) * 1000.0 if cfg.timing else 0.0
    return record


def _run_task(args) -> list[dict]:
    task, task_idx, cfg, m, cam = args
    records = []
    for method in cfg.methods:
        try:
            records.append(_run_method(task, task_idx, method, cfg, m, cam))
        except Exception as exc:  # record, never abort the suite
            records.append(
                {
                    "task_id": task.task_id,
                    "method": method,
                    "error": f"{type(exc).__name__}: {exc}",
                    "seed": _derived_seed(cfg.seed, task_idx, method, 1),
                }
            )
    return records


def run_benchmark(
    tasks: list[Task],
    cfg: BenchConfig,
    outdir: str | Path | None = None,
    m: KinematicModel | None = None,
    cam: Camera | None = None,
) -> dict:
    """Run every configured method over the suite.

    Returns a dict with ``rows`` (CSV rows as dicts), ``plans`` (full
    per-task records), ``summary`` (per-method aggregates) and, when
    ``outdir`` is given, writes results.csv / plans.jsonl / run_meta.json.
    """
    m = m or default_model()
    cam = cam or Camera()
    items = [(task, i, cfg, m, cam) for i, task in enumerate(tasks)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_task = list(pool.map(_run_task, items, chunksize=1))
    else:
        per_task = [_run_task(item) for item in items]

    plans: list[dict] = []
    rows: list[dict] = []
    failures: list[dict] = []
    for records in per_task:
        for record in records:
            if "error" in record:
                failures.append(record)
                continue
            plans.append(record)
            for subset in SUBSETS:
                rows.append(
                    {
                        "method": record["method"],
                        "task_id": record["task_id"],
                        "subset": subset,
                        "mje_m": record["mje_reported"][subset],
                        "cost": record["cost"],
                        "iters": cfg.iterations if record["method"] in _METHOD_SPACE else 0,
                        "samples": cfg.samples if record["method"] in _METHOD_SPACE else 0,
                        "wall_ms": record["wall_ms"],
                        "seed": record["seed"],
                    }
                )

    summary = _summarize(rows, failures, cfg)
    out = {"rows": rows, "plans": plans, "summary": summary, "failures": failures}
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        write_results_csv(rows, outdir / "results.csv")
        with open(outdir / "plans.jsonl", "w", encoding="utf-8") as fh:
            for record in plans:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        meta = {
            "config": _config_dict(cfg),
            "n_tasks": len(tasks),
            "horizon": tasks[0].horizon if tasks else None,
            "summary": summary,
        }
        with open(outdir / "run_meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
    return out


def _config_dict(cfg: BenchConfig) -> dict:
    doc = asdict(cfg)
    doc["methods"] = list(cfg.methods)
    return doc


def _summarize(rows: list[dict], failures: list[dict], cfg: BenchConfig) -> dict:
    summary: dict = {"methods": {}, "n_failures": len(failures)}
    by_method: dict[str, dict[str, list[float]]] = {}
    for row in rows:
        by_method.setdefault(row["method"], {}).setdefault(row["subset"], []).append(row["mje_m"])
    wall: dict[str, list[float]] = {}
    for row in rows:
        if row["subset"] == "all":
            wall.setdefault(row["method"], []).append(row["wall_ms"])
    initial = by_method.get("initial", {})
    for method, subsets in by_method.items():
        entry = {}
        for subset, values in subsets.items():
            arr = np.array(values)
            entry[subset] = {
                "mean": float(arr.mean()),
                "stderr": float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0,
            }
            if subset in initial and method != "initial":
                entry[subset]["reduction_from_initial"] = float(
                    np.mean(initial[subset]) - arr.mean()
                )
        entry["mean_wall_ms"] = float(np.mean(wall.get(method, [0.0])))
        summary["methods"][method] = entry
    return summary


def write_results_csv(rows: list[dict], path) -> None:
    """Fixed-schema CSV; float formats are pinned so equal runs are byte-identical."""
    ordered = sorted(rows, key=_row_key)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in ordered:
            fh.write(
                f"{row['method']},{row['task_id']},{row['subset']},"
                f"{row['mje_m']:.9f},{row['cost']:.9f},{row['iters']},{row['samples']},"
                f"{row['wall_ms']:.3f},{row['seed']}\n"
            )


def _row_key(row: dict) -> tuple:
    return (
        row["task_id"],
        METHODS.index(row["method"]) if row["method"] in METHODS else 99,
        SUBSETS.index(row["subset"]),
    )


def read_results_csv(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            parts = line.strip().split(",")
            row = dict(zip(header, parts))
            row["mje_m"] = float(row["mje_m"])
            row["cost"] = float(row["cost"])
            row["iters"] = int(row["iters"])
            row["samples"] = int(row["samples"])
            row["wall_ms"] = float(row["wall_ms"])
            row["seed"] = int(row["seed"])
            rows.append(row)
    return rows
