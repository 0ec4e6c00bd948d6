"""Report rendering: aggregate CSVs and figures from benchmark run directories.

Each run directory is expected to hold results.csv, plans.jsonl and
run_meta.json as written by ``run_benchmark``. Figures are SVG line charts
rendered with matplotlib's Agg backend.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "waylift"

import matplotlib.pyplot as plt
import numpy as np

from .metrics import SUBSETS
from .runner import read_results_csv

_METHOD_STYLE = {
    "initial": dict(color="#7f7f7f", linestyle=":"),
    "uncond": dict(color="#9467bd", linestyle="--"),
    "ll": dict(color="#1f77b4"),
    "hl2d": dict(color="#2ca02c"),
    "hl3d": dict(color="#ff7f0e"),
}
_METHOD_LABEL = {
    "initial": "initial distance",
    "uncond": "unconditioned policy",
    "ll": "joint-space CEM",
    "hl2d": "waypoint CEM (2D)",
    "hl3d": "waypoint CEM (3D)",
}


def load_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    rows = read_results_csv(run_dir / "results.csv")
    with open(run_dir / "run_meta.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    plans = []
    plans_path = run_dir / "plans.jsonl"
    if plans_path.exists():
        with open(plans_path, "r", encoding="utf-8") as fh:
            plans = [json.loads(line) for line in fh if line.strip()]
    return {"rows": rows, "meta": meta, "plans": plans, "dir": str(run_dir)}


def mean_mje(rows: list[dict], method: str, subset: str = "all") -> float:
    vals = [r["mje_m"] for r in rows if r["method"] == method and r["subset"] == subset]
    return float(np.mean(vals)) if vals else float("nan")


def methods_in(rows: list[dict]) -> list[str]:
    seen = []
    for r in rows:
        if r["method"] not in seen:
            seen.append(r["method"])
    return seen


def write_summary_csv(runs: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("run,iters,samples,horizon,method,subset,mean_mje_m,stderr_mje_m,mean_wall_ms\n")
        for run in runs:
            meta = run["meta"]
            cfg = meta.get("config", {})
            for method in methods_in(run["rows"]):
                for subset in SUBSETS:
                    vals = np.array(
                        [
                            r["mje_m"]
                            for r in run["rows"]
                            if r["method"] == method and r["subset"] == subset
                        ]
                    )
                    if not len(vals):
                        continue
                    stderr = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
                    wall = np.mean(
                        [
                            r["wall_ms"]
                            for r in run["rows"]
                            if r["method"] == method and r["subset"] == "all"
                        ]
                    )
                    fh.write(
                        f"{Path(run['dir']).name},{cfg.get('iterations', '')},"
                        f"{cfg.get('samples', '')},{meta.get('horizon', '')},"
                        f"{method},{subset},{vals.mean():.9f},{stderr:.9f},{wall:.3f}\n"
                    )


def fig_budget_sweep(runs: list[dict], path, subset: str = "all") -> None:
    """Mean MJE vs CEM iterations, one line per (method, samples-per-iteration)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    sample_counts = sorted({run["meta"]["config"]["samples"] for run in runs})
    for method in ("ll", "hl2d", "hl3d"):
        for n in sample_counts:
            pts = []
            for run in runs:
                cfg = run["meta"]["config"]
                if cfg["samples"] != n or method not in methods_in(run["rows"]):
                    continue
                pts.append((cfg["iterations"], mean_mje(run["rows"], method, subset)))
            if not pts:
                continue
            pts.sort()
            alpha = 0.45 + 0.55 * (sample_counts.index(n) + 1) / len(sample_counts)
            ax.plot(
                [p[0] for p in pts],
                [p[1] for p in pts],
                marker="o",
                alpha=alpha,
                label=f"{_METHOD_LABEL.get(method, method)}, N={n}",
                **_METHOD_STYLE.get(method, {}),
            )
    ax.set_xlabel("CEM iterations")
    ax.set_ylabel(f"mean {subset}-joint MJE (m)")
    ax.set_title("Planning budget sweep")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def fig_horizon_sweep(runs: list[dict], path, subset: str = "all") -> None:
    """Mean MJE vs goal horizon for every method present."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    methods = []
    for run in runs:
        for method in methods_in(run["rows"]):
            if method not in methods:
                methods.append(method)
    for method in methods:
        pts = []
        for run in runs:
            horizon = run["meta"].get("horizon")
            if horizon is None or method not in methods_in(run["rows"]):
                continue
            pts.append((horizon, mean_mje(run["rows"], method, subset)))
        if not pts:
            continue
        pts.sort()
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            label=_METHOD_LABEL.get(method, method),
            **_METHOD_STYLE.get(method, {}),
        )
    ax.set_xlabel("goal horizon (steps)")
    ax.set_ylabel(f"mean {subset}-joint MJE (m)")
    ax.set_title("Goal horizon sweep")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def quantile_buckets(rows: list[dict], n_buckets: int = 20) -> dict:
    """Equal-count buckets over initial all-joint MJE.

    Returns bucket centers (mean initial MJE) and per-method mean final MJE
    per bucket.
    """
    initial = {
        r["task_id"]: r["mje_m"]
        for r in rows
        if r["method"] == "initial" and r["subset"] == "all"
    }
    task_ids = sorted(initial, key=lambda tid: (initial[tid], tid))
    buckets = [list(chunk) for chunk in np.array_split(np.array(task_ids), n_buckets)]
    centers = [float(np.mean([initial[t] for t in b])) for b in buckets if len(b)]
    out = {"centers": centers, "methods": {}}
    for method in methods_in(rows):
        if method == "initial":
            continue
        per_task = {
            r["task_id"]: r["mje_m"]
            for r in rows
            if r["method"] == method and r["subset"] == "all"
        }
        means = [
            float(np.mean([per_task[t] for t in b if t in per_task]))
            for b in buckets
            if len(b)
        ]
        out["methods"][method] = means
    return out


def fig_quantile_buckets(rows: list[dict], path, n_buckets: int = 20) -> None:
    """Final vs initial MJE across equal-count initial-distance buckets."""
    data = quantile_buckets(rows, n_buckets)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    centers = data["centers"]
    lim = max(centers) * 1.05 if centers else 1.0
    ax.plot([0, lim], [0, lim], color="#aaaaaa", linestyle=":", label="no action (y=x)")
    for method, means in data["methods"].items():
        ax.plot(
            centers,
            means,
            marker="o",
            markersize=3,
            label=_METHOD_LABEL.get(method, method),
            **_METHOD_STYLE.get(method, {}),
        )
    ax.set_xlabel("initial all-joint MJE (m), 20 quantile buckets")
    ax.set_ylabel("final all-joint MJE (m)")
    ax.set_title("Performance vs initial distance")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def fig_cost_convergence(plans: list[dict], path, cummin: bool = True) -> None:
    """Mean best cost per CEM iteration per search method."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    key = "cost_history" if cummin else "raw_cost_history"
    by_method: dict[str, list[list[float]]] = {}
    for record in plans:
        if key in record:
            by_method.setdefault(record["method"], []).append(record[key])
    for method, histories in sorted(by_method.items()):
        arr = np.array(histories)
        ax.plot(
            np.arange(1, arr.shape[1] + 1),
            arr.mean(axis=0),
            marker="o",
            label=_METHOD_LABEL.get(method, method),
            **_METHOD_STYLE.get(method, {}),
        )
    ax.set_xlabel("CEM iteration")
    ax.set_ylabel("mean best cost" + (" (cumulative min)" if cummin else ""))
    ax.set_title("Cost convergence")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_report(run_dirs: list, out_dir) -> list[str]:
    """Render every applicable figure for the given run directories.

    Returns the list of files written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = [load_run(d) for d in run_dirs]
    written = []

    summary_path = out_dir / "summary.csv"
    write_summary_csv(runs, summary_path)
    written.append(str(summary_path))

    budgets = {(r["meta"]["config"]["iterations"], r["meta"]["config"]["samples"]) for r in runs}
    horizons = {r["meta"].get("horizon") for r in runs}
    if len(budgets) > 1:
        p = out_dir / "budget_sweep.svg"
        fig_budget_sweep(runs, p)
        written.append(str(p))
    if len(horizons) > 1:
        p = out_dir / "horizon_sweep.svg"
        fig_horizon_sweep(runs, p)
        written.append(str(p))
    for run in runs:
        name = Path(run["dir"]).name
        if any(r["method"] == "initial" for r in run["rows"]):
            p = out_dir / f"{name}_quantiles.svg"
            fig_quantile_buckets(run["rows"], p)
            written.append(str(p))
        if run["plans"] and any("cost_history" in rec for rec in run["plans"]):
            p = out_dir / f"{name}_cost_convergence.svg"
            fig_cost_convergence(run["plans"], p)
            written.append(str(p))
    return written
