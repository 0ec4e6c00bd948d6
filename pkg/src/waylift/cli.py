"""Command-line entry point: task generation, benchmark runs, reports, server.

Subcommands:
    bench generate-tasks   sample a seeded task suite to a JSON-lines file
    bench run              run planning methods over a task file
    bench report           render figures + summary CSV from run directories
    bench serve            start the interactive control server
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .camera import Camera
from .kinematics import default_model
from .policy import DEPTH_MODES, PolicyConfig
from .world import Scene, corridor, random_room


def _scenes_from_args(args) -> list:
    if getattr(args, "scenes", None):
        paths = sorted(Path(args.scenes).glob("*.json"))
        if not paths:
            raise SystemExit(f"no scene JSON files in {args.scenes}")
        return [Scene.from_json(p.read_text()) for p in paths]
    return [random_room(seed=s) for s in range(args.n_scenes)]


def _cmd_generate_tasks(args) -> int:
    from .bench.tasks import generate_tasks, save_tasks

    m = default_model()
    cam = Camera()
    scenes = _scenes_from_args(args)
    rng = np.random.default_rng(args.seed)
    tasks = generate_tasks(scenes, m, cam, rng, count=args.count, horizon=args.horizon)
    save_tasks(tasks, args.out)
    print(f"wrote {len(tasks)} tasks to {args.out}")
    return 0


def _cmd_run(args) -> int:
    from .bench.runner import BenchConfig, run_benchmark
    from .bench.tasks import load_tasks

    tasks = load_tasks(args.tasks)
    methods = tuple(args.methods.split(","))
    policy = PolicyConfig(
        goal_noise_scale=args.goal_noise,
        ik_iterations=args.ik_iters,
        depth_mode=args.depth_mode,
    )
    space_only = {"ll": ("initial", "ll"), "hl2d": ("initial", "hl2d"), "hl3d": ("initial", "hl3d")}
    if args.space is not None:
        methods = space_only[args.space]
    cfg = BenchConfig(
        iterations=args.iters,
        samples=args.samples,
        elites=args.elites,
        sigma_wm=args.sigma_wm,
        seed=args.seed,
        methods=methods,
        use_cummin=not args.no_cummin,
        workers=args.workers,
        timing=not args.no_timing,
        resample_count=args.resample,
        policy=policy,
    )
    result = run_benchmark(tasks, cfg, outdir=args.out)
    for method, entry in result["summary"]["methods"].items():
        line = f"{method:8s}"
        for subset in ("leaf", "intermediate", "all"):
            if subset in entry:
                line += f"  {subset} {entry[subset]['mean']:.3f}"
        print(line)
    if result["failures"]:
        print(f"{len(result['failures'])} task failures recorded", file=sys.stderr)
    print(f"wrote results to {args.out}")
    return 0


def _cmd_report(args) -> int:
    from .bench.reports import render_report

    written = render_report(args.run, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server.app import create_app

    scenes = None
    if args.scenes:
        scenes = {
            s.scene_id: s
            for s in (Scene.from_json(p.read_text()) for p in sorted(Path(args.scenes).glob("*.json")))
        }
    app = create_app(scenes=scenes)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_make_scene(args) -> int:
    scene = corridor(seed=args.seed) if args.kind == "corridor" else random_room(seed=args.seed)
    Path(args.out).write_text(scene.to_json())
    print(f"wrote {scene.scene_id} to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-tasks", help="sample a seeded task suite")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=128)
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", help="directory of scene JSON files")
    p.add_argument("--n-scenes", type=int, default=8, help="generated scenes when --scenes absent")
    p.set_defaults(func=_cmd_generate_tasks)

    p = sub.add_parser("run", help="run planning methods over a task file")
    p.add_argument("--tasks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--methods", default="initial,uncond,ll,hl2d,hl3d")
    p.add_argument("--space", choices=["ll", "hl2d", "hl3d"], default=None,
                   help="shortcut: run only this search space (plus the initial baseline)")
    p.add_argument("--iters", type=int, default=6)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--elites", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-wm", type=float, default=0.005)
    p.add_argument("--resample", type=int, default=64)
    p.add_argument("--no-cummin", action="store_true")
    p.add_argument("--goal-noise", type=float, default=PolicyConfig().goal_noise_scale)
    p.add_argument("--ik-iters", type=int, default=PolicyConfig().ik_iterations)
    p.add_argument("--depth-mode", choices=list(DEPTH_MODES), default="heuristic-2d")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timing", action="store_true",
                   help="write wall_ms as 0.0 so output files are byte-identical across runs")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="render figures and summary from run directories")
    p.add_argument("--run", action="append", required=True, help="run directory (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", help="start the interactive control server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--scenes", help="directory of scene JSON files")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("make-scene", help="write a generated scene JSON")
    p.add_argument("--kind", choices=["room", "corridor"], default="room")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_scene)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
