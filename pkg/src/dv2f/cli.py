"""Command line entry point: ``dv2f gen|run|plot|labels|bench``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from . import scenario
from .core import ModelParams, Scene
from .labels import export_labels
from .metrics import MetricsReport, evaluate, summaries_to_csv, summarize
from .plot import render_svg
from .simulator import Rollout, dumps_trajectory, read_trajectory, rollout, rollout_arrays

THREADS_ENV = "DV2F_THREADS"
BENCH_REGIMES = ((10, 0), (10, 25), (50, 0), (50, 25))


class CliError(Exception):
    pass


def atomic_write(path: Path, data: "str | bytes") -> None:
    """Write through a temporary file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_param(text: str) -> tuple[str, str]:
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    return name.strip().replace("-", "_"), value.strip()


def build_params(args: argparse.Namespace) -> ModelParams:
    changes: dict[str, float] = {}
    names = set(ModelParams.field_names())
    for name, value in getattr(args, "param", None) or []:
        if name not in names:
            raise CliError(f"unknown parameter {name!r}; known: {', '.join(sorted(names))}")
        try:
            changes[name] = int(value) if name == "horizon" else float(value)
        except ValueError as exc:
            raise CliError(f"parameter {name}: {exc}") from exc
    if getattr(args, "horizon", None) is not None:
        changes["horizon"] = args.horizon
    try:
        return ModelParams().with_overrides(**changes)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from exc


def worker_count(requested: int) -> int:
    if requested < 1:
        raise CliError("--parallel must be >= 1")
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError as exc:
            raise CliError(f"{THREADS_ENV} must be an integer, got {cap!r}") from exc
    return requested


def parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    """Ordered map; the compiled kernels release the GIL so threads run concurrently."""
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- gen -----------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> dict:
    p = build_params(args)
    spec = scenario.GenSpec(
        n_vehicles=args.vehicles,
        n_obstacles=args.obstacles,
        mode=args.mode,
        map_extent=args.extent,
        seed=args.seed,
    )
    try:
        scenes = scenario.generate_batch(spec, args.cases, p)
    except scenario.GenerationError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out) / scenario.batch_filename(args.vehicles, args.obstacles, args.mode, args.seed)
    atomic_write(out, scenario.save_batch(scenes))
    return {"scenes": str(out), "cases": len(scenes)}


# -- run -----------------------------------------------------------------------


def _load_batch(path: str) -> list[Scene]:
    try:
        return scenario.load_batch(Path(path).read_bytes())
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    except scenario.SceneFormatError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _run_one(scene: Scene, p: ModelParams) -> "tuple[Rollout | None, str | None]":
    try:
        return rollout(scene, p), None
    except ValueError as exc:
        return None, str(exc)


def cmd_run(args: argparse.Namespace) -> dict:
    base = build_params(args)
    scenes = _load_batch(args.batch)
    workers = worker_count(args.parallel)
    out = Path(args.out)
    r_values = args.r_c if args.r_c else [None]
    rows, failures, traj_files = [], [], []
    nv = scenes[0].n_vehicles if scenes else 0
    no = scenes[0].n_obstacles if scenes else 0
    for r_c in r_values:
        p = base if r_c is None else base.with_overrides(r_c=r_c)
        t0 = time.perf_counter()
        results = parallel_map(lambda s: _run_one(s, p), scenes, workers)
        wall = time.perf_counter() - t0
        reports: list[MetricsReport] = []
        tag = "" if r_c is None else f"_rc{r_c:g}"
        for idx, (r, err) in enumerate(results):
            if r is None:
                failures.append({"case": idx, "r_c": p.r_c, "error": err})
                continue
            reports.append(evaluate(r))
            if args.trajectories:
                path = out / f"traj{tag}_{idx:04d}.jsonl"
                atomic_write(path, dumps_trajectory(r))
                traj_files.append(str(path))
        rows.append(summarize(reports, nv, no, wall_time_s=wall, r_c=r_c))
    csv_path = out / "metrics.csv"
    atomic_write(csv_path, summaries_to_csv(rows))
    report = {
        "metrics_csv": str(csv_path),
        "cases": len(scenes),
        "rows": [r.row() for r in rows],
        "wall_time_s": sum(r.wall_time_s for r in rows),
        "failures": failures,
        "trajectories": len(traj_files),
    }
    atomic_write(out / "run_report.json", json.dumps(report, indent=2) + "\n")
    return report


# -- plot ----------------------------------------------------------------------


def cmd_plot(args: argparse.Namespace) -> dict:
    try:
        r = read_trajectory(args.trajectory)
    except OSError as exc:
        raise CliError(f"cannot read {args.trajectory}: {exc}") from exc
    except ValueError as exc:
        raise CliError(f"{args.trajectory}: {exc}") from exc
    if args.field_vehicle is not None and not 0 <= args.field_vehicle < r.n_vehicles:
        raise CliError(f"--field-vehicle must be in [0, {r.n_vehicles})")
    out = Path(args.out) if args.out else Path(args.trajectory).with_suffix(".svg")
    svg = render_svg(r, field_vehicle=args.field_vehicle, field_step=args.field_step, spacing=args.spacing)
    atomic_write(out, svg)
    return {"svg": str(out)}


# -- labels --------------------------------------------------------------------


def cmd_labels(args: argparse.Namespace) -> dict:
    p = build_params(args)
    scenes = _load_batch(args.batch)
    workers = worker_count(args.parallel)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suffix = ".jsonl.gz" if args.gzip else ".jsonl"

    def one(item: tuple[int, Scene]) -> dict:
        idx, scene = item
        r, err = _run_one(scene, p)
        if r is None:
            return {"case": idx, "error": err}
        path = out / f"labels_{idx:04d}{suffix}"
        fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{path.name}.", suffix=".tmp")
        os.close(fd)
        try:
            n = export_labels(r, tmp, scenario_id=f"{Path(args.batch).stem}/{idx}", compress=args.gzip)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
        return {"case": idx, "path": str(path), "records": n}

    results = parallel_map(one, list(enumerate(scenes)), workers)
    return {
        "files": [r for r in results if "path" in r],
        "failures": [r for r in results if "error" in r],
    }


# -- bench ---------------------------------------------------------------------


def cmd_bench(args: argparse.Namespace) -> dict:
    """Controller and stepping time per regime; generation and bookkeeping are excluded."""
    p = build_params(args)
    rows = []
    for nv, no in BENCH_REGIMES:
        spec = scenario.GenSpec(nv, no, args.mode, seed=args.seed)
        scenes = scenario.generate_batch(spec, args.cases, p)
        arrays = [(s.vehicle_array(), s.obstacle_array()) for s in scenes]
        if arrays:
            rollout_arrays(*arrays[0], p)  # compile outside the timed region
        compute = 0.0
        steps = 0
        for veh, obs in arrays:
            r = rollout_arrays(veh, obs, p)
            compute += r.compute_time_s
            steps += r.terminated_at
        rows.append(
            {
                "n_vehicles": nv,
                "n_obstacles": no,
                "cases": len(arrays),
                "compute_s": compute,
                "per_case_ms": 1e3 * compute / max(len(arrays), 1),
                "mean_steps": steps / max(len(arrays), 1),
            }
        )
    base = rows[0]["compute_s"]
    for row in rows:
        row["ratio_to_first"] = row["compute_s"] / base if base > 0 else float("nan")
    if args.out:
        atomic_write(Path(args.out), json.dumps(rows, indent=2) + "\n")
    return {"bench": rows}


# -- entry point ---------------------------------------------------------------


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--horizon", type=int, default=None, help="Maximum number of steps per rollout.")
    sp.add_argument(
        "--param", type=_parse_param, action="append", metavar="NAME=VALUE",
        help="Override any model parameter, e.g. --param v_d=3.0. Repeatable.",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dv2f", description="Multi-vehicle navigation with velocity vector fields.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="Generate a batch of random scenes.")
    g.add_argument("--vehicles", type=int, required=True)
    g.add_argument("--obstacles", type=int, default=0)
    g.add_argument("--mode", choices=scenario.MODES, default="collision")
    g.add_argument("--cases", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--extent", type=float, default=None, help="Map half-width in meters.")
    g.add_argument("--out", default=".", help="Output directory.")
    _add_common(g)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="Roll out every scene of a batch and write metrics.")
    r.add_argument("batch", help="Scene batch JSON file.")
    r.add_argument("--out", default="run_out", help="Output directory.")
    r.add_argument("--parallel", type=int, default=1)
    r.add_argument("--r-c", type=float, nargs="+", default=None, help="One or more r_c values (sweep).")
    r.add_argument("--no-trajectories", dest="trajectories", action="store_false")
    _add_common(r)
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plot", help="Render a trajectory file as SVG.")
    pl.add_argument("trajectory")
    pl.add_argument("--out", default=None)
    pl.add_argument("--field-vehicle", type=int, default=None, help="Draw the sampled field of this vehicle.")
    pl.add_argument("--field-step", type=int, default=0)
    pl.add_argument("--spacing", type=float, default=2.0, help="Field grid spacing in meters.")
    pl.set_defaults(func=cmd_plot)

    lb = sub.add_parser("labels", help="Export reference-control labels for a batch.")
    lb.add_argument("batch")
    lb.add_argument("--out", default="labels_out")
    lb.add_argument("--parallel", type=int, default=1)
    lb.add_argument("--gzip", action="store_true")
    _add_common(lb)
    lb.set_defaults(func=cmd_labels)

    b = sub.add_parser("bench", help="Time controller and stepping across regimes.")
    b.add_argument("--cases", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--mode", choices=scenario.MODES, default="collision")
    b.add_argument("--out", default=None, help="Optional JSON output file.")
    _add_common(b)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
    except (CliError, OSError, ValueError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    json.dump(result, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 1 if result.get("failures") else 0


if __name__ == "__main__":
    sys.exit(main())
