"""Command-line interface: ``fmcollide run|validate|bench``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import Sequence

from . import __version__
from .bench import (
    DETECTION_NOTES,
    NARROWBAND_DMAX,
    NARROWBAND_NOTES,
    detection_bench,
    format_table,
    narrowband_bench,
    to_csv,
)
from .bodies import BodyError, body_holes
from .collision import CollisionError
from .config import ConfigError, ScenarioConfig, bundled_path, bundled_scenarios, dump_config, load_config
from .dynamics import ScenarioState, SimulationError, step, trajectory_rows, write_trajectory
from .fmm import march_many
from .mesh import MeshError, SimplicialMesh, generate_annulus, generate_domain_with_holes

log = logging.getLogger("fmcollide")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

OUTPUT_ENV = "FMCOLLIDE_OUTPUT"


def _resolve_config(spec: str) -> Path:
    """A path, or the name of a bundled scenario."""
    p = Path(spec)
    if p.exists():
        return p
    if spec in bundled_scenarios():
        return bundled_path(spec)
    raise ConfigError("<file>", f"no such file {spec!r} (bundled scenarios: {', '.join(bundled_scenarios())})")


def _output_dir(cfg: ScenarioConfig, flag: str | None) -> Path:
    if flag:
        return Path(flag)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(cfg.output_dir)


# --------------------------------------------------------------------------
# run


def _snapshot_mesh(state: ScenarioState) -> SimplicialMesh:
    if isinstance(state.domain, SimplicialMesh):
        return state.domain
    box = state.box
    holes = [hole for b in state.bodies for hole in body_holes(b, state.h)]
    return generate_domain_with_holes(box.lo, box.hi, state.h, holes, seed=state.seed)


def _write_vtk(state: ScenarioState, path: Path) -> None:
    from .mesh import WALL_MARKERS
    from .vtk import write_vtk

    mesh = _snapshot_mesh(state)
    body_markers = [m for m in mesh.markers if m not in WALL_MARKERS and m != "window"]
    walls = tuple(m for m in mesh.markers if m in WALL_MARKERS)
    seeds: list = list(body_markers) + ([walls] if walls else [])
    d_max = state.collision.d_max_factor * state.collision.rho
    fields = march_many(mesh, seeds, d_max, workers=state.workers)
    data = {f"dist_{m}": f.values for m, f in zip(body_markers, fields)}
    if walls:
        data["dist_walls"] = fields[-1].values
    write_vtk(mesh, path, data, title=f"step {state.step} t={state.t!r}")


def run_scenario(
    cfg: ScenarioConfig,
    out: Path,
    *,
    workers: int | None = None,
    seed: int | None = None,
    vtk: bool = False,
    progress: bool = False,
) -> ScenarioState:
    """Run ``cfg`` to its end time, writing artifacts under ``out``.

    Artifacts: ``trajectory.csv`` (one row per body per step, step 0 is the
    initial state), ``collisions/step_NNNNNN.csv`` every ``snapshot_every``
    steps and at the end, ``vtk/step_NNNNNN.vtk`` with ``vtk=True``,
    ``config.yaml`` and ``summary.json``.
    """
    state = cfg.build_state(workers=workers, seed=seed)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    coll_dir = out / "collisions"
    coll_dir.mkdir(exist_ok=True)
    vtk_dir = out / "vtk"
    vtk_every = cfg.vtk_every or cfg.snapshot_every
    if vtk:
        vtk_dir.mkdir(exist_ok=True)
        _write_vtk(state, vtk_dir / "step_000000.vtk")
    n_steps = int(round(cfg.t_end / cfg.dt))
    t0 = time.perf_counter()
    failure = None
    with open(out / "trajectory.csv", "w", newline="") as traj:
        write_trajectory(trajectory_rows(state), traj, header=True)
        while state.step < n_steps:
            try:
                state = step(state)
            except SimulationError as exc:
                failure = exc
                break
            write_trajectory(trajectory_rows(state), traj, header=False)
            last = state.step == n_steps
            if state.last_map is not None and ((cfg.snapshot_every and state.step % cfg.snapshot_every == 0) or last):
                (coll_dir / f"step_{state.step:06d}.csv").write_text(state.last_map.to_csv())
            if vtk and ((vtk_every and state.step % vtk_every == 0) or last):
                _write_vtk(state, vtk_dir / f"step_{state.step:06d}.vtk")
            if progress and (state.step % max(1, n_steps // 20) == 0 or last):
                log.info("step %d/%d  t=%.6g  wall %.1fs", state.step, n_steps, state.t, time.perf_counter() - t0)
    summary = {
        "name": cfg.name,
        "steps": state.step,
        "t": state.t,
        "completed": failure is None,
        "error": None if failure is None else str(failure),
        "overlap_events": len(state.overlap_events),
        "min_gap": state.min_gap if math.isfinite(state.min_gap) else None,
        "bodies": len(state.bodies),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if failure is not None:
        raise failure
    return state


def _cmd_run(args) -> int:
    cfg = load_config(_resolve_config(args.config))
    out = _output_dir(cfg, args.output)
    t0 = time.perf_counter()
    try:
        state = run_scenario(cfg, out, workers=args.workers, seed=args.seed, vtk=args.vtk, progress=True)
    except (SimulationError, BodyError, CollisionError, MeshError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        print(f"partial output in {out}", file=sys.stderr)
        return EXIT_RUNTIME
    print(
        f"{cfg.name}: {state.step} steps to t={state.t:.6g} in {time.perf_counter() - t0:.1f}s; "
        f"overlap events: {len(state.overlap_events)}; output in {out}"
    )
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(_resolve_config(args.config))
    state = cfg.build_state()
    n_steps = int(round(cfg.t_end / cfg.dt))
    print(f"ok: {cfg.name} ({cfg.dim}D, {len(state.bodies)} bodies, {cfg.mode} detection, {n_steps} steps)")
    return EXIT_OK


# --------------------------------------------------------------------------
# bench


def _write_report(rows, name: str, title: str, notes, out: str | None) -> None:
    text = format_table(rows, title, notes)
    print(text, end="")
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{name}.csv").write_text(to_csv(rows))
        (d / f"{name}.txt").write_text(text)


def _cmd_bench_narrowband(args) -> int:
    try:
        if args.mesh:
            from .msh import load_mesh

            mesh = load_mesh(args.mesh)
            marker = args.seed_marker
        else:
            mesh = generate_annulus(args.r_inner, args.r_outer, args.h)
            marker = "inner"
    except (MeshError, OSError) as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = narrowband_bench(mesh, marker, args.dmax, args.repetitions)
    except (ValueError, MeshError) as exc:
        print(f"bench error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    title = f"narrow-band fast marching: {mesh.vertex_count} vertices, {mesh.element_count} elements"
    _write_report(rows, "narrowband", title, NARROWBAND_NOTES, _bench_output(args))
    return EXIT_OK


def _cmd_bench_detection(args) -> int:
    if any(c < 1 for c in args.counts) or any(w < 1 for w in args.worker_counts):
        print("bench error: body and worker counts must be positive", file=sys.stderr)
        return EXIT_CONFIG
    rows = detection_bench(
        args.counts, args.worker_counts, h=args.h, rho=args.rho, iterations=args.iterations, repetitions=args.repetitions
    )
    title = "collision pipeline on 2D disk lattices (general mode, static mesh)"
    _write_report(rows, "detection", title, DETECTION_NOTES, _bench_output(args))
    return EXIT_OK


def _bench_output(args) -> str | None:
    return args.output or os.environ.get(OUTPUT_ENV)


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fmcollide", description="Collision avoidance for rigid bodies in a fluid.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output (-vv for debug)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("config", help=f"YAML file or bundled scenario name ({', '.join(bundled_scenarios())})")
    r.add_argument("--workers", type=int, default=None, help="threads for distance-field computation")
    r.add_argument("--output", default=None, help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    r.add_argument("--vtk", action="store_true", help="also write legacy VTK distance fields")
    r.add_argument("--seed", type=int, default=None, help="seed for initial jitter and mesh generation")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)

    b = sub.add_parser("bench", help="benchmarks")
    bsub = b.add_subparsers(dest="bench", required=True)
    nb = bsub.add_parser("narrowband", help="narrow-band element ratios and speedups")
    nb.add_argument("--r-inner", type=float, default=0.1)
    nb.add_argument("--r-outer", type=float, default=2.0)
    nb.add_argument("--h", type=float, default=0.01)
    nb.add_argument("--mesh", default=None, help="use a Gmsh file instead of the generated annulus")
    nb.add_argument("--seed-marker", default="inner", help="boundary marker to march from (with --mesh)")
    nb.add_argument("--dmax", type=float, nargs="+", default=list(NARROWBAND_DMAX))
    nb.add_argument("--repetitions", type=int, default=5)
    nb.add_argument("--output", default=None)
    nb.set_defaults(func=_cmd_bench_narrowband)

    db = bsub.add_parser("detection", help="parallel collision pipeline on disk lattices")
    db.add_argument("--counts", type=int, nargs="+", default=[1, 25, 49, 81, 100])
    db.add_argument("--worker-counts", "--workers", type=int, nargs="+", default=[1, 2, 4], dest="worker_counts")
    db.add_argument("--h", type=float, default=0.1)
    db.add_argument("--rho", type=float, default=0.4)
    db.add_argument("--iterations", type=int, default=10)
    db.add_argument("--repetitions", type=int, default=5)
    db.add_argument("--output", default=None)
    db.set_defaults(func=_cmd_bench_detection)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else (logging.INFO if args.verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run" and args.verbose == 0:
        logging.getLogger("fmcollide").setLevel(logging.INFO)
        logging.getLogger("fmcollide.collision").setLevel(logging.ERROR)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
