"""Scenario configuration files (YAML).

All quantities are in the cm-g-s system: lengths in cm, densities in
g/cm^3, viscosity in g/(cm s), accelerations in cm/s^2, times in s and
angles in radians.  See README for the field reference.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .bodies import BodyError, Ellipsoid, Polygon, RigidBody, Sphere, Swimmer, boundary_points, make_body
from .collision import CollisionParams
from .dynamics import FluidProperties, ModelOptions, ScenarioState, StrokeSchedule
from .mesh import Box, MeshError

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "load_config",
    "parse_config",
    "dump_config",
    "bundled_scenarios",
    "bundled_path",
]


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is a dotted path to the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _num(data: dict, key: str, where: str, *, default=None, positive=False, nonneg=False, required=True):
    if key not in data or data[key] is None:
        if default is not None or not required:
            return default
        raise ConfigError(f"{where}.{key}", "is required")
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}", f"must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{where}.{key}", "must be finite")
    if positive and v <= 0:
        raise ConfigError(f"{where}.{key}", f"must be positive, got {v}")
    if nonneg and v < 0:
        raise ConfigError(f"{where}.{key}", f"must be non-negative, got {v}")
    return v


def _vec(data: dict, key: str, where: str, dim: int, *, default=None):
    if key not in data or data[key] is None:
        if default is not None:
            return list(default)
        raise ConfigError(f"{where}.{key}", "is required")
    v = data[key]
    if isinstance(v, (int, float)) and not isinstance(v, bool) and dim == 1:
        v = [v]
    if not isinstance(v, list) or len(v) != dim:
        raise ConfigError(f"{where}.{key}", f"must be a list of {dim} numbers, got {v!r}")
    out = []
    for k, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(float(x)):
            raise ConfigError(f"{where}.{key}[{k}]", f"must be a finite number, got {x!r}")
        out.append(float(x))
    return out


def _section(data: dict, key: str, where: str = "", required: bool = True) -> dict:
    path = f"{where}.{key}" if where else key
    v = data.get(key)
    if v is None:
        if required:
            raise ConfigError(path, "section is required")
        return {}
    if not isinstance(v, dict):
        raise ConfigError(path, f"must be a mapping, got {type(v).__name__}")
    return v


def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"{where}.{extra[0]}" if where else extra[0], f"unknown field; allowed: {sorted(allowed)}")


_SHAPES = {"sphere", "ellipsoid", "polygon", "swimmer"}


def _parse_shape(data: Any, where: str, dim: int):
    if not isinstance(data, dict):
        raise ConfigError(where, "must be a mapping with a 'type' field")
    kind = data.get("type")
    if kind not in _SHAPES:
        raise ConfigError(f"{where}.type", f"must be one of {sorted(_SHAPES)}, got {kind!r}")
    if kind == "sphere":
        _check_keys(data, {"type", "radius"}, where)
        return Sphere(_num(data, "radius", where, positive=True))
    if kind == "ellipsoid":
        _check_keys(data, {"type", "semi_axes"}, where)
        axes = _vec(data, "semi_axes", where, dim)
        if min(axes) <= 0:
            raise ConfigError(f"{where}.semi_axes", "must be positive")
        return Ellipsoid(tuple(axes))
    if kind == "polygon":
        _check_keys(data, {"type", "points"}, where)
        if dim != 2:
            raise ConfigError(where, "polygons are 2D only")
        pts = data.get("points")
        if not isinstance(pts, list) or len(pts) < 3:
            raise ConfigError(f"{where}.points", "needs at least 3 points")
        return Polygon(tuple(tuple(_vec({"p": p}, "p", f"{where}.points[{k}]", 2)) for k, p in enumerate(pts)))
    _check_keys(data, {"type", "radius", "rod_length"}, where)
    r = _num(data, "radius", where, positive=True)
    rod = _num(data, "rod_length", where, positive=True)
    if rod <= 2 * r:
        raise ConfigError(f"{where}.rod_length", f"must exceed the sphere diameter {2 * r}")
    return Swimmer(r, rod)


_BODY_KEYS = {"id", "shape", "density", "center", "velocity", "theta", "omega", "fixed", "marker"}
_LATTICE_KEYS = {"lattice", "template", "first_id"}


@dataclass
class ScenarioConfig:
    """Validated scenario description; ``raw`` keeps the parsed mapping for round trips."""

    raw: dict
    name: str
    dim: int
    box: Box | None
    mesh_path: str | None
    h: float
    fluid: FluidProperties
    body_force: tuple[float, ...] | None
    bodies: list[dict]
    mode: str
    collision: CollisionParams
    dt: float
    t_end: float
    output_dir: str
    snapshot_every: int
    vtk_every: int
    workers: int
    seed: int
    strokes: tuple[StrokeSchedule, ...]
    options: ModelOptions
    base_dir: Path | None = None

    def build_bodies(self, seed: int | None = None) -> list[RigidBody]:
        seed = self.seed if seed is None else seed
        rng = np.random.default_rng(seed)
        out = []
        for spec in self.bodies:
            center = np.asarray(spec["center"], dtype=float)
            if spec.get("jitter"):
                center = center + rng.uniform(-spec["jitter"], spec["jitter"], len(center))
            try:
                out.append(
                    make_body(
                        spec["id"],
                        spec["shape"],
                        spec["density"],
                        center,
                        velocity=spec["velocity"],
                        omega=spec["omega"],
                        theta=spec["theta"],
                        marker=spec["marker"],
                        fixed=spec["fixed"],
                    )
                )
            except BodyError as exc:
                raise ConfigError(spec["where"], str(exc)) from None
        return out

    def build_state(self, *, workers: int | None = None, seed: int | None = None) -> ScenarioState:
        if self.mesh_path is not None:
            from .msh import load_mesh

            path = Path(self.mesh_path)
            if not path.is_absolute() and self.base_dir is not None:
                path = self.base_dir / path
            domain = load_mesh(path)
        else:
            domain = self.box
        bodies = self.build_bodies(seed)
        if self.mesh_path is not None:
            missing = [b.marker for b in bodies if b.marker not in domain.markers]
            if missing:
                raise ConfigError("bodies", f"markers {missing} are not in mesh {self.mesh_path}")
            if any(not b.fixed for b in bodies):
                raise ConfigError("bodies", "bodies on a loaded mesh must be fixed (the mesh cannot follow them)")
        else:
            lo, hi = np.asarray(self.box.lo), np.asarray(self.box.hi)
            for b in bodies:
                if not b.fixed and (np.any(b.center <= lo) or np.any(b.center >= hi)):
                    raise ConfigError("bodies", f"body {b.id} starts outside the domain")
                pts, _ = boundary_points(b)
                if not b.fixed and (np.any(pts <= lo) or np.any(pts >= hi)):
                    raise ConfigError("bodies", f"body {b.id} starts crossing a wall of the domain")
        return ScenarioState(
            bodies=bodies,
            domain=domain,
            fluid=self.fluid,
            collision=self.collision,
            mode=self.mode,
            dt=self.dt,
            h=self.h,
            strokes=self.strokes,
            body_force=self.body_force,
            options=self.options,
            workers=self.workers if workers is None else workers,
            seed=self.seed if seed is None else seed,
        )


def _parse_bodies(data: dict, dim: int) -> list[dict]:
    items = data.get("bodies")
    if not isinstance(items, list) or not items:
        raise ConfigError("bodies", "must be a non-empty list")
    out: list[dict] = []
    for k, item in enumerate(items):
        where = f"bodies[{k}]"
        if not isinstance(item, dict):
            raise ConfigError(where, "must be a mapping")
        if "lattice" in item:
            _check_keys(item, _LATTICE_KEYS, where)
            out.extend(_expand_lattice(item, where, dim, len(out)))
            continue
        _check_keys(item, _BODY_KEYS, where)
        out.append(_parse_body(item, where, dim, len(out)))
    ids = [b["id"] for b in out]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ConfigError("bodies", f"duplicate body ids {dup}")
    markers = [b["marker"] for b in out]
    if len(set(markers)) != len(markers):
        raise ConfigError("bodies", "body markers must be unique")
    return out


def _parse_body(item: dict, where: str, dim: int, default_id: int, jitter: float = 0.0) -> dict:
    ds = 1 if dim == 2 else 3
    bid = item.get("id", default_id)
    if isinstance(bid, bool) or not isinstance(bid, int) or bid < 0:
        raise ConfigError(f"{where}.id", f"must be a non-negative integer, got {bid!r}")
    fixed = item.get("fixed", False)
    if not isinstance(fixed, bool):
        raise ConfigError(f"{where}.fixed", "must be true or false")
    marker = item.get("marker", f"body{bid}")
    if not isinstance(marker, str) or not marker or marker.startswith("wall_") or marker == "window":
        raise ConfigError(f"{where}.marker", f"invalid marker {marker!r}")
    return {
        "where": where,
        "id": bid,
        "shape": _parse_shape(item.get("shape"), f"{where}.shape", dim),
        "density": _num(item, "density", where, positive=True),
        "center": _vec(item, "center", where, dim),
        "velocity": _vec(item, "velocity", where, dim, default=[0.0] * dim),
        "theta": _vec(item, "theta", where, ds, default=[0.0] * ds),
        "omega": _vec(item, "omega", where, ds, default=[0.0] * ds),
        "fixed": fixed,
        "marker": marker,
        "jitter": jitter,
    }


def _expand_lattice(item: dict, where: str, dim: int, start: int) -> list[dict]:
    lat = _section(item, "lattice", where)
    _check_keys(lat, {"origin", "spacing", "counts", "jitter"}, f"{where}.lattice")
    origin = _vec(lat, "origin", f"{where}.lattice", dim)
    spacing = _vec(lat, "spacing", f"{where}.lattice", dim)
    counts = lat.get("counts")
    if not isinstance(counts, list) or len(counts) != dim or not all(isinstance(c, int) and c > 0 for c in counts):
        raise ConfigError(f"{where}.lattice.counts", f"must be {dim} positive integers")
    jitter = _num(lat, "jitter", f"{where}.lattice", default=0.0, nonneg=True, required=False)
    template = _section(item, "template", where)
    _check_keys(template, _BODY_KEYS - {"id", "center", "marker"}, f"{where}.template")
    first = item.get("first_id", start)
    out = []
    for n, idx in enumerate(np.ndindex(*counts[::-1])):
        idx = idx[::-1]
        spec = dict(template)
        spec["id"] = first + n
        spec["center"] = [origin[a] + spacing[a] * idx[a] for a in range(dim)]
        out.append(_parse_body(spec, f"{where}.template", dim, first + n, jitter))
    return out


def parse_config(data: Any, base_dir: Path | None = None) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    raw = copy.deepcopy(data)
    _check_keys(
        data,
        {"name", "description", "domain", "fluid", "bodies", "collision", "time", "output", "workers", "seed", "strokes", "model"},
        "",
    )
    name = data.get("name", "scenario")
    if not isinstance(name, str):
        raise ConfigError("name", "must be a string")

    dom = _section(data, "domain")
    _check_keys(dom, {"box", "mesh", "h"}, "domain")
    h = _num(dom, "h", "domain", positive=True)
    box = None
    mesh_path = None
    if "box" in dom:
        b = _section(dom, "box", "domain")
        _check_keys(b, {"lo", "hi"}, "domain.box")
        lo = b.get("lo")
        dim = len(lo) if isinstance(lo, list) else 0
        if dim not in (2, 3):
            raise ConfigError("domain.box.lo", "must have 2 or 3 components")
        lo = _vec(b, "lo", "domain.box", dim)
        hi = _vec(b, "hi", "domain.box", dim)
        try:
            box = Box(tuple(lo), tuple(hi))
        except MeshError as exc:
            raise ConfigError("domain.box", str(exc)) from None
    elif "mesh" in dom:
        mesh_path = dom["mesh"]
        if not isinstance(mesh_path, str):
            raise ConfigError("domain.mesh", "must be a file path")
    else:
        raise ConfigError("domain", "needs either 'box' or 'mesh'")
    if mesh_path is not None:
        from .msh import MshError, load_mesh

        path = Path(mesh_path)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            dim = load_mesh(path).dim
        except (OSError, MshError, MeshError) as exc:
            raise ConfigError("domain.mesh", str(exc)) from None

    fl = _section(data, "fluid")
    _check_keys(fl, {"density", "viscosity", "gravity", "body_force"}, "fluid")
    fluid = FluidProperties(
        _num(fl, "density", "fluid", positive=True),
        _num(fl, "viscosity", "fluid", nonneg=True),
        tuple(_vec(fl, "gravity", "fluid", dim, default=[0.0] * dim)),
    )
    body_force = tuple(_vec(fl, "body_force", "fluid", dim)) if fl.get("body_force") is not None else None

    bodies = _parse_bodies(data, dim)

    col = _section(data, "collision")
    _check_keys(col, {"mode", "rho", "eps", "eps_f", "d_max_factor"}, "collision")
    mode = col.get("mode", "spherical")
    if mode not in ("spherical", "general"):
        raise ConfigError("collision.mode", f"must be 'spherical' or 'general', got {mode!r}")
    if mode == "spherical" and box is None:
        raise ConfigError("collision.mode", "spherical mode needs a box domain; use 'general'")
    if mode == "spherical":
        for b in bodies:
            if not isinstance(b["shape"], (Sphere, Swimmer)):
                raise ConfigError(f"{b['where']}.shape", "spherical mode handles spheres and swimmers only")
    defaults = CollisionParams.defaults(h)
    collision = CollisionParams(
        rho=_num(col, "rho", "collision", default=defaults.rho, positive=True),
        eps=_num(col, "eps", "collision", default=defaults.eps, positive=True),
        eps_f=_num(col, "eps_f", "collision", default=defaults.eps_f, positive=True),
        d_max_factor=_num(col, "d_max_factor", "collision", default=1.5, positive=True),
    )
    if collision.d_max_factor < 1.0:
        raise ConfigError("collision.d_max_factor", "must be at least 1 so the band covers the collision zone")

    tm = _section(data, "time")
    _check_keys(tm, {"dt", "t_end"}, "time")
    dt = _num(tm, "dt", "time", positive=True)
    t_end = _num(tm, "t_end", "time", positive=True)
    if t_end < dt:
        raise ConfigError("time.t_end", f"must be at least dt ({dt})")

    out = _section(data, "output", required=False)
    _check_keys(out, {"directory", "snapshot_every", "vtk_every"}, "output")
    output_dir = out.get("directory", f"output/{name}")
    snapshot_every = out.get("snapshot_every", 0)
    vtk_every = out.get("vtk_every", 0)
    for key, v in (("snapshot_every", snapshot_every), ("vtk_every", vtk_every)):
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ConfigError(f"output.{key}", "must be a non-negative integer")

    workers = data.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        raise ConfigError("workers", "must be a positive integer")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed", "must be an integer")

    strokes = []
    ids = {b["id"]: b for b in bodies}
    for k, s in enumerate(data.get("strokes") or []):
        where = f"strokes[{k}]"
        if not isinstance(s, dict):
            raise ConfigError(where, "must be a mapping")
        _check_keys(s, {"body", "amplitude", "period", "start"}, where)
        bid = s.get("body")
        if bid not in ids or not isinstance(ids[bid]["shape"], Swimmer):
            raise ConfigError(f"{where}.body", f"must be the id of a swimmer, got {bid!r}")
        amp = _num(s, "amplitude", where, positive=True)
        shape = ids[bid]["shape"]
        if amp >= shape.rest_length or shape.rest_length - amp <= 2 * shape.radius:
            raise ConfigError(f"{where}.amplitude", "rods would collapse: amplitude too large")
        period = _num(s, "period", where, positive=True)
        quarter = period / 4 / dt
        if abs(quarter - round(quarter)) > 1e-9 * max(1.0, quarter):
            raise ConfigError(f"{where}.period", "a quarter period must be a whole number of time steps")
        strokes.append(StrokeSchedule(bid, amp, period, _num(s, "start", where, default=0.0, nonneg=True, required=False)))

    mo = _section(data, "model", required=False)
    fields_ = {"lubrication", "lubrication_cutoff", "min_gap", "motion_fraction", "stiffness_limit", "max_substeps", "window_margin"}
    _check_keys(mo, fields_, "model")
    opts = ModelOptions()
    kw = {}
    for key in fields_ & set(mo):
        v = mo[key]
        if key == "lubrication":
            if not isinstance(v, bool):
                raise ConfigError("model.lubrication", "must be true or false")
            kw[key] = v
        elif key == "max_substeps":
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError("model.max_substeps", "must be a positive integer")
            kw[key] = v
        else:
            kw[key] = _num(mo, key, "model", positive=True)
    if kw:
        opts = ModelOptions(**{**opts.__dict__, **kw})

    return ScenarioConfig(
        raw=raw,
        name=name,
        dim=dim,
        box=box,
        mesh_path=mesh_path,
        h=h,
        fluid=fluid,
        body_force=body_force,
        bodies=bodies,
        mode=mode,
        collision=collision,
        dt=dt,
        t_end=t_end,
        output_dir=output_dir,
        snapshot_every=snapshot_every,
        vtk_every=vtk_every,
        workers=workers,
        seed=seed,
        strokes=tuple(strokes),
        options=opts,
        base_dir=base_dir,
    )


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"YAML syntax error: {exc}") from None
    return parse_config(data, base_dir=path.parent)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.raw, sort_keys=False)


def _scenario_dir():
    return resources.files("fmcollide") / "scenarios"


def bundled_scenarios() -> list[str]:
    return sorted(p.name[:-5] for p in _scenario_dir().iterdir() if p.name.endswith(".yaml"))


def bundled_path(name: str) -> Path:
    p = _scenario_dir() / f"{name}.yaml"
    if not p.is_file():
        raise ConfigError("<scenario>", f"no bundled scenario {name!r}; available: {bundled_scenarios()}")
    return Path(str(p))
