"""Time stepping of rigid bodies under gravity, a proxy fluid and collision forces.

The fluid is not solved for.  Its effect on a body is replaced by buoyant
weight, Stokes-type translational and rotational drag, and a squeeze-film
lubrication resistance between surfaces that are close to each other.
Drag and lubrication are linear in the velocities and are integrated
implicitly; gravity, collision forces and swimmer thrust are explicit.

A step of length ``dt`` is split into equal substeps when a body would
otherwise move by more than a fraction of its gap to the nearest surface,
or when the collision stiffness would make the explicit update unstable.
Collision detection runs on every substep.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bodies import (
    ForceTorque,
    RigidBody,
    Sphere,
    Swimmer,
    body_holes,
    body_volume,
    boundary_points,
    component_spheres,
    effective_radius,
    moment,
    newton_euler_step,
    point_velocity,
    set_swimmer_lengths,
)
from .collision import (
    CollisionMap,
    CollisionParams,
    detect_general,
    detect_spherical,
    preprocess,
    total_forces,
)
from .mesh import Box, MeshGenerationError, SimplicialMesh, generate_domain_with_holes

__all__ = [
    "SimulationError",
    "FluidProperties",
    "StrokeSchedule",
    "ModelOptions",
    "ScenarioState",
    "StepRecord",
    "drag_coefficients",
    "proxy_hydrodynamics",
    "swimmer_thrust",
    "stroke_lengths",
    "diagnostics",
    "lubrication_contacts",
    "step",
    "run",
    "TRAJECTORY_COLUMNS",
    "trajectory_rows",
    "write_trajectory",
]

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """The simulation left its admissible state (escape, overlap, non-finite values)."""


@dataclass(frozen=True)
class FluidProperties:
    """Fluid density (g/cm^3), dynamic viscosity (g/(cm s)) and gravity (cm/s^2)."""

    density: float
    viscosity: float
    gravity: tuple[float, ...]

    def __post_init__(self):
        if not self.density > 0:
            raise ValueError(f"fluid density must be positive, got {self.density}")
        if not self.viscosity >= 0:
            raise ValueError(f"viscosity must be non-negative, got {self.viscosity}")
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))


@dataclass(frozen=True)
class StrokeSchedule:
    """Periodic four-phase stroke of a swimmer; each phase lasts a quarter period."""

    body_id: int
    amplitude: float
    period: float
    start: float = 0.0


@dataclass(frozen=True)
class ModelOptions:
    """Numerical knobs of the proxy model and the substep controller."""

    lubrication: bool = True
    lubrication_cutoff: float = 1.0  # in units of the reduced radius
    min_gap: float = 1e-8  # in units of the reduced radius
    motion_fraction: float = 0.5
    stiffness_limit: float = 0.5
    max_substeps: int = 500
    window_margin: float = 3.0  # extra mesh-window margin in units of h


def drag_coefficients(body: RigidBody, fluid: FluidProperties) -> tuple[float, float]:
    """Translational and rotational drag coefficients of the proxy model."""
    d = body.dim
    c_d = 4 * math.pi if d == 2 else 6 * math.pi
    c_r = 4 * math.pi if d == 2 else 8 * math.pi
    mu = fluid.viscosity
    if isinstance(body.shape, Swimmer):
        r = body.shape.radius
        off = body.shape.offsets()
        return 3 * c_d * mu * r, 3 * c_r * mu * r**3 + c_d * mu * r * float(np.sum(off**2))
    r = effective_radius(body)
    return c_d * mu * r, c_r * mu * r**3


def _buoyant_weight(body: RigidBody, fluid: FluidProperties, body_force: Sequence[float] | None) -> np.ndarray:
    g = np.asarray(fluid.gravity, dtype=float)
    if len(g) != body.dim:
        raise ValueError(f"gravity has {len(g)} components, body {body.id} lives in {body.dim}D")
    vol = body_volume(body)
    f = (body.density - fluid.density) * vol * g
    if body_force is not None:
        f = f + vol * np.asarray(body_force, dtype=float)
    return f


def proxy_hydrodynamics(body: RigidBody, fluid: FluidProperties) -> ForceTorque:
    """Buoyant weight plus linear drag, evaluated at the body's current velocities."""
    ct, cr = drag_coefficients(body, fluid)
    force = _buoyant_weight(body, fluid, None) - ct * body.velocity
    return ForceTorque(force, -cr * body.omega)


# --------------------------------------------------------------------------
# swimmer actuation


def _phase(schedule: StrokeSchedule, t: float) -> tuple[int, float]:
    quarter = schedule.period / 4
    tau = (t - schedule.start) % schedule.period
    k = min(int(tau // quarter), 3)
    return k, (tau - k * quarter) / quarter


def stroke_lengths(schedule: StrokeSchedule, rest: float, t: float) -> tuple[float, float]:
    """Rod lengths prescribed by the stroke at time ``t`` (linear ramps)."""
    if t <= schedule.start:
        return rest, rest
    k, s = _phase(schedule, t)
    a = schedule.amplitude
    if k == 0:
        return rest - a * s, rest
    if k == 1:
        return rest - a, rest - a * s
    if k == 2:
        return rest - a + a * s, rest - a
    return rest, rest - a + a * s


def _stroke_rates(schedule: StrokeSchedule, t: float) -> tuple[float, float]:
    if t < schedule.start:
        return 0.0, 0.0
    k, _ = _phase(schedule, t)
    rate = schedule.amplitude / (schedule.period / 4)
    return [(-rate, 0.0), (0.0, -rate), (rate, 0.0), (0.0, rate)][k]


def swimmer_thrust(shape: Swimmer, rates: tuple[float, float], viscosity: float) -> float:
    """Velocity of the middle sphere of a free three-sphere swimmer.

    The spheres interact through Oseen tensors (point-force approximation);
    the swimmer is force-free and the rod rates are prescribed.  Positive
    values point along the body x axis.
    """
    if viscosity <= 0:
        return 0.0
    a = shape.radius
    x = np.array([-shape.lengths[0], 0.0, shape.lengths[1]])
    mob = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            mob[i, j] = 1 / (6 * math.pi * viscosity * a) if i == j else 1 / (4 * math.pi * viscosity * abs(x[i] - x[j]))
    A = np.array([mob[1] - mob[0], mob[2] - mob[1], [1.0, 1.0, 1.0]])
    f = np.linalg.solve(A, np.array([rates[0], rates[1], 0.0]))
    return float(mob[1] @ f)


# --------------------------------------------------------------------------
# diagnostics


def diagnostics(body: RigidBody, fluid: FluidProperties) -> tuple[float, float, bool]:
    """Reynolds number, translational kinetic energy and a non-sphere flag.

    ``Re = 2 r rho_s |v| / mu`` and ``E_t = 0.5 pi r^2 rho_s |v|^2``; bodies
    that are not spheres use their effective radius and are flagged.
    """
    speed2 = float(body.velocity @ body.velocity)
    if isinstance(body.shape, Sphere):
        r, flagged = body.shape.radius, False
    else:
        r, flagged = effective_radius(body), True
    re = 2 * r * body.density * math.sqrt(speed2) / fluid.viscosity if fluid.viscosity > 0 else math.inf
    if speed2 == 0:
        re = 0.0
    e_t = 0.5 * math.pi * r * r * body.density * speed2
    return re, e_t, flagged


# --------------------------------------------------------------------------
# near-contact geometry (for lubrication and substep control)


@dataclass(frozen=True)
class Contact:
    """Closest approach between a body surface and another surface.

    ``normal`` points from the other surface towards body ``a``; levers are
    contact points relative to each body's centre of mass.  ``b == -1`` is
    a wall of the box.  ``comp_a``/``comp_b`` name the swimmer spheres
    involved (0 for single-piece bodies).
    """

    a: int
    b: int
    gap: float
    normal: np.ndarray
    lever_a: np.ndarray
    lever_b: np.ndarray | None
    rstar: float
    comp_a: int = 0
    comp_b: int = 0


def _is_round(body: RigidBody) -> bool:
    return isinstance(body.shape, (Sphere, Swimmer))


def _bounding_radius(body: RigidBody) -> float:
    shape = body.shape
    if isinstance(shape, Sphere):
        return shape.radius
    if isinstance(shape, Swimmer):
        return float(np.max(np.abs(shape.offsets()))) + shape.radius
    if hasattr(shape, "semi_axes"):
        return max(shape.semi_axes)
    return float(np.max(np.linalg.norm(np.asarray(shape.points), axis=1)))


def _surface_samples(body: RigidBody, h: float | None) -> np.ndarray:
    spacing = _bounding_radius(body) / 24
    if h is not None:
        spacing = min(spacing, 0.5 * h)
    pts, _ = boundary_points(body, spacing)
    return pts


def lubrication_contacts(
    bodies: Sequence[RigidBody],
    box: Box | None,
    cutoff: float | Callable[[float], float],
    h: float | None = None,
) -> tuple[list[Contact], dict[int, float]]:
    """Surface pairs closer than ``cutoff`` and each body's smallest gap.

    ``cutoff`` may depend on the reduced radius.  Spheres and swimmer
    components are handled analytically, other shapes through dense
    boundary samples.  Fixed bodies act as obstacles only.
    """
    cut = cutoff if callable(cutoff) else (lambda rs, c=cutoff: c)
    contacts: list[Contact] = []
    min_gap = {b.id: math.inf for b in bodies}
    # components: (body, centre, radius or None, samples or None)
    comps = []
    for b in bodies:
        if _is_round(b):
            for k, (c, r) in enumerate(component_spheres(b)):
                comps.append((b, c, r, None, k))
        else:
            comps.append((b, b.center, _bounding_radius(b), _surface_samples(b, h), 0))

    def note(c: Contact):
        for k in (c.a, c.b):
            if k in min_gap:
                min_gap[k] = min(min_gap[k], c.gap)
        if c.gap < cut(c.rstar):
            contacts.append(c)

    n = len(comps)
    rnd = [k for k in range(n) if comps[k][3] is None]
    if len(rnd) > 1:
        # sphere-sphere pairs, vectorized
        C = np.array([comps[k][1] for k in rnd])
        R = np.array([comps[k][2] for k in rnd])
        owner = np.array([comps[k][0].id for k in rnd])
        fixed = np.array([comps[k][0].fixed for k in rnd])
        P, Q = np.triu_indices(len(rnd), 1)
        keep = (owner[P] != owner[Q]) & ~(fixed[P] & fixed[Q])
        P, Q = P[keep], Q[keep]
        dvec = C[P] - C[Q]
        dist = np.linalg.norm(dvec, axis=1)
        gap = dist - R[P] - R[Q]
        rs = R[P] * R[Q] / (R[P] + R[Q])
        gmin = np.full(len(rnd), np.inf)
        np.minimum.at(gmin, P, gap)
        np.minimum.at(gmin, Q, gap)
        for k in np.nonzero(np.isfinite(gmin))[0]:
            bid = int(owner[k])
            min_gap[bid] = min(min_gap[bid], float(gmin[k]))
        near = np.nonzero(gap < np.broadcast_to(cut(rs), gap.shape))[0]
        for m in near:
            p, q = rnd[P[m]], rnd[Q[m]]
            ba, ca, ra, _, ka = comps[p]
            bb, cb, rb, _, kb = comps[q]
            if ba.fixed:
                ba, ca, ra, ka, bb, cb, rb, kb = bb, cb, rb, kb, ba, ca, ra, ka
            dv = ca - cb
            nrm = dv / dist[m] if dist[m] > 0 else np.eye(len(ca))[0]
            contacts.append(
                Contact(
                    ba.id, bb.id, float(gap[m]), nrm, ca - nrm * ra - ba.center, cb + nrm * rb - bb.center,
                    float(rs[m]), ka, kb,
                )
            )
    for p in range(n):
        for q in range(p + 1, n):
            ba, ca, ra, sa, ka = comps[p]
            bb, cb, rb, sb, kb = comps[q]
            if sa is None and sb is None:
                continue
            if ba.id == bb.id or (ba.fixed and bb.fixed):
                continue
            if ba.fixed:
                ba, ca, ra, sa, ka, bb, cb, rb, sb, kb = bb, cb, rb, sb, kb, ba, ca, ra, sa, ka
            dvec = ca - cb
            dist = float(np.linalg.norm(dvec))
            bound_gap = dist - ra - rb
            rs = effective_radius(ba) * effective_radius(bb) / (effective_radius(ba) + effective_radius(bb))
            if bound_gap > max(cut(rs), 0.0) and bound_gap > 0:
                for k in (ba.id, bb.id):
                    min_gap[k] = min(min_gap[k], bound_gap)
                continue
            pa = sa if sa is not None else _sphere_samples(ca, ra, h)
            pb = sb if sb is not None else _sphere_samples(cb, rb, h)
            from scipy.spatial import cKDTree

            dd, idx = cKDTree(pb).query(pa)
            k = int(np.argmin(dd))
            xa, xb = pa[k], pb[idx[k]]
            gap = float(dd[k])
            inside = _overlaps(ba, xb) or _overlaps(bb, xa)
            if inside:
                gap = -gap
            nrm = (xa - xb) / np.linalg.norm(xa - xb) if np.linalg.norm(xa - xb) > 0 else dvec / max(dist, 1e-300)
            if inside:
                nrm = -nrm
            note(Contact(ba.id, bb.id, gap, nrm, xa - ba.center, xb - bb.center, rs, ka, kb))
    if box is not None:
        for b, c, r, s, kc in comps:
            if b.fixed:
                continue
            for axis, value, marker in box.walls():
                sign = 1.0 if marker.endswith("lo") else -1.0
                nrm = np.zeros(len(c))
                nrm[axis] = sign
                if s is None:
                    gap = sign * (c[axis] - value) - r
                    lever = c - nrm * r - b.center
                    rs = r
                else:
                    dist = sign * (s[:, axis] - value)
                    k = int(np.argmin(dist))
                    gap = float(dist[k])
                    lever = s[k] - b.center
                    rs = effective_radius(b)
                note(Contact(b.id, -1, gap, nrm, lever, None, rs, kc))
    return contacts, min_gap


def _sphere_samples(c: np.ndarray, r: float, h: float | None) -> np.ndarray:
    from .mesh import circle_points, sphere_points

    spacing = r / 24 if h is None else min(r / 24, 0.5 * h)
    return circle_points(c, r, spacing) if len(c) == 2 else sphere_points(c, r, spacing)


def _overlaps(body: RigidBody, point: np.ndarray) -> bool:
    from .bodies import contains

    return bool(contains(body, point[None, :])[0])


def _lubrication_coefficient(dim: int, mu: float, gap: float, rstar: float, opts: ModelOptions) -> float:
    g = max(gap, opts.min_gap * rstar)
    gc = opts.lubrication_cutoff * rstar
    if g >= gc:
        return 0.0
    if dim == 2:
        c = 3 * math.pi * math.sqrt(2) * mu * rstar**1.5
        return c * (g**-1.5 - gc**-1.5)
    c = 6 * math.pi * mu * rstar**2
    return c * (1 / g - 1 / gc)


# --------------------------------------------------------------------------
# state


@dataclass
class StepRecord:
    """Per-body quantities accumulated over one step."""

    collision: dict[int, ForceTorque]
    pairs: dict[int, int]
    min_distance: dict[int, float]
    substeps: int


@dataclass
class ScenarioState:
    """Everything needed to advance a scenario by one step."""

    bodies: list[RigidBody]
    domain: Box | SimplicialMesh
    fluid: FluidProperties
    collision: CollisionParams
    mode: str
    dt: float
    t: float = 0.0
    step: int = 0
    h: float | None = None
    strokes: tuple[StrokeSchedule, ...] = ()
    body_force: tuple[float, ...] | None = None
    options: ModelOptions = field(default_factory=ModelOptions)
    workers: int = 1
    seed: int = 0
    overlap_events: list[tuple[int, int, int, float]] = field(default_factory=list)
    min_gap: float = math.inf
    last_record: StepRecord | None = None
    last_map: CollisionMap | None = None
    mesh_failures: int = 0

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def box(self) -> Box | None:
        return self.domain if isinstance(self.domain, Box) else None


# --------------------------------------------------------------------------
# detection within a step


def _window_mesh(state: ScenarioState, bodies: Sequence[RigidBody]) -> SimplicialMesh:
    box = state.box
    h = state.h
    holes = [hole for b in bodies for hole in body_holes(b, h)]
    pts = np.concatenate([hole.surface for hole in holes])
    margin = state.collision.d_max_factor * state.collision.rho + state.options.window_margin * h
    lo = np.maximum(pts.min(axis=0) - margin, box.lo)
    hi = np.minimum(pts.max(axis=0) + margin, box.hi)
    names = {}
    for axis, value, marker in box.walls():
        edge = lo[axis] if marker.endswith("lo") else hi[axis]
        if edge != value:
            names[marker] = "window"
    return generate_domain_with_holes(lo, hi, h, holes, seed=state.seed, wall_names=names)


def _detect(state: ScenarioState, bodies: list[RigidBody]) -> tuple[CollisionMap, object]:
    rho = state.collision.rho
    if state.mode == "spherical":
        pre = preprocess(bodies, state.domain, "spherical")
        return detect_spherical(pre, rho), pre
    if isinstance(state.domain, SimplicialMesh):
        mesh = state.domain
    else:
        try:
            mesh = _window_mesh(state, bodies)
        except MeshGenerationError as exc:
            raise SimulationError(f"step {state.step}: could not mesh the fluid around the bodies: {exc}") from exc
    pre = preprocess(bodies, mesh, "general")
    cmap = detect_general(pre, mesh, bodies, rho, d_max_factor=state.collision.d_max_factor, workers=state.workers)
    return cmap, pre


# --------------------------------------------------------------------------
# stepping


def _pair_stiffness(cmap: CollisionMap, params: CollisionParams, masses: dict[int, float], fixed: set[int]):
    """Largest ``sqrt(k/m)`` over stored pairs (rate of the stiffest contact)."""
    rate = 0.0
    rho = cmap.rho
    for p in cmap:
        uses_wall = p.is_wall or p.j in fixed or p.i in fixed
        eps = params.eps_f if uses_wall else params.eps
        sep = float(np.linalg.norm(p.x_i - p.x_other))
        gap = rho - max(p.distance, 0.0)
        k = (2 * sep * gap + gap * gap) / eps
        m = masses[p.i] if (p.is_wall or p.j in fixed) else min(masses[p.i], masses[p.j])
        rate = max(rate, math.sqrt(k / m))
    return rate


def _substeps(
    state: ScenarioState,
    bodies: Sequence[RigidBody],
    cmap: CollisionMap,
    gaps: dict[int, float],
    contacts: Sequence[Contact],
    t: float,
) -> int:
    """Number of substeps the current state asks for (motion and stiffness limits).

    The gap between surfaces listed in ``contacts`` may change by at most
    ``motion_fraction`` of itself per substep, judged by their relative
    normal speed.  Every
    other surface is at least the lubrication cutoff away, which bounds the
    free flight of each body.
    """
    opts = state.options
    f = opts.motion_fraction
    n = 1
    cut = _lub_cutoff(state)
    radii = [r for b in bodies for _, r in (component_spheres(b) if _is_round(b) else [(None, effective_radius(b))])]
    free_room = cut(0.5 * min(radii)) if radii else math.inf
    stroke_speed = {s.body_id: s.amplitude / (s.period / 4) for s in state.strokes}
    for b in bodies:
        if b.fixed:
            continue
        speed = float(np.linalg.norm(b.velocity)) + float(np.linalg.norm(b.omega)) * _bounding_radius(b)
        # end spheres of a swimmer also move relative to the body
        speed += stroke_speed.get(b.id, 0.0)
        room = f * max(gaps.get(b.id, math.inf), free_room)
        if speed > 0 and math.isfinite(room):
            n = max(n, math.ceil(speed * state.dt / room))
    byid = {b.id: b for b in bodies}
    slip = _stroke_slip(state, bodies, t)
    for c in contacts:
        ba = byid[c.a]
        va = point_velocity(ba, c.lever_a)
        if c.a in slip:
            va = va + slip[c.a][c.comp_a]
        vb = np.zeros_like(va)
        if c.b >= 0:
            bb = byid[c.b]
            vb = point_velocity(bb, c.lever_b)
            if c.b in slip:
                vb = vb + slip[c.b][c.comp_b]
        # closing or opening: lubrication changes steeply with the gap either way
        rate = abs(float(c.normal @ (va - vb)))
        if rate > 0:
            room = f * max(c.gap, opts.min_gap * c.rstar)
            n = max(n, math.ceil(rate * state.dt / room))
    fixed = {b.id for b in bodies if b.fixed}
    masses = {b.id: b.mass for b in bodies}
    rate = _pair_stiffness(cmap, state.collision, masses, fixed)
    if rate > 0:
        n = max(n, math.ceil(rate * state.dt / opts.stiffness_limit))
    if n > opts.max_substeps:
        log.info("step %d: %d substeps requested, capped at %d", state.step, n, opts.max_substeps)
        n = opts.max_substeps
    return n


def _generalized(body: RigidBody) -> int:
    return body.dim + (1 if body.dim == 2 else 3)


def _implicit_velocities(
    state: ScenarioState,
    bodies: list[RigidBody],
    explicit: dict[int, ForceTorque],
    contacts: list[Contact],
    dt: float,
    slip: dict[int, np.ndarray] | None = None,
) -> dict[int, ForceTorque]:
    """Drag and lubrication forces evaluated at the end-of-substep velocities.

    Solves ``(M/dt + C) V_new = M V/dt + F - L`` for the generalized
    velocities of all free bodies and returns ``-C V_new - L`` per body.
    ``L`` is the lubrication response to prescribed surface motion
    (``slip[body][component]``, e.g. the end spheres of a stroking swimmer).
    """
    slip = slip or {}
    free = [b for b in bodies if not b.fixed]
    if not free:
        return {}
    k = _generalized(free[0])
    d = free[0].dim
    index = {b.id: i for i, b in enumerate(free)}
    N = len(free) * k
    A = np.zeros((N, N))
    C = np.zeros((N, N))
    rhs = np.zeros(N)
    L = np.zeros(N)
    for b in free:
        s = index[b.id] * k
        ct, cr = drag_coefficients(b, state.fluid)
        if d == 2:
            M = np.diag([b.mass, b.mass, b.inertia[0, 0]])
        else:
            R = b.rotation
            M = np.zeros((6, 6))
            M[:3, :3] = b.mass * np.eye(3)
            M[3:, 3:] = R @ b.inertia @ R.T
        V = np.concatenate([b.velocity, b.omega])
        A[s : s + k, s : s + k] += M / dt
        C[s : s + k, s : s + k] += np.diag([ct] * d + [cr] * (k - d))
        F = explicit[b.id]
        rhs[s : s + k] += M @ V / dt + np.concatenate([F.force, F.torque])
    if state.options.lubrication and state.fluid.viscosity > 0:
        mu = state.fluid.viscosity
        for c in contacts:
            coef = _lubrication_coefficient(d, mu, c.gap, c.rstar, state.options)
            if coef == 0.0:
                continue
            # generalized direction, restricted to the (at most two) bodies involved
            rows, vals = [], []
            if c.a in index:
                s = index[c.a] * k
                rows.append(np.arange(s, s + k))
                vals.append(np.concatenate([c.normal, moment(c.lever_a, c.normal)]))
            if c.b in index:
                s = index[c.b] * k
                rows.append(np.arange(s, s + k))
                vals.append(-np.concatenate([c.normal, moment(c.lever_b, c.normal)]))
            if not rows:
                continue
            rows = np.concatenate(rows)
            g = np.concatenate(vals)
            C[np.ix_(rows, rows)] += coef * np.outer(g, g)
            # normal approach speed of the surfaces from prescribed motion
            u = 0.0
            if c.a in slip:
                u += float(c.normal @ slip[c.a][c.comp_a])
            if c.b in slip:
                u -= float(c.normal @ slip[c.b][c.comp_b])
            if u != 0.0:
                L[rows] += coef * u * g
    A += C
    V_new = np.linalg.solve(A, rhs - L)
    F_imp = -(C @ V_new) - L
    return {
        b.id: ForceTorque(F_imp[index[b.id] * k : index[b.id] * k + d], F_imp[index[b.id] * k + d : (index[b.id] + 1) * k])
        for b in free
    }


def _collision_forces(state: ScenarioState, cmap: CollisionMap, pre, bodies: list[RigidBody]) -> dict[int, ForceTorque]:
    params = state.collision
    fixed = {b.id for b in bodies if b.fixed}
    if fixed:
        # obstacles are part of the domain boundary: their pairs use the wall stiffness
        wall_like = [p for p in cmap if not p.is_wall and (p.i in fixed or p.j in fixed)]
        if wall_like:
            keys = {p.key for p in wall_like}
            rest = CollisionMap([p for p in cmap if p.key not in keys], cmap.rho)
            obst = CollisionMap(wall_like, cmap.rho)
            f1 = total_forces(rest, pre, bodies, params)
            f2 = total_forces(obst, pre, bodies, replace(params, eps=params.eps_f))
            return {i: f1[i] + f2[i] for i in f1}
    return total_forces(cmap, pre, bodies, params)


def _substep(
    state: ScenarioState,
    bodies: list[RigidBody],
    cmap: CollisionMap,
    pre,
    contacts: list[Contact],
    t: float,
    dt: float,
) -> tuple[list[RigidBody], dict[int, ForceTorque], dict[str, dict[int, ForceTorque]]]:
    coll = _collision_forces(state, cmap, pre, bodies)
    d = state.dim
    ds = 1 if d == 2 else 3
    explicit: dict[int, ForceTorque] = {}
    gravity: dict[int, ForceTorque] = {}
    actuation: dict[int, ForceTorque] = {}
    strokes = {s.body_id: s for s in state.strokes}
    for b in bodies:
        gravity[b.id] = ForceTorque(_buoyant_weight(b, state.fluid, state.body_force), np.zeros(ds))
        act = ForceTorque.zero(d)
        if b.id in strokes and isinstance(b.shape, Swimmer):
            rates = _stroke_rates(strokes[b.id], t)
            v = swimmer_thrust(b.shape, rates, state.fluid.viscosity)
            ct, _ = drag_coefficients(b, state.fluid)
            axis = b.rotation @ np.eye(d)[0]
            act = ForceTorque(ct * v * axis, np.zeros(ds))
        actuation[b.id] = act
        explicit[b.id] = coll[b.id] + gravity[b.id] + act
    implicit = _implicit_velocities(state, bodies, explicit, contacts, dt, _stroke_slip(state, bodies, t))
    out = []
    for b in bodies:
        if b.fixed:
            out.append(b)
            continue
        total = explicit[b.id] + implicit[b.id]
        nb = newton_euler_step(b, total, dt)
        if b.id in strokes and isinstance(b.shape, Swimmer):
            nb = set_swimmer_lengths(nb, stroke_lengths(strokes[b.id], b.shape.rest_length, t + dt))
        out.append(nb)
    parts = {"collision": coll, "gravity": gravity, "hydro": implicit, "actuation": actuation}
    return out, coll, parts


def _stroke_slip(state: ScenarioState, bodies: Sequence[RigidBody], t: float) -> dict[int, np.ndarray]:
    """Velocity of each swimmer sphere relative to rigid motion (middle sphere held)."""
    out = {}
    strokes = {s.body_id: s for s in state.strokes}
    for b in bodies:
        if b.id in strokes and isinstance(b.shape, Swimmer):
            r1, r2 = _stroke_rates(strokes[b.id], t)
            axis = b.rotation @ np.eye(b.dim)[0]
            out[b.id] = np.array([-r1 * axis, 0.0 * axis, r2 * axis])
    return out


def _check(state: ScenarioState, bodies: Sequence[RigidBody], step_index: int) -> None:
    lo = np.asarray(state.domain.bounding_box()[0] if isinstance(state.domain, SimplicialMesh) else state.domain.lo)
    hi = np.asarray(state.domain.bounding_box()[1] if isinstance(state.domain, SimplicialMesh) else state.domain.hi)
    for b in bodies:
        vals = np.concatenate([b.center, b.velocity, b.omega, b.theta])
        if not np.all(np.isfinite(vals)):
            raise SimulationError(f"body {b.id} has non-finite state at step {step_index}")
        if np.any(b.center < lo) or np.any(b.center > hi):
            raise SimulationError(
                f"body {b.id} escaped the domain at step {step_index} (centre {b.center.tolist()}); "
                "the collision parameters are probably too weak for this time step"
            )


def _lub_cutoff(state: ScenarioState):
    factor = state.options.lubrication_cutoff
    return lambda rs: factor * rs


def _crossed(before: dict[int, float], after: dict[int, float]) -> bool:
    """True if a body that was clear of everything now penetrates something."""
    return any(g >= 0 and after.get(i, math.inf) < 0 for i, g in before.items())


def step(state: ScenarioState, on_substep: Callable | None = None) -> ScenarioState:
    """Advance the scenario by ``state.dt``; returns a new state.

    The step is split into substeps whose length follows the current gaps
    and contact stiffness.  A substep that would carry a body from a
    positive gap into penetration is retried with half the length, down to
    ``dt / max_substeps``.
    """
    bodies = list(state.bodies)
    opts = state.options
    cmap, pre = _detect(state, bodies)
    contacts, gaps = lubrication_contacts(bodies, state.box, _lub_cutoff(state), state.h)
    d = state.dim
    acc = {b.id: ForceTorque.zero(d) for b in bodies}
    pairs = {b.id: 0 for b in bodies}
    mind = {b.id: math.inf for b in bodies}
    min_gap = state.min_gap
    events = list(state.overlap_events)
    h_min = state.dt / opts.max_substeps
    remaining = state.dt
    t_sub = state.t
    n = 0
    while remaining > 1e-9 * state.dt:
        for g in gaps.values():
            min_gap = min(min_gap, g)
        count: dict[int, int] = {}
        for p in cmap:
            for i in (p.i, p.j):
                if i in pairs:
                    count[i] = count.get(i, 0) + 1
                    mind[i] = min(mind[i], p.distance)
            if p.distance < 0:
                events.append((state.step, p.i, p.j, p.distance))
        for i, c in count.items():
            pairs[i] = max(pairs[i], c)
        for bid, g in gaps.items():
            if g < 0:
                events.append((state.step, bid, -2, g))
        h = min(remaining, state.dt / _substeps(state, bodies, cmap, gaps, contacts, t_sub))
        if remaining - h < 1e-9 * state.dt:
            h = remaining
        while True:
            new_bodies, coll, parts = _substep(state, bodies, cmap, pre, contacts, t_sub, h)
            new_contacts, new_gaps = lubrication_contacts(new_bodies, state.box, _lub_cutoff(state), state.h)
            if h <= h_min * (1 + 1e-9) or not _crossed(gaps, new_gaps):
                break
            h = max(0.5 * h, h_min)
        if on_substep is not None:
            on_substep(bodies, new_bodies, parts, h)
        for b in bodies:
            acc[b.id] = acc[b.id] + ForceTorque(coll[b.id].force * (h / state.dt), coll[b.id].torque * (h / state.dt))
        bodies = new_bodies
        _check(state, bodies, state.step)
        remaining -= h
        t_sub += h
        n += 1
        if remaining > 1e-9 * state.dt:
            cmap, pre = _detect(state, bodies)
            contacts, gaps = new_contacts, new_gaps
    for g in new_gaps.values():
        min_gap = min(min_gap, g)
    return replace(
        state,
        bodies=bodies,
        step=state.step + 1,
        t=(state.step + 1) * state.dt,
        overlap_events=events,
        min_gap=min_gap,
        last_record=StepRecord(acc, pairs, mind, n),
        last_map=cmap,
    )


def run(
    state: ScenarioState,
    t_end: float,
    on_step: Callable[[ScenarioState], None] | None = None,
) -> ScenarioState:
    """Step until ``t_end`` (inclusive of the last full step)."""
    n_steps = int(round(t_end / state.dt))
    while state.step < n_steps:
        state = step(state)
        if on_step is not None:
            on_step(state)
    return state


# --------------------------------------------------------------------------
# trajectory output

TRAJECTORY_COLUMNS = (
    "step", "t", "id",
    "x", "y", "z",
    "u", "v", "w",
    "omega_x", "omega_y", "omega_z",
    "theta_x", "theta_y", "theta_z",
    "fc_x", "fc_y", "fc_z",
    "tc_x", "tc_y", "tc_z",
    "pairs", "min_distance", "re", "e_t", "substeps",
)  # fmt: skip


def _pad3(v: np.ndarray) -> list[float]:
    out = [0.0, 0.0, 0.0]
    out[: len(v)] = [float(x) for x in v]
    return out


def _rot3(v: np.ndarray) -> list[float]:
    # the 2D angle and angular velocity are out-of-plane (z) components
    if len(v) == 1:
        return [0.0, 0.0, float(v[0])]
    return [float(x) for x in v]


def trajectory_rows(state: ScenarioState) -> list[list]:
    rec = state.last_record
    rows = []
    for b in state.bodies:
        if rec is not None:
            fc, n_pairs, md, nsub = rec.collision[b.id], rec.pairs[b.id], rec.min_distance[b.id], rec.substeps
        else:
            fc, n_pairs, md, nsub = ForceTorque.zero(b.dim), 0, math.inf, 0
        re, e_t, _ = diagnostics(b, state.fluid)
        rows.append(
            [state.step, state.t, b.id]
            + _pad3(b.center) + _pad3(b.velocity) + _rot3(b.omega) + _rot3(b.theta)
            + _pad3(fc.force) + _rot3(fc.torque)
            + [n_pairs, md, re, e_t, nsub]
        )  # fmt: skip
    return rows


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_trajectory(rows: Sequence[Sequence], stream: io.TextIOBase, header: bool = True) -> None:
    if header:
        stream.write(",".join(TRAJECTORY_COLUMNS) + "\n")
    for r in rows:
        stream.write(",".join(_fmt(v) for v in r) + "\n")
