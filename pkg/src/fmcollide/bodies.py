"""Rigid bodies: shapes, poses, inertia and Newton-Euler time stepping.

Orientation follows the Euler-angle parameterisation: one angle in 2D,
``(theta_x, theta_y, theta_z)`` in 3D with ``R = R_z R_y R_x``.  The 2D
matrix is ``[[cos, sin], [-sin, cos]]``, i.e. a positive angle turns the
body clockwise, and torques use the matching sign (see ``collision``).
A body point with body-frame offset ``q`` sits at ``center + R(theta) q``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .mesh import Hole, circle_points, sphere_points

__all__ = [
    "Sphere",
    "Ellipsoid",
    "Polygon",
    "Swimmer",
    "RigidBody",
    "ForceTorque",
    "BodyError",
    "UnsupportedShapeError",
    "rotation_matrix",
    "moment",
    "point_velocity",
    "wrap_angles",
    "make_body",
    "analytic_inertia",
    "mesh_inertia",
    "polygon_inertia",
    "newton_euler_step",
    "swimmer_stroke",
    "set_swimmer_lengths",
    "component_markers",
    "boundary_points",
    "reference_boundary_points",
    "body_holes",
    "body_volume",
    "effective_radius",
    "component_spheres",
    "contains",
    "STROKE_PHASES",
]

log = logging.getLogger(__name__)

STROKE_PHASES = ("retract_left", "retract_right", "extend_left", "extend_right")


class BodyError(ValueError):
    pass


class UnsupportedShapeError(BodyError):
    """No closed-form inertia; integrate over a mesh of the body instead."""


@dataclass(frozen=True)
class Sphere:
    """Disk in 2D, ball in 3D."""

    radius: float


@dataclass(frozen=True)
class Ellipsoid:
    """Ellipse (two semi-axes) or ellipsoid (three semi-axes), axes along the body frame."""

    semi_axes: tuple[float, ...]


@dataclass(frozen=True)
class Polygon:
    """Arbitrary simple polygon given by body-frame vertices in order (2D only)."""

    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Swimmer:
    """Three equal spheres on a line joined by two rods.

    ``lengths`` are the current (left, right) rod lengths measured between
    sphere centres; the swimmer axis is the body-frame x axis.
    """

    radius: float
    rest_length: float
    lengths: tuple[float, float] | None = None

    def __post_init__(self):
        lengths = (self.rest_length, self.rest_length) if self.lengths is None else self.lengths
        object.__setattr__(self, "lengths", (float(lengths[0]), float(lengths[1])))

    def offsets(self) -> np.ndarray:
        """Sphere positions along the axis relative to the swimmer centroid."""
        left, right = self.lengths
        s = np.array([-left, 0.0, right])
        return s - s.mean()


Shape = Union[Sphere, Ellipsoid, Polygon, Swimmer]


@dataclass(frozen=True)
class ForceTorque:
    force: np.ndarray
    torque: np.ndarray

    @classmethod
    def zero(cls, dim: int) -> "ForceTorque":
        return cls(np.zeros(dim), np.zeros(1 if dim == 2 else 3))

    def __add__(self, other: "ForceTorque") -> "ForceTorque":
        return ForceTorque(self.force + other.force, self.torque + other.torque)


@dataclass(eq=False)
class RigidBody:
    """State of one rigid body.

    ``inertia`` is the body-frame inertia tensor (1x1 in 2D, 3x3 in 3D);
    ``omega`` and ``theta`` have one component in 2D and three in 3D.
    Fixed bodies never move and exert forces only.
    """

    id: int
    shape: Shape
    density: float
    center: np.ndarray
    velocity: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    mass: float
    inertia: np.ndarray
    marker: str = ""
    fixed: bool = False
    flags: list[str] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.theta, self.dim)

    def copy(self, **changes) -> "RigidBody":
        base = dict(
            center=self.center.copy(),
            velocity=self.velocity.copy(),
            omega=self.omega.copy(),
            theta=self.theta.copy(),
            inertia=self.inertia.copy(),
            flags=list(self.flags),
        )
        base.update(changes)
        return replace(self, **base)


# --------------------------------------------------------------------------
# rotations


def _rx(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_matrix(theta, dim: int) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if dim == 2:
        c, s = math.cos(th[0]), math.sin(th[0])
        return np.array([[c, s], [-s, c]])
    if dim == 3:
        return _rz(th[2]) @ _ry(th[1]) @ _rx(th[0])
    raise BodyError(f"dimension must be 2 or 3, got {dim}")


def moment(lever: np.ndarray, force: np.ndarray) -> np.ndarray:
    """Torque of ``force`` applied at ``lever`` from the centre of mass.

    2D uses ``-(lever x force)``, which matches the clockwise angle of
    ``rotation_matrix``; 3D uses the right-handed ``lever x force`` that
    matches its counter-clockwise axis rotations.
    """
    lever = np.asarray(lever, dtype=float)
    force = np.asarray(force, dtype=float)
    if lever.shape[-1] == 2:
        return -(lever[..., 0] * force[..., 1] - lever[..., 1] * force[..., 0])[..., None]
    return np.cross(lever, force)


def point_velocity(body: RigidBody, lever: np.ndarray) -> np.ndarray:
    """Velocity of the material point at ``lever`` from the centre of mass."""
    lever = np.asarray(lever, dtype=float)
    if body.dim == 2:
        w = body.omega[0]
        return body.velocity + w * np.array([lever[1], -lever[0]])
    return body.velocity + np.cross(body.omega, lever)


def wrap_angles(theta, dim: int) -> tuple[np.ndarray, bool]:
    """Wrap Euler angles into their admissible range; the flag tells whether any wrapped."""
    th = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
    if dim == 2:
        lows, spans = [-math.pi], [2 * math.pi]
    else:
        lows, spans = [-math.pi, 0.0, 0.0], [2 * math.pi, math.pi, math.pi / 2]
    hit = False
    for i, (lo, span) in enumerate(zip(lows, spans)):
        if not (lo <= th[i] < lo + span):
            th[i] = lo + (th[i] - lo) % span
            hit = True
    return th, hit


# --------------------------------------------------------------------------
# mass properties


def analytic_inertia(shape: Shape, density: float, dim: int) -> tuple[float, np.ndarray]:
    """Closed-form mass and body-frame inertia tensor."""
    if density <= 0:
        raise BodyError(f"density must be positive, got {density}")
    if isinstance(shape, Sphere):
        r = shape.radius
        if r <= 0:
            raise BodyError("radius must be positive")
        if dim == 2:
            m = density * math.pi * r * r
            return m, np.array([[0.5 * m * r * r]])
        m = density * 4.0 / 3.0 * math.pi * r**3
        return m, 0.4 * m * r * r * np.eye(3)
    if isinstance(shape, Ellipsoid):
        ax = shape.semi_axes
        if len(ax) != dim or min(ax) <= 0:
            raise BodyError(f"ellipsoid needs {dim} positive semi-axes, got {ax}")
        if dim == 2:
            a, b = ax
            m = density * math.pi * a * b
            return m, np.array([[m * (a * a + b * b) / 4.0]])
        a, b, c = ax
        m = density * 4.0 / 3.0 * math.pi * a * b * c
        return m, m / 5.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])
    if isinstance(shape, Swimmer):
        ms, Is = analytic_inertia(Sphere(shape.radius), density, dim)
        off = shape.offsets()
        if dim == 2:
            return 3 * ms, np.array([[3 * Is[0, 0] + ms * float(np.sum(off**2))]])
        J = 3 * Is.copy()
        for x in off:
            J += ms * (x * x * np.eye(3) - np.outer([x, 0, 0], [x, 0, 0]))
        return 3 * ms, J
    raise UnsupportedShapeError(f"no analytic inertia for {type(shape).__name__}; use mesh quadrature")


def mesh_inertia(vertices: np.ndarray, simplices: np.ndarray, density: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mass, centre of mass and inertia tensor of a meshed solid.

    Second moments are integrated exactly on each simplex, so the only
    error is the geometric one of the mesh itself.
    """
    p = vertices[simplices]
    d = vertices.shape[1]
    vol = np.abs(np.linalg.det(p[:, 1:] - p[:, :1])) / math.factorial(d)
    m = density * vol.sum()
    s = p.sum(axis=1)
    center = density * (vol[:, None] * s / (d + 1)).sum(axis=0) / m
    second = np.einsum("e,eki,ekj->ij", vol, p, p) + np.einsum("e,ei,ej->ij", vol, s, s)
    second *= density / ((d + 1) * (d + 2))
    S = second - m * np.outer(center, center)
    if d == 2:
        return m, center, np.array([[np.trace(S)]])
    return m, center, np.trace(S) * np.eye(3) - S


def polygon_inertia(points: np.ndarray, density: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mass, centroid and inertia of a simple polygon via a signed triangle fan."""
    pts = np.asarray(points, dtype=float)
    a = pts
    b = np.roll(pts, -1, axis=0)
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    area = 0.5 * cross.sum()
    sign = 1.0 if area > 0 else -1.0
    area = abs(area)
    m = density * area
    cx = sign * ((a[:, 0] + b[:, 0]) * cross).sum() / (6 * area)
    cy = sign * ((a[:, 1] + b[:, 1]) * cross).sum() / (6 * area)
    ixx = sign * ((a[:, 1] ** 2 + a[:, 1] * b[:, 1] + b[:, 1] ** 2) * cross).sum() / 12
    iyy = sign * ((a[:, 0] ** 2 + a[:, 0] * b[:, 0] + b[:, 0] ** 2) * cross).sum() / 12
    J0 = density * (ixx + iyy)
    J = J0 - m * (cx * cx + cy * cy)
    return m, np.array([cx, cy]), np.array([[J]])


def make_body(
    id: int,
    shape: Shape,
    density: float,
    center: Sequence[float],
    *,
    velocity: Sequence[float] | None = None,
    omega: Sequence[float] | None = None,
    theta: Sequence[float] | float | None = None,
    marker: str | None = None,
    fixed: bool = False,
) -> RigidBody:
    center = np.asarray(center, dtype=float)
    dim = len(center)
    if dim not in (2, 3):
        raise BodyError(f"center must have 2 or 3 components, got {dim}")
    ds = 1 if dim == 2 else 3
    if isinstance(shape, Polygon):
        if dim != 2:
            raise BodyError("polygon bodies are 2D only")
        m, c, inertia = polygon_inertia(np.asarray(shape.points), density)
        # keep the body frame centred on the centroid
        shape = Polygon(tuple(map(tuple, np.asarray(shape.points) - c)))
    else:
        m, inertia = analytic_inertia(shape, density, dim)
    th = np.zeros(ds) if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    if th.shape != (ds,):
        raise BodyError(f"theta must have {ds} components")
    th, _ = wrap_angles(th, dim)
    return RigidBody(
        id=int(id),
        shape=shape,
        density=float(density),
        center=center.copy(),
        velocity=np.zeros(dim) if velocity is None else np.asarray(velocity, dtype=float).copy(),
        omega=np.zeros(ds) if omega is None else np.atleast_1d(np.asarray(omega, dtype=float)).copy(),
        theta=th,
        mass=float(m),
        inertia=inertia,
        marker=marker or f"body{id}",
        fixed=fixed,
    )


def body_volume(body: RigidBody) -> float:
    shape, dim = body.shape, body.dim
    if isinstance(shape, Sphere):
        return math.pi * shape.radius**2 if dim == 2 else 4 / 3 * math.pi * shape.radius**3
    if isinstance(shape, Ellipsoid):
        return math.pi * math.prod(shape.semi_axes) if dim == 2 else 4 / 3 * math.pi * math.prod(shape.semi_axes)
    if isinstance(shape, Swimmer):
        r = shape.radius
        return 3 * (math.pi * r * r if dim == 2 else 4 / 3 * math.pi * r**3)
    return body.mass / body.density


def effective_radius(body: RigidBody) -> float:
    """Radius for drag and Reynolds number: the radius for spheres, a geometric mean otherwise."""
    shape = body.shape
    if isinstance(shape, (Sphere, Swimmer)):
        return shape.radius
    if isinstance(shape, Ellipsoid):
        return math.prod(shape.semi_axes) ** (1.0 / len(shape.semi_axes))
    return math.sqrt(body_volume(body) / math.pi)


# --------------------------------------------------------------------------
# dynamics


def newton_euler_step(body: RigidBody, total: ForceTorque, dt: float) -> RigidBody:
    """Advance one semi-implicit Euler step: velocities first, then pose."""
    if not dt > 0:
        raise BodyError(f"time step must be positive, got {dt}")
    if body.fixed:
        return body.copy()
    dim = body.dim
    force = np.asarray(total.force, dtype=float)
    torque = np.atleast_1d(np.asarray(total.torque, dtype=float))
    u = body.velocity + dt * force / body.mass
    if dim == 2:
        omega = body.omega + dt * torque / body.inertia[0, 0]
    else:
        R = body.rotation
        J = R @ body.inertia @ R.T
        try:
            omega = np.linalg.solve(J, J @ body.omega + dt * torque)
        except np.linalg.LinAlgError:
            raise BodyError(f"singular inertia for body {body.id}") from None
    center = body.center + dt * u
    theta, hit = wrap_angles(body.theta + dt * omega, dim)
    flags = list(body.flags)
    if hit and dim == 3:
        log.info("body %d: Euler angles wrapped into their admissible range", body.id)
        flags.append("angle_wrap")
    return body.copy(center=center, velocity=u, omega=omega, theta=theta, flags=flags)


def set_swimmer_lengths(body: RigidBody, lengths: tuple[float, float]) -> RigidBody:
    """Reconfigure a swimmer's rods, keeping the middle sphere in place."""
    shape = body.shape
    if not isinstance(shape, Swimmer):
        raise BodyError(f"body {body.id} is not a swimmer")
    left, right = float(lengths[0]), float(lengths[1])
    if min(left, right) <= 2 * shape.radius:
        raise BodyError("rod lengths would make neighbouring spheres overlap")
    new_shape = replace(shape, lengths=(left, right))
    axis = body.rotation @ np.eye(body.dim)[0]
    middle = body.center + shape.offsets()[1] * axis
    center = middle - new_shape.offsets()[1] * axis
    _, inertia = analytic_inertia(new_shape, body.density, body.dim)
    return body.copy(shape=new_shape, center=center, inertia=inertia)


def swimmer_stroke(body: RigidBody, phase: str, amplitude: float) -> RigidBody:
    """Change one rod of a three-sphere swimmer by ``amplitude``.

    The middle sphere stays in place; the centre of mass and inertia are
    recomputed for the new configuration.
    """
    shape = body.shape
    if not isinstance(shape, Swimmer):
        raise BodyError(f"body {body.id} is not a swimmer")
    if phase not in STROKE_PHASES:
        raise BodyError(f"unknown stroke phase {phase!r}; expected one of {STROKE_PHASES}")
    if amplitude >= shape.rest_length:
        raise BodyError(f"stroke amplitude {amplitude} must be smaller than the rod length {shape.rest_length}")
    left, right = shape.lengths
    sign = -1.0 if phase.startswith("retract") else 1.0
    if phase.endswith("left"):
        left += sign * amplitude
    else:
        right += sign * amplitude
    return set_swimmer_lengths(body, (left, right))


def component_spheres(body: RigidBody) -> list[tuple[np.ndarray, float]]:
    """Centres and radii of the spherical parts of a body (spheres and swimmers only)."""
    shape = body.shape
    if isinstance(shape, Sphere):
        return [(body.center.copy(), shape.radius)]
    if isinstance(shape, Swimmer):
        axis = body.rotation @ np.eye(body.dim)[0]
        return [(body.center + s * axis, shape.radius) for s in shape.offsets()]
    raise BodyError(f"body {body.id} ({type(shape).__name__}) is not made of spheres")


# --------------------------------------------------------------------------
# geometry


def _ellipse_points(a: float, b: float, spacing: float) -> np.ndarray:
    t = np.linspace(0.0, 2 * math.pi, 4097)
    xy = np.column_stack([a * np.cos(t), b * np.sin(t)])
    seg = np.linalg.norm(np.diff(xy, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(8, math.ceil(s[-1] / spacing))
    target = s[-1] * np.arange(n) / n
    tt = np.interp(target, s, t)
    return np.column_stack([a * np.cos(tt), b * np.sin(tt)])


def _ellipsoid_points(axes: Sequence[float], spacing: float) -> np.ndarray:
    a, b, c = axes
    p = 1.6075
    area = 4 * math.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3) ** (1 / p)
    r_equiv = math.sqrt(area / (4 * math.pi))
    u = sphere_points(np.zeros(3), 1.0, spacing / r_equiv)
    return u * np.array([a, b, c])


def _default_spacing(body_size: float, dim: int) -> float:
    return 2 * math.pi * body_size / (64 if dim == 2 else 24)


def reference_boundary_points(shape: Shape, dim: int, spacing: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Body-frame boundary samples and their component tags."""
    if isinstance(shape, Sphere):
        h = spacing or _default_spacing(shape.radius, dim)
        pts = circle_points(np.zeros(2), shape.radius, h) if dim == 2 else sphere_points(np.zeros(3), shape.radius, h)
        return pts, np.zeros(len(pts), dtype=np.int64)
    if isinstance(shape, Ellipsoid):
        h = spacing or _default_spacing(min(shape.semi_axes), dim)
        pts = _ellipse_points(*shape.semi_axes, h) if dim == 2 else _ellipsoid_points(shape.semi_axes, h)
        return pts, np.zeros(len(pts), dtype=np.int64)
    if isinstance(shape, Polygon):
        pts = np.asarray(shape.points, dtype=float)
        return pts, np.zeros(len(pts), dtype=np.int64)
    if isinstance(shape, Swimmer):
        parts, tags = [], []
        base, _ = reference_boundary_points(Sphere(shape.radius), dim, spacing)
        for k, s in enumerate(shape.offsets()):
            off = np.zeros(dim)
            off[0] = s
            parts.append(base + off)
            tags.append(np.full(len(base), k, dtype=np.int64))
        return np.concatenate(parts), np.concatenate(tags)
    raise BodyError(f"unknown shape {shape!r}")


def boundary_points(body: RigidBody, spacing: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Current-configuration boundary samples ``(points, component_tags)``."""
    ref, tags = reference_boundary_points(body.shape, body.dim, spacing)
    return body.center + ref @ body.rotation.T, tags


def _body_frame(body: RigidBody, points: np.ndarray) -> np.ndarray:
    return (np.asarray(points, dtype=float) - body.center) @ body.rotation


def _polygon_inside(poly: np.ndarray, q: np.ndarray, pad: float) -> np.ndarray:
    x, y = q[:, 0], q[:, 1]
    inside = np.zeros(len(q), dtype=bool)
    a = poly
    b = np.roll(poly, -1, axis=0)
    for (x1, y1), (x2, y2) in zip(a, b):
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xi)
    if pad > 0:
        for (x1, y1), (x2, y2) in zip(a, b):
            e = np.array([x2 - x1, y2 - y1])
            t = np.clip(((x - x1) * e[0] + (y - y1) * e[1]) / (e @ e), 0, 1)
            dist = np.hypot(x - (x1 + t * e[0]), y - (y1 + t * e[1]))
            inside |= dist < pad
    return inside


def contains(body: RigidBody, points: np.ndarray, pad: float = 0.0) -> np.ndarray:
    """Which ``points`` lie inside the body inflated by ``pad``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    shape = body.shape
    if isinstance(shape, (Sphere, Swimmer)):
        out = np.zeros(len(pts), dtype=bool)
        for c, r in component_spheres(body):
            out |= np.linalg.norm(pts - c, axis=1) < r + pad
        return out
    q = _body_frame(body, pts)
    if isinstance(shape, Ellipsoid):
        ax = np.asarray(shape.semi_axes) + pad
        return np.sum((q / ax) ** 2, axis=1) < 1.0
    if isinstance(shape, Polygon):
        return _polygon_inside(np.asarray(shape.points), q, pad)
    raise BodyError(f"unknown shape {shape!r}")


def component_markers(body: RigidBody) -> list[str]:
    if isinstance(body.shape, Swimmer):
        return [f"{body.marker}_c{k}" for k in range(3)]
    return [body.marker]


def body_holes(body: RigidBody, spacing: float) -> list[Hole]:
    """Mesh holes for a body (one per component of a swimmer)."""
    pts, tags = boundary_points(body, spacing)
    markers = component_markers(body)
    if isinstance(body.shape, Swimmer):
        holes = []
        for k, (c, r) in enumerate(component_spheres(body)):

            def inside(p, pad, c=c, r=r):
                return np.linalg.norm(p - c, axis=1) < r + pad

            holes.append(Hole(markers[k], pts[tags == k], inside))
        return holes
    return [Hole(markers[0], pts, lambda p, pad: contains(body, p, pad))]
