"""Collision detection and repulsive forces.

Two detection paths share one output type.  The spherical path works from
centres and radii, with walls of a box represented by mirror-image
("imaginary") bodies.  The general path works on a conforming mesh: each
body gets a narrow-band distance field, and contact points are the
boundary vertices of one body closest to the other in that field.

Forces follow a quadratic activation law: a pair at surface distance
``d <= rho`` pushes its members apart with magnitude proportional to
``(rho - d)**2`` divided by a stiffness parameter.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bodies import ForceTorque, RigidBody, Sphere, Swimmer, component_spheres, moment
from .bodies import component_markers
from .fmm import march_many
from .mesh import WALL_MARKERS, Box, SimplicialMesh

__all__ = [
    "CollisionError",
    "PreprocessData",
    "CollisionPair",
    "CollisionMap",
    "CollisionParams",
    "preprocess",
    "detect_spherical",
    "detect_general",
    "forces_spherical",
    "forces_general",
    "total_forces",
]

log = logging.getLogger(__name__)


class CollisionError(ValueError):
    pass


@dataclass(frozen=True)
class CollisionParams:
    """Zone width ``rho`` and stiffnesses ``eps`` (body-body) and ``eps_f`` (body-wall)."""

    rho: float
    eps: float
    eps_f: float
    d_max_factor: float = 1.5

    @classmethod
    def defaults(cls, h: float) -> "CollisionParams":
        return cls(rho=1.5 * h, eps=h * h, eps_f=0.5 * h * h)

    def __post_init__(self):
        for name in ("rho", "eps", "eps_f", "d_max_factor"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise CollisionError(f"{name} must be positive and finite, got {v}")


@dataclass
class PreprocessData:
    """Per-component lists built once per detection.

    Every sphere contributes one entry and a swimmer contributes three, one per
    component sphere; ``body_ids`` holds the owning body of each entry.
    """

    body_ids: list[int]
    components: list[int]
    mass_centers: list[np.ndarray]
    body_markers: list[str]
    radii: list[float] | None
    imag_mass_centers: list[list[np.ndarray]] | None
    fluid_marker: tuple[str, ...]
    mode: str
    fixed: list[bool] = field(default_factory=list)
    body_centers: dict[int, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.body_ids)


@dataclass(frozen=True)
class CollisionPair:
    """One interaction; ``j == -1`` is a wall.

    For spherical wall pairs ``x_other`` is the imaginary centre and ``wall``
    the index of the mirrored wall; otherwise ``wall`` is -1.  ``ci`` and
    ``cj`` are component indices (non-zero only for swimmers).
    """

    i: int
    j: int
    distance: float
    x_i: np.ndarray
    x_other: np.ndarray
    ci: int = 0
    cj: int = 0
    wall: int = -1

    @property
    def key(self) -> tuple[int, int, int, int, int]:
        return (self.i, self.j, self.ci, self.cj, self.wall)

    @property
    def is_wall(self) -> bool:
        return self.j == -1


@dataclass
class CollisionMap:
    pairs: list[CollisionPair]
    rho: float

    def __post_init__(self):
        self.pairs = sorted(self.pairs, key=lambda p: p.key)
        keys = [p.key for p in self.pairs]
        if len(set(keys)) != len(keys):
            raise CollisionError("duplicate pair in collision map")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def overlaps(self) -> list[CollisionPair]:
        return [p for p in self.pairs if p.distance < 0]

    def pair_keys(self) -> set[tuple[int, int]]:
        return {(p.i, p.j) for p in self.pairs}

    def counts(self) -> tuple[int, int]:
        """Number of distinct body-body and body-wall interactions."""
        bb = {(p.i, p.j) for p in self.pairs if not p.is_wall}
        bw = {(p.i, p.ci, p.wall) for p in self.pairs if p.is_wall}
        return len(bb), len(bw)

    def min_distance(self) -> float:
        return min((p.distance for p in self.pairs), default=math.inf)

    def to_csv(self) -> str:
        dim = len(self.pairs[0].x_i) if self.pairs else 2
        ax = "xyz"[:dim]
        head = ["i", "j", "distance"] + [f"xi_{a}" for a in ax] + [f"xo_{a}" for a in ax] + ["ci", "cj", "wall"]
        buf = io.StringIO()
        buf.write(",".join(head) + "\n")
        for p in self.pairs:
            row = [str(p.i), str(p.j), repr(float(p.distance))]
            row += [repr(float(v)) for v in p.x_i] + [repr(float(v)) for v in p.x_other]
            row += [str(p.ci), str(p.cj), str(p.wall)]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


# --------------------------------------------------------------------------
# pre-processing


def preprocess(
    bodies: Sequence[RigidBody],
    domain: Box | SimplicialMesh,
    mode: str,
) -> PreprocessData:
    """Collect centres, markers and (spherical mode) radii and mirrored centres."""
    if mode not in ("spherical", "general"):
        raise CollisionError(f"mode must be 'spherical' or 'general', got {mode!r}")
    ids = [b.id for b in bodies]
    if len(set(ids)) != len(ids):
        raise CollisionError(f"body ids must be unique, got {ids}")
    if mode == "spherical" and not isinstance(domain, Box):
        raise CollisionError(
            "spherical detection needs an axis-aligned box domain for its imaginary wall bodies; "
            "use mode 'general' for other domains"
        )
    out = PreprocessData(
        body_ids=[],
        components=[],
        mass_centers=[],
        body_markers=[],
        radii=[] if mode == "spherical" else None,
        imag_mass_centers=[] if mode == "spherical" else None,
        fluid_marker=(),
        mode=mode,
    )
    if isinstance(domain, Box):
        out.fluid_marker = tuple(w for _, _, w in domain.walls())
    else:
        out.fluid_marker = tuple(m for m in domain.markers if m in WALL_MARKERS)
    for b in bodies:
        out.body_centers[b.id] = b.center.copy()
        markers = component_markers(b)
        if mode == "spherical":
            if not isinstance(b.shape, (Sphere, Swimmer)):
                raise CollisionError(
                    f"body {b.id} is a {type(b.shape).__name__}; spherical detection handles "
                    "spheres and swimmers only, use mode 'general'"
                )
            parts = component_spheres(b)
        else:
            parts = [(b.center.copy(), None)] * len(markers)
            if isinstance(b.shape, Swimmer):
                parts = component_spheres(b)
        for k, ((c, r), m) in enumerate(zip(parts, markers)):
            out.body_ids.append(b.id)
            out.components.append(k)
            out.mass_centers.append(np.asarray(c, dtype=float))
            out.body_markers.append(m)
            out.fixed.append(b.fixed)
            if mode == "spherical":
                out.radii.append(float(r))
                imag = []
                for axis, value, _ in domain.walls():
                    ci = np.asarray(c, dtype=float).copy()
                    ci[axis] = 2.0 * value - ci[axis]
                    imag.append(ci)
                out.imag_mass_centers.append(imag)
    return out


def _log_overlap(p: CollisionPair) -> None:
    other = "wall" if p.is_wall else f"body {p.j}"
    log.warning("overlap: body %d and %s at distance %.3e", p.i, other, p.distance)


# --------------------------------------------------------------------------
# detection


def detect_spherical(pre: PreprocessData, rho: float) -> CollisionMap:
    """Pairs of spheres (and sphere/imaginary-sphere) whose surface gap is at most ``rho``."""
    if pre.radii is None:
        raise CollisionError("detect_spherical needs spherical pre-processing data")
    n = len(pre)
    pairs: list[CollisionPair] = []
    if n == 0:
        return CollisionMap(pairs, rho)
    c = np.array(pre.mass_centers)
    r = np.array(pre.radii)
    owner = np.array(pre.body_ids)
    fixed = np.array(pre.fixed, dtype=bool)
    diff = c[None, :, :] - c[:, None, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)) - r[:, None] - r[None, :]
    ia, ib = np.nonzero(np.triu(dist <= rho, k=1))
    for a, b in zip(ia.tolist(), ib.tolist()):
        if owner[a] == owner[b] or (fixed[a] and fixed[b]):
            continue
        if owner[a] > owner[b]:
            a, b = b, a
        p = CollisionPair(
            int(owner[a]), int(owner[b]), float(dist[a, b]), c[a].copy(), c[b].copy(),
            pre.components[a], pre.components[b],
        )
        if p.distance < 0:
            _log_overlap(p)
        pairs.append(p)
    imag = np.array(pre.imag_mass_centers)  # (n, walls, d)
    dw = np.linalg.norm(imag - c[:, None, :], axis=2) - 2 * r[:, None]
    for a, k in zip(*np.nonzero(dw <= rho)):
        if fixed[a]:
            continue
        p = CollisionPair(
            int(owner[a]), -1, float(dw[a, k]), c[a].copy(), imag[a, k].copy(),
            pre.components[a], 0, int(k),
        )
        if p.distance < 0:
            _log_overlap(p)
        pairs.append(p)
    return CollisionMap(pairs, rho)


def _closest(vertices: np.ndarray, candidates: np.ndarray, values: np.ndarray, delta: float):
    """Candidate vertex with the smallest field value (lowest index on ties), or None."""
    vals = values[candidates]
    k = int(np.argmin(vals))
    if vals[k] >= delta:
        return None
    return int(candidates[k])


def detect_general(
    pre: PreprocessData,
    mesh: SimplicialMesh,
    bodies: Sequence[RigidBody],
    rho: float,
    *,
    d_max_factor: float = 1.5,
    workers: int = 1,
) -> CollisionMap:
    """Pairs found from narrow-band distance fields on a body-conforming mesh.

    Every entry of ``pre`` (body or swimmer component) is a seed marker of
    ``mesh``; walls are seeded from ``pre.fluid_marker`` restricted to the
    markers the mesh carries.
    """
    del bodies  # poses are already encoded in the mesh and in ``pre``
    missing = [m for m in pre.body_markers if m not in mesh.markers]
    if missing:
        raise CollisionError(f"mesh lacks body markers {missing}; known markers: {sorted(mesh.markers)}")
    n = len(pre)
    if n == 0:
        return CollisionMap([], rho)
    d_max = d_max_factor * rho
    fluid = tuple(m for m in pre.fluid_marker if m in mesh.markers)
    seeds: list = list(pre.body_markers)
    if fluid:
        seeds.append(fluid)
    fields = march_many(mesh, seeds, d_max, workers=workers)
    bverts = [mesh.boundary_vertices(m) for m in pre.body_markers]
    X = mesh.vertices
    pairs: list[CollisionPair] = []
    for a in range(n):
        for b in range(a + 1, n):
            oa, ob = pre.body_ids[a], pre.body_ids[b]
            if oa == ob or (pre.fixed[a] and pre.fixed[b]):
                continue
            va = _closest(X, bverts[a], fields[b].values, fields[b].delta)
            if va is None:
                continue
            vb = _closest(X, bverts[b], fields[a].values, fields[a].delta)
            if vb is None:
                continue
            d = float(np.linalg.norm(X[vb] - X[va]))
            if d > rho:
                continue
            if oa > ob:
                a2, b2, va, vb = b, a, vb, va
            else:
                a2, b2 = a, b
            pairs.append(
                CollisionPair(
                    pre.body_ids[a2], pre.body_ids[b2], d, X[va].copy(), X[vb].copy(),
                    pre.components[a2], pre.components[b2],
                )
            )
    if fluid:
        fF = fields[-1]
        fverts = mesh.boundary_vertices(fluid)
        for a in range(n):
            if pre.fixed[a]:
                continue
            va = _closest(X, bverts[a], fF.values, fF.delta)
            if va is None:
                continue
            vf = _closest(X, fverts, fields[a].values, fields[a].delta)
            if vf is None:
                continue
            d = float(np.linalg.norm(X[vf] - X[va]))
            if d > rho:
                # near a corner the two argmins can sit on different walls;
                # pair the wall point with the body vertex nearest to it
                near = bverts[a][np.argmin(np.linalg.norm(X[bverts[a]] - X[vf], axis=1))]
                va = int(near)
                d = float(np.linalg.norm(X[vf] - X[va]))
            if d <= rho:
                pairs.append(CollisionPair(pre.body_ids[a], -1, d, X[va].copy(), X[vf].copy(), pre.components[a]))
    return CollisionMap(pairs, rho)


# --------------------------------------------------------------------------
# forces


def _activation(rho: float, d: float) -> float:
    # overlap is logged at detection; the activation saturates at contact
    return (rho - max(d, 0.0)) ** 2


def _zero_map(ids: Sequence[int], dim: int) -> dict[int, ForceTorque]:
    return {i: ForceTorque.zero(dim) for i in ids}


def forces_spherical(
    cmap: CollisionMap,
    pre: PreprocessData,
    eps: float,
    eps_f: float,
) -> dict[int, ForceTorque]:
    """Repulsion between centres: ``F_ij = (c_i - c_j)(rho - d)^2 / eps``.

    Wall pairs use ``eps_f`` and the imaginary centre.  Plain spheres get no
    torque; swimmer components pass a torque to the swimmer through the
    offset of the component from the swimmer centre.
    """
    dim = len(pre.mass_centers[0]) if len(pre) else 2
    out = _zero_map(sorted(pre.body_centers), dim)
    rho = cmap.rho
    force = {i: np.zeros(dim) for i in out}
    torque = {i: np.zeros(1 if dim == 2 else 3) for i in out}
    for p in cmap:
        stiff = eps_f if p.is_wall else eps
        f = (p.x_i - p.x_other) * (_activation(rho, p.distance) / stiff)
        force[p.i] += f
        lever = p.x_i - pre.body_centers[p.i]
        if np.any(lever):
            torque[p.i] += moment(lever, f)
        if not p.is_wall:
            force[p.j] += -f
            lever = p.x_other - pre.body_centers[p.j]
            if np.any(lever):
                torque[p.j] += moment(lever, -f)
    return {i: ForceTorque(force[i], torque[i]) for i in out}


def forces_general(
    cmap: CollisionMap,
    bodies: Sequence[RigidBody],
    eps: float,
    eps_f: float,
) -> dict[int, ForceTorque]:
    """Repulsion along the contact points: ``F_ij = (X_i - X_j)(rho - d)^2 / eps``.

    Each contribution also carries the torque of the force about the
    receiving body's centre of mass.
    """
    dim = bodies[0].dim if bodies else 2
    centers = {b.id: b.center for b in bodies}
    rho = cmap.rho
    force = {i: np.zeros(dim) for i in sorted(centers)}
    torque = {i: np.zeros(1 if dim == 2 else 3) for i in sorted(centers)}
    for p in cmap:
        stiff = eps_f if p.is_wall else eps
        f = (p.x_i - p.x_other) * (_activation(rho, p.distance) / stiff)
        force[p.i] += f
        torque[p.i] += moment(p.x_i - centers[p.i], f)
        if not p.is_wall:
            force[p.j] += -f
            torque[p.j] += moment(p.x_other - centers[p.j], -f)
    return {i: ForceTorque(force[i], torque[i]) for i in force}


def total_forces(
    cmap: CollisionMap,
    pre: PreprocessData,
    bodies: Sequence[RigidBody],
    params: CollisionParams,
) -> dict[int, ForceTorque]:
    if pre.mode == "spherical":
        return forces_spherical(cmap, pre, params.eps, params.eps_f)
    return forces_general(cmap, bodies, params.eps, params.eps_f)
