"""Conforming simplicial meshes (triangles in 2D, tetrahedra in 3D).

A mesh stores vertex coordinates, simplices and marked boundary facets.
Bodies are holes in the fluid mesh, so every body boundary is a set of
boundary facets carrying the body's marker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "MeshError",
    "MeshGenerationError",
    "SimplicialMesh",
    "Hole",
    "Box",
    "boundary_vertices",
    "generate_annulus",
    "generate_box",
    "generate_domain_with_holes",
    "generate_disks_in_box",
    "generate_ball",
    "simplex_volumes",
    "WALL_MARKERS",
]

WALL_MARKERS = ("wall_xlo", "wall_xhi", "wall_ylo", "wall_yhi", "wall_zlo", "wall_zhi")

# relative volume below which an element is considered degenerate
DEGENERATE_TOL = 1e-14


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangular domain ``[lo, hi]`` with walls named as in ``WALL_MARKERS``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if len(lo) != len(hi) or len(lo) not in (2, 3):
            raise MeshError(f"box corners must both have 2 or 3 components, got {lo} and {hi}")
        if any(b <= a for a, b in zip(lo, hi)):
            raise MeshError(f"box extent must be positive, got lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def walls(self) -> list[tuple[int, float, str]]:
        """``(axis, coordinate, marker)`` for every wall, in marker order."""
        out = []
        for axis in range(self.dim):
            out.append((axis, self.lo[axis], WALL_MARKERS[2 * axis]))
            out.append((axis, self.hi[axis], WALL_MARKERS[2 * axis + 1]))
        return out


class MeshError(ValueError):
    """Invalid mesh data or query."""


class MeshGenerationError(MeshError):
    """A built-in generator could not produce a valid conforming mesh."""


def simplex_volumes(vertices: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    """Unsigned volumes (areas in 2D) of all simplices."""
    p = vertices[simplices]
    e = p[:, 1:, :] - p[:, :1, :]
    dim = vertices.shape[1]
    return np.abs(np.linalg.det(e)) / math.factorial(dim)


def _sorted_faces(simplices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All (d-1)-faces of every simplex, vertex-sorted, and the owning simplex."""
    k = simplices.shape[1]
    faces = []
    owners = []
    ids = np.arange(len(simplices))
    for drop in range(k):
        keep = [c for c in range(k) if c != drop]
        faces.append(simplices[:, keep])
        owners.append(ids)
    faces = np.sort(np.concatenate(faces), axis=1)
    return faces, np.concatenate(owners)


def _face_counts(simplices: np.ndarray):
    faces, owners = _sorted_faces(simplices)
    uniq, inverse, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    return uniq, counts, faces, owners, inverse.reshape(-1)


def _csr(rows: np.ndarray, cols: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((cols, rows))
    rows = rows[order]
    cols = cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), cols.astype(np.int64)


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """Immutable conforming simplicial mesh with marked boundary facets.

    ``facet_markers[k]`` indexes into ``markers`` and names the boundary
    part that facet ``facets[k]`` belongs to.
    """

    vertices: np.ndarray
    simplices: np.ndarray
    facets: np.ndarray
    facet_markers: np.ndarray
    markers: tuple[str, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        s = np.ascontiguousarray(self.simplices, dtype=np.int64)
        f = np.ascontiguousarray(self.facets, dtype=np.int64).reshape(-1, v.shape[1] if v.ndim == 2 else 0)
        fm = np.ascontiguousarray(self.facet_markers, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "simplices", s)
        object.__setattr__(self, "facets", f)
        object.__setattr__(self, "facet_markers", fm)
        object.__setattr__(self, "markers", tuple(self.markers))
        for a in (v, s, f, fm):
            a.setflags(write=False)
        self._validate()

    def _validate(self):
        v, s, f = self.vertices, self.simplices, self.facets
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise MeshError(f"vertices must be (n, 2) or (n, 3), got {v.shape}")
        d = v.shape[1]
        if s.ndim != 2 or s.shape[1] != d + 1:
            raise MeshError(f"simplices must have {d + 1} vertices each, got shape {s.shape}")
        if len(s) == 0:
            raise MeshError("mesh has no simplices")
        n = len(v)
        if s.min() < 0 or s.max() >= n:
            raise MeshError("simplex references an invalid vertex index")
        if len(f):
            if f.min() < 0 or f.max() >= n:
                raise MeshError("boundary facet references an invalid vertex index")
        if len(self.facet_markers) != len(f):
            raise MeshError("facet_markers must have one entry per facet")
        if len(f) and (self.facet_markers.min() < 0 or self.facet_markers.max() >= len(self.markers)):
            raise MeshError("facet marker index out of range")
        vol = simplex_volumes(v, s)
        scale = self.h**d
        bad = np.flatnonzero(vol < DEGENERATE_TOL * scale)
        if len(bad):
            raise MeshError(f"{len(bad)} degenerate simplices (first: {int(bad[0])}, volume {vol[bad[0]]:.3e})")
        if len(f):
            uniq, counts, _, _, _ = _face_counts(s)
            fs = np.sort(f, axis=1)
            # locate each facet in the sorted unique face table
            idx = _row_lookup(uniq, fs)
            if np.any(idx < 0):
                k = int(np.flatnonzero(idx < 0)[0])
                raise MeshError(f"boundary facet {k} {tuple(f[k])} is not a face of any simplex")
            if np.any(counts[idx] != 1):
                k = int(np.flatnonzero(counts[idx] != 1)[0])
                raise MeshError(f"boundary facet {k} {tuple(f[k])} is shared by {counts[idx[k]]} simplices")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def element_count(self) -> int:
        return len(self.simplices)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def h(self) -> float:
        """Mean edge length, used as the mesh size."""
        if "h" not in self._cache:
            e = self.edges
            lengths = np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)
            self._cache["h"] = float(lengths.mean())
        return self._cache["h"]

    @property
    def edges(self) -> np.ndarray:
        if "edges" not in self._cache:
            k = self.simplices.shape[1]
            pairs = [self.simplices[:, [a, b]] for a, b in combinations(range(k), 2)]
            e = np.sort(np.concatenate(pairs), axis=1)
            self._cache["edges"] = np.unique(e, axis=0)
        return self._cache["edges"]

    @property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """Vertex adjacency in CSR form ``(indptr, indices)``."""
        if "adj" not in self._cache:
            e = self.edges
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            self._cache["adj"] = _csr(rows, cols, self.vertex_count)
        return self._cache["adj"]

    @property
    def vertex_simplices(self) -> tuple[np.ndarray, np.ndarray]:
        """Simplices incident to each vertex in CSR form ``(indptr, indices)``."""
        if "v2s" not in self._cache:
            k = self.simplices.shape[1]
            rows = self.simplices.reshape(-1)
            cols = np.repeat(np.arange(self.element_count), k)
            self._cache["v2s"] = _csr(rows, cols, self.vertex_count)
        return self._cache["v2s"]

    def neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self.adjacency
        return indices[indptr[v] : indptr[v + 1]]

    def vertex_adjacency(self) -> list[set[int]]:
        indptr, indices = self.adjacency
        return [set(indices[indptr[i] : indptr[i + 1]].tolist()) for i in range(self.vertex_count)]

    def volumes(self) -> np.ndarray:
        return simplex_volumes(self.vertices, self.simplices)

    def marker_facets(self, marker: str) -> np.ndarray:
        return self.facets[self.facet_markers == self._marker_index(marker)]

    def _marker_index(self, marker: str) -> int:
        try:
            return self.markers.index(marker)
        except ValueError:
            raise MeshError(f"unknown marker {marker!r}; known markers: {sorted(self.markers)}") from None

    def boundary_vertices(self, marker: str | Iterable[str]) -> np.ndarray:
        """Sorted vertex indices incident to facets carrying ``marker``.

        ``marker`` may be a single name or a collection whose union is taken.
        """
        names = [marker] if isinstance(marker, str) else list(marker)
        if not names:
            raise MeshError(f"no marker given; known markers: {sorted(self.markers)}")
        ids = [self._marker_index(m) for m in names]
        mask = np.isin(self.facet_markers, ids)
        return np.unique(self.facets[mask])

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _row_lookup(table: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Index of each row of ``rows`` in the lexicographically sorted ``table`` (-1 if absent)."""
    if len(rows) == 0:
        return np.zeros(0, dtype=np.int64)
    k = table.shape[1]
    dt = np.dtype([(f"c{i}", np.int64) for i in range(k)])
    t = np.ascontiguousarray(table).view(dt).reshape(-1)
    r = np.ascontiguousarray(rows).view(dt).reshape(-1)
    pos = np.searchsorted(t, r)
    pos = np.clip(pos, 0, len(t) - 1)
    found = t[pos] == r
    return np.where(found, pos, -1)


def boundary_vertices(mesh: SimplicialMesh, marker: str | Iterable[str]) -> np.ndarray:
    return mesh.boundary_vertices(marker)


# --------------------------------------------------------------------------
# generators


def generate_annulus(r_inner: float, r_outer: float, h: float) -> SimplicialMesh:
    """Triangulated annulus between two concentric circles centred at the origin.

    Vertices are laid out on concentric rings spaced ``h*sqrt(3)/2`` apart
    and neighbouring rings are zipped together, which gives nearly
    equilateral triangles.  Boundary markers are ``"inner"`` and ``"outer"``.
    """
    if not (0 < r_inner < r_outer):
        raise MeshError(f"need 0 < r_inner < r_outer, got r_inner={r_inner}, r_outer={r_outer}")
    if not (0 < h < r_inner):
        raise MeshError(f"need 0 < h < r_inner, got h={h}")
    n_rings = max(1, math.ceil((r_outer - r_inner) / (h * math.sqrt(3) / 2)))
    radii = np.linspace(r_inner, r_outer, n_rings + 1)
    rings = []
    coords = []
    phases = []
    start = 0
    for k, r in enumerate(radii):
        n = max(6, math.ceil(2 * math.pi * r / h))
        phase = (k % 2) * math.pi / n
        ang = phase + 2 * math.pi * np.arange(n) / n
        coords.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
        rings.append(np.arange(start, start + n))
        phases.append(ang)
        start += n
    vertices = np.concatenate(coords)
    tris = []
    for k in range(n_rings):
        tris.append(_zip_rings(rings[k], phases[k], rings[k + 1], phases[k + 1]))
    simplices = np.concatenate(tris)
    simplices = _orient_positive(vertices, simplices)
    inner = np.column_stack([rings[0], np.roll(rings[0], -1)])
    outer = np.column_stack([rings[-1], np.roll(rings[-1], -1)])
    facets = np.concatenate([inner, outer])
    markers = np.concatenate([np.zeros(len(inner), np.int64), np.ones(len(outer), np.int64)])
    return SimplicialMesh(vertices, simplices, facets, markers, ("inner", "outer"))


def _zip_rings(ia: np.ndarray, aa: np.ndarray, ib: np.ndarray, ab: np.ndarray) -> np.ndarray:
    """Triangulate the strip between two closed, uniformly spaced rings."""
    na, nb = len(ia), len(ib)
    rel = (ab - aa[0] + math.pi) % (2 * math.pi) - math.pi
    j0 = int(np.argmin(np.abs(rel)))
    ua = np.append(aa - aa[0], 2 * math.pi)
    ub = rel[j0] + 2 * math.pi * np.arange(nb + 1) / nb
    out = []
    i = j = 0
    while i < na or j < nb:
        a, b = ia[i % na], ib[(j0 + j) % nb]
        if j == nb or (i < na and ua[i + 1] <= ub[j + 1]):
            out.append((a, ia[(i + 1) % na], b))
            i += 1
        else:
            out.append((a, b, ib[(j0 + j + 1) % nb]))
            j += 1
    return np.array(out, dtype=np.int64)


def _orient_positive(vertices: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    p = vertices[simplices]
    det = np.linalg.det(p[:, 1:, :] - p[:, :1, :])
    s = simplices.copy()
    flip = det < 0
    s[flip, 0], s[flip, 1] = simplices[flip, 1], simplices[flip, 0]
    return s


def _classify_box_faces(vertices, faces, lo, hi, tol):
    """Marker index (into WALL_MARKERS) for each face lying on a box wall, -1 otherwise."""
    d = vertices.shape[1]
    out = np.full(len(faces), -1, dtype=np.int64)
    p = vertices[faces]
    for axis in range(d):
        for side, val in enumerate((lo[axis], hi[axis])):
            on = np.all(np.abs(p[:, :, axis] - val) <= tol, axis=1)
            out[on & (out < 0)] = 2 * axis + side
    return out


def generate_box(lo: Sequence[float], hi: Sequence[float], h: float) -> SimplicialMesh:
    """Structured simplicial mesh of an axis-aligned box.

    2D cells are split into two triangles, 3D cells into the six tetrahedra
    of the Kuhn decomposition.  Wall markers are ``wall_xlo``, ``wall_xhi``,
    ``wall_ylo`` ... following the axis and side.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1 or len(lo) not in (2, 3):
        raise MeshError("lo and hi must both be 2- or 3-tuples")
    if np.any(hi - lo <= 0):
        raise MeshError(f"box extent must be positive on every axis, got lo={lo.tolist()}, hi={hi.tolist()}")
    if h <= 0:
        raise MeshError(f"mesh size must be positive, got h={h}")
    d = len(lo)
    counts = [max(1, math.ceil((hi[a] - lo[a]) / h - 1e-9)) for a in range(d)]
    axes = [np.linspace(lo[a], hi[a], counts[a] + 1) for a in range(d)]
    grid = np.meshgrid(*axes, indexing="ij")
    vertices = np.column_stack([g.reshape(-1) for g in grid])
    shape = [c + 1 for c in counts]

    def vid(*idx):
        return np.ravel_multi_index(idx, shape)

    cells = np.stack(np.meshgrid(*[np.arange(c) for c in counts], indexing="ij"), axis=-1).reshape(-1, d)
    if d == 2:
        i, j = cells[:, 0], cells[:, 1]
        v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
        simplices = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
    else:
        i, j, k = cells[:, 0], cells[:, 1], cells[:, 2]
        corner = {}
        for a in (0, 1):
            for b in (0, 1):
                for c in (0, 1):
                    corner[(a, b, c)] = vid(i + a, j + b, k + c)
        tets = []
        # Kuhn split: one tetrahedron per permutation of the axes
        for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
            p = [0, 0, 0]
            chain = [corner[tuple(p)]]
            for ax in perm:
                p[ax] = 1
                chain.append(corner[tuple(p)])
            tets.append(np.column_stack(chain))
        simplices = np.concatenate(tets)
    simplices = _orient_positive(vertices, simplices)
    uniq, counts_f, _, _, _ = _face_counts(simplices)
    bfaces = uniq[counts_f == 1]
    tol = 1e-9 * float(np.max(hi - lo))
    marks = _classify_box_faces(vertices, bfaces, lo, hi, tol)
    if np.any(marks < 0):
        raise MeshGenerationError("boundary face off the box walls")
    return _finalize_markers(vertices, simplices, bfaces, marks, list(WALL_MARKERS[: 2 * d]))


def _finalize_markers(vertices, simplices, facets, mark_idx, names):
    """Drop unused marker names while keeping the given order."""
    used = sorted(set(mark_idx.tolist()))
    remap = {old: new for new, old in enumerate(used)}
    fm = np.array([remap[m] for m in mark_idx.tolist()], dtype=np.int64)
    return SimplicialMesh(vertices, simplices, facets, fm, tuple(names[m] for m in used))


@dataclass
class Hole:
    """A body cut out of the fluid domain.

    ``surface`` holds points sampled on the body boundary; in 2D they must be
    ordered along the closed curve.  ``inside(points, pad)`` reports which
    points lie inside the body inflated by ``pad``.
    """

    marker: str
    surface: np.ndarray
    inside: Callable[[np.ndarray, float], np.ndarray]


def _box_surface_points(lo, hi, h, rng, jitter):
    d = len(lo)
    counts = [max(1, math.ceil((hi[a] - lo[a]) / h - 1e-9)) for a in range(d)]
    axes = [np.linspace(lo[a], hi[a], counts[a] + 1) for a in range(d)]
    pts = []
    for axis in range(d):
        others = [a for a in range(d) if a != axis]
        for val in (lo[axis], hi[axis]):
            mesh = np.meshgrid(*[axes[a] for a in others], indexing="ij")
            q = np.zeros((mesh[0].size, d))
            q[:, axis] = val
            for a, m in zip(others, mesh):
                q[:, a] = m.reshape(-1)
            pts.append(q)
    pts = np.unique(np.round(np.concatenate(pts), 12), axis=0)
    if d == 3 and jitter > 0:
        # in-plane jitter of points strictly inside a face breaks cospherical grids
        tol = 1e-9 * float(np.max(hi - lo))
        on = [(np.abs(pts[:, a] - lo[a]) <= tol) | (np.abs(pts[:, a] - hi[a]) <= tol) for a in range(d)]
        n_on = sum(o.astype(int) for o in on)
        face_interior = n_on == 1
        for a in range(d):
            move = face_interior & ~on[a]
            pts[move, a] += rng.uniform(-jitter, jitter, move.sum()) * h
    return pts


def _interior_lattice(lo, hi, h, rng, jitter):
    d = len(lo)
    if d == 2:
        dy = h * math.sqrt(3) / 2
        ys = np.arange(lo[1] + dy, hi[1] - 0.5 * dy, dy)
        rows = []
        for k, y in enumerate(ys):
            off = 0.5 * h * (k % 2)
            xs = np.arange(lo[0] + 0.5 * h + off, hi[0] - 0.4 * h, h)
            rows.append(np.column_stack([xs, np.full(len(xs), y)]))
        pts = np.concatenate(rows) if rows else np.zeros((0, 2))
    else:
        axes = [np.arange(lo[a] + h, hi[a] - 0.4 * h, h) for a in range(d)]
        g = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([x.reshape(-1) for x in g])
    if len(pts) and jitter > 0:
        pts = pts + rng.uniform(-jitter, jitter, pts.shape) * h
    margin = 0.45 * h
    keep = np.all((pts > lo + margin) & (pts < hi - margin), axis=1)
    return pts[keep]


def generate_domain_with_holes(
    lo: Sequence[float],
    hi: Sequence[float],
    h: float,
    holes: Sequence[Hole] = (),
    *,
    seed: int = 0,
    jitter: float = 0.15,
    wall_names: dict[str, str] | None = None,
) -> SimplicialMesh:
    """Unstructured mesh of a box with bodies cut out, conforming to the bodies.

    Points are placed on the box walls, on each hole surface and on a
    jittered lattice in the fluid; the Delaunay triangulation of the point
    set is then carved by removing elements whose centroid lies in a hole.
    ``wall_names`` renames wall markers (e.g. a face of a sub-window that
    is not a physical wall).
    """
    from scipy.spatial import Delaunay

    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = len(lo)
    if np.any(hi - lo <= 0) or h <= 0:
        raise MeshError("box extent and mesh size must be positive")
    rng = np.random.default_rng(seed)
    box_pts = _box_surface_points(lo, hi, h, rng, jitter)
    fluid = _interior_lattice(lo, hi, h, rng, jitter)
    hole_pts = []
    for hole in holes:
        s = np.asarray(hole.surface, dtype=float)
        if s.ndim != 2 or s.shape[1] != d:
            raise MeshError(f"hole {hole.marker!r} surface has wrong shape {s.shape}")
        if np.any(s <= lo) or np.any(s >= hi):
            raise MeshGenerationError(f"hole {hole.marker!r} touches or crosses the box walls")
        hole_pts.append(s)
        if len(fluid):
            fluid = fluid[~hole.inside(fluid, 0.5 * h)]
    # fluid points too close to a hole surface produce slivers
    if hole_pts and len(fluid):
        from scipy.spatial import cKDTree

        tree = cKDTree(np.concatenate(hole_pts))
        dist, _ = tree.query(fluid)
        fluid = fluid[dist > 0.5 * h]
    # likewise for points inside a box face when a body nearly touches it
    if hole_pts:
        from scipy.spatial import cKDTree

        tol = 1e-9 * float(np.max(hi - lo))
        n_on = sum(((np.abs(box_pts[:, a] - lo[a]) <= tol) | (np.abs(box_pts[:, a] - hi[a]) <= tol)).astype(int)
                   for a in range(d))
        dist, _ = cKDTree(np.concatenate(hole_pts)).query(box_pts)
        box_pts = box_pts[(n_on > 1) | (dist > 0.5 * h)]
    counts = [len(box_pts)] + [len(s) for s in hole_pts]
    pts = np.concatenate([box_pts] + hole_pts + [fluid])
    owner = np.full(len(pts), -1, dtype=np.int64)
    start = counts[0]
    for k, c in enumerate(counts[1:]):
        owner[start : start + c] = k
        start += c
    tri = Delaunay(pts, qhull_options="Qbb Qc Qz Q12" if d == 2 else "Qbb Qc Qz Q12 Qt")
    simplices = tri.simplices.astype(np.int64)
    centroids = pts[simplices].mean(axis=1)
    keep = np.ones(len(simplices), dtype=bool)
    # an element joining a curved surface to a nearby wall can have its
    # centroid just inside the true surface (within the chord sagitta)
    for hole in holes:
        keep &= ~hole.inside(centroids, -0.25 * h)
    # elements spanned only by points of a single hole lie inside it
    so = owner[simplices]
    keep &= ~np.all((so == so[:, :1]) & (so >= 0), axis=1)
    simplices = simplices[keep]
    vol = simplex_volumes(pts, simplices)
    simplices = simplices[vol > 1e-9 * h**d]
    used = np.unique(simplices)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    pts, owner = pts[used], owner[used]
    simplices = _orient_positive(pts, remap[simplices])

    uniq, counts_f, _, _, _ = _face_counts(simplices)
    bfaces = uniq[counts_f == 1]
    tol = 1e-9 * float(np.max(hi - lo))
    wall = _classify_box_faces(pts, bfaces, lo, hi, tol)
    fo = owner[bfaces]
    same_hole = np.all(fo == fo[:, :1], axis=1) & (fo[:, 0] >= 0)
    names = [(wall_names or {}).get(w, w) for w in WALL_MARKERS[: 2 * d]]
    uniq_names: list[str] = []
    for n in names + [hole.marker for hole in holes]:
        if n not in uniq_names:
            uniq_names.append(n)
    mark = np.full(len(bfaces), -1, dtype=np.int64)
    for w in range(2 * d):
        mark[wall == w] = uniq_names.index(names[w])
    for k, hole in enumerate(holes):
        mark[same_hole & (fo[:, 0] == k) & (mark < 0)] = uniq_names.index(hole.marker)
    if np.any(mark < 0):
        bad = bfaces[np.flatnonzero(mark < 0)[0]]
        raise MeshGenerationError(
            f"{int(np.sum(mark < 0))} boundary faces belong to no wall or hole (first at {pts[bad].mean(axis=0)}); "
            "bodies may be too close to each other or to a wall for this mesh size"
        )
    if d == 2:
        for k, hole in enumerate(holes):
            n_edges = int(np.sum(mark == uniq_names.index(hole.marker)))
            if n_edges != len(hole_pts[k]):
                raise MeshGenerationError(
                    f"hole {hole.marker!r} boundary has {n_edges} edges, expected {len(hole_pts[k])}"
                )
    return _finalize_markers(pts, simplices, bfaces, mark, uniq_names)


def circle_points(center: Sequence[float], radius: float, h: float, n_min: int = 8) -> np.ndarray:
    n = max(n_min, math.ceil(2 * math.pi * radius / h))
    t = 2 * math.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def sphere_points(center: Sequence[float], radius: float, h: float, n_min: int = 20) -> np.ndarray:
    """Fibonacci-lattice samples on a sphere at spacing about ``h``."""
    n = max(n_min, math.ceil(4 * math.pi * radius**2 / (0.9 * h * h)))
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    phi = math.pi * (1 + 5**0.5) * k
    rxy = np.sqrt(1 - z * z)
    u = np.column_stack([rxy * np.cos(phi), rxy * np.sin(phi), z])
    return np.asarray(center, dtype=float) + radius * u


def generate_disks_in_box(
    lo: Sequence[float],
    hi: Sequence[float],
    h: float,
    centers: Sequence[Sequence[float]],
    radii: Sequence[float],
    markers: Sequence[str] | None = None,
    *,
    seed: int = 0,
) -> SimplicialMesh:
    """Box with circular (2D) or spherical (3D) holes; markers default to ``body{k}``."""
    d = len(lo)
    markers = list(markers) if markers is not None else [f"body{k}" for k in range(len(centers))]
    holes = []
    for c, r, m in zip(centers, radii, markers):
        c = np.asarray(c, dtype=float)
        surf = circle_points(c, r, h) if d == 2 else sphere_points(c, r, h)
        holes.append(Hole(m, surf, _ball_inside(c, r)))
    return generate_domain_with_holes(lo, hi, h, holes, seed=seed)


def _ball_inside(c: np.ndarray, r: float):
    def inside(p: np.ndarray, pad: float) -> np.ndarray:
        return np.linalg.norm(p - c, axis=1) < r + pad

    return inside


def generate_ball(radius: float, h: float, dim: int = 3, *, seed: int = 0) -> SimplicialMesh:
    """Solid disk/ball mesh (Delaunay of surface and jittered interior points), marker ``"surface"``."""
    from scipy.spatial import Delaunay

    rng = np.random.default_rng(seed)
    origin = np.zeros(dim)
    surf = circle_points(origin, radius, h) if dim == 2 else sphere_points(origin, radius, h)
    axes = [np.arange(-radius, radius + h, h)] * dim
    g = np.meshgrid(*axes, indexing="ij")
    inner = np.column_stack([x.reshape(-1) for x in g])
    inner = inner + rng.uniform(-0.15, 0.15, inner.shape) * h
    inner = inner[np.linalg.norm(inner, axis=1) < radius - 0.5 * h]
    pts = np.concatenate([surf, inner])
    tri = Delaunay(pts)
    simplices = tri.simplices.astype(np.int64)
    vol = simplex_volumes(pts, simplices)
    simplices = _orient_positive(pts, simplices[vol > 1e-9 * h**dim])
    uniq, counts, _, _, _ = _face_counts(simplices)
    bfaces = uniq[counts == 1]
    return SimplicialMesh(pts, simplices, bfaces, np.zeros(len(bfaces), np.int64), ("surface",))
