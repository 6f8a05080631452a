"""Fast marching distance fields on simplicial meshes, with narrow-band truncation.

The marcher solves |grad D| = 1 from the vertices of a marked boundary.
Each accepted vertex updates its not-yet-accepted neighbours through every
incident simplex: the local update minimises over the upwind face spanned
by accepted vertices (full face, sub-faces and edges), keeping only
solutions whose characteristic enters through that face.  Marching stops
once the heap minimum exceeds ``d_max``; every vertex not accepted by then
receives the far-field value ``delta``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np

from .mesh import MeshError, SimplicialMesh

__all__ = [
    "DistanceField",
    "fast_march",
    "narrow_band_fast_march",
    "band_statistics",
    "march_many",
    "field_to_csv",
]

log = logging.getLogger(__name__)

_FAR, _TRIAL, _ACCEPTED = 0, 1, 2


@dataclass(eq=False)
class DistanceField:
    """Per-vertex distance from ``seed_marker`` with band truncation metadata.

    ``d_max`` is ``math.inf`` for an unbounded march.  ``in_band`` flags the
    vertices whose value was actually computed; all others hold ``delta``.
    ``order`` is the acceptance sequence of the marcher.
    """

    values: np.ndarray
    seed_marker: str
    d_max: float
    delta: float
    band_element_count: int
    in_band: np.ndarray
    order: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.d_max)


# --------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True, nogil=True, inline="always")
def _less(k1, i1, k2, i2):
    return k1 < k2 or (k1 == k2 and i1 < i2)


@numba.njit(cache=True, nogil=True)
def _push(keys, ids, size, key, vid):
    if size == keys.shape[0]:
        nk = np.empty(2 * size, dtype=keys.dtype)
        ni = np.empty(2 * size, dtype=ids.dtype)
        nk[:size] = keys
        ni[:size] = ids
        keys, ids = nk, ni
    pos = size
    keys[pos] = key
    ids[pos] = vid
    while pos > 0:
        parent = (pos - 1) >> 1
        if _less(keys[pos], ids[pos], keys[parent], ids[parent]):
            keys[pos], keys[parent] = keys[parent], keys[pos]
            ids[pos], ids[parent] = ids[parent], ids[pos]
            pos = parent
        else:
            break
    return keys, ids, size + 1


@numba.njit(cache=True, nogil=True)
def _pop(keys, ids, size):
    key = keys[0]
    vid = ids[0]
    size -= 1
    keys[0] = keys[size]
    ids[0] = ids[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and _less(keys[right], ids[right], keys[left], ids[left]):
            child = right
        if _less(keys[child], ids[child], keys[pos], ids[pos]):
            keys[pos], keys[child] = keys[child], keys[pos]
            ids[pos], ids[child] = ids[child], ids[pos]
            pos = child
        else:
            break
    return key, vid, size


@numba.njit(cache=True, nogil=True)
def _local_solve(x, pts, t, m):
    """Eikonal update of point ``x`` from ``m`` upwind points with values ``t``.

    Returns inf when the characteristic does not enter through the face or
    the solution would violate causality.
    """
    d = x.shape[0]
    v = np.empty((m, d))
    for i in range(m):
        for k in range(d):
            v[i, k] = pts[i, k] - x[k]
    if m == 1:
        s = 0.0
        for k in range(d):
            s += v[0, k] * v[0, k]
        return t[0] + math.sqrt(s)
    g = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            s = 0.0
            for k in range(d):
                s += v[i, k] * v[j, k]
            g[i, j] = s
    q = np.empty((m, m))
    if m == 2:
        det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        if det <= 1e-12 * g[0, 0] * g[1, 1]:
            return np.inf
        q[0, 0] = g[1, 1] / det
        q[1, 1] = g[0, 0] / det
        q[0, 1] = -g[0, 1] / det
        q[1, 0] = -g[1, 0] / det
    else:
        c00 = g[1, 1] * g[2, 2] - g[1, 2] * g[2, 1]
        c01 = g[1, 2] * g[2, 0] - g[1, 0] * g[2, 2]
        c02 = g[1, 0] * g[2, 1] - g[1, 1] * g[2, 0]
        det = g[0, 0] * c00 + g[0, 1] * c01 + g[0, 2] * c02
        if det <= 1e-12 * g[0, 0] * g[1, 1] * g[2, 2]:
            return np.inf
        q[0, 0] = c00 / det
        q[1, 0] = c01 / det
        q[2, 0] = c02 / det
        q[0, 1] = (g[0, 2] * g[2, 1] - g[0, 1] * g[2, 2]) / det
        q[1, 1] = (g[0, 0] * g[2, 2] - g[0, 2] * g[2, 0]) / det
        q[2, 1] = (g[0, 1] * g[2, 0] - g[0, 0] * g[2, 1]) / det
        q[0, 2] = (g[0, 1] * g[1, 2] - g[0, 2] * g[1, 1]) / det
        q[1, 2] = (g[0, 2] * g[1, 0] - g[0, 0] * g[1, 2]) / det
        q[2, 2] = (g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]) / det
    a = 0.0
    b = 0.0
    c = -1.0
    for i in range(m):
        for j in range(m):
            a += q[i, j]
            b += q[i, j] * t[j]
            c += t[i] * q[i, j] * t[j]
    if a <= 0.0:
        return np.inf
    disc = b * b - a * c
    if disc < 0.0:
        return np.inf
    T = (b + math.sqrt(disc)) / a
    tmax = t[0]
    for i in range(1, m):
        tmax = max(tmax, t[i])
    if T < tmax:
        return np.inf
    # characteristic direction must be a nonnegative combination of the edges
    scale = 0.0
    for i in range(m):
        for j in range(m):
            scale = max(scale, abs(q[i, j]))
    for i in range(m):
        mu = 0.0
        for j in range(m):
            mu += q[i, j] * (t[j] - T)
        if mu > 1e-12 * scale * (abs(T) + 1.0):
            return np.inf
    return T


@numba.njit(cache=True, nogil=True)
def _march(vertices, simplices, v2s_ptr, v2s_idx, seeds, d_max):
    n = vertices.shape[0]
    d = vertices.shape[1]
    k = simplices.shape[1]
    tent = np.full(n, np.inf)
    state = np.zeros(n, dtype=np.int8)
    order = np.empty(n, dtype=np.int64)
    count = 0
    cap = max(16, 4 * seeds.shape[0])
    keys = np.empty(cap, dtype=np.float64)
    ids = np.empty(cap, dtype=np.int64)
    size = 0
    for s in seeds:
        if tent[s] > 0.0:
            tent[s] = 0.0
            state[s] = 1
            keys, ids, size = _push(keys, ids, size, 0.0, s)
    known = np.empty(k, dtype=np.int64)
    pts = np.empty((k, d))
    tv = np.empty(k)
    while size > 0:
        key, u, size = _pop(keys, ids, size)
        if state[u] == 2 or key > tent[u]:
            continue
        if key > d_max:
            break
        state[u] = 2
        order[count] = u
        count += 1
        for p in range(v2s_ptr[u], v2s_ptr[u + 1]):
            sid = v2s_idx[p]
            for a in range(k):
                v = simplices[sid, a]
                if state[v] == 2:
                    continue
                # accepted vertices of this simplex other than u and v
                nk = 0
                for b in range(k):
                    w = simplices[sid, b]
                    if w != v and w != u and state[w] == 2:
                        known[nk] = w
                        nk += 1
                best = tent[v]
                x = vertices[v]
                for mask in range(1 << nk):
                    m = 1
                    for c in range(d):
                        pts[0, c] = vertices[u, c]
                    tv[0] = tent[u]
                    for b in range(nk):
                        if mask & (1 << b):
                            w = known[b]
                            for c in range(d):
                                pts[m, c] = vertices[w, c]
                            tv[m] = tent[w]
                            m += 1
                    T = _local_solve(x, pts, tv, m)
                    if T < best:
                        best = T
                if best < tent[v]:
                    tent[v] = best
                    state[v] = 1
                    keys, ids, size = _push(keys, ids, size, best, v)
    return tent, state, order[:count]


# --------------------------------------------------------------------------
# public API


def _seed_vertices(mesh: SimplicialMesh, seed_marker: str | Iterable[str]) -> np.ndarray:
    seeds = mesh.boundary_vertices(seed_marker)
    if len(seeds) == 0:
        raise MeshError(f"marker {seed_marker!r} has no vertices")
    return seeds.astype(np.int64)


def _marker_label(seed_marker: str | Iterable[str]) -> str:
    return seed_marker if isinstance(seed_marker, str) else "+".join(seed_marker)


def _run(mesh: SimplicialMesh, seed_marker, d_max: float, delta: float | None) -> DistanceField:
    seeds = _seed_vertices(mesh, seed_marker)
    ptr, idx = mesh.vertex_simplices
    tent, state, order = _march(mesh.vertices, mesh.simplices, ptr, idx, seeds, float(d_max))
    accepted = state == _ACCEPTED
    warnings: list[str] = []
    if math.isinf(d_max):
        if not accepted.all():
            msg = (
                f"{int((~accepted).sum())} vertices unreachable from {_marker_label(seed_marker)!r}; "
                "assigned the far-field value"
            )
            log.warning(msg)
            warnings.append(msg)
        fill = float(tent[accepted].max()) if delta is None else float(delta)
    else:
        fill = float(d_max) if delta is None else float(delta)
    values = np.where(accepted, tent, fill)
    e_b = int(np.count_nonzero(accepted[mesh.simplices].any(axis=1)))
    return DistanceField(
        values=values,
        seed_marker=_marker_label(seed_marker),
        d_max=float(d_max),
        delta=fill,
        band_element_count=e_b,
        in_band=accepted,
        order=order,
        warnings=warnings,
    )


def fast_march(mesh: SimplicialMesh, seed_marker: str | Iterable[str]) -> DistanceField:
    """First-arrival distance from the marked boundary to every vertex."""
    return _run(mesh, seed_marker, math.inf, None)


def narrow_band_fast_march(
    mesh: SimplicialMesh,
    seed_marker: str | Iterable[str],
    d_max: float,
    delta: float | None = None,
) -> DistanceField:
    """Distance field computed only where it does not exceed ``d_max``.

    Vertices beyond the band get ``delta`` (defaults to ``d_max``).
    """
    if not d_max > 0:
        raise ValueError(f"d_max must be positive, got {d_max}")
    if delta is not None and delta < d_max:
        raise ValueError(f"delta ({delta}) must be >= d_max ({d_max})")
    return _run(mesh, seed_marker, float(d_max), delta)


def band_statistics(field: DistanceField, mesh: SimplicialMesh) -> tuple[int, float]:
    """Band element count and the element ratio total / E_b (inf if the band is empty)."""
    e_b = int(np.count_nonzero(field.in_band[mesh.simplices].any(axis=1)))
    ratio = mesh.element_count / e_b if e_b else math.inf
    return e_b, ratio


def march_many(
    mesh: SimplicialMesh,
    markers: Sequence[str | Sequence[str]],
    d_max: float,
    delta: float | None = None,
    workers: int = 1,
) -> list[DistanceField]:
    """Narrow-band fields for several seed markers, optionally on a thread pool.

    The kernel releases the GIL, so fields are computed concurrently; each
    field depends only on its own marker, so results do not depend on the
    number of workers.
    """
    if workers <= 1 or len(markers) <= 1:
        return [narrow_band_fast_march(mesh, m, d_max, delta) for m in markers]
    mesh.vertex_simplices  # build shared adjacency before fanning out
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda m: narrow_band_fast_march(mesh, m, d_max, delta), markers))


def field_to_csv(field: DistanceField, mesh: SimplicialMesh) -> str:
    d = mesh.dim
    head = "vertex_id,x,y" + (",z" if d == 3 else "") + ",value"
    rows = [head]
    for i, (p, val) in enumerate(zip(mesh.vertices, field.values)):
        rows.append(f"{i}," + ",".join(repr(float(c)) for c in p) + f",{float(val)!r}")
    return "\n".join(rows) + "\n"
