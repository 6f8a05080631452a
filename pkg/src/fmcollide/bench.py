"""Benchmarks: narrow-band fast marching and the parallel collision pipeline."""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bodies import RigidBody, Sphere, make_body
from .collision import CollisionParams, detect_general, preprocess, total_forces
from .fmm import band_statistics, fast_march, narrow_band_fast_march
from .mesh import Box, SimplicialMesh, generate_annulus, generate_disks_in_box

__all__ = [
    "NARROWBAND_DMAX",
    "NARROWBAND_NOTES",
    "DETECTION_NOTES",
    "NarrowbandRow",
    "narrowband_bench",
    "annulus_narrowband_bench",
    "Lattice",
    "lattice_for",
    "lattice_bodies",
    "expected_pair_counts",
    "DetectionRow",
    "detection_bench",
    "format_table",
    "to_csv",
]

NARROWBAND_DMAX = (1.9, 1.0, 0.5, 0.25, 0.125, 0.0625)

NARROWBAND_NOTES = (
    "E_b counts elements with at least one vertex inside the band.",
    "Times are collision/FMM kernel times only; the share of a full fluid solve "
    "(FEM assembly and solution) is out of scope.",
)
DETECTION_NOTES = (
    "Wall time covers preprocessing, narrow-band detection and force evaluation on a static mesh.",
    "Fractions of a coupled fluid-solver run are out of scope.",
)


def _median_time(fn: Callable[[], object], repetitions: int) -> float:
    fn()  # warm-up (also triggers JIT compilation)
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


# --------------------------------------------------------------------------
# narrow band


@dataclass
class NarrowbandRow:
    d_max: float
    e_b: int
    ratio: float
    time: float
    speedup: float


def narrowband_bench(
    mesh: SimplicialMesh,
    seed_marker: str,
    d_max_values: Sequence[float],
    repetitions: int = 5,
) -> list[NarrowbandRow]:
    """Element ratio and median wall time of the banded march for each ``d_max``.

    ``d_max_values`` must be positive and strictly decreasing, and the first
    value must cover the whole mesh up to the first-order accuracy of the
    march (``2h``); speedups are relative to that row.
    """
    values = [float(x) for x in d_max_values]
    if not values:
        raise ValueError("need at least one d_max value")
    if any(not (x > 0) for x in values):
        raise ValueError(f"d_max values must be positive, got {values}")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ValueError(f"d_max values must be strictly decreasing, got {values}")
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    full = fast_march(mesh, seed_marker)
    far = float(full.values.max())
    if values[0] < far - 2 * mesh.h:
        raise ValueError(f"first d_max ({values[0]}) does not cover the domain (max distance {far:.6g})")
    rows = []
    for d_max in values:
        fld = narrow_band_fast_march(mesh, seed_marker, d_max)
        e_b, ratio = band_statistics(fld, mesh)
        t = _median_time(lambda d=d_max: narrow_band_fast_march(mesh, seed_marker, d), repetitions)
        rows.append(NarrowbandRow(d_max, e_b, ratio, t, math.nan))
    for r in rows:
        r.speedup = rows[0].time / r.time
    return rows


def annulus_narrowband_bench(
    r_inner: float = 0.1,
    r_outer: float = 2.0,
    h: float = 0.01,
    d_max_values: Sequence[float] = NARROWBAND_DMAX,
    repetitions: int = 5,
) -> tuple[SimplicialMesh, list[NarrowbandRow]]:
    mesh = generate_annulus(r_inner, r_outer, h)
    return mesh, narrowband_bench(mesh, "inner", d_max_values, repetitions)


# --------------------------------------------------------------------------
# detection lattices


@dataclass(frozen=True)
class Lattice:
    """Disks on a rectangular lattice with per-gap spacing.

    Neighbouring disks in a row (column) are ``close`` apart where the gap
    index is listed in ``close_x`` (``close_y``) and ``far`` apart otherwise;
    the outer row of disks sits ``wall_gap`` from the walls.  Gaps are
    surface-to-surface distances.
    """

    count: int
    cols: int
    rows: int
    close_x: tuple[int, ...] = ()
    close_y: tuple[int, ...] = ()
    radius: float = 1.0
    close: float = 0.2
    far: float = 1.2
    wall_gap: float = 0.2

    def axis_centers(self, n: int, close: Sequence[int]) -> np.ndarray:
        x = [self.wall_gap + self.radius]
        for g in range(n - 1):
            x.append(x[-1] + 2 * self.radius + (self.close if g in close else self.far))
        return np.asarray(x)

    def geometry(self) -> tuple[Box, np.ndarray]:
        xs = self.axis_centers(self.cols, self.close_x)
        ys = self.axis_centers(self.rows, self.close_y)
        centers = np.array([[xs[k % self.cols], ys[k // self.cols]] for k in range(self.count)])
        hi = (xs[-1] + self.radius + self.wall_gap, ys[-1] + self.radius + self.wall_gap)
        return Box((0.0, 0.0), hi), centers


# Lattices whose pair counts match the published body-body / body-wall table
_TABLE = {
    1: Lattice(1, 1, 1),
    25: Lattice(25, 5, 5),
    49: Lattice(49, 7, 7, close_x=(0, 1, 3, 4)),
    81: Lattice(81, 9, 9, close_x=tuple(range(8))),
    100: Lattice(100, 10, 10, close_x=tuple(range(9)), close_y=(4,)),
}


def lattice_for(count: int) -> Lattice:
    """Lattice with ``count`` disks; table sizes use their reference spacing."""
    if count < 1:
        raise ValueError(f"body count must be positive, got {count}")
    if count in _TABLE:
        return _TABLE[count]
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    return Lattice(count, cols, rows, close_x=tuple(range(cols - 1)))


def lattice_bodies(lat: Lattice) -> tuple[Box, list[RigidBody]]:
    box, centers = lat.geometry()
    bodies = [make_body(k, Sphere(lat.radius), 1.0, c) for k, c in enumerate(centers)]
    return box, bodies


def expected_pair_counts(lat: Lattice, rho: float) -> tuple[int, int]:
    """Exact (body-body, body-wall) counts from the lattice geometry.

    A body with several walls in range still counts once, matching the
    one-wall-pair-per-body rule of meshed detection.
    """
    box, centers = lat.geometry()
    r = lat.radius
    diff = centers[:, None, :] - centers[None, :, :]
    gap = np.linalg.norm(diff, axis=-1) - 2 * r
    iu = np.triu_indices(len(centers), 1)
    bb = int(np.count_nonzero(gap[iu] <= rho))
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    wall = np.minimum(centers - lo, hi - centers).min(axis=1) - r
    bw = int(np.count_nonzero(wall <= rho))
    return bb, bw


@dataclass
class DetectionRow:
    bodies: int
    body_body: int
    body_wall: int
    expected: tuple[int, int]
    times: dict[int, float] = field(default_factory=dict)

    def speedup(self, workers: int) -> float:
        base = self.times[min(self.times)]
        return base / self.times[workers]


def detection_bench(
    counts: Sequence[int] = (1, 25, 49, 81, 100),
    workers: Sequence[int] = (1, 2, 4),
    *,
    h: float = 0.1,
    rho: float = 0.4,
    iterations: int = 10,
    repetitions: int = 5,
) -> list[DetectionRow]:
    """Pair counts and wall time of the meshed collision pipeline on 2D lattices.

    Each timed sample runs ``iterations`` rounds of preprocessing, detection
    and force evaluation; the reported time is the median sample divided by
    ``iterations``.  The stiffness is huge so the forces are negligible.
    """
    workers = sorted(set(int(w) for w in workers))
    if not workers or workers[0] < 1:
        raise ValueError(f"worker counts must be positive, got {workers}")
    params = CollisionParams(rho=rho, eps=1e30, eps_f=1e30)
    rows = []
    for n in counts:
        lat = lattice_for(int(n))
        box, bodies = lattice_bodies(lat)
        mesh = generate_disks_in_box(box.lo, box.hi, h, [b.center for b in bodies], [lat.radius] * len(bodies),
                                     [b.marker for b in bodies])
        row = None
        for w in workers:

            def pipeline(w=w):
                pre = preprocess(bodies, mesh, "general")
                cmap = detect_general(pre, mesh, bodies, rho, d_max_factor=params.d_max_factor, workers=w)
                total_forces(cmap, pre, bodies, params)
                return cmap

            cmap = pipeline()
            if row is None:
                bb, bw = cmap.counts()
                row = DetectionRow(int(n), bb, bw, expected_pair_counts(lat, rho))

            def sample(pipeline=pipeline):
                for _ in range(iterations):
                    pipeline()

            row.times[w] = _median_time(sample, repetitions) / iterations
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# reporting


def _narrowband_table(rows: Sequence[NarrowbandRow]) -> tuple[list[str], list[list[str]]]:
    head = ["d_max", "E_b", "element_ratio", "time_s", "speedup"]
    body = [[f"{r.d_max:g}", str(r.e_b), f"{r.ratio:.2f}", f"{r.time:.6f}", f"{r.speedup:.2f}"] for r in rows]
    return head, body


def _detection_table(rows: Sequence[DetectionRow]) -> tuple[list[str], list[list[str]]]:
    workers = sorted(rows[0].times) if rows else []
    head = ["bodies", "body_body", "body_wall", "expected_bb", "expected_bw"]
    head += [f"time_np{w}_s" for w in workers] + [f"speedup_np{w}" for w in workers[1:]]
    body = []
    for r in rows:
        line = [str(r.bodies), str(r.body_body), str(r.body_wall), str(r.expected[0]), str(r.expected[1])]
        line += [f"{r.times[w]:.6f}" for w in workers] + [f"{r.speedup(w):.2f}" for w in workers[1:]]
        body.append(line)
    return head, body


def _table(rows) -> tuple[list[str], list[list[str]]]:
    if rows and isinstance(rows[0], DetectionRow):
        return _detection_table(rows)
    return _narrowband_table(rows)


def to_csv(rows) -> str:
    head, body = _table(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    w.writerows(body)
    return buf.getvalue()


def format_table(rows, title: str = "", notes: Sequence[str] = ()) -> str:
    head, body = _table(rows)
    widths = [max(len(c) for c in col) for col in zip(head, *body)]
    out = []
    if title:
        out.append(title)
    out.extend(f"# {n}" for n in notes)
    out.append("  ".join(h.rjust(w) for h, w in zip(head, widths)))
    out.append("  ".join("-" * w for w in widths))
    out.extend("  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in body)
    return "\n".join(out) + "\n"
