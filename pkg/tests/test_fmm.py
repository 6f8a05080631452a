from __future__ import annotations

import math
import threading

import numpy as np
import pytest

from fmcollide.fmm import (
    DistanceField,
    band_statistics,
    fast_march,
    field_to_csv,
    march_many,
    narrow_band_fast_march,
)
from fmcollide.mesh import MeshError, SimplicialMesh, boundary_vertices, generate_annulus, generate_box
from oracles import edge_graph_distance, random_square_mesh


@pytest.fixture(scope="module")
def annulus() -> SimplicialMesh:
    return generate_annulus(0.1, 2.0, 0.04)


def test_seed_vertices_zero(annulus):
    f = fast_march(annulus, "inner")
    seeds = boundary_vertices(annulus, "inner")
    assert np.all(f.values[seeds] == 0.0)
    assert f.unbounded and not f.warnings


def test_outer_boundary_value(annulus):
    f = fast_march(annulus, "inner")
    outer = boundary_vertices(annulus, "outer")
    assert np.all(np.abs(f.values[outer] - 1.9) <= 2 * 0.04)


def test_square_against_dijkstra():
    m = generate_box((0, 0), (1, 1), 1 / 19)
    f = fast_march(m, "wall_xlo")
    seeds = boundary_vertices(m, "wall_xlo")
    dij = edge_graph_distance(m, seeds)
    assert np.all(f.values <= dij + 1e-10)
    assert np.all(f.values[seeds] == dij[seeds])
    # planar front on a structured mesh is reproduced exactly
    assert np.allclose(f.values, m.vertices[:, 0], atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_oracle_sandwich_random_mesh(seed):
    m = random_square_mesh(12, np.random.default_rng(seed))
    f = fast_march(m, "left")
    dij = edge_graph_distance(m, boundary_vertices(m, "left"))
    exact = m.vertices[:, 0]
    assert np.all(f.values <= dij + 1e-10)
    assert np.all(f.values >= exact - 1e-9)


def test_causality(annulus):
    f = fast_march(annulus, "inner")
    popped = f.values[f.order]
    assert len(f.order) == annulus.vertex_count
    assert np.all(np.diff(popped) >= 0)


def test_triangle_inequality_on_edges(annulus):
    f = narrow_band_fast_march(annulus, "inner", 0.5)
    e = annulus.edges
    band = f.in_band[e].all(axis=1)
    length = np.linalg.norm(annulus.vertices[e[:, 0]] - annulus.vertices[e[:, 1]], axis=1)
    jump = np.abs(f.values[e[:, 0]] - f.values[e[:, 1]])
    assert np.all(jump[band] <= length[band] + 1e-12)


def test_narrow_band_full_coverage_is_exact(annulus):
    full = fast_march(annulus, "inner")
    nb = narrow_band_fast_march(annulus, "inner", 5.0)
    assert np.array_equal(full.values, nb.values)


@pytest.mark.parametrize("d_max", [0.0625, 0.25, 1.0])
def test_narrow_band_consistency(annulus, d_max):
    full = fast_march(annulus, "inner")
    nb = narrow_band_fast_march(annulus, "inner", d_max)
    both = (full.values < d_max) & (nb.values < d_max)
    assert np.array_equal(full.values[both], nb.values[both])
    # dichotomy: computed values near the band, delta elsewhere
    assert np.all((nb.values <= d_max + 2 * 0.04) | (nb.values == nb.delta))
    assert nb.delta == d_max
    assert np.all(nb.values[~nb.in_band] == nb.delta)
    assert np.all((nb.values >= 0) & (nb.values <= nb.delta))


def test_custom_delta(annulus):
    nb = narrow_band_fast_march(annulus, "inner", 0.25, delta=10.0)
    assert nb.delta == 10.0 and np.all(nb.values[~nb.in_band] == 10.0)


@pytest.mark.parametrize("d_max,delta", [(0.0, None), (-1.0, None), (0.5, 0.4)])
def test_narrow_band_bad_arguments(annulus, d_max, delta):
    with pytest.raises(ValueError):
        narrow_band_fast_march(annulus, "inner", d_max, delta)


def test_unknown_marker(annulus):
    with pytest.raises(MeshError, match="known markers"):
        fast_march(annulus, "nope")


def test_band_statistics(annulus):
    full = fast_march(annulus, "inner")
    assert band_statistics(full, annulus) == (annulus.element_count, 1.0)
    prev = annulus.element_count
    for d in (1.0, 0.5, 0.25, 0.125):
        f = narrow_band_fast_march(annulus, "inner", d)
        e_b, ratio = band_statistics(f, annulus)
        assert e_b == f.band_element_count
        assert e_b <= prev
        assert ratio == annulus.element_count / e_b
        prev = e_b


def test_empty_band_statistics(annulus):
    n = annulus.vertex_count
    empty = DistanceField(np.full(n, 1.0), "x", 1.0, 1.0, 0, np.zeros(n, dtype=bool), np.zeros(0, dtype=np.int64))
    assert band_statistics(empty, annulus) == (0, math.inf)


def test_unreachable_component_warns():
    v = np.array([[0, 0], [1, 0], [0, 1], [3, 0], [4, 0], [3, 1]], dtype=float)
    s = np.array([[0, 1, 2], [3, 4, 5]])
    facets = np.array([[0, 1], [3, 4]])
    m = SimplicialMesh(v, s, facets, np.array([0, 1]), ("a", "b"))
    f = fast_march(m, "a")
    assert f.warnings and "unreachable" in f.warnings[0]
    assert np.all(f.values[3:] == f.delta)
    assert np.all(~f.in_band[3:])


def test_determinism(annulus):
    a = narrow_band_fast_march(annulus, "inner", 0.5)
    b = narrow_band_fast_march(annulus, "inner", 0.5)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.order, b.order)


def test_march_many_independent_of_workers():
    m = generate_box((0, 0), (1, 1), 0.02)
    markers = ["wall_xlo", "wall_xhi", ("wall_ylo", "wall_yhi")]
    serial = march_many(m, markers, 0.3, workers=1)
    pooled = march_many(m, markers, 0.3, workers=3)
    for a, b in zip(serial, pooled):
        assert np.array_equal(a.values, b.values)
    assert pooled[2].seed_marker == "wall_ylo+wall_yhi"


def test_concurrent_marchers_share_mesh():
    m = generate_box((0, 0), (1, 1), 0.02)
    ref = fast_march(m, "wall_ylo").values
    out = [None] * 4

    def work(k):
        out[k] = fast_march(m, "wall_ylo").values

    threads = [threading.Thread(target=work, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(np.array_equal(ref, o) for o in out)


def test_3d_box_planar_front():
    m = generate_box((0, 0, 0), (1, 1, 1), 0.125)
    f = fast_march(m, "wall_zlo")
    dij = edge_graph_distance(m, boundary_vertices(m, "wall_zlo"))
    assert np.all(f.values <= dij + 1e-10)
    assert np.max(np.abs(f.values - m.vertices[:, 2])) < 0.125


def test_field_csv():
    m = generate_box((0, 0), (1, 1), 0.5)
    text = field_to_csv(fast_march(m, "wall_xlo"), m)
    lines = text.splitlines()
    assert lines[0] == "vertex_id,x,y,value"
    assert len(lines) == 1 + m.vertex_count
