import heapq
import math

import numpy as np
import pytest

from geoloop import (Ellipsoid, NonFiniteState, RoundSphere, Tangent,
                     distance, minimal_geodesic, trace_geodesic, validate_diameter)
from geoloop.manifolds import ChartMetric, ParamSurface, flat_chart, manifold_from_json, sphere_chart


def test_trace_antipodal_great_circle(sphere, north):
    c = trace_geodesic(sphere, Tangent(north, np.array([1.0, 0.0, 0.0])), math.pi)
    assert np.linalg.norm(c.end - np.array([0.0, 0.0, -1.0])) < 1e-6
    assert abs(c.length - math.pi) < 1e-9


def test_trace_zero_arc_is_constant(sphere, north):
    c = trace_geodesic(sphere, Tangent(north, np.array([1.0, 0.0, 0.0])), 0.0)
    assert c.is_constant
    assert np.array_equal(c.start, north)


def test_trace_torus_straight_line(torus):
    c = trace_geodesic(torus, Tangent(np.array([0.2, 0.2]), np.array([1.0, 0.0])), 0.5)
    assert np.allclose(c.end, [0.7, 0.2], atol=1e-12)


def test_trace_speed_constancy(sphere, torus, ellipsoid):
    for m, base, d in [
        (sphere, np.array([0.0, 0.0, 1.0]), np.array([1.0, 1.0, 0.0])),
        (torus, np.array([0.3, 0.4]), np.array([1.0, 2.0])),
        (ellipsoid, np.array([0.0, 0.0, 1.2]), np.array([1.0, 0.5, 0.0])),
    ]:
        u = m.project_tangent(base, d)
        u = u / np.linalg.norm(u)
        c = trace_geodesic(m, Tangent(base, u), 1.0)
        gaps = c.seg_lengths
        assert np.all(np.abs(gaps - gaps.mean()) < 1e-6 * gaps.mean() + 1e-9)


def test_minimal_geodesic_antipodal(sphere, north):
    g = minimal_geodesic(sphere, north, -north)
    assert abs(g.length - math.pi) < 1e-4


def test_minimal_geodesic_quarter(sphere):
    g = minimal_geodesic(sphere, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    assert abs(g.length - math.pi / 2) < 1e-6


def test_sphere_arccos_oracle_100_pairs(sphere):
    rng = np.random.default_rng(11)
    for _ in range(100):
        p, q = sphere.random_point(rng), sphere.random_point(rng)
        want = math.acos(min(1.0, max(-1.0, float(np.dot(p, q)))))
        g = minimal_geodesic(sphere, p, q)
        assert abs(g.length - want) < 1e-6


def test_torus_deck_translate(torus):
    g = minimal_geodesic(torus, np.array([0.1, 0.0]), np.array([0.9, 0.0]))
    assert abs(g.length - 0.2) < 1e-6


def test_distance_identities(sphere, north):
    assert distance(sphere, north, north) == 0.0
    assert abs(distance(sphere, north, -north) - math.pi) < 1e-9


def test_symmetry_sphere_torus(sphere, torus):
    rng = np.random.default_rng(5)
    for m in (sphere, torus):
        for _ in range(100):
            p, q = m.random_point(rng), m.random_point(rng)
            assert abs(m.distance(p, q) - m.distance(q, p)) < 1e-8


def test_symmetry_ellipsoid(ellipsoid):
    # The solver canonically orders its arguments, so symmetry is structural;
    # a few solves confirm the wiring.
    rng = np.random.default_rng(6)
    for _ in range(4):
        p, q = ellipsoid.random_point(rng), ellipsoid.random_point(rng)
        assert ellipsoid.distance(p, q) == ellipsoid.distance(q, p)


def test_triangle_inequality(sphere, torus):
    rng = np.random.default_rng(8)
    for m in (sphere, torus):
        for _ in range(100):
            p, q, r = (m.random_point(rng) for _ in range(3))
            assert m.distance(p, r) <= m.distance(p, q) + m.distance(q, r) + 1e-6


def _ellipsoid_graph_oracle(e: Ellipsoid, p, q, n_u=60, n_v=120):
    """Dijkstra over a latitude-longitude grid with a 16-point stencil.

    Edges are weighted by local surface arcs, so every graph path is a real
    path on the ellipsoid and the oracle can only overshoot the distance.
    """
    a1, a2, a3 = e.semi_axes
    us = np.linspace(1e-3, math.pi - 1e-3, n_u)
    vs = np.linspace(0.0, 2 * math.pi, n_v, endpoint=False)
    grid = np.empty((n_u, n_v, 3))
    for i, u in enumerate(us):
        grid[i, :, 0] = a1 * math.sin(u) * np.cos(vs)
        grid[i, :, 1] = a2 * math.sin(u) * np.sin(vs)
        grid[i, :, 2] = a3 * math.cos(u)
    flat = grid.reshape(-1, 3)
    n_flat = flat.shape[0]
    pts = np.vstack([flat, p, q])
    src, dst = n_flat, n_flat + 1

    stencil = [(0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1),
               (1, 2), (1, -2), (-1, 2), (-1, -2), (2, 1), (2, -1), (-2, 1), (-2, -1)]
    heads, tails = [], []
    for i in range(n_u):
        for j in range(n_v):
            idx = i * n_v + j
            for di, dj in stencil:
                ii, jj = i + di, (j + dj) % n_v
                if 0 <= ii < n_u:
                    heads.append(idx)
                    tails.append(ii * n_v + jj)
    for j in range(n_v):
        heads += [src, j]
        tails += [j, src]
        heads += [dst, (n_u - 1) * n_v + j]
        tails += [(n_u - 1) * n_v + j, dst]
    heads = np.asarray(heads)
    tails = np.asarray(tails)
    weights = e.pair_lengths(pts[heads], pts[tails])

    adj: list[list[tuple[int, float]]] = [[] for _ in range(n_flat + 2)]
    for h, t, w in zip(heads, tails, weights):
        adj[int(h)].append((int(t), float(w)))
    dist = np.full(n_flat + 2, np.inf)
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d0, i0 = heapq.heappop(heap)
        if d0 > dist[i0] + 1e-15:
            continue
        if i0 == dst:
            break
        for i1, w in adj[i0]:
            nd = d0 + w
            if nd < dist[i1]:
                dist[i1] = nd
                heapq.heappush(heap, (nd, i1))
    return float(dist[dst])


@pytest.mark.slow
def test_ellipsoid_pole_distance_graph_oracle(ellipsoid):
    p = np.array([0.0, 0.0, 1.2])
    q = np.array([0.0, 0.0, -1.2])
    solver = ellipsoid.distance(p, q)
    oracle = _ellipsoid_graph_oracle(ellipsoid, p, q)
    assert solver <= oracle + 1e-6
    assert abs(solver - oracle) < 0.01 * oracle
    scipy = pytest.importorskip("scipy.special")
    analytic = 2 * 1.2 * scipy.ellipe(1 - 1 / 1.44)
    assert abs(solver - analytic) < 1e-4


def test_ellipsoid_minimal_geodesic_consistency(ellipsoid):
    rng = np.random.default_rng(9)
    p, q = ellipsoid.random_point(rng), ellipsoid.random_point(rng)
    d = ellipsoid.distance(p, q)
    g = minimal_geodesic(ellipsoid, p, q)
    assert abs(g.length - d) / d < 1e-4
    assert np.array_equal(g.start, p) and np.array_equal(g.end, q)


def test_chart_sphere_matches_round_sphere(sphere):
    cs = sphere_chart()
    rng = np.random.default_rng(3)
    for _ in range(4):
        p = cs.random_point(rng)
        q = cs.random_point(rng)
        q = p + 0.08 * (q - p) / np.linalg.norm(q - p)
        xyz = lambda x: np.array([math.sin(x[0]) * math.cos(x[1]),
                                  math.sin(x[0]) * math.sin(x[1]), math.cos(x[0])])
        assert abs(cs.local_distance(p, q) - sphere.distance(xyz(p), xyz(q))) < 1e-8


def test_flat_chart_straight_lines():
    fc = flat_chart()
    assert abs(fc.distance(np.array([0.0, 0.0]), np.array([1.0, 1.0])) - math.sqrt(2)) < 1e-9


def test_bad_metric_raises_nonfinite():
    bad = ChartMetric(E=lambda u, v: 1.0, F=lambda u, v: 0.0,
                      G=lambda u, v: -1.0, u_range=(-2, 2), v_range=(-2, 2), name="bad")
    surf = ParamSurface(bad, diameter_bound=4.0)
    with pytest.raises((NonFiniteState, ValueError)):
        surf.exp_trace(np.array([0.0, 0.0]), np.array([0.3, 1.0]), 1.0, step=1e-2)


def test_point_validation(sphere, torus, ellipsoid):
    with pytest.raises(ValueError):
        sphere.canonical_point([1.0, 1.0, 1.0])
    assert np.allclose(torus.canonical_point([1.3, -0.25]), [0.3, 0.75])
    with pytest.raises(ValueError):
        ellipsoid.canonical_point([1.0, 1.0, 1.0])
    s = RoundSphere(2, 1.0)
    assert s.ricci_floor == 1.0
    assert RoundSphere(3, 1.0).ricci_floor == 2.0


def test_diameter_validation(sphere, torus):
    rng = np.random.default_rng(4)
    assert validate_diameter(sphere, rng, samples=40) <= math.pi + 1e-9
    assert validate_diameter(torus, rng, samples=40) <= torus.diameter_bound + 1e-9


def test_manifold_json_roundtrip(sphere, torus, ellipsoid):
    for m in (sphere, torus, ellipsoid, sphere_chart()):
        m2 = manifold_from_json(m.to_json())
        assert m2.kind == m.kind
        assert abs(m2.diameter_bound - m.diameter_bound) < 1e-12


def test_tangent_orthogonality(sphere, ellipsoid):
    rng = np.random.default_rng(2)
    for m in (sphere, ellipsoid):
        p = m.random_point(rng)
        t = m.random_tangent(p, rng)
        if m is sphere:
            assert abs(np.dot(t.dir, p)) < 1e-9
        else:
            assert abs(np.dot(t.dir, m.normal(p))) < 1e-9
