import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoloop import (EndpointMismatch, PLCurve, RangeError, concat, displacement,
                     length, minimal_geodesic, refine, reverse, subcurve)
from geoloop.curves import stitch


def random_curve(m, seed, n_way=4):
    rng = np.random.default_rng(seed)
    pts = [m.random_point(rng) for _ in range(n_way)]
    return PLCurve.through(m, pts)


def test_length_constant(sphere, north):
    assert length(PLCurve.constant(sphere, north)) == 0.0


def test_length_quarter_circle(sphere):
    g = minimal_geodesic(sphere, np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))
    assert abs(g.length - math.pi / 2) < 1e-6


def test_length_resummation_oracle(sphere):
    rng = np.random.default_rng(1)
    pts = [sphere.random_point(rng)]
    for _ in range(49):
        step = sphere.project_tangent(pts[-1], rng.standard_normal(3))
        step = 0.05 * step / np.linalg.norm(step)
        pts.append(sphere.project(pts[-1] + step))
    c = PLCurve(sphere, np.stack(pts))
    resum = sum(sphere.local_distance(a, b) for a, b in zip(pts[:-1], pts[1:]))
    assert abs(c.length - resum) < 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_reverse_involution(sphere, seed):
    c = random_curve(sphere, seed)
    assert np.array_equal(reverse(reverse(c)).points, c.points)
    assert reverse(c).length == c.length


def test_reverse_constant(sphere, north):
    c = PLCurve.constant(sphere, north)
    assert np.array_equal(reverse(c).points, c.points)


def test_concat_with_constant_keeps_length(sphere):
    c = random_curve(sphere, 3)
    const = PLCurve.constant(sphere, c.end)
    assert concat(c, const).length == c.length


def test_concat_half_circle(sphere):
    a = minimal_geodesic(sphere, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    b = minimal_geodesic(sphere, np.array([0.0, 1.0, 0.0]), np.array([-1.0, 0.0, 0.0]))
    assert abs(concat(a, b).length - math.pi) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_concat_additivity(torus, seed):
    rng = np.random.default_rng(seed)
    a = random_curve(torus, seed, 3)
    b = PLCurve.through(torus, [a.end, torus.random_point(rng)])
    assert abs(concat(a, b).length - (a.length + b.length)) < 1e-9


def test_concat_rejects_mismatch(sphere):
    a = random_curve(sphere, 1)
    b = random_curve(sphere, 2)
    if not np.array_equal(a.end, b.start):
        with pytest.raises(EndpointMismatch):
            concat(a, b)


def test_subcurve_identity_and_constant(sphere):
    c = random_curve(sphere, 4)
    assert subcurve(c, 0.0, c.length) is c
    mid = subcurve(c, 0.4, 0.4)
    assert mid.is_constant


def test_subcurve_additivity_oracle(sphere):
    c = random_curve(sphere, 5)
    rng = np.random.default_rng(6)
    for s in rng.uniform(0.0, c.length, 20):
        left = subcurve(c, 0.0, s)
        right = subcurve(c, s, c.length)
        joined = concat(left, right)
        assert abs(joined.length - c.length) < 1e-6


def test_subcurve_monotone_lipschitz(torus):
    c = random_curve(torus, 7)
    ss = np.linspace(0.0, c.length, 40)
    vals = [subcurve(c, 0.0, s).length for s in ss]
    d = np.diff(vals)
    assert np.all(d >= -1e-12)
    assert np.all(d <= np.diff(ss) + 1e-9)


def test_subcurve_range_error(sphere):
    c = random_curve(sphere, 8)
    with pytest.raises(RangeError):
        subcurve(c, -0.5, 0.2)
    with pytest.raises(RangeError):
        subcurve(c, 0.2, c.length + 1.0)


def test_refine_identity_when_fine(sphere):
    c = random_curve(sphere, 9)
    assert refine(c, c.max_gap() * 1.01) is c


def test_refine_halves_segments(torus):
    pts = np.array([[0.0, 0.0], [0.08, 0.0], [0.16, 0.0]])
    c = PLCurve(torus, pts)
    r = refine(c, 0.04)
    assert r.max_gap() <= 0.04 + 1e-12
    assert len(r) == 5


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_refine_preserves_length(sphere, seed):
    c = random_curve(sphere, seed)
    r = refine(c, 0.02)
    assert abs(r.length - c.length) < 1e-8


def test_point_at_endpooints_exact(sphere):
    c = random_curve(sphere, 10)
    assert np.array_equal(c.point_at(0.0), c.points[0])
    assert np.array_equal(c.point_at(c.length), c.points[-1])
    assert np.array_equal(c.point_at(2 * c.length), c.points[-1])


def test_displacement_zero_for_same_curve(sphere):
    c = random_curve(sphere, 11)
    assert displacement(c, c) < 1e-12


def test_invariants_at_scale(sphere, torus):
    # Additivity, involution, and length preservation over 200 random
    # curves per model.
    for m in (sphere, torus):
        rng = np.random.default_rng(99)
        for trial in range(200):
            c = random_curve(m, 5000 + trial, n_way=3)
            assert reverse(reverse(c)).length == c.length
            s = float(rng.uniform(0.0, c.length))
            joined = concat(subcurve(c, 0.0, s), subcurve(c, s, c.length))
            assert abs(joined.length - c.length) < 1e-6
            assert abs(refine(c, 0.02).length - c.length) < 1e-8


def test_stitch_tolerates_tiny_drift(sphere):
    c = random_curve(sphere, 12)
    a = subcurve(c, 0.0, 0.5)
    b = subcurve(c, 0.5, c.length)
    pts = b.points.copy()
    pts[0] = pts[0] + 1e-11
    b2 = PLCurve(sphere, sphere.project(pts))
    s = stitch([a, b2], tol=1e-9)
    assert abs(s.length - c.length) < 1e-6
    with pytest.raises(EndpointMismatch):
        stitch([a, random_curve(sphere, 13)], tol=1e-9)
