import math

import numpy as np
import pytest

from geoloop import (LoopAt, PLCurve, loop_residual, probe_local_minimality,
                     shorten_based_loop, shorten_free_loop, sweep_once)
from conftest import sphere_circle_loop


def torus_based_loop(torus, seed=0, target=None):
    t = np.linspace(0.0, 1.0, 61)
    wig = np.stack([t, 0.35 * np.sin(2 * math.pi * t)], axis=1)
    pts = np.mod(wig, 1.0)
    pts[0] = [0.0, 0.0]
    pts[-1] = [0.0, 0.0]
    return LoopAt(PLCurve(torus, pts), np.zeros(2))


def test_small_sphere_loop_contracts(sphere, north):
    lp = sphere_circle_loop(sphere, north, 0.06)
    tr = shorten_based_loop(lp, tol=1e-8)
    assert tr.converged
    assert tr.limit.length == 0.0
    assert np.array_equal(tr.limit.basepoint, north)


def test_torus_based_systole(torus):
    tr = shorten_based_loop(torus_based_loop(torus), tol=1e-9)
    assert tr.converged
    assert abs(tr.limit.length - 1.0) < 1e-4


def test_constant_loop_zero_iterations(sphere, north):
    lp = LoopAt.constant(sphere, north)
    tr = shorten_based_loop(lp)
    assert tr.iterations == 0
    assert tr.limit.length == 0.0


def test_trace_monotone_and_homotopy_steps(sphere, north):
    lp = sphere_circle_loop(sphere, north, 0.4, n=96)
    tr = shorten_based_loop(lp, tol=1e-8)
    assert np.all(np.diff(tr.stage_lengths) <= 1e-12)
    assert np.array_equal(tr.stages[0].curve.points, lp.curve.points)
    # Consecutive retained stages stay within the injectivity margin.
    from geoloop import displacement
    for a, b in zip(tr.stages[:-1], tr.stages[1:]):
        assert displacement(a.curve, b.curve) < sphere.margin


def test_fixed_point_property(torus):
    tr = shorten_based_loop(torus_based_loop(torus), tol=1e-9)
    again = sweep_once(tr.limit)
    assert abs(again.length - tr.limit.length) < 1e-6


def test_local_minimality_probe(torus):
    tr = shorten_based_loop(torus_based_loop(torus), tol=1e-9)
    rng = np.random.default_rng(17)
    worst = probe_local_minimality(tr.limit, rng, n=50, magnitude=1e-3)
    assert worst >= -1e-6


def test_free_torus_class_systole(torus):
    t = np.linspace(0.0, 1.0, 80)
    w = np.stack([0.44 * np.sin(2 * math.pi * t) + 0.3 * np.sin(4 * math.pi * t), t], axis=1)
    pts = np.mod(w, 1.0)
    pts[0] = [0.0, 0.0]
    pts = np.vstack([pts[:-1], pts[0]])
    c = PLCurve(torus, pts)
    assert c.length > 2.9
    tr = shorten_free_loop(c, tol=1e-9)
    assert abs(tr.limit.length - 1.0) < 1e-4


def test_free_contractible_sphere_loop(sphere):
    ang = np.linspace(0.0, 2.0 * math.pi, 120)
    lat = math.pi / 3
    pts = np.stack([np.sin(lat) * np.cos(ang), np.sin(lat) * np.sin(ang),
                    np.cos(lat) * np.ones_like(ang)], axis=1)
    pts[-1] = pts[0]
    tr = shorten_free_loop(PLCurve(sphere, pts), tol=1e-9)
    assert tr.limit.length == 0.0


def test_free_great_circle_is_fixed(sphere):
    ang = np.linspace(0.0, 2.0 * math.pi, 160)
    pts = np.stack([np.sin(ang), np.zeros_like(ang), np.cos(ang)], axis=1)
    pts[-1] = pts[0]
    tr = shorten_free_loop(PLCurve(sphere, pts), tol=1e-7)
    assert abs(tr.limit.length - 2 * math.pi) < 1e-4
    assert loop_residual(tr.limit, fixed_basepoint=False) < 1e-6


def test_based_escape_leaves_exact_great_circle(sphere, north):
    # The doubled-meridian configuration is stationary for plain sweeps; the
    # second-variation step must carry the process past it.
    n = 70
    t = np.linspace(0.0, math.pi, n + 1)
    down = np.stack([np.sin(t), np.zeros_like(t), np.cos(t)], axis=1)
    up = np.stack([-np.sin(t[::-1]), np.zeros_like(t), np.cos(t[::-1])], axis=1)
    pts = np.vstack([down[:-1], [[0.0, 0.0, -1.0]], up[1:-1], [north]])
    pts[0] = north
    lp = LoopAt(PLCurve(sphere, pts), north)
    assert abs(lp.length - 2 * math.pi) < 1e-3
    tr = shorten_based_loop(lp, tol=1e-8)
    assert tr.converged
    assert tr.limit.length == 0.0


def test_budget_returns_unconverged(sphere, north):
    lp = sphere_circle_loop(sphere, north, 0.8, n=128)
    tr = shorten_based_loop(lp, tol=1e-12, budget=3)
    assert not tr.converged
    assert tr.limit.length <= lp.length


def test_rejects_open_curve(sphere):
    pts = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    with pytest.raises(ValueError):
        shorten_free_loop(PLCurve(sphere, pts))
