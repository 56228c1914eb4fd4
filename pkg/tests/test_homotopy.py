import numpy as np
import pytest

from geoloop import (BoundViolation, LengthHomotopy, LoopAt, PLCurve, concat,
                     contract_path_family, doubled_loop_contraction,
                     loop_to_path_homotopy, minimal_geodesic, reverse,
                     shorten_based_loop, trace_homotopy)
from geoloop.homotopy import reversed_pair_homotopy


def two_paths(sphere, seed=0):
    p = np.array([0.0, 0.0, 1.0])
    q = np.array([1.0, 0.0, 0.0])
    g1 = minimal_geodesic(sphere, p, q)
    rng = np.random.default_rng(seed)
    mid = sphere.project(np.array([0.6, 0.5, 0.6]) + 0.1 * rng.standard_normal(3))
    g2 = PLCurve.through(sphere, [p, mid, q])
    return p, q, g1, g2


def contraction_of(sphere, g1, g2, p):
    loop = concat(g1, reverse(g2))
    tr = shorten_based_loop(LoopAt(loop, p), tol=1e-9)
    return trace_homotopy(tr.stages, tr.stage_lengths, bound=float(tr.stage_lengths[0]))


def test_constant_target_gives_path_homotopy(sphere):
    p, q, g1, g2 = two_paths(sphere)
    H = contraction_of(sphere, g1, g2, p)
    out = loop_to_path_homotopy(g1, g2, H, slack=1e-6)
    assert np.array_equal(out.frames[0].points, g1.points)
    assert np.array_equal(out.frames[-1].points, g2.points)
    for f in out.frames[:: max(1, len(out.frames) // 20)]:
        assert np.array_equal(f.start, p)
        assert np.array_equal(f.end, q)


def test_degenerate_doubling_bound(sphere):
    p, q, g1, _ = two_paths(sphere)
    H = contraction_of(sphere, g1, g1, p)
    out = loop_to_path_homotopy(g1, g1, H, slack=1e-6)
    # Only the doubled tail can lengthen the frames here.
    assert out.max_length <= g1.length + 2 * g1.length + 1e-9


def test_frame_remeasurement(sphere):
    p, q, g1, g2 = two_paths(sphere, seed=3)
    H = contraction_of(sphere, g1, g2, p)
    out = loop_to_path_homotopy(g1, g2, H, slack=1e-6)
    l3 = H.certified_bound
    l2 = g2.length
    measured = max(f.length for f in out.frames)
    assert measured <= l3 + l2 + 1e-6
    assert abs(out.max_length - measured) < 1e-12


def test_bound_violation_raises(sphere):
    p, q, g1, g2 = two_paths(sphere)
    frames = [g1, g2]
    with pytest.raises(BoundViolation):
        LengthHomotopy.from_frames(frames, certified_bound=0.1, slack=0.0,
                                   fixed_end=False, check_closeness="none")


def test_reversed_direction_variant(sphere):
    p, q, g1, g2 = two_paths(sphere, seed=5)
    H = contraction_of(sphere, g1, g2, p)
    out = reversed_pair_homotopy(g1, g2, H, slack=1e-6)
    assert np.array_equal(out.frames[0].points, g2.points)
    assert out.max_length <= H.certified_bound + g1.length + 1e-9


def test_doubled_loop_contraction_monotone(sphere):
    p = np.array([0.0, 0.0, 1.0])
    g = minimal_geodesic(sphere, p, np.array([1.0, 0.0, 0.0]))
    H = doubled_loop_contraction(g)
    assert H.frames[-1].is_constant
    assert np.all(np.diff(H.lengths) <= 1e-12)


def test_homotopy_then_chains(sphere):
    p, q, g1, g2 = two_paths(sphere)
    H = contraction_of(sphere, g1, g2, p)
    out = loop_to_path_homotopy(g1, g2, H, slack=1e-6)
    back = out.reversed()
    chained = out.then(back)
    assert np.array_equal(chained.frames[0].points, g1.points)
    assert np.array_equal(chained.frames[-1].points, g1.points)
    assert chained.certified_bound == out.certified_bound


def family_of_paths(sphere, n=3, seed=1):
    p = np.array([0.0, 0.0, 1.0])
    q = np.array([1.0, 0.0, 0.0])
    rng = np.random.default_rng(seed)
    nodes = [minimal_geodesic(sphere, p, q)]
    for _ in range(n - 1):
        mid = sphere.project(np.array([0.6, 0.0, 0.6]) + 0.25 * rng.standard_normal(3))
        nodes.append(PLCurve.through(sphere, [p, mid, q]))
    return p, q, nodes


def test_contract_path_family_constant(sphere):
    p, q, nodes = family_of_paths(sphere, n=1)
    base = nodes[0]
    Fh = [doubled_loop_contraction(base)]
    # The zipper contraction starts exactly at f(x0) * reverse(f(x0)).
    out = contract_path_family([base], 0, Fh, slack=1e-6)
    assert len(out) == 1
    assert np.array_equal(out[0].frames[0].points, base.points)
    assert np.array_equal(out[0].frames[-1].points, base.points)
    assert out[0].max_length <= base.length + 2 * base.length + 1e-9


def test_contract_path_family_bounds(sphere):
    p, q, nodes = family_of_paths(sphere, n=3, seed=2)
    base = nodes[0]
    Fh = []
    for fx in nodes:
        lp = LoopAt(concat(fx, reverse(base)), p)
        tr = shorten_based_loop(lp, tol=1e-9)
        Fh.append(trace_homotopy(tr.stages, tr.stage_lengths,
                                 bound=float(tr.stage_lengths[0])))
    out = contract_path_family(nodes, 0, Fh, slack=1e-6)
    L = max(f.length for f in nodes)
    l0 = base.length
    for x, hx in enumerate(out):
        assert np.array_equal(hx.frames[0].points, nodes[x].points)
        assert np.array_equal(hx.frames[-1].points, base.points)
        assert hx.max_length <= L + 2 * l0 + 1e-6
        for f in hx.frames[:: max(1, len(hx.frames) // 10)]:
            assert np.array_equal(f.start, p)
            assert np.array_equal(f.end, q)


def test_contract_path_family_bound_arithmetic():
    # Stated budget for a family of caps 2 around a marked member of length
    # one half.
    assert 2.0 + 2 * 0.5 == 3.0
