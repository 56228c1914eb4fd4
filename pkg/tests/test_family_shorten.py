import math

import numpy as np
import pytest

from geoloop import LoopAt, PLCurve, ShorteningParams, shorten_family
from geoloop.family_shorten import LoopFamily
from geoloop.generators import constant_family, meridian_sweep


@pytest.fixture(scope="module")
def small_run(sphere):
    fam = meridian_sweep(sphere, 8)
    params = ShorteningParams(l=0.05, a=math.pi, delta=0.05, epsilon=fam.eps_measured)
    res = shorten_family(fam, params, L=2 * math.pi)
    return fam, params, res


def test_family_validation(sphere, north):
    lp = LoopAt.constant(sphere, north)
    with pytest.raises(ValueError):
        LoopFamily(sphere, north, np.array([0.0, 0.0, 1.0]), [lp, lp, lp])
    fam = constant_family(sphere, north, 4)
    assert fam.max_length == 0.0
    assert fam.eps_measured == 0.0


def test_meridian_family_shape(sphere, north):
    fam = meridian_sweep(sphere, 8)
    assert len(fam.loops) == 9
    assert fam.loops[0] is fam.loops[-1]
    for lp in fam.loops:
        assert np.array_equal(lp.basepoint, north)
        assert abs(lp.length - 2 * math.pi) < 1e-6
    # Track lengths peak at the equator crossing of the returning meridians.
    assert fam.eps_measured <= 2 * math.pi / 8 + 1e-6


def test_certificates_and_disjointness(small_run):
    fam, params, res = small_run
    for cert in res.certificates:
        assert cert.passed, cert.formula_id
    assert res.disjoint_max <= res.disjoint_bound
    assert res.certificate("two_l_4a").measured == max(c.max_length for c in res.contractions)


def test_contraction_profile_remeasures(sphere, small_run):
    _, params, res = small_run
    con = res.contractions[3]
    idx = np.linspace(0, res.sync.size - 1, 40).astype(int)
    for g in idx:
        frame = con.frame(int(g))
        assert abs(frame.length - con.lengths[int(g)]) < 1e-9
        assert np.array_equal(frame.start, res.sync.family.basepoint)
        assert np.array_equal(frame.end, res.sync.family.basepoint)


def test_contraction_endpoints(small_run):
    fam, params, res = small_run
    con = res.contractions[0]
    full = con.frame(res.sync.size - 1)
    beta_i = res.node_finals[0]
    assert abs(full.length - (beta_i.length + res.node_finals[1].length)) < 1e-6
    start = con.frame(0)
    assert start.length < 1e-9


def test_node_deformation_endpoints(sphere, small_run):
    fam, params, res = small_run
    for i in (0, 3, 7):
        d = res.G[i]
        assert np.array_equal(d.initial().points, fam.loops[i].curve.points)
        assert np.array_equal(d.final().points, res.node_finals[i].points)
        idx = np.linspace(0, res.sync.size - 1, 25).astype(int)
        for g in idx:
            assert abs(d.frame(int(g)).length - d.lengths[int(g)]) < 1e-9


def test_witnesses_match_measured(small_run):
    _, params, res = small_run
    w2 = res.witness_two_l()
    assert abs(w2.length - res.certificate("two_l_4a").measured) < 1e-9
    wt = res.witness_tilde()
    assert abs(wt.length - res.certificate("three_l_5a").measured) < 1e-6
    wg = res.witness_g()
    assert abs(wg.length - res.certificate("L_5a_3l").measured) < 1e-6


def test_tilde_family_loops_all_based(small_run):
    fam, params, res = small_run
    p = fam.basepoint
    bound = res.certificate("three_l_5a")
    for lp in res.tilde_f.loops:
        assert np.array_equal(lp.basepoint, p)
        assert lp.length <= bound.claimed + bound.slack + 1e-9


def test_tilde_sampler_continuity(small_run):
    fam, params, res = small_run
    tf = res.tilde_f
    for j in (1, 5, 15):
        t = float(tf.nodes[j])
        assert tf.sampler(t) is not None
    a = tf.sampler(0.31)
    b = tf.sampler(0.31 + 1e-6)
    assert abs(a.length - b.length) < 0.05


def test_identical_node_loops_synchronize(sphere, north):
    # Identical geometry relies on the per-node jitter for disjoint cuts.
    fam8 = meridian_sweep(sphere, 4)
    lp = fam8.loops[1]
    loops = [lp, lp, lp, lp]
    loops = [LoopAt(PLCurve(sphere, lp.curve.points.copy()), north) for _ in range(3)]
    loops.append(loops[0])
    fam = LoopFamily(sphere, north, np.linspace(0, 1, 4), loops, closed=True)
    params = ShorteningParams(l=0.05, a=math.pi, delta=0.05, epsilon=0.05)
    res = shorten_family(fam, params, L=2 * math.pi)
    assert all(c.passed for c in res.certificates)


def test_synchronize_merges_grids(sphere, small_run):
    fam, params, res = small_run
    sync = res.sync
    # Interior cut fractions are pairwise distinct after jitter.
    fracs = []
    for i in range(8):
        f = sync.fams[i]
        L = f.alpha.length
        fracs += [st.t_cut / L for st in f.steps if st.t_cut / L < 1.0 - 1e-12]
    fracs = sorted(fracs)
    assert min(np.diff(fracs)) > 0
    assert np.all(np.diff(sync.T) >= -1e-15)


def test_open_family_endpoint_precondition(sphere, north):
    fam8 = meridian_sweep(sphere, 4)
    loops = list(fam8.loops[:3])
    fam = LoopFamily(sphere, north, np.linspace(0, 1, 3), loops, closed=False)
    params = ShorteningParams(l=0.05, a=math.pi, delta=0.05, epsilon=0.2)
    with pytest.raises(ValueError):
        shorten_family(fam, params, L=2 * math.pi)


def test_bound_identity_three_l_five_a():
    # At the hypothesis edge for k = 3/2 the family budget is the m = 1
    # instance of the general bound.
    from geoloop import bound_formula
    a = math.pi
    k = 1.5
    l = 2 * (k - 1) * a
    assert abs((3 * l + 5 * a) - bound_formula(k, 1, a)) < 1e-12
