import math

import pytest
from hypothesis import given, settings, strategies as st

from geoloop import BoundCertificate, MissingSymbol, Slack, evaluate, verify
from geoloop.certificates import FORMULA_IDS, formula_text


def test_formula_values():
    pi = math.pi
    assert evaluate("eight_pi_m", {"m": 1}) == 8 * pi
    assert evaluate("l_plus_a", {"l": 0.0, "a": pi}) == pi
    assert evaluate("step_count", {"L": 7.0, "l": 0.1, "a": pi, "delta": 0.05}) == 76.0
    assert evaluate("L_plus_2a", {"L": 1.0, "a": 2.0}) == 5.0
    assert evaluate("l_plus_3a_delta", {"l": 1.0, "a": 2.0, "delta": 0.25}) == 7.25
    assert evaluate("two_l_4a", {"l": 1.0, "a": 2.0, "delta": 0.5, "eps": 0.25}) == 10.75
    assert evaluate("three_l_5a", {"l": 1.0, "a": 2.0}) == 13.0
    assert evaluate("L_5a_3l", {"L": 1.0, "a": 2.0, "l": 3.0}) == 20.0
    assert evaluate("general_bound", {"k": 1.5, "m": 1, "a": pi}) == 8 * pi


def test_two_l_4a_consistency_with_general_bound():
    # With the gap edge at 2(k-1)a and no discretization terms the pairwise
    # contraction budget collapses to 4ka.
    for k in (1.0, 1.5, 2.0):
        a = math.pi
        l = 2 * (k - 1) * a
        val = evaluate("two_l_4a", {"l": l, "a": a, "delta": 0.0, "eps": 0.0})
        assert abs(val - 4 * k * a) < 1e-12


def test_missing_symbol():
    with pytest.raises(MissingSymbol):
        evaluate("eight_pi_m", {})
    with pytest.raises(MissingSymbol):
        evaluate("no_such_formula", {"m": 1})


def test_formula_text_known():
    for fid in FORMULA_IDS:
        assert formula_text(fid)


def test_slack_policy():
    s = Slack.default_for(math.pi)
    assert abs(s.c0 - 1e-3 * math.pi) < 1e-15
    assert abs(s.value(0.01, 0.02) - (s.c0 + 0.03 + 0.06)) < 1e-15


@settings(max_examples=60, deadline=None)
@given(measured=st.floats(0, 100), slackv=st.floats(0, 1), m=st.integers(1, 5))
def test_pass_is_pure_threshold(measured, slackv, m):
    cert = BoundCertificate.make("eight_pi_m", {"m": m}, measured, slackv)
    assert cert.passed == (measured <= cert.claimed + slackv)


def test_verify_recomputes(sphere):
    import numpy as np
    from geoloop import minimal_geodesic
    g = minimal_geodesic(sphere, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    cert = BoundCertificate.make("l_plus_a", {"l": 0.0, "a": math.pi}, 0.0, 1e-6)
    redone = verify(cert, [g])
    assert abs(redone.measured - g.length) < 1e-12
    assert redone.passed
    again = verify(redone, [g])
    assert again == redone


def test_json_roundtrip():
    cert = BoundCertificate.make("three_l_5a", {"l": 0.05, "a": math.pi}, 10.0, 0.06)
    d = cert.to_json()
    assert set(d) == {"formula", "params", "claimed", "measured", "slack", "pass"}
    assert BoundCertificate.from_json(d) == cert
