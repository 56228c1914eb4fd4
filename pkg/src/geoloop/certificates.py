"""Uniform length-bound certificates.

Every constructed object carries the bound expression it claims, the
parameter values, the slack absorbing discretization terms, and an
independently re-measured maximum. A certificate passes exactly when
measured <= claimed + slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import MissingSymbol


def _req(params: dict, *names: str) -> list[float]:
    out = []
    for n in names:
        if n not in params:
            raise MissingSymbol(f"formula needs symbol {n!r}")
        out.append(float(params[n]))
    return out


_FORMULAS = {
    "L_plus_2a": (("L", "a"), lambda p: p[0] + 2.0 * p[1], "L + 2a"),
    "l_plus_a": (("l", "a"), lambda p: p[0] + p[1], "l + a"),
    "l_plus_3a_delta": (("l", "a", "delta"), lambda p: p[0] + 3.0 * p[1] + p[2], "l + 3a + delta"),
    "two_l_4a": (("l", "a", "delta", "eps"),
                 lambda p: 2.0 * p[0] + 4.0 * p[1] + p[2] + p[3], "2l + 4a + delta + eps"),
    "three_l_5a": (("l", "a"), lambda p: 3.0 * p[0] + 5.0 * p[1], "3l + 5a"),
    "L_5a_3l": (("L", "a", "l"), lambda p: p[0] + 5.0 * p[1] + 3.0 * p[2], "L + 5a + 3l"),
    "eight_pi_m": (("m",), lambda p: 8.0 * math.pi * p[0], "8*pi*m"),
    "step_count": (("L", "l", "a", "delta"),
                   lambda p: math.floor((p[0] - p[1] - p[2]) / p[3]) + 1.0,
                   "floor((L - l - a)/delta) + 1"),
    "general_bound": (("k", "m", "a"),
                      lambda p: ((4.0 * p[0] + 2.0) * p[1] + (2.0 * p[0] - 3.0)) * p[2],
                      "((4k + 2)m + (2k - 3))a"),
}

FORMULA_IDS = tuple(_FORMULAS)


def evaluate(formula_id: str, params: dict) -> float:
    """Exact arithmetic evaluation of a named bound expression."""
    if formula_id not in _FORMULAS:
        raise MissingSymbol(f"unknown formula {formula_id!r}")
    names, fn, _ = _FORMULAS[formula_id]
    return float(fn(_req(params, *names)))


def formula_text(formula_id: str) -> str:
    return _FORMULAS[formula_id][2]


@dataclass(frozen=True)
class Slack:
    """Slack policy c0 + c1*delta + c2*eps absorbing discretization terms."""

    c0: float
    c1: float = 3.0
    c2: float = 3.0

    def value(self, delta: float = 0.0, eps: float = 0.0) -> float:
        return self.c0 + self.c1 * delta + self.c2 * eps

    @staticmethod
    def default_for(a: float) -> "Slack":
        return Slack(c0=1e-3 * a)


@dataclass(frozen=True)
class BoundCertificate:
    """A claimed bound, its parameters, and the re-measured maximum."""

    formula_id: str
    params: dict
    claimed: float
    measured: float
    slack: float
    passed: bool

    @staticmethod
    def make(formula_id: str, params: dict, measured: float, slack: float) -> "BoundCertificate":
        claimed = evaluate(formula_id, params)
        return BoundCertificate(
            formula_id=formula_id,
            params={k: float(v) for k, v in params.items()},
            claimed=claimed,
            measured=float(measured),
            slack=float(slack),
            passed=bool(measured <= claimed + slack),
        )

    def to_json(self) -> dict:
        return {
            "formula": self.formula_id,
            "params": dict(self.params),
            "claimed": self.claimed,
            "measured": self.measured,
            "slack": self.slack,
            "pass": self.passed,
        }

    @staticmethod
    def from_json(d: dict) -> "BoundCertificate":
        return BoundCertificate(
            formula_id=d["formula"],
            params=dict(d["params"]),
            claimed=float(d["claimed"]),
            measured=float(d["measured"]),
            slack=float(d["slack"]),
            passed=bool(d["pass"]),
        )


def verify(cert: BoundCertificate, frames: Iterable) -> BoundCertificate:
    """Recompute the measured maximum from frames and re-derive the verdict.

    Frames may be curves (anything with a float `length`) or plain lengths.
    """
    measured = 0.0
    for f in frames:
        val = f.length if hasattr(f, "length") else float(f)
        measured = max(measured, float(val))
    return BoundCertificate.make(cert.formula_id, cert.params, measured, cert.slack)
