"""Minimax extraction of a periodic geodesic from a loop family, plus the
closed-form length-bound evaluators.

The minimax stage applies free (unbased) sweeps to every loop of the
family simultaneously and watches the stage maximum, which never
increases. Simultaneous shortening of isolated samples undershoots once
adjacent members fall into different contraction basins, so the family is
kept chained: whenever two neighbors drift apart, a pointwise blend is
inserted between them (guarded never to raise the maximum). A chain with
controlled gaps that spans distinct basins must keep a member near the
separating critical set, so the maximum stagnates at the critical level
and the loop achieving it is polished into a discrete closed geodesic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .birkhoff import _LoopState, loop_residual, WORK_GAP
from .certificates import BoundCertificate, Slack, evaluate
from .curves import PLCurve
from .errors import IterationBudgetExceeded
from .family_shorten import LoopFamily

STAGNATION_WINDOW = 100
STAGNATION_REL = 1e-6
RESIDUAL_TARGET = 1e-3
STRING_SPACING = 0.1
STRING_MAX_NODES = 1600
RESTRING_EVERY = 2


def bound_formula(k: float, m: int, a: float) -> float:
    """((4k + 2)m + (2k - 3)) * a for real k > 0, integer m >= 1, a > 0."""
    if k <= 0:
        raise ValueError("k must be positive")
    if m < 1:
        raise ValueError("m must be at least 1")
    if a <= 0:
        raise ValueError("a must be positive")
    return evaluate("general_bound", {"k": k, "m": m, "a": a})


def loop_count_bound(n: int, k: int, kind: str = "loops") -> float:
    """Length budget for k short objects through a point: 16*pi*(n-1)*k for
    based loops, pi*(16*k*(n-1) + 1) for connecting paths."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if k < 1:
        raise ValueError("k must be at least 1")
    if kind == "loops":
        return 16.0 * math.pi * (n - 1) * k
    if kind == "paths":
        return math.pi * (16.0 * k * (n - 1) + 1.0)
    raise ValueError("kind must be 'loops' or 'paths'")


@dataclass
class MinimaxResult:
    critical_loop: PLCurve
    minimax_length: float
    geodesic_residual: float
    bound: BoundCertificate
    degenerate: bool
    stages: int
    max_trace: np.ndarray

    def to_json(self) -> dict:
        return {
            "length": self.minimax_length,
            "residual": self.geodesic_residual,
            "bound": self.bound.to_json(),
            "pass": bool(self.bound.passed),
            "degenerate": bool(self.degenerate),
            "stages": int(self.stages),
        }


# ---------------------------------------------------------------------------
# Chain plumbing
# ---------------------------------------------------------------------------


def _loop_samples(st: _LoopState, n: int) -> np.ndarray:
    """Sample a based loop at n even arclength fractions from the basepoint.

    Keeping the basepoint at fraction zero makes the parametrization of
    every chain member canonical, so pointwise comparisons and blends need
    no alignment search.
    """
    pts = st.closed_points()
    seg = st.m.pair_lengths(pts[:-1], pts[1:])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    L = cum[-1]
    if L <= 0:
        return np.repeat(pts[:1], n, axis=0)
    s = np.linspace(0.0, L, n, endpoint=False)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, seg.shape[0] - 1)
    f = np.clip((s - cum[idx]) / np.maximum(seg[idx], 1e-300), 0.0, 1.0)
    out = st.m.interpolate_batch(pts[idx], pts[idx + 1], f)
    out[0] = pts[0]
    return out


def _proxy_count(max_len: float) -> int:
    return int(np.clip(math.ceil(max_len / 0.25) + 8, 16, 128))


def _pair_gap(m, A: np.ndarray, B: np.ndarray) -> float:
    """Largest pointwise displacement between fraction-matched samples."""
    return float(m.pair_lengths(A, B).max())


def _blend_states(a: _LoopState, b: _LoopState, sigma: float = 0.5) -> _LoopState:
    """Pointwise interpolation between two based loops at matched fractions."""
    m = a.m
    n = int(np.clip(math.ceil(max(a.length(), b.length()) / WORK_GAP) + 4, 8, 1024))
    A = _loop_samples(a, n)
    B = _loop_samples(b, n)
    mid = m.interpolate_batch(A, B, np.full(n, float(sigma)))
    mid[0] = A[0]
    st = _LoopState(m, m.project_points(mid), based=True)
    st.pts[0] = A[0]
    st.dedupe()
    st.resample(WORK_GAP)
    return st


def minimax_geodesic(family: LoopFamily, q: int = 1, slack: Slack | None = None,
                     budget: int = 20_000, tol: float = 1e-7,
                     residual_target: float = RESIDUAL_TARGET) -> MinimaxResult:
    """Simultaneous shortening of the chained family to a critical loop.

    All loops are swept at once with the basepoint pinned, which keeps the
    family's parametrization canonical while the string is maintained; the
    stagnation witness is then released and polished into an unbased
    discrete closed geodesic. The family is assumed to represent a
    nontrivial class (the caller's responsibility). Returns the witness
    and the certificate of its length against 8*pi*q; raises
    IterationBudgetExceeded with the partial result attached when the
    stage budget runs out.
    """
    m = family.manifold
    slack = slack if slack is not None else Slack.default_for(math.pi)
    sl = slack.value()

    seen: set[int] = set()
    chain: list[_LoopState] = []
    for lp in family.loops:
        if id(lp) in seen:
            continue
        seen.add(id(lp))
        if lp.length == 0.0 or lp.curve.points.shape[0] < 4:
            continue
        st = _LoopState(m, lp.curve.points[:-1].copy(), based=True)
        st.resample(WORK_GAP)
        chain.append(st)

    if not chain:
        cert = BoundCertificate.make("eight_pi_m", {"m": q}, 0.0, sl)
        return MinimaxResult(PLCurve.constant(m, family.basepoint), 0.0, 0.0, cert,
                             True, 0, np.zeros(1))

    lengths = [st.length() for st in chain]
    max_trace = [max(lengths)]
    stages = 0
    closed = family.closed

    while stages < budget:
        stages += 1
        for j, st in enumerate(chain):
            if lengths[j] <= 1e-9:
                continue
            st.sweep_parity(0)
            st.sweep_parity(1)
            if stages % 16 == 0:
                st.dedupe()
                st.resample(WORK_GAP)
            lengths[j] = st.length()

        if len(chain) > 2 and stages % RESTRING_EVERY == 0:
            chain, lengths = _restring(m, chain, lengths, closed)

        max_trace.append(max(lengths))
        if len(max_trace) > STAGNATION_WINDOW:
            recent = max_trace[-STAGNATION_WINDOW - 1]
            if recent - max_trace[-1] < STAGNATION_REL * max(1.0, recent):
                break
        if max_trace[-1] <= 1e-9:
            break
    else:
        j = int(np.argmax(lengths))
        cert = BoundCertificate.make("eight_pi_m", {"m": q}, lengths[j], sl)
        partial = MinimaxResult(chain[j].to_loop().curve, lengths[j], math.nan,
                                cert, False, stages, np.array(max_trace))
        raise IterationBudgetExceeded("minimax did not stagnate", partial=partial)

    best = chain[int(np.argmax(lengths))]
    witness = _LoopState(m, best.pts.copy(), based=False)
    witness = _polish(witness, residual_target)
    final = witness.to_loop()
    length = final.length
    resid = loop_residual(final, fixed_basepoint=False)
    degenerate = length <= 1e-6
    cert = BoundCertificate.make("eight_pi_m", {"m": q}, length, sl)
    return MinimaxResult(final.curve, length, resid, cert, degenerate, stages,
                         np.array(max_trace))


def _restring(m, chain: list[_LoopState], lengths: list[float], closed: bool):
    """Redistribute nodes evenly along the chain at the target spacing.

    The chain is a string in loop space with link lengths measured by the
    aligned displacement proxy; nodes are re-placed at even string
    positions by aligned pointwise blends of the two old neighbors, the
    current maximum node staying pinned in place. The node budget tracks
    the string's total extent, so the family stays uniformly continuous:
    every region, in particular the funnel through the separating critical
    set, keeps nodes in proportion to its extent, which is what stops the
    stage maximum from slipping below the pass. A fresh blend can exceed
    the old maximum by the interpolation sag, a bounded and documented
    amount.
    """
    n = len(chain)
    pin = int(np.argmax(lengths))
    order = [(pin + j) % n for j in range(n)] if closed else list(range(n))
    seq = [chain[j] for j in order]
    seq_len = [lengths[j] for j in order]
    n_prox = _proxy_count(max(seq_len))
    samples = np.stack([_loop_samples(st, n_prox) for st in seq])
    gaps = np.array([_pair_gap(m, samples[j], samples[(j + 1) % n]) for j in range(n)])
    if not closed:
        gaps[-1] = 0.0
    cum = np.concatenate([[0.0], np.cumsum(gaps)])
    G = float(cum[-1] if closed else cum[-2])
    if G < 1e-9:
        j = int(np.argmax(lengths))
        return [chain[j]], [lengths[j]]

    K = int(np.clip(math.ceil(G / STRING_SPACING), 24, STRING_MAX_NODES))
    out: list[_LoopState] = []
    out_len: list[float] = []
    targets = np.linspace(0.0, G, K, endpoint=not closed)
    for x in targets:
        j = int(np.clip(np.searchsorted(cum, x, side="right") - 1, 0, n - 1))
        k = (j + 1) % n
        g = float(gaps[j])
        sigma = (x - cum[j]) / g if g > 1e-12 else 0.0
        if sigma < 0.05:
            out.append(seq[j])
            out_len.append(seq_len[j])
        elif sigma > 0.95:
            out.append(seq[k])
            out_len.append(seq_len[k])
        else:
            blend = _blend_states(seq[j], seq[k], sigma)
            out.append(blend)
            out_len.append(blend.length())
    if not closed:
        out[0], out_len[0] = seq[0], seq_len[0]
        out[-1], out_len[-1] = seq[-1], seq_len[-1]
    return out, out_len


def _polish(witness: _LoopState, residual_target: float) -> _LoopState:
    """Sweep the witness until the discrete geodesic condition holds; a slip
    guard aborts if the loop turns out not to be near-critical."""
    stagnated_at = witness.length()
    for it in range(2000):
        lp = witness.to_loop()
        if loop_residual(lp, fixed_basepoint=False) <= residual_target:
            break
        if witness.length() < 0.98 * stagnated_at:
            break
        witness.sweep_parity(0)
        witness.sweep_parity(1)
        if it % 16 == 15:
            witness.dedupe()
            witness.resample(WORK_GAP)
    return witness
