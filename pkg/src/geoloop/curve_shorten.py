"""Certified shortening of a single curve with explicit length bookkeeping.

The engine repeatedly cuts a bounded head off the current curve, closes it
to a based loop with a minimal geodesic, contracts that loop to a stable
short loop, and splices the result back. Every intermediate curve is a
"partial shortening": a member of the emitted one-parameter family
followed by the unconsumed tail of the input. The family, the connecting
homotopy, and the step count all carry re-measured certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .birkhoff import ShorteningTrace, shorten_based_loop
from .certificates import BoundCertificate, Slack, evaluate
from .curves import LoopAt, PLCurve, concat, minimal_geodesic, reverse, subcurve
from .errors import HypothesisViolated, IterationBudgetExceeded
from .homotopy import LengthHomotopy
from .manifolds import Manifold

MOVE_STEP = 0.04
DOUBLE_STEP = 0.02
SHORTEN_TOL = 1e-8


@dataclass(frozen=True)
class ShorteningParams:
    """Run parameters: gap edge l, diameter bound a, cut margin delta.

    The forbidden interval for stable loop lengths is (l, l + 2a + delta].
    cut_jitter shifts every cut position; the family engine uses it to keep
    cut partitions of different nodes disjoint.
    """

    l: float
    a: float
    delta: float
    epsilon: float = 0.0
    cut_jitter: float = 0.0

    def __post_init__(self):
        if self.l < 0:
            raise ValueError("l must be nonnegative")
        if self.a <= 0:
            raise ValueError("a must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    @property
    def hypothesis_interval(self) -> tuple[float, float]:
        return (self.l, self.l + 2.0 * self.a + self.delta)

    def with_jitter(self, jitter: float) -> "ShorteningParams":
        return ShorteningParams(self.l, self.a, self.delta, self.epsilon, jitter)


@dataclass
class Step:
    """One cut-close-contract-splice event."""

    index: int
    t_prev: float
    t_cut: float
    e: PLCurve
    gamma: LoopAt
    entry_state: PLCurve
    even_state: PLCurve
    trace: ShorteningTrace
    w_grid: np.ndarray


class ShorteningFamily:
    """The one-parameter family of curves from the basepoint to points of alpha.

    Frames alternate between moving spans, where the endpoint advances
    strictly along alpha, and pause spans, where the endpoint is frozen at
    a cut while the head is deformed onto its spliced replacement. Frames
    of moving spans and of the doubling phase are reconstructed exactly
    from stored curves; contraction-phase frames are kept at the trace's
    recorded stages.
    """

    def __init__(self, manifold: Manifold, alpha: PLCurve, params: ShorteningParams,
                 steps: list[Step], final_curve: PLCurve):
        self.manifold = manifold
        self.alpha = alpha
        self.params = params
        self.steps = steps
        self.final_curve = final_curve
        self._build_grid()

    # -- grid -------------------------------------------------------------

    def _build_grid(self) -> None:
        lengths: list[np.ndarray] = []
        taus: list[np.ndarray] = []
        span_edges = [0]
        self._span_refs: list[tuple] = []

        for st in self.steps:
            n_move = max(2, int(math.ceil((st.t_cut - st.t_prev) / MOVE_STEP)))
            mt = np.linspace(st.t_prev, st.t_cut, n_move + 1)
            base = st.entry_state.length - (st.t_cut - st.t_prev)
            lengths.append(base + (mt - st.t_prev))
            taus.append(mt)
            self._span_refs.append(("move", st, mt))
            span_edges.append(span_edges[-1] + mt.shape[0])

            head_len = st.entry_state.length
            l1 = head_len + 2.0 * st.w_grid[1:]
            # Contraction stages enter the family at the trace's retained
            # frames; the trace is monotone, so span maxima are unaffected.
            kept = st.trace.stage_indices[1:]
            l2 = st.trace.stage_lengths[kept] + st.e.length
            pl = np.concatenate([l1, l2])
            lengths.append(pl)
            taus.append(np.full(pl.shape[0], st.t_cut))
            self._span_refs.append(("pause", st, pl))
            span_edges.append(span_edges[-1] + pl.shape[0])

        # Trailing moving span: the unconsumed remainder of alpha, also the
        # whole family when no cut was ever needed.
        L = self.alpha.length
        t_last = self.steps[-1].t_cut if self.steps else 0.0
        base_len = self.steps[-1].even_state.length if self.steps else 0.0
        if t_last < L - 1e-12 or not self.steps:
            n_move = max(2, int(math.ceil((L - t_last) / MOVE_STEP))) if L > t_last else 1
            mt = np.linspace(t_last, L, n_move + 1)
            lengths.append(base_len + (mt - t_last))
            taus.append(mt)
            self._span_refs.append(("move", None, mt))
            span_edges.append(span_edges[-1] + mt.shape[0])

        self.lengths = np.concatenate(lengths)
        self.taus = np.concatenate(taus)
        self._span_edges = np.array(span_edges)
        n = self.lengths.shape[0]
        self.s_grid = np.linspace(0.0, 1.0, n)

    @property
    def size(self) -> int:
        return self.lengths.shape[0]

    @property
    def P(self) -> np.ndarray:
        """Cut partition on alpha (absolute arclengths, 0 and L included)."""
        cuts = [0.0] + [st.t_cut for st in self.steps]
        if not self.steps:
            cuts.append(self.alpha.length)
        return np.array(cuts)

    @property
    def Q(self) -> np.ndarray:
        """Span-boundary partition of [0, 1] in family parameter.

        Moving spans sit between even and odd entries, pauses between odd
        and even ones, matching the alternation of the construction.
        """
        n = max(1, self.size - 1)
        edges = np.concatenate([[0], self._span_edges[1:] - 1])
        return np.clip(edges / n, 0.0, 1.0)

    def tau(self, s: float) -> float:
        """Endpoint position on alpha at family parameter s in [0, 1]."""
        i = self._index_of(s)
        return float(self.taus[i])

    def _index_of(self, s: float) -> int:
        s = min(max(float(s), 0.0), 1.0)
        return int(round(s * (self.size - 1)))

    def _locate(self, i: int) -> tuple[str, Step | None, int]:
        j = int(np.searchsorted(self._span_edges, i, side="right")) - 1
        j = min(max(j, 0), len(self._span_refs) - 1)
        return (*self._span_refs[j][:2], i - int(self._span_edges[j]))

    # -- materialization ----------------------------------------------------

    def frame(self, i: int) -> PLCurve | None:
        """The family curve at grid index i; None when the contraction stage
        at that index was not retained."""
        kind, st, k = self._locate(i)
        if kind == "move":
            tau = float(self.taus[i])
            if st is None:
                # Trailing span after the last cut (or the whole family).
                if not self.steps:
                    return subcurve(self.alpha, 0.0, tau)
                last = self.steps[-1]
                if tau <= last.t_cut:
                    return last.even_state
                return concat(last.even_state, subcurve(self.alpha, last.t_cut, tau))
            prev = self._entry_prefix(st)
            if tau <= st.t_prev:
                return prev
            return concat(prev, subcurve(self.alpha, st.t_prev, tau))
        n1 = st.w_grid.shape[0] - 1
        if k < n1:
            w = float(st.w_grid[k + 1])
            piece = subcurve(st.e, st.e.length - w, st.e.length)
            return concat(concat(st.entry_state, reverse(piece)), piece)
        stage = st.trace.stages[k - n1 + 1].curve
        return concat(stage, st.e) if st.e.length > 0 else stage

    def _entry_prefix(self, st: Step) -> PLCurve:
        if st.index == 0:
            return PLCurve.constant(self.manifold, self.alpha.start)
        return self.steps[st.index - 1].even_state

    def frame_nearest(self, i: int) -> tuple[int, PLCurve]:
        """Kept for API symmetry; every grid frame is materializable."""
        return i, self.frame(i)

    def curve_at_tau(self, tau: float) -> PLCurve:
        """Moving-phase curve whose endpoint sits at alpha(tau), exact."""
        tau = min(max(tau, 0.0), self.alpha.length)
        if not self.steps:
            return subcurve(self.alpha, 0.0, tau)
        for st in self.steps:
            if tau <= st.t_cut + 1e-15:
                prev = self._entry_prefix(st)
                if tau <= st.t_prev:
                    return prev
                return concat(prev, subcurve(self.alpha, st.t_prev, tau))
        last = self.steps[-1]
        if tau <= last.t_cut:
            return last.even_state
        return concat(last.even_state, subcurve(self.alpha, last.t_cut, tau))

    def length_at_tau(self, tau: float) -> float:
        tau = min(max(tau, 0.0), self.alpha.length)
        if not self.steps:
            return tau
        for st in self.steps:
            if tau <= st.t_cut + 1e-15:
                base = st.entry_state.length - (st.t_cut - st.t_prev)
                return base + max(0.0, tau - st.t_prev)
        last = self.steps[-1]
        return last.even_state.length + max(0.0, tau - last.t_cut)

    # -- exports ------------------------------------------------------------

    def to_json(self, certificate=None, frame_samples: int = 40) -> dict:
        idx = np.unique(np.linspace(0, self.size - 1, frame_samples).astype(int))
        out = {
            "P": [float(x) for x in self.P],
            "Q": [float(x) for x in self.Q],
            "s": [float(x) for x in self.s_grid],
            "tau": [float(x) for x in self.taus],
            "lengths": [float(x) for x in self.lengths],
            "frames": [{"s": float(self.s_grid[i]),
                        "breakpoints": self.frame(int(i)).points.tolist()} for i in idx],
            "final": {"breakpoints": self.final_curve.points.tolist()},
        }
        if certificate is not None:
            out["cert"] = certificate.to_json()
        return out

    def traces_json(self) -> list[dict]:
        """Per-step contraction traces: stage lengths plus the stable loop."""
        return [
            {
                "step": st.index,
                "cut": float(st.t_cut),
                "stage_lengths": [float(x) for x in st.trace.stage_lengths],
                "final": {"breakpoints": st.gamma.curve.points.tolist()},
                "converged": bool(st.trace.converged),
            }
            for st in self.steps
        ]

    def rows(self):
        """CSV rows (s, tau, length)."""
        for s, t, ln in zip(self.s_grid, self.taus, self.lengths):
            yield float(s), float(t), float(ln)


@dataclass
class ShortenResult:
    final: PLCurve
    family: ShorteningFamily
    homotopy: LengthHomotopy | None
    certificates: list[BoundCertificate]
    steps_taken: int
    steps_predicted: int
    tail_lengths: np.ndarray
    homotopy_lengths: np.ndarray

    def certificate(self, formula_id: str) -> BoundCertificate:
        for c in self.certificates:
            if c.formula_id == formula_id:
                return c
        raise KeyError(formula_id)


def shorten_curve(m: Manifold, alpha: PLCurve, params: ShorteningParams,
                  slack: Slack | None = None, store: str = "all",
                  shorten_tol: float = SHORTEN_TOL) -> ShortenResult:
    """Shorten alpha below l + a through curves of length at most L + 2a.

    Raises HypothesisViolated when a contracted head loop stabilizes above
    l: the forbidden-interval hypothesis is then empirically refuted, and
    the offending loop rides on the exception.
    """
    l, a, delta = params.l, params.a, params.delta
    slack = slack if slack is not None else Slack.default_for(a)
    sl = slack.value(delta, params.epsilon)
    L = alpha.length
    p = alpha.start

    steps: list[Step] = []
    if L > l + a:
        prev_even = PLCurve.constant(m, p)
        t_prev = 0.0
        cur_len = L
        step_i = 0
        budget = int(evaluate("step_count", {"L": L, "l": l, "a": a, "delta": delta})) + 1
        while cur_len > l + a + 1e-12:
            if step_i > budget:
                raise IterationBudgetExceeded(
                    f"cut steps exceeded the predicted budget {budget}", partial=steps)
            delta_eff = min(delta, cur_len - l - a)
            # Jitter interior cuts only; the final clipped cut must consume
            # the tail exactly.
            jitter = params.cut_jitter if delta_eff >= delta else 0.0
            adv = l + a + delta_eff + jitter - prev_even.length
            t_cut = t_prev + adv
            if t_cut > L - 1e-10:
                t_cut = L
            head_tail = subcurve(alpha, t_prev, t_cut)
            head = concat(prev_even, head_tail) if prev_even.length > 0 or len(prev_even.points) > 1 \
                else head_tail
            if not np.array_equal(head.start, p):
                head = concat(PLCurve.constant(m, p), head_tail)
            q_m = head.end
            e = minimal_geodesic(m, p, q_m, gap=0.045) if m.local_distance(p, q_m) > 1e-12 \
                else PLCurve.constant(m, p)
            if e.length > a + 1e-6:
                raise ValueError(
                    f"closing geodesic of length {e.length:.6g} exceeds the diameter bound a={a:.6g}")
            loop = concat(head, reverse(e))
            lp = LoopAt(loop, p)
            if lp.length > l + 2 * a + delta_eff + jitter + 1e-6:
                raise ValueError("cut loop exceeds l + 2a + delta; inconsistent bookkeeping")
            trace = shorten_based_loop(lp, tol=shorten_tol, store=store)
            if not trace.converged:
                raise IterationBudgetExceeded("loop contraction did not converge", partial=trace)
            gamma = trace.limit
            if gamma.length > l:
                raise HypothesisViolated(gamma.length, loop=gamma, step=step_i)
            even = concat(gamma.curve, e) if gamma.length > 0 else e
            if even.length == 0 and len(even.points) == 1:
                even = PLCurve.constant(m, p)
            n_w = max(1, int(math.ceil(e.length / DOUBLE_STEP)))
            w_grid = np.linspace(0.0, e.length, n_w + 1)
            steps.append(Step(step_i, t_prev, t_cut, e, gamma, head, even, trace, w_grid))
            prev_even = even
            t_prev = t_cut
            cur_len = prev_even.length + (L - t_cut)
            step_i += 1
        if t_prev < L - 1e-12:
            final = concat(prev_even, subcurve(alpha, t_prev, L))
        else:
            final = prev_even
    else:
        final = alpha

    family = ShorteningFamily(m, alpha, params, steps, final)

    # Partial shortenings: every family frame extended by the unconsumed tail.
    tail = L - family.taus
    hom_lengths = family.lengths + tail
    k_pred = int(evaluate("step_count", {"L": L, "l": l, "a": a, "delta": delta})) \
        if L > l + a else 0
    certs = [
        BoundCertificate.make("l_plus_a", {"l": l, "a": a}, final.length, sl),
        BoundCertificate.make("L_plus_2a", {"L": L, "a": a}, float(hom_lengths.max()), sl),
        BoundCertificate.make("l_plus_3a_delta", {"l": l, "a": a, "delta": delta},
                              float(family.lengths.max()), sl),
    ]
    if L > l + a:
        certs.append(BoundCertificate.make(
            "step_count", {"L": L, "l": l, "a": a, "delta": delta}, float(len(steps)), 1.0))

    homotopy = None
    if store == "all":
        frames = []
        for i in range(family.size):
            f = family.frame(i)
            t = float(family.taus[i])
            frames.append(concat(f, subcurve(alpha, t, L)) if t < L else f)
        homotopy = LengthHomotopy.from_frames(
            frames, certified_bound=L + 2.0 * a, slack=sl,
            fixed_end=True, check_closeness="none")

    return ShortenResult(final, family, homotopy, certs, len(steps), k_pred,
                         tail, hom_lengths)


def partial_shortening(family: ShorteningFamily, alpha: PLCurve, s: float) -> PLCurve:
    """Family curve at parameter s followed by the remaining tail of alpha."""
    if not (-1e-12 <= s <= 1.0 + 1e-12):
        raise ValueError("s must lie in [0, 1]")
    i = family._index_of(s)
    i, f = family.frame_nearest(i)
    t = float(family.taus[i])
    if t >= alpha.length:
        return f
    return concat(f, subcurve(alpha, t, alpha.length))
