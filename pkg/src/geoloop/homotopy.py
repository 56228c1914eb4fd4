"""Composition of certified path homotopies between broken-geodesic curves.

The two constructions here turn a contraction of a concatenated loop into a
path homotopy between the pieces: one for a single pair of curves, one for
a one-parameter family of curves sharing their endpoints against a marked
member. Both follow the same two-phase shape: first grow a doubled tail of
the curve that will be spliced in, then replay the loop contraction with
the tail frozen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .curves import PLCurve, concat, displacement, reverse, subcurve
from .errors import BoundViolation, EndpointMismatch


@dataclass
class LengthHomotopy:
    """A discrete one-parameter family of curves with a length certificate.

    All frames share start_point; fixed-end families share end_point, while
    moving-end families record the endpoint track instead. max_length is
    re-measured from the frames at construction and must stay within
    certified_bound + slack.
    """

    frames: Sequence[PLCurve]
    start_point: np.ndarray
    end_point: np.ndarray | None
    end_track: list[np.ndarray] | None
    lengths: np.ndarray
    max_length: float
    certified_bound: float
    slack: float

    @staticmethod
    def from_frames(frames: Sequence[PLCurve], certified_bound: float, slack: float,
                    fixed_end: bool = True, check_closeness: str = "sample") -> "LengthHomotopy":
        if len(frames) == 0:
            raise ValueError("a homotopy needs at least one frame")
        start = frames[0].start
        for i, f in enumerate(frames):
            if not np.array_equal(f.start, start):
                raise EndpointMismatch(f"frame {i} does not start at the shared start point")
        end = frames[0].end if fixed_end else None
        track = None
        if fixed_end:
            for i, f in enumerate(frames):
                if not np.array_equal(f.end, end):
                    raise EndpointMismatch(f"frame {i} does not end at the shared end point")
        else:
            track = [f.end for f in frames]
        lengths = np.array([f.length for f in frames])
        max_length = float(lengths.max())
        if max_length > certified_bound + slack:
            raise BoundViolation(
                f"frame length {max_length:.6g} exceeds bound {certified_bound:.6g} + slack {slack:.6g}",
                measured=max_length, allowed=certified_bound + slack,
            )
        h = LengthHomotopy(list(frames), start, end, track, lengths, max_length,
                           float(certified_bound), float(slack))
        if check_closeness != "none":
            h.check_frame_spacing(full=(check_closeness == "full"))
        return h

    def check_frame_spacing(self, full: bool = False, limit: float | None = None) -> float:
        """Largest displacement between consecutive frames (sampled unless full)."""
        if len(self.frames) < 2:
            return 0.0
        margin = limit if limit is not None else self.frames[0].manifold.margin
        n = len(self.frames) - 1
        idx = range(n) if full or n <= 24 else np.linspace(0, n - 1, 24).astype(int)
        worst = 0.0
        for i in idx:
            worst = max(worst, displacement(self.frames[int(i)], self.frames[int(i) + 1]))
        if worst >= margin:
            raise BoundViolation(
                f"consecutive frames are {worst:.4g} apart, beyond the margin {margin:.4g}",
                measured=worst, allowed=margin,
            )
        return worst

    @property
    def initial(self) -> PLCurve:
        return self.frames[0]

    @property
    def final(self) -> PLCurve:
        return self.frames[-1]

    def reversed(self) -> "LengthHomotopy":
        h = LengthHomotopy(list(self.frames[::-1]), self.start_point, self.end_point,
                           None if self.end_track is None else self.end_track[::-1],
                           self.lengths[::-1].copy(), self.max_length,
                           self.certified_bound, self.slack)
        return h

    def then(self, other: "LengthHomotopy") -> "LengthHomotopy":
        """Concatenation in homotopy time; bounds combine by maximum."""
        if not np.array_equal(self.frames[-1].points, other.frames[0].points):
            raise EndpointMismatch("homotopies do not share the junction frame")
        frames = list(self.frames) + list(other.frames[1:])
        lengths = np.concatenate([self.lengths, other.lengths[1:]])
        return LengthHomotopy(frames, self.start_point,
                              self.end_point if other.end_point is None or self.end_point is None
                              or np.array_equal(self.end_point, other.end_point) else None,
                              None,
                              lengths, float(lengths.max()),
                              max(self.certified_bound, other.certified_bound),
                              max(self.slack, other.slack))

    def to_json(self) -> dict:
        return {
            "frames": [f.points.tolist() for f in self.frames],
            "certificate": {
                "bound": self.certified_bound,
                "slack": self.slack,
                "measured_max": self.max_length,
            },
        }


# ---------------------------------------------------------------------------
# Doubled-tail homotopies
# ---------------------------------------------------------------------------


def doubling_frames(base: PLCurve, tail_source: PLCurve, w_step: float = 0.02,
                    from_far_end: bool = True) -> list[PLCurve]:
    """Frames base * rev(t_w) * t_w for growing end segments t_w of tail_source.

    With from_far_end the doubled segment is anchored at tail_source's end,
    so the last frame is base * reverse(tail_source) * tail_source.
    """
    L = tail_source.length
    out = [base]
    if L == 0.0:
        return out
    n = max(1, int(np.ceil(L / w_step)))
    for w in np.linspace(0.0, L, n + 1)[1:]:
        if from_far_end:
            piece = subcurve(tail_source, L - w, L)
        else:
            piece = subcurve(tail_source, 0.0, w)
        out.append(concat(concat(base, reverse(piece)), piece))
    return out


def doubled_loop_contraction(c: PLCurve, w_step: float = 0.02) -> LengthHomotopy:
    """Zipper contraction of c * reverse(c) down to the constant loop."""
    L = c.length
    frames = []
    n = max(1, int(np.ceil(L / w_step)))
    for u in np.linspace(L, 0.0, n + 1):
        piece = subcurve(c, 0.0, u)
        frames.append(concat(piece, reverse(piece)))
    return LengthHomotopy.from_frames(frames, certified_bound=2.0 * L, slack=1e-12,
                                      check_closeness="none")


# ---------------------------------------------------------------------------
# Loop contraction -> path homotopy between the two legs
# ---------------------------------------------------------------------------


def loop_to_path_homotopy(g1: PLCurve, g2: PLCurve, H: LengthHomotopy,
                          slack: float, w_step: float = 0.02,
                          check_closeness: str = "sample") -> LengthHomotopy:
    """Path homotopy from g1 to H.final * g2 with frames below l3 + len(g2).

    g1 and g2 must share both endpoints; H must be a based-loop homotopy
    whose first frame is exactly g1 * reverse(g2). Phase one grows a
    doubled end segment of g2 behind g1; phase two replays H with the g2
    tail frozen.
    """
    if not np.array_equal(g1.start, g2.start) or not np.array_equal(g1.end, g2.end):
        raise EndpointMismatch("the two curves must share both endpoints")
    expected0 = concat(g1, reverse(g2))
    if not np.array_equal(H.frames[0].points, expected0.points):
        raise EndpointMismatch("loop homotopy must start at g1 * reverse(g2)")
    l3 = H.certified_bound if H.certified_bound else H.max_length
    l2 = g2.length
    # Phase one ends at g1 * reverse(g2) * g2, which is also the first frame
    # of phase two, so the loop homotopy is replayed from its second frame.
    frames = doubling_frames(g1, g2, w_step=w_step, from_far_end=True)
    for lf in H.frames[1:]:
        frames.append(concat(lf, g2))
    return LengthHomotopy.from_frames(frames, certified_bound=l3 + l2, slack=slack,
                                      fixed_end=True, check_closeness=check_closeness)


def reversed_pair_homotopy(g1: PLCurve, g2: PLCurve, H: LengthHomotopy,
                           slack: float, w_step: float = 0.02) -> LengthHomotopy:
    """Same construction run from g2's side: homotopy g2 -> rev(H.final) * g1.

    Useful when g1 is the longer leg: the doubled segment then comes from
    the shorter curve, keeping frames below l1 + l3 instead of l3 + l2.
    """
    flipped = [reverse(f) for f in H.frames]
    Hf = LengthHomotopy.from_frames(flipped, H.certified_bound, H.slack,
                                    fixed_end=True, check_closeness="none")
    return loop_to_path_homotopy(g2, g1, Hf, slack, w_step=w_step)


# ---------------------------------------------------------------------------
# Family version over a circle of curves
# ---------------------------------------------------------------------------


def contract_path_family(f_nodes: list[PLCurve], x0: int, Fh: list[LengthHomotopy],
                         slack: float, w_step: float = 0.02,
                         stated_bound: float | None = None) -> list[LengthHomotopy]:
    """Per-node homotopies from f(x) to f(x0) through curves below L + 2l.

    Fh[x] must contract the based loop f(x) * reverse(f(x0)) to a constant.
    Phase one grows the doubled end segment of f(x0) behind each f(x);
    phase two replays the contraction while the f(x0) tail stays frozen.
    """
    if not (0 <= x0 < len(f_nodes)):
        raise ValueError("x0 out of range")
    base = f_nodes[x0]
    L = stated_bound if stated_bound is not None else max(f.length for f in f_nodes)
    l0 = base.length
    bound = L + 2.0 * l0
    out = []
    for x, fx in enumerate(f_nodes):
        H = Fh[x]
        expected0 = concat(fx, reverse(base))
        if not np.array_equal(H.frames[0].points, expected0.points):
            raise EndpointMismatch(f"contraction {x} must start at f(x) * reverse(f(x0))")
        if not H.frames[-1].is_constant:
            raise EndpointMismatch(f"contraction {x} must end at a constant loop")
        frames = doubling_frames(fx, base, w_step=w_step, from_far_end=True)
        for lf in H.frames[1:]:
            frames.append(concat(lf, base))
        out.append(LengthHomotopy.from_frames(frames, certified_bound=bound, slack=slack,
                                              fixed_end=True, check_closeness="sample"))
    return out


def trace_homotopy(stages, lengths: np.ndarray, bound: float, slack: float = 1e-9) -> LengthHomotopy:
    """Wrap shortening-trace stages (all recorded) as a based-loop homotopy."""
    frames = [st.curve for st in stages]
    if len(frames) != len(lengths):
        raise ValueError("need a fully recorded trace (store='all')")
    return LengthHomotopy.from_frames(frames, certified_bound=bound, slack=slack,
                                      check_closeness="none")
