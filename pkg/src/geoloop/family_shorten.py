"""Shortening of one-parameter families of based loops with a connecting
deformation.

Every node loop runs through the single-curve engine (with per-node cut
jitter so the cut partitions stay pairwise disjoint), the runs are merged
onto one synchronized timeline, and adjacent nodes are filled in by wedge
contractions: the loop built from the two node families and the short
vertical track between their endpoints. Because at most one node is mid-
contraction at any synchronized moment, one side of every wedge is short,
which is what keeps the pairwise fill-in below its certified bound. The
deformation to the shortened family replays the same wedges against
partial shortenings, so its loops stay within the stated budget of the
original lengths.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .certificates import BoundCertificate, Slack
from .curve_shorten import MOVE_STEP, ShorteningFamily, ShorteningParams, shorten_curve
from .curves import LoopAt, PLCurve, concat, reverse, stitch, subcurve
from .errors import SyncFailed
from .homotopy import LengthHomotopy
from .manifolds import Manifold

CUT_JITTER_UNIT = 1e-7


def _thread_count() -> int:
    try:
        n = int(os.environ.get("GEOLOOP_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


# ---------------------------------------------------------------------------
# Loop families
# ---------------------------------------------------------------------------


class LoopFamily:
    """Discrete one-parameter family of based loops.

    Closed families duplicate the first node at the end (same loop object),
    so consecutive node pairs cover the whole circle. Vertical tracks
    connect points of equal arclength fraction on adjacent node loops; the
    measured maximum track length is the family's discretization bound.
    Families derived from an engine run may carry a sampler, a callable
    t -> LoopAt providing loops at arbitrary parameters for refinement.
    """

    sampler = None

    def __init__(self, manifold: Manifold, basepoint: np.ndarray, nodes: np.ndarray,
                 loops: list[LoopAt], closed: bool = True):
        self.manifold = manifold
        self.basepoint = np.asarray(basepoint, dtype=float)
        self.nodes = np.asarray(nodes, dtype=float)
        self.loops = loops
        self.closed = closed
        if len(loops) != self.nodes.shape[0]:
            raise ValueError("need one loop per node")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("node parameters must be strictly increasing")
        for i, lp in enumerate(loops):
            if not np.array_equal(lp.basepoint, self.basepoint):
                raise ValueError(f"loop {i} is not based at the family basepoint")
        if closed and loops[0] is not loops[-1] and not np.array_equal(
                loops[0].curve.points, loops[-1].curve.points):
            raise ValueError("closed family must repeat its first loop at the end")
        self._endpoint_cache: dict[tuple[int, float], np.ndarray] = {}
        self.eps_measured = self.measure_eps()

    @property
    def n_gaps(self) -> int:
        return len(self.loops) - 1

    @property
    def max_length(self) -> float:
        return max(lp.length for lp in self.loops)

    def endpoint(self, i: int, fr: float) -> np.ndarray:
        key = (i, round(float(fr), 15))
        pt = self._endpoint_cache.get(key)
        if pt is None:
            c = self.loops[i].curve
            pt = c.point_at(fr * c.length)
            self._endpoint_cache[key] = pt
        return pt

    def vert_length(self, gap: int, fr: float) -> float:
        return self.manifold.local_distance(self.endpoint(gap, fr), self.endpoint(gap + 1, fr))

    def vertical_track(self, gap: int, fr: float) -> PLCurve:
        a = self.endpoint(gap, fr)
        b = self.endpoint(gap + 1, fr)
        if np.array_equal(a, b):
            return PLCurve.constant(self.manifold, a)
        if self.manifold.local_distance(a, b) <= self.manifold.margin:
            return PLCurve(self.manifold, np.stack([a, b]))
        return PLCurve.through(self.manifold, [a, b])

    def measure_eps(self, samples: int = 129) -> float:
        fr = np.linspace(0.0, 1.0, samples)
        worst = 0.0
        for g in range(self.n_gaps):
            a = np.stack([self.endpoint(g, f) for f in fr])
            b = np.stack([self.endpoint(g + 1, f) for f in fr])
            worst = max(worst, float(self.manifold.pair_lengths(a, b).max()))
        return worst

    def to_json(self) -> dict:
        return {
            "nodes": [float(t) for t in self.nodes],
            "closed": bool(self.closed),
            "eps_measured": self.eps_measured,
            "loops": [{"breakpoints": lp.curve.points.tolist()} for lp in self.loops],
        }


# ---------------------------------------------------------------------------
# Synchronization
# ---------------------------------------------------------------------------


@dataclass
class SyncEvent:
    kind: str          # "move" | "pause"
    node: int          # pause only (-1 for moves)
    step: int          # pause only
    fr0: float
    fr1: float
    count: int


class Synchronization:
    """Common parameter grid for all node shortenings.

    Endpoints advance together through arclength fraction; each node's
    contraction pauses are spliced in at its own jittered cut fractions, so
    at every grid moment at most one node is mid-contraction.
    """

    def __init__(self, family: LoopFamily, fams: list[ShorteningFamily]):
        self.family = family
        self.fams = fams
        self._distinct = len(family.loops) - (1 if family.closed else 0)
        self._build_events()
        self._vert_cache: dict[int, np.ndarray] = {}

    def _build_events(self) -> None:
        fam0 = self.fams[0]
        interiors: list[tuple[float, int, int]] = []
        finals: list[tuple[float, int, int]] = []
        for i in range(self._distinct):
            fam = self.fams[i]
            L = fam.alpha.length
            for st in fam.steps:
                fr = st.t_cut / L
                if fr >= 1.0 - 1e-12:
                    finals.append((1.0, i, st.index))
                else:
                    interiors.append((fr, i, st.index))
        interiors.sort()
        for k in range(1, len(interiors)):
            if interiors[k][0] - interiors[k - 1][0] < 1e-13:
                raise SyncFailed(
                    f"cut fractions of nodes {interiors[k - 1][1]} and {interiors[k][1]} collide "
                    f"at {interiors[k][0]:.12f}; increase the cut jitter")
        finals.sort(key=lambda t: t[1])

        Lmax = max(f.alpha.length for f in self.fams)
        events: list[SyncEvent] = []
        fr_prev = 0.0
        for fr, node, step in interiors + [(1.0, -1, -1)]:
            if fr > fr_prev + 1e-15:
                n = max(2, int(math.ceil((fr - fr_prev) * Lmax / MOVE_STEP)) + 1)
                events.append(SyncEvent("move", -1, -1, fr_prev, fr, n))
                fr_prev = fr
            if node >= 0:
                events.append(SyncEvent("pause", node, step, fr, fr, self._pause_count(node, step)))
        for fr, node, step in finals:
            events.append(SyncEvent("pause", node, step, 1.0, 1.0, self._pause_count(node, step)))
        self.events = events
        self.offsets = np.concatenate([[0], np.cumsum([e.count for e in events])])
        self.size = int(self.offsets[-1])
        T = np.empty(self.size)
        self._pause_ends: dict[int, list[tuple[int, int]]] = {}
        for e, o, o1 in zip(self.events, self.offsets[:-1], self.offsets[1:]):
            o = int(o)
            if e.kind == "move":
                T[o : o + e.count] = np.linspace(e.fr0, e.fr1, e.count)
            else:
                T[o : o + e.count] = e.fr0
                self._pause_ends.setdefault(e.node, []).append((int(o1), e.step))
        self.T = T
        self.lam_grid = np.linspace(0.0, 1.0, self.size)
        self._profiles: dict[int, np.ndarray] = {}

    def _pause_count(self, node: int, step: int) -> int:
        st = self.fams[node].steps[step]
        n1 = st.w_grid.shape[0] - 1
        return n1 + st.trace.stage_indices.shape[0] - 1

    def _node_key(self, i: int) -> int:
        return i % self._distinct if self.family.closed else i

    # -- profiles ---------------------------------------------------------

    def length_profile(self, i: int) -> np.ndarray:
        """Length of node i's family curve over the whole grid.

        Scans the timeline in order, tracking which of the node's own
        pauses have played; between and after them the length is linear in
        the advancing endpoint arc.
        """
        key = self._node_key(i)
        if key in self._profiles:
            return self._profiles[key]
        fam = self.fams[key]
        L = fam.alpha.length
        out = np.empty(self.size)
        base_len = 0.0
        base_arc = 0.0
        for e, o in zip(self.events, self.offsets[:-1]):
            o = int(o)
            if e.kind == "pause" and e.node == key:
                st = fam.steps[e.step]
                n1 = st.w_grid.shape[0] - 1
                l1 = st.entry_state.length + 2.0 * st.w_grid[1:]
                kept = st.trace.stage_indices[1:]
                l2 = st.trace.stage_lengths[kept] + st.e.length
                out[o : o + e.count] = np.concatenate([l1, l2])
                base_len = st.even_state.length
                base_arc = st.t_cut
            elif e.kind == "pause":
                out[o : o + e.count] = base_len + max(0.0, e.fr0 * L - base_arc)
            else:
                frs = np.linspace(e.fr0, e.fr1, e.count)
                out[o : o + e.count] = base_len + np.maximum(0.0, frs * L - base_arc)
        if len(self._profiles) > 4:
            self._profiles.clear()
        self._profiles[key] = out
        return out

    def vert_profile(self, gap: int) -> np.ndarray:
        """Vertical-track lengths for a gap over the whole grid."""
        if gap in self._vert_cache:
            return self._vert_cache[gap]
        out = np.empty(self.size)
        for e, o in zip(self.events, self.offsets[:-1]):
            o = int(o)
            if e.kind == "pause":
                out[o : o + e.count] = self.family.vert_length(gap, e.fr0)
            else:
                frs = np.linspace(e.fr0, e.fr1, e.count)
                A = np.stack([self.family.endpoint(gap, f) for f in frs])
                B = np.stack([self.family.endpoint(gap + 1, f) for f in frs])
                out[o : o + e.count] = self.family.manifold.pair_lengths(A, B)
        if len(self._vert_cache) > 4:
            self._vert_cache.clear()
        self._vert_cache[gap] = out
        return out

    # -- exact frame access -------------------------------------------------

    def _played_step(self, key: int, g: int) -> int | None:
        """Index of the node's last pause that completed at or before g."""
        ends = self._pause_ends.get(key)
        if not ends:
            return None
        lo, hi = 0, len(ends)
        while lo < hi:
            mid = (lo + hi) // 2
            if ends[mid][0] <= g:
                lo = mid + 1
            else:
                hi = mid
        return ends[lo - 1][1] if lo > 0 else None

    def node_curve(self, i: int, g: int) -> PLCurve:
        """Node i's family curve at grid index g (exact materialization)."""
        key = self._node_key(i)
        fam = self.fams[key]
        e, local = self._locate(g)
        if e.kind == "pause" and e.node == key:
            st = fam.steps[e.step]
            n1 = st.w_grid.shape[0] - 1
            if local < n1:
                w = float(st.w_grid[local + 1])
                piece = subcurve(st.e, st.e.length - w, st.e.length)
                return concat(concat(st.entry_state, reverse(piece)), piece)
            stage = st.trace.stages[local - n1 + 1].curve
            return concat(stage, st.e) if st.e.length > 0 else stage
        played = self._played_step(key, g)
        arc = self.node_arc(i, g)
        if played is None:
            return subcurve(fam.alpha, 0.0, arc)
        st = fam.steps[played]
        if arc <= st.t_cut + 1e-15:
            return st.even_state
        return concat(st.even_state, subcurve(fam.alpha, st.t_cut, arc))

    def _locate(self, g: int) -> tuple[SyncEvent, int]:
        j = int(np.searchsorted(self.offsets, g, side="right")) - 1
        j = min(max(j, 0), len(self.events) - 1)
        return self.events[j], g - int(self.offsets[j])

    def node_arc(self, i: int, g: int) -> float:
        """Endpoint arclength of node i's curve at grid index g.

        During the node's own pauses this is the exact stored cut position,
        avoiding the fraction round-trip through floats.
        """
        key = self._node_key(i)
        fam = self.fams[key]
        e, _ = self._locate(g)
        if e.kind == "pause" and e.node == key:
            return float(fam.steps[e.step].t_cut)
        return float(self.T[g]) * fam.alpha.length

    def gap_track(self, gap: int, g: int) -> PLCurve:
        """Vertical track between the two family curves' actual endpoints."""
        a = self.node_curve(gap, g).end
        b = self.node_curve(gap + 1, g).end
        m = self.family.manifold
        if np.array_equal(a, b):
            return PLCurve.constant(m, a)
        if m.local_distance(a, b) <= m.margin:
            return PLCurve(m, np.stack([a, b]))
        return PLCurve.through(m, [a, b])

    def wedge_frame(self, gap: int, g: int) -> PLCurve:
        """The fill-in loop at grid index g: left family curve, vertical
        track, reversed right family curve."""
        left = self.node_curve(gap, g)
        right = self.node_curve(gap + 1, g)
        track = self.gap_track(gap, g)
        out = concat(left, track) if len(track.points) > 1 else left
        return concat(out, reverse(right))

    def endpoint_gap_ok(self, eps_allow: float) -> bool:
        worst = 0.0
        for gap in range(self.family.n_gaps):
            worst = max(worst, float(self.vert_profile(gap).max()))
        return worst <= eps_allow


def synchronize(family: LoopFamily, fams: list[ShorteningFamily]) -> Synchronization:
    """Merge per-node shortenings onto one common parameter grid."""
    return Synchronization(family, fams)


# ---------------------------------------------------------------------------
# Pairwise contraction and the shortened family
# ---------------------------------------------------------------------------


@dataclass
class GapContraction:
    """Contraction of the loop beta_i * reverse(beta_{i+1}) to the basepoint.

    Frames run over the synchronized grid: index size-1 is the full loop,
    index 0 the constant. lengths is exact arithmetic over re-measured
    parts; frames materialize on demand.
    """

    sync: Synchronization
    gap: int
    lengths: np.ndarray
    certificate: BoundCertificate
    disjoint_max: float

    def frame(self, g: int) -> PLCurve:
        return self.sync.wedge_frame(self.gap, g)

    @property
    def max_length(self) -> float:
        return float(self.lengths.max())

    @property
    def argmax(self) -> int:
        return int(self.lengths.argmax())

    def witness(self) -> PLCurve:
        return self.frame(self.argmax)

    def to_homotopy(self, max_frames: int = 400) -> LengthHomotopy:
        """Materialized homotopy from the full loop down to the constant."""
        n = self.sync.size
        idx = np.unique(np.concatenate([
            np.linspace(0, n - 1, min(max_frames, n)).astype(int), [self.argmax]]))[::-1]
        frames = [self.frame(int(g)) for g in idx]
        return LengthHomotopy.from_frames(
            frames, certified_bound=self.certificate.claimed,
            slack=self.certificate.slack, fixed_end=True, check_closeness="none")


def contract_adjacent(sync: Synchronization, gap: int, params: ShorteningParams,
                      slack: Slack | None = None) -> GapContraction:
    """Certified contraction of one adjacent pair over the synchronized grid."""
    slack = slack if slack is not None else Slack.default_for(params.a)
    li = sync.length_profile(gap)
    lj = sync.length_profile(gap + 1)
    vv = sync.vert_profile(gap)
    lengths = li + vv + lj
    cert = BoundCertificate.make(
        "two_l_4a",
        {"l": params.l, "a": params.a, "delta": params.delta, "eps": params.epsilon},
        float(lengths.max()), slack.value(params.delta, params.epsilon))
    disjoint = float(np.minimum(li, lj).max())
    return GapContraction(sync, gap, lengths, cert, disjoint)


class NodeDeformation:
    """One node's track through the connecting deformation: the partial
    shortening at every grid moment, from the input loop to its shortened
    replacement."""

    def __init__(self, sync: Synchronization, node: int):
        self.sync = sync
        self.node = node
        fam = sync.fams[sync._node_key(node)]
        self.alpha = fam.alpha
        L = self.alpha.length
        self.lengths = sync.length_profile(node) + (1.0 - sync.T) * L

    @property
    def max_length(self) -> float:
        return float(self.lengths.max())

    def frame(self, g: int) -> PLCurve:
        cur = self.sync.node_curve(self.node, g)
        t = self.sync.node_arc(self.node, g)
        if t >= self.alpha.length:
            return cur
        return concat(cur, subcurve(self.alpha, t, self.alpha.length))

    def initial(self) -> PLCurve:
        return self.frame(0)

    def final(self) -> PLCurve:
        return self.frame(self.sync.size - 1)

    def to_homotopy(self, certified_bound: float, slack: float,
                    max_frames: int = 200) -> LengthHomotopy:
        n = self.sync.size
        idx = np.linspace(0, n - 1, min(max_frames, n)).astype(int)
        frames = [self.frame(int(g)) for g in np.unique(idx)]
        return LengthHomotopy.from_frames(frames, certified_bound=certified_bound,
                                          slack=slack, fixed_end=True,
                                          check_closeness="none")


@dataclass
class FamilyResult:
    """Everything the family engine certifies and emits."""

    tilde_f: LoopFamily
    node_finals: list[PLCurve]
    G: list[NodeDeformation]
    contractions: list[GapContraction]
    sync: Synchronization
    certificates: list[BoundCertificate]
    disjoint_max: float
    disjoint_bound: float
    tilde_transit_max: float
    g_transit_max: float
    tilde_witness_gap: int = -1
    g_witness: tuple | None = None

    def certificate(self, formula_id: str) -> BoundCertificate:
        for c in self.certificates:
            if c.formula_id == formula_id:
                return c
        raise KeyError(formula_id)

    def witness_two_l(self) -> PLCurve:
        con = max(self.contractions, key=lambda c: c.max_length)
        return con.witness()

    def witness_tilde(self) -> PLCurve:
        g = self.tilde_witness_gap
        con = self.contractions[g]
        bi, bj = self.node_finals[g], self.node_finals[g + 1]
        doubling = bi.length + 2.0 * bj.length
        if doubling >= con.max_length + bj.length:
            return stitch([bi, reverse(bj), bj])
        lp = _tilde_transit_loop(self.sync, self.node_finals, g, con.argmax)
        return lp.curve

    def witness_g(self) -> PLCurve:
        kind, payload = self.g_witness
        if kind == "node":
            return self.G[payload].frame(int(np.argmax(self.G[payload].lengths)))
        gap, info = payload
        return transit_sheet_frame(self.sync, gap, info)


@dataclass
class GapSheetMax:
    """Argmax bookkeeping for one gap's transit sheet in the deformation."""

    value: float
    kind: str          # "handover" | "doubling" | "replay"
    lam_idx: int
    w_idx: int
    s_idx: int


def _gap_stage_maxima(sync: Synchronization, gap: int, contraction: GapContraction,
                      L_i: float, L_j: float) -> GapSheetMax:
    """Largest loop in the two-stage transit sheet of one gap over all
    deformation moments (profile arithmetic; see the frame builders in
    transit_sheet_frame for the corresponding geometry)."""
    T = sync.T
    li = sync.length_profile(gap)
    lj = sync.length_profile(gap + 1)
    vv = sync.vert_profile(gap)
    n = T.shape[0]

    def acc_argmax(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mx = np.maximum.accumulate(a)
        idx = np.where(a >= mx, np.arange(a.shape[0]), -1)
        return mx, np.maximum.accumulate(idx)

    # Stage one: tail handover across sliding vertical tracks.
    B = T * L_i + vv + (1.0 - T) * L_j
    rmax, rarg = acc_argmax(B[::-1])
    suffix = rmax[::-1]
    suffix_arg = (n - 1 - rarg)[::-1]
    stage1 = li - T * L_i + suffix
    a1 = int(stage1.argmax())
    # Stage two: wedge replay with the remaining right tail attached; the
    # doubled side is always the shorter leg.
    lg1 = li + vv
    lg2 = lj
    short = np.minimum(lg1, lg2)
    longl = np.maximum(lg1, lg2)
    U, U_arg = acc_argmax(contraction.lengths)
    dbl = longl + 2.0 * short + (1.0 - T) * L_j
    rep = U + short + (1.0 - T) * L_j
    a_dbl = int(dbl.argmax())
    a_rep = int(rep.argmax())
    cands = [
        GapSheetMax(float(stage1[a1]), "handover", a1, int(suffix_arg[a1]), -1),
        GapSheetMax(float(dbl[a_dbl]), "doubling", a_dbl, -1, -1),
        GapSheetMax(float(rep[a_rep]), "replay", a_rep, -1, int(U_arg[a_rep])),
    ]
    return max(cands, key=lambda c: c.value)


def transit_sheet_frame(sync: Synchronization, gap: int, info: GapSheetMax) -> PLCurve:
    """Materialize the deformation-sheet loop the profile argmax refers to."""
    fam_i = sync.fams[sync._node_key(gap)]
    fam_j = sync.fams[sync._node_key(gap + 1)]
    L_i, L_j = fam_i.alpha.length, fam_j.alpha.length
    m = sync.family.manifold
    lam = info.lam_idx
    T_lam = float(sync.T[lam])
    left = sync.node_curve(gap, lam)
    right = sync.node_curve(gap + 1, lam)
    tail_j = subcurve(fam_j.alpha, min(T_lam * L_j, L_j), L_j)

    def _track(a_pt, b_pt) -> PLCurve:
        if np.array_equal(a_pt, b_pt):
            return PLCurve.constant(m, a_pt)
        if m.local_distance(a_pt, b_pt) <= m.margin:
            return PLCurve(m, np.stack([a_pt, b_pt]))
        return PLCurve.through(m, [a_pt, b_pt])

    if info.kind == "handover":
        w = float(sync.T[info.w_idx])
        mid_i = subcurve(fam_i.alpha, min(T_lam * L_i, L_i), min(w * L_i, L_i))
        a = stitch([left, mid_i])
        tail_w = subcurve(fam_j.alpha, min(w * L_j, L_j), L_j)
        return stitch([a, _track(a.end, tail_w.start), tail_w], tol=1e-8)
    track = _track(left.end, right.end)
    g1 = stitch([left, track])
    g2 = right
    glong, gshort = (g1, g2) if g1.length >= g2.length else (g2, g1)
    if info.kind == "doubling":
        return stitch([glong, reverse(gshort), gshort, tail_j], tol=1e-8)
    wedge = sync.wedge_frame(gap, info.s_idx)
    return stitch([wedge, gshort, tail_j], tol=1e-8)


def shorten_family(family: LoopFamily, params: ShorteningParams, L: float | None = None,
                   slack: Slack | None = None, transit_samples: int = 8,
                   progress=None) -> FamilyResult:
    """Shorten every loop of the family and certify the three family bounds.

    Per-node runs use increasing cut jitter to keep cut partitions pairwise
    disjoint. Raises HypothesisViolated from any node run; raises
    SyncFailed if jitter fails to separate the partitions.
    """
    m = family.manifold
    slack = slack if slack is not None else Slack.default_for(params.a)
    sl = slack.value(params.delta, params.epsilon)
    L_stated = L if L is not None else family.max_length
    if family.max_length > L_stated + 1e-9:
        raise ValueError("a node loop exceeds the stated length bound L")
    if not family.closed:
        cap = params.l + params.a + 1e-9
        if family.loops[0].length > cap or family.loops[-1].length > cap:
            raise ValueError("open families need both end loops within l + a")

    distinct = len(family.loops) - (1 if family.closed else 0)

    def run_node(i: int):
        pr = params.with_jitter((i + 1) * CUT_JITTER_UNIT * params.a)
        res = shorten_curve(m, family.loops[i].curve, pr, slack=slack, store="subsample")
        if progress:
            progress(i, distinct)
        return res

    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run_node, range(distinct)))
    else:
        results = [run_node(i) for i in range(distinct)]

    fams = [results[i].family for i in range(distinct)]
    if family.closed:
        fams = fams + [fams[0]]
    sync = synchronize(family, fams)

    node_finals = [fams[sync._node_key(i)].final_curve for i in range(len(family.loops))]
    betas = [LoopAt(fc, family.basepoint) if fc.is_closed() else None for fc in node_finals]
    if any(b is None for b in betas):
        raise ValueError("a shortened node curve failed to close up")

    contractions = [contract_adjacent(sync, g, params, slack) for g in range(family.n_gaps)]
    two_l_meas = max(c.max_length for c in contractions)
    cert_2l4a = BoundCertificate.make(
        "two_l_4a", {"l": params.l, "a": params.a, "delta": params.delta,
                     "eps": params.epsilon}, two_l_meas, sl)

    # Shortened family transit: doubled right loop, then the wedge replay.
    tilde_meas = 0.0
    tilde_gap = 0
    for g, con in enumerate(contractions):
        bi, bj = node_finals[g], node_finals[g + 1]
        here = max(bi.length + 2.0 * bj.length, con.max_length + bj.length)
        if here > tilde_meas:
            tilde_meas = here
            tilde_gap = g
    cert_3l5a = BoundCertificate.make(
        "three_l_5a", {"l": params.l, "a": params.a}, tilde_meas, sl)

    G = [NodeDeformation(sync, i) for i in range(len(family.loops))]
    g_meas = max(d.max_length for d in G)
    g_node = int(np.argmax([d.max_length for d in G]))
    g_transit = 0.0
    g_best: tuple | None = ("node", g_node)
    for g, con in enumerate(contractions):
        L_i = fams[sync._node_key(g)].alpha.length
        L_j = fams[sync._node_key(g + 1)].alpha.length
        info = _gap_stage_maxima(sync, g, con, L_i, L_j)
        if info.value > g_transit:
            g_transit = info.value
            if info.value > g_meas:
                g_best = ("sheet", (g, info))
    cert_G = BoundCertificate.make(
        "L_5a_3l", {"L": L_stated, "a": params.a, "l": params.l},
        max(g_meas, g_transit), sl)

    disjoint_max = max(c.disjoint_max for c in contractions)
    disjoint_bound = params.l + params.a + params.delta + sl

    tilde_f = _build_tilde_family(family, sync, contractions, node_finals, transit_samples)

    certs = [cert_2l4a, cert_3l5a, cert_G]
    return FamilyResult(tilde_f, node_finals, G, contractions, sync, certs,
                        disjoint_max, disjoint_bound, tilde_meas,
                        max(g_meas, g_transit), tilde_gap, g_best)


def _tilde_transit_loop(sync: Synchronization, node_finals: list[PLCurve],
                        gap: int, g: int) -> LoopAt:
    """Transit loop of the shortened family: wedge frame with the right
    replacement loop attached."""
    right = node_finals[gap + 1]
    wedge = sync.wedge_frame(gap, g)
    lp = concat(wedge, right) if right.length > 0 else wedge
    return LoopAt(lp, sync.family.basepoint)


def _blend_loops(A: LoopAt, B: LoopAt, sigma: float) -> LoopAt:
    """Pointwise geodesic interpolation between two nearby based loops.

    Both loops are resampled at matched arclength fractions, so the blend
    is a continuous path between them with the basepoint pinned.
    """
    if sigma <= 0.0:
        return A
    if sigma >= 1.0:
        return B
    m = A.manifold
    n = max(len(A.curve), len(B.curve), 8)
    fr = np.linspace(0.0, 1.0, n)
    pa = A.curve.sample_fractions(fr)
    pb = B.curve.sample_fractions(fr)
    pts = m.interpolate_batch(pa, pb, np.full(n, float(sigma)))
    pts[0] = A.basepoint
    pts[-1] = A.basepoint
    return LoopAt(PLCurve(m, pts), A.basepoint)


def _build_tilde_family(family: LoopFamily, sync: Synchronization,
                        contractions: list[GapContraction], node_finals: list[PLCurve],
                        transit_samples: int) -> LoopFamily:
    """Shortened family: the node replacements plus sampled transit loops.

    Transit runs from each node's replacement through the wedge replay
    down to the next node's replacement, so inner parameters map to the
    synchronized grid in reverse.
    """
    m = family.manifold
    p = family.basepoint
    nodes: list[float] = []
    loops: list[LoopAt] = []
    n_gaps = family.n_gaps
    n_grid = sync.size
    knots: list[tuple[np.ndarray, np.ndarray]] = []
    for g in range(n_gaps):
        t0, t1 = float(family.nodes[g]), float(family.nodes[g + 1])
        beta = node_finals[g]
        loops.append(LoopAt(beta, p) if beta.length > 0 else LoopAt.constant(m, p))
        nodes.append(t0)
        t_knots = [t0]
        g_knots = [n_grid - 1]
        if transit_samples > 0:
            # The doubling stretch between a node replacement and the full
            # wedge keeps the sampled family continuous across junctions.
            right = node_finals[g + 1]
            n_dbl = max(2, transit_samples // 2)
            for kd in range(1, n_dbl + 1):
                w = right.length * kd / (n_dbl + 1)
                piece = subcurve(right, right.length - w, right.length)
                lp = concat(concat(beta, reverse(piece)), piece) if w > 0 else beta
                tk = t0 + (t1 - t0) * 0.2 * kd / (n_dbl + 1)
                loops.append(LoopAt(lp, p))
                nodes.append(float(tk))
            con = contractions[g]
            pick = np.unique(np.concatenate([
                np.linspace(0, n_grid - 1, transit_samples + 2).astype(int)[1:-1],
                [con.argmax]]))[::-1]
            base_t = t0 + 0.2 * (t1 - t0)
            for k, gg in enumerate(int(x) for x in pick):
                loops.append(_tilde_transit_loop(sync, node_finals, g, gg))
                tk = base_t + (t1 - base_t) * (k + 1) / (len(pick) + 1)
                nodes.append(float(tk))
                t_knots.append(float(tk))
                g_knots.append(gg)
        t_knots.append(t1)
        g_knots.append(0)
        knots.append((np.array(t_knots), np.array(g_knots, dtype=float)))
    last = node_finals[-1]
    loops.append(LoopAt(last, p) if last.length > 0 else LoopAt.constant(m, p))
    nodes.append(float(family.nodes[-1]))
    if family.closed:
        loops[-1] = loops[0]
    fam = LoopFamily(m, p, np.array(nodes), loops, closed=family.closed)

    gaps = family.n_gaps
    t_nodes = family.nodes

    def sampler(t: float) -> LoopAt:
        t = min(max(float(t), float(t_nodes[0])), float(t_nodes[-1]))
        gg = int(np.clip(np.searchsorted(t_nodes, t, side="right") - 1, 0, gaps - 1))
        tk, gk = knots[gg]
        x = float(np.interp(t, tk, gk))
        i0 = int(np.clip(math.floor(x), 0, n_grid - 1))
        sigma = x - i0
        A = _tilde_transit_loop(sync, node_finals, gg, i0)
        if sigma < 1e-12 or i0 + 1 > n_grid - 1:
            return A
        B = _tilde_transit_loop(sync, node_finals, gg, i0 + 1)
        return _blend_loops(A, B, sigma)

    fam.sampler = sampler
    return fam
