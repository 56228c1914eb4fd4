"""Length-nonincreasing loop shortening by geodesic midpoint sweeps.

The process alternates parity sweeps that replace each breakpoint by the
minimal-geodesic midpoint of its neighbors, every move guarded so recorded
lengths never increase. When sweeps stagnate above the contraction scale,
the discrete second variation of length is checked: a clearly negative
eigendirection yields a guarded descent step, so limits are genuine local
minima of the discrete length functional rather than arbitrary stationary
curves. Loops that fall inside a convex ball are contracted to an exact
constant by repeated halving toward the basepoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curves import LoopAt, PLCurve
from .manifolds import Manifold

# Working resolution of the sweep state; midpoint moves then stay below
# half the injectivity margin, which is the homotopy frame-spacing target.
WORK_GAP = 0.045
RECORD_EPS = 0.02
SNAP_EPS = 1e-13
ESCAPE_STEPS = (0.03, 0.015, 0.0075, 0.003)
EIG_FLOOR = 1e-7


@dataclass
class ShorteningTrace:
    """Record of one shortening run: a discrete length-nonincreasing path homotopy.

    stage_lengths covers every recorded stage; stages holds the retained
    curves (all of them unless the caller asked for subsampling) with
    stage_indices giving their positions in the length record.
    """

    stages: list[LoopAt]
    stage_lengths: np.ndarray
    stage_indices: np.ndarray
    limit: LoopAt
    converged: bool
    iterations: int
    basepoint_fixed: bool

    @property
    def initial(self) -> LoopAt:
        return self.stages[0]

    def to_json(self) -> dict:
        return {
            "stage_lengths": [float(x) for x in self.stage_lengths],
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "final": {"breakpoints": self.limit.curve.points.tolist()},
        }


def loop_residual(loop: LoopAt | PLCurve, fixed_basepoint: bool = True) -> float:
    """Max deviation of breakpoints from the midpoint of their neighbors.

    The basepoint is excluded when it is pinned; a constant loop has
    residual zero.
    """
    curve = loop.curve if isinstance(loop, LoopAt) else loop
    pts = curve.points
    if pts.shape[0] <= 2:
        return 0.0
    m = curve.manifold
    cyc = pts[:-1]
    M = cyc.shape[0]
    if M < 3:
        return 0.0
    prev = np.roll(cyc, 1, axis=0)
    nxt = np.roll(cyc, -1, axis=0)
    mids = m.resample_local(prev, nxt, 2)[:, 1, :]
    dev = m.pair_lengths(cyc, mids)
    if fixed_basepoint:
        dev = dev[1:]
    return float(dev.max()) if dev.size else 0.0


def probe_local_minimality(loop: LoopAt, rng: np.random.Generator, n: int = 50,
                           magnitude: float = 1e-3) -> float:
    """Smallest length change over random single-breakpoint perturbations.

    Nonnegative (up to tolerance) at a local minimum of the discrete length.
    """
    curve = loop.curve
    m = curve.manifold
    pts = curve.points
    if pts.shape[0] <= 3:
        return 0.0
    worst = math.inf
    base = curve.length
    for _ in range(n):
        i = int(rng.integers(1, pts.shape[0] - 1))
        t = m.random_tangent(pts[i], rng)
        moved = m.project_points((pts[i] + magnitude * t.dir)[None, :])[0]
        old = m.pair_lengths(pts[i - 1 : i + 1], pts[i : i + 2]).sum()
        new = (m.local_distance(pts[i - 1], moved) + m.local_distance(moved, pts[i + 1]))
        worst = min(worst, base - old + new - base)
    return float(worst)


# ---------------------------------------------------------------------------
# Sweep engine on the open cyclic representation
# ---------------------------------------------------------------------------


class _LoopState:
    """Open cyclic point array (no duplicated closing point)."""

    def __init__(self, m: Manifold, pts: np.ndarray, based: bool):
        self.m = m
        self.pts = np.ascontiguousarray(pts, dtype=float)
        self.based = based

    def length(self) -> float:
        nxt = np.roll(self.pts, -1, axis=0)
        return float(self.m.pair_lengths(self.pts, nxt).sum())

    def closed_points(self) -> np.ndarray:
        return np.vstack([self.pts, self.pts[0]])

    def to_loop(self) -> LoopAt:
        if np.all(self.pts == self.pts[0]):
            return LoopAt.constant(self.m, self.pts[0])
        curve = PLCurve(self.m, self.closed_points())
        return LoopAt(curve, self.pts[0])

    # -- midpoint half-sweep over one parity class -----------------------

    def sweep_parity(self, parity: int) -> float:
        """Guarded midpoint replacement over indices of one parity; returns max move."""
        M = self.pts.shape[0]
        if M < 4:
            return 0.0
        start = 1 if self.based else 0
        idx = np.arange(start + ((start ^ parity) & 1), M, 2)
        if self.based:
            idx = idx[idx != 0]
        if idx.size == 0:
            return 0.0
        prev = self.pts[(idx - 1) % M]
        nxt = self.pts[(idx + 1) % M]
        mids = self.m.resample_local(prev, nxt, 2)[:, 1, :]
        old = self.m.pair_lengths(prev, self.pts[idx]) + self.m.pair_lengths(self.pts[idx], nxt)
        new = self.m.pair_lengths(prev, mids) + self.m.pair_lengths(mids, nxt)
        accept = new <= old
        if not np.any(accept):
            return 0.0
        moved = self.m.pair_lengths(self.pts[idx[accept]], mids[accept])
        self.pts[idx[accept]] = mids[accept]
        return float(moved.max()) if moved.size else 0.0

    def dedupe(self, tol: float = 1e-7) -> int:
        """Drop breakpoints that coincide with their predecessor.

        A doubled-back fold that lands between two coincident breakpoints
        deadlocks the alternating sweeps (the pair translates without
        shortening); removing one of the pair puts the fold on a breakpoint,
        where the plain midpoint move retracts it. Removal never lengthens.
        """
        M = self.pts.shape[0]
        if M < 5:
            return 0
        nxt = np.roll(self.pts, -1, axis=0)
        gaps = self.m.pair_lengths(self.pts, nxt)
        drop = gaps < tol
        drop_idx = np.where(drop)[0]
        if drop_idx.size == 0:
            return 0
        mask = np.ones(M, dtype=bool)
        for i in drop_idx:
            j = (int(i) + 1) % M
            if j == 0 and self.based:
                if int(i) != 0:
                    mask[int(i)] = False
                continue
            mask[j] = False
        if mask.sum() < 4:
            return 0
        removed = int(M - mask.sum())
        if removed:
            self.pts = self.pts[mask]
        return removed

    def resample(self, gap: float) -> None:
        """Even arclength resampling; new points lie on the old curve."""
        closed = self.closed_points()
        seg = self.m.pair_lengths(closed[:-1], closed[1:])
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        L = cum[-1]
        n = max(6, 2 * int(math.ceil(L / (2.0 * gap))))
        if L <= 0:
            self.pts = self.pts[:1].repeat(max(n, 4), axis=0)
            return
        targets = np.linspace(0.0, L, n + 1)[:-1]
        ii = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, seg.shape[0] - 1)
        f = (targets - cum[ii]) / np.maximum(seg[ii], 1e-300)
        f = np.clip(f, 0.0, 1.0)
        out = self.m.interpolate_batch(closed[ii], closed[ii + 1], f)
        out[0] = self.pts[0]
        self.pts = out

    # -- second-variation escape ------------------------------------------

    def _gradient(self, pts: np.ndarray) -> np.ndarray:
        prev = np.roll(pts, 1, axis=0)
        nxt = np.roll(pts, -1, axis=0)
        return -(self.m.log_dir(pts, prev) + self.m.log_dir(pts, nxt))

    def escape_direction(self) -> np.ndarray | None:
        """Negative eigendirection of the discrete length Hessian, or None.

        Central finite differences of the length gradient over a 3-coloring
        of the cyclic index set fill the block-tridiagonal Hessian in the
        per-point tangent bases.
        """
        if self.m.dim != 2:
            return None
        pts = self.pts
        M = pts.shape[0]
        free = np.arange(1, M) if self.based else np.arange(M)
        F = free.shape[0]
        if F < 3:
            return None
        B = self.m.tangent_basis(pts)
        col_of = {int(i): c for c, i in enumerate(free)}
        H = np.zeros((2 * F, 2 * F))
        delta = 1e-5
        for color in range(3):
            sel = free[np.arange(F) % 3 == color]
            if sel.size == 0:
                continue
            for a in range(2):
                d = np.zeros_like(pts)
                d[sel] = delta * B[sel, a]
                gp = self._gradient(self.m.project_points(pts + d))
                gm = self._gradient(self.m.project_points(pts - d))
                rows = np.einsum("ij,iaj->ia", (gp - gm) / (2 * delta), B)
                for i in sel:
                    ci = col_of[int(i)]
                    for j in (int(i) - 1, int(i), (int(i) + 1) % M):
                        cj = col_of.get(j)
                        if cj is not None:
                            H[2 * cj : 2 * cj + 2, 2 * ci + a] = rows[j]
        H = 0.5 * (H + H.T)
        w, V = np.linalg.eigh(H)
        scale = max(1.0, float(np.abs(H).max()))
        if w[0] >= -EIG_FLOOR * scale:
            return None
        v = V[:, 0]
        k = int(np.argmax(np.abs(v)))
        if v[k] < 0:
            v = -v
        field = np.zeros_like(pts)
        field[free] = v[0::2, None] * B[free, 0] + v[1::2, None] * B[free, 1]
        nmax = float(np.linalg.norm(field, axis=1).max())
        return field / nmax if nmax > 0 else None


def _snap_threshold(m: Manifold) -> float:
    """Loops below this length sit well inside a convex ball of the anchor,
    where halving toward it cannot lengthen; every bundled model has
    convexity radius above 0.25."""
    return min(0.4, 0.45 * m.diameter_bound)


def _shorten(m: Manifold, pts: np.ndarray, based: bool, tol: float, budget: int,
             work_gap: float, store: str, record_eps: float, escape: bool,
             patience: int = 4, snap_below: float | None = None) -> ShorteningTrace:
    state = _LoopState(m, pts, based)
    snap_thresh = snap_below if snap_below is not None else _snap_threshold(m)

    lengths: list[float] = []
    kept: list[LoopAt] = []
    kept_idx: list[int] = []
    last_kept_pts: np.ndarray | None = None

    def record(force: bool = False) -> None:
        nonlocal last_kept_pts
        L = state.length()
        lengths.append(L)
        idx = len(lengths) - 1
        keep = force or store == "all"
        if not keep and last_kept_pts is not None:
            if last_kept_pts.shape == state.pts.shape:
                moved = float(m.pair_lengths(last_kept_pts, state.pts).max())
            else:
                moved = math.inf
            keep = moved >= record_eps
        if keep or last_kept_pts is None:
            kept.append(state.to_loop())
            kept_idx.append(idx)
            last_kept_pts = state.pts.copy()

    record(force=True)
    L0 = lengths[0]

    if state.pts.shape[0] < 4 or L0 == 0.0:
        limit = state.to_loop()
        return ShorteningTrace(kept, np.array(lengths), np.array(kept_idx), limit,
                               True, 0, based)

    # Move onto the working resolution as the first recorded stage; the new
    # breakpoints lie on the input curve, so this cannot lengthen it.
    state.resample(work_gap)
    record()

    sweeps = 0
    stall = 0
    converged = False
    escape_field: np.ndarray | None = None
    last_resample_len = L0
    since_resample = 0

    while sweeps < budget:
        before = lengths[-1]
        moved = max(state.sweep_parity(0), 0.0)
        record()
        moved = max(moved, state.sweep_parity(1))
        record()
        sweeps += 1
        since_resample += 1

        if sweeps % 16 == 0 or lengths[-1] < 0.55 * last_resample_len:
            state.resample(work_gap)
            record()
            last_resample_len = lengths[-1]
            since_resample = 0

        dec = before - lengths[-1]
        if dec < tol:
            stall += 1
        else:
            stall = 0
            escape_field = None

        if stall >= patience:
            # A state resampled in this very iteration has not been swept
            # yet; judge it only after at least one sweep.
            if since_resample == 0:
                stall = patience - 1
                continue
            # Coincident fold pairs deadlock the parity sweeps; collapse
            # them first, then give a fresh resampling one chance to
            # unlock, before treating the state as stationary.
            if state.dedupe() > 0:
                record()
                stall = 0
                continue
            if since_resample > 1:
                state.resample(work_gap)
                record()
                last_resample_len = lengths[-1]
                since_resample = 0
                stall = max(0, patience - 2)
                continue
            if lengths[-1] < snap_thresh:
                break
            if escape:
                if escape_field is None:
                    escape_field = state.escape_direction()
                advanced = False
                if escape_field is not None:
                    for sgn in (1.0, -1.0):
                        for step in ESCAPE_STEPS:
                            cand = m.project_points(state.pts + sgn * step * escape_field)
                            if based:
                                cand[0] = state.pts[0]
                            trial = _LoopState(m, cand, based)
                            if trial.length() <= lengths[-1] - 1e-14:
                                state.pts = trial.pts
                                record()
                                advanced = True
                                break
                        if advanced:
                            break
                if advanced:
                    stall = 0
                    continue
                escape_field = None
            converged = True
            break
    else:
        converged = False

    if not converged and sweeps < budget:
        converged = True  # left the loop via the snap branch

    # Contract sub-threshold loops to an exact constant by halving toward
    # the anchor; each stage at most halves every radius, so displacements
    # stay inside convex balls and lengths cannot grow.
    if lengths[-1] < snap_thresh and lengths[-1] > 0.0:
        anchor = state.pts[0].copy()
        guard = 0
        while lengths[-1] > SNAP_EPS and guard < 80:
            mids = m.resample_local(np.repeat(anchor[None, :], state.pts.shape[0], axis=0),
                                    state.pts, 2)[:, 1, :]
            mids[0] = anchor
            trial = _LoopState(m, mids, based)
            if trial.length() > lengths[-1] + 1e-12:
                break
            state.pts = trial.pts
            record()
            guard += 1
        state.pts = np.repeat(anchor[None, :], 4, axis=0)
        record(force=True)
        converged = True

    limit = state.to_loop()
    if limit.length <= SNAP_EPS:
        limit = LoopAt.constant(m, state.pts[0])
    if kept_idx[-1] != len(lengths) - 1:
        kept.append(limit)
        kept_idx.append(len(lengths) - 1)
    return ShorteningTrace(kept, np.array(lengths), np.array(kept_idx), limit,
                           converged, sweeps, based)


def _prepare(curve: PLCurve) -> np.ndarray:
    if not curve.is_closed():
        raise ValueError("loop shortening needs a closed curve")
    return curve.points[:-1].copy() if curve.points.shape[0] > 1 else curve.points.copy()


def shorten_based_loop(loop: LoopAt, tol: float = 1e-6, budget: int = 100_000,
                       work_gap: float = WORK_GAP, store: str = "all",
                       record_eps: float = RECORD_EPS, escape: bool = True) -> ShorteningTrace:
    """Shorten a based loop, keeping the basepoint fixed at every stage.

    The limit is either a constant loop at the basepoint or a loop whose
    interior breakpoints satisfy the discrete geodesic condition; a sweep
    budget overrun returns the trace with converged=False instead of
    raising.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if loop.length == 0.0:
        return ShorteningTrace([loop], np.zeros(1), np.zeros(1, dtype=int), loop, True, 0, True)
    pts = _prepare(loop.curve)
    pts[0] = loop.basepoint
    return _shorten(loop.manifold, pts, True, tol, budget, work_gap, store, record_eps, escape)


def shorten_free_loop(curve: PLCurve, tol: float = 1e-6, budget: int = 100_000,
                      work_gap: float = WORK_GAP, store: str = "all",
                      record_eps: float = RECORD_EPS, escape: bool = False) -> ShorteningTrace:
    """Shorten a closed curve with no basepoint constraint.

    Escapes are off by default so every discrete closed geodesic, minimal
    or not, is a fixed point; this is the behavior the sweep-out stage
    relies on.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if curve.length == 0.0:
        lp = LoopAt(curve if curve.is_closed() else PLCurve.constant(curve.manifold, curve.start),
                    curve.start)
        return ShorteningTrace([lp], np.zeros(1), np.zeros(1, dtype=int), lp, True, 0, False)
    if not curve.is_closed():
        raise ValueError("free shortening needs a closed curve")
    return _shorten(curve.manifold, _prepare(curve), False, tol, budget, work_gap, store,
                    record_eps, escape)


def sweep_once(loop: LoopAt) -> LoopAt:
    """One guarded double sweep; used to check the fixed-point property."""
    if loop.curve.points.shape[0] < 4:
        return loop
    state = _LoopState(loop.manifold, loop.curve.points[:-1].copy(), True)
    state.sweep_parity(0)
    state.sweep_parity(1)
    return state.to_loop()
