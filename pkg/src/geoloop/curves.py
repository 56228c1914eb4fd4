"""Piecewise-geodesic curves and their algebra.

A PLCurve is an ordered list of breakpoints on a manifold; consecutive
breakpoints are closer than the injectivity margin, so each segment is the
unique minimal geodesic between its ends and the polyline determines one
curve. Curves are immutable values, always queried by arclength.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .errors import EndpointMismatch, RangeError
from .manifolds import Manifold, Tangent


class PLCurve:
    """Broken-geodesic curve: breakpoints plus cached segment lengths."""

    __slots__ = ("manifold", "points", "seg_lengths", "cum")

    def __init__(self, manifold: Manifold, points: np.ndarray,
                 _lengths: np.ndarray | None = None, _cum: np.ndarray | None = None):
        points = np.ascontiguousarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError("breakpoints must be a nonempty (N, k) array")
        self.manifold = manifold
        self.points = points
        if _lengths is None:
            if points.shape[0] > 1:
                _lengths = manifold.pair_lengths(points[:-1], points[1:])
            else:
                _lengths = np.zeros(0)
        self.seg_lengths = _lengths
        self.cum = _cum if _cum is not None else np.concatenate([[0.0], np.cumsum(_lengths)])
        self.points.setflags(write=False)

    # -- basics -----------------------------------------------------------

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    @property
    def is_constant(self) -> bool:
        return self.points.shape[0] == 1 or self.length == 0.0

    def is_closed(self) -> bool:
        return bool(np.array_equal(self.points[0], self.points[-1]))

    def max_gap(self) -> float:
        return float(self.seg_lengths.max()) if self.seg_lengths.size else 0.0

    def validate(self, margin: float | None = None) -> "PLCurve":
        m = margin if margin is not None else self.manifold.margin
        if self.max_gap() > m:
            raise ValueError(f"segment of length {self.max_gap():.4g} exceeds margin {m:.4g}")
        return self

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self) -> str:
        return f"PLCurve(n={len(self)}, length={self.length:.6g})"

    # -- constructors -----------------------------------------------------

    @staticmethod
    def constant(manifold: Manifold, p: np.ndarray) -> "PLCurve":
        return PLCurve(manifold, np.asarray(p, dtype=float)[None, :])

    @staticmethod
    def through(manifold: Manifold, points: Iterable[np.ndarray], gap: float | None = None) -> "PLCurve":
        """Curve through the given waypoints, each consecutive pair joined by
        a minimal geodesic refined below the gap."""
        g = gap if gap is not None else manifold.margin / 2.0
        pts = [np.asarray(p, dtype=float) for p in points]
        out = [pts[0][None, :]]
        for a, b in zip(pts[:-1], pts[1:]):
            seg = manifold.minimal_geodesic_points(a, b, gap=g)
            out.append(seg[1:])
        return PLCurve(manifold, np.vstack(out))

    # -- queries ----------------------------------------------------------

    def point_at(self, s: float) -> np.ndarray:
        """Point at arclength s (clamped to [0, length])."""
        if self.points.shape[0] == 1:
            return self.points[0]
        s = float(s)
        if s <= 0.0:
            return self.points[0]
        if s >= self.length:
            return self.points[-1]
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), self.seg_lengths.shape[0] - 1)
        seg = self.seg_lengths[i]
        if seg <= 1e-300:
            return self.points[i]
        f = (s - self.cum[i]) / seg
        if f <= 0.0:
            return self.points[i]
        if f >= 1.0:
            return self.points[i + 1]
        return self.manifold.interpolate(self.points[i], self.points[i + 1], f)

    def sample_fractions(self, fracs: np.ndarray) -> np.ndarray:
        """Points at the given arclength fractions (vectorized where cheap)."""
        return np.stack([self.point_at(f * self.length) for f in np.atleast_1d(fracs)])


# ---------------------------------------------------------------------------
# Curve algebra
# ---------------------------------------------------------------------------


def length(c: PLCurve) -> float:
    return c.length


def reverse(c: PLCurve) -> PLCurve:
    cum = (c.length - c.cum)[::-1].copy()
    cum[0] = 0.0
    return PLCurve(c.manifold, c.points[::-1], _lengths=c.seg_lengths[::-1].copy(), _cum=cum)


def concat(c1: PLCurve, c2: PLCurve) -> PLCurve:
    """Concatenation; the junction breakpoints must agree exactly."""
    if not np.array_equal(c1.points[-1], c2.points[0]):
        raise EndpointMismatch("end of first curve differs from start of second")
    if c1.points.shape[0] == 1:
        return c2
    if c2.points.shape[0] == 1:
        return c1
    pts = np.vstack([c1.points, c2.points[1:]])
    lens = np.concatenate([c1.seg_lengths, c2.seg_lengths])
    return PLCurve(c1.manifold, pts, _lengths=lens)


def concat_many(curves: Iterable[PLCurve]) -> PLCurve:
    out = None
    for c in curves:
        out = c if out is None else concat(out, c)
    if out is None:
        raise ValueError("need at least one curve")
    return out


def stitch(curves: Iterable[PLCurve], tol: float = 1e-9) -> PLCurve:
    """Concatenation tolerating junction drift up to tol.

    Junction points within tol are unified to the earlier curve's endpoint;
    used when assembling witnesses whose pieces come from arclength
    fractions that round-trip through floats.
    """
    parts = [c for c in curves if c is not None]
    if not parts:
        raise ValueError("need at least one curve")
    out = parts[0]
    for c in parts[1:]:
        if c.points.shape[0] == 1:
            continue
        if np.array_equal(out.points[-1], c.points[0]):
            out = concat(out, c)
            continue
        gap = float(np.linalg.norm(out.points[-1] - c.points[0]))
        if gap > tol:
            raise EndpointMismatch(f"stitch junction off by {gap:.3g}")
        pts = c.points.copy()
        pts[0] = out.points[-1]
        out = concat(out, PLCurve(c.manifold, pts))
    return out


def subcurve(c: PLCurve, s0: float, s1: float) -> PLCurve:
    """Restriction of c to arclengths [s0, s1]."""
    L = c.length
    if not (-1e-12 <= s0 <= s1 <= L + 1e-12):
        raise RangeError(f"need 0 <= s0 <= s1 <= {L:.6g}, got ({s0:.6g}, {s1:.6g})")
    s0 = min(max(s0, 0.0), L)
    s1 = min(max(s1, 0.0), L)
    if s1 - s0 <= 0.0:
        return PLCurve.constant(c.manifold, c.point_at(s0))
    if s0 == 0.0 and s1 == L:
        return c
    i0 = int(np.searchsorted(c.cum, s0, side="right")) - 1
    i1 = int(np.searchsorted(c.cum, s1, side="left"))
    i0 = min(max(i0, 0), len(c) - 1)
    i1 = min(max(i1, 1), len(c) - 1)
    head = c.point_at(s0)
    tail = c.point_at(s1)
    mid = c.points[i0 + 1 : i1]
    pts = np.vstack([head[None, :], mid, tail[None, :]])
    # Collapse duplicated breakpoints when a cut lands exactly on one.
    keep = np.ones(pts.shape[0], dtype=bool)
    keep[1:] = ~np.all(pts[1:] == pts[:-1], axis=1)
    pts = pts[keep]
    if pts.shape[0] == 1:
        return PLCurve.constant(c.manifold, pts[0])
    return PLCurve(c.manifold, pts)


def refine(c: PLCurve, max_gap: float) -> PLCurve:
    """Same geometric curve with every segment length at most max_gap."""
    if max_gap <= 0:
        raise ValueError("max_gap must be positive")
    if c.points.shape[0] == 1 or c.max_gap() <= max_gap:
        return c
    pieces = [c.points[0][None, :]]
    for i, seg in enumerate(c.seg_lengths):
        if seg <= max_gap:
            pieces.append(c.points[i + 1][None, :])
        else:
            n = int(math.ceil(seg / max_gap))
            inner = c.manifold.resample_local(
                c.points[i][None, :], c.points[i + 1][None, :], n
            )[0]
            pieces.append(inner[1:])
    return PLCurve(c.manifold, np.vstack(pieces))


def resample(c: PLCurve, n: int) -> PLCurve:
    """Curve resampled at n+1 evenly spaced arclength positions.

    The new breakpoints lie on the original curve, so the resampled length
    never exceeds the original.
    """
    if c.points.shape[0] == 1:
        return c
    n = max(1, int(n))
    fr = np.linspace(0.0, 1.0, n + 1)
    pts = c.sample_fractions(fr)
    pts[0] = c.points[0]
    pts[-1] = c.points[-1]
    return PLCurve(c.manifold, pts)


def displacement(c1: PLCurve, c2: PLCurve, samples: int = 64) -> float:
    """Max pointwise gap between two curves matched by arclength fraction."""
    fr = np.linspace(0.0, 1.0, samples)
    a = c1.sample_fractions(fr)
    b = c2.sample_fractions(fr)
    return float(np.max(c1.manifold.pair_lengths(a, b)))


# ---------------------------------------------------------------------------
# Loops
# ---------------------------------------------------------------------------


class LoopAt:
    """A closed curve with a marked basepoint at both ends."""

    __slots__ = ("curve", "basepoint")

    def __init__(self, curve: PLCurve, basepoint: np.ndarray):
        basepoint = np.asarray(basepoint, dtype=float)
        if not np.array_equal(curve.points[0], basepoint):
            raise EndpointMismatch("loop must start at its basepoint")
        if not np.array_equal(curve.points[-1], basepoint):
            raise EndpointMismatch("loop must end at its basepoint")
        self.curve = curve
        self.basepoint = basepoint

    @property
    def length(self) -> float:
        return self.curve.length

    @property
    def manifold(self) -> Manifold:
        return self.curve.manifold

    @staticmethod
    def constant(manifold: Manifold, p: np.ndarray) -> "LoopAt":
        return LoopAt(PLCurve.constant(manifold, p), p)

    def __repr__(self) -> str:
        return f"LoopAt(length={self.length:.6g})"


# ---------------------------------------------------------------------------
# Geodesic constructors (manifold-level operations returning curves)
# ---------------------------------------------------------------------------


def trace_geodesic(m: Manifold, t: Tangent, arc: float, step: float = 1e-3,
                   breakpoint_gap: float = 0.05) -> PLCurve:
    """Unit-speed geodesic of the given arclength from a tangent vector."""
    if arc < 0:
        raise ValueError("arc must be nonnegative")
    u = t.unit()
    base = np.asarray(t.base, dtype=float)
    if arc == 0:
        return PLCurve.constant(m, base)
    trace = m.exp_trace(base, u, arc, step=step)
    stride = max(1, int(round(breakpoint_gap / (arc / (trace.shape[0] - 1)))))
    idx = np.arange(0, trace.shape[0], stride)
    if idx[-1] != trace.shape[0] - 1:
        idx = np.concatenate([idx, [trace.shape[0] - 1]])
    return PLCurve(m, trace[idx])


def minimal_geodesic(m: Manifold, p: np.ndarray, q: np.ndarray, gap: float = 0.05) -> PLCurve:
    """A minimal geodesic from p to q as a PLCurve."""
    pts = m.minimal_geodesic_points(np.asarray(p, float), np.asarray(q, float), gap=gap)
    return PLCurve(m, pts)
