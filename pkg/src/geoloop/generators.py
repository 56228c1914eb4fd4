"""Named constructors for initial curves and loop families used by scenes."""

from __future__ import annotations

import math

import numpy as np

from .curves import LoopAt, PLCurve, minimal_geodesic, refine
from .family_shorten import LoopFamily
from .manifolds import FlatTorus, Manifold, RoundSphere


def meridian_sweep(m: RoundSphere, n_nodes: int = 64, gap: float = 0.045) -> LoopFamily:
    """Sweep-out of the round 2-sphere by meridian-pair loops based at the
    north pole.

    Node i goes down the reference meridian and back up the meridian at
    longitude 2*pi*(i + 1/2)/n, so no node sits exactly on the doubled
    reference meridian or on the equatorial great circle through it. The
    family is closed: the last node repeats the first.
    """
    if not isinstance(m, RoundSphere) or m.dim != 2:
        raise ValueError("meridian sweep needs a round 2-sphere")
    r = m.radius
    p = np.array([0.0, 0.0, r])
    south = np.array([0.0, 0.0, -r])
    n_half = max(4, int(math.ceil(math.pi * r / gap)))
    colat = np.linspace(0.0, math.pi, n_half + 1)

    loops: list[LoopAt] = []
    for i in range(n_nodes):
        theta = 2.0 * math.pi * (i + 0.5) / n_nodes
        down = np.stack([r * np.sin(colat), np.zeros_like(colat), r * np.cos(colat)], axis=1)
        up = np.stack([r * np.sin(colat[::-1]) * math.cos(theta),
                       r * np.sin(colat[::-1]) * math.sin(theta),
                       r * np.cos(colat[::-1])], axis=1)
        pts = np.vstack([down[:-1], south[None, :], up[1:-1], p[None, :]])
        pts[0] = p
        loops.append(LoopAt(PLCurve(m, pts), p))
    loops.append(loops[0])
    nodes = np.linspace(0.0, 1.0, n_nodes + 1)
    return LoopFamily(m, p, nodes, loops, closed=True)


def random_wiggle(m: RoundSphere, seed: int, target_length: float,
                  p=None, q=None, gap: float = 0.045,
                  modes: tuple[int, int] = (3, 7)) -> PLCurve:
    """Seeded wiggly curve between two points, scaled to the target length.

    A minimal geodesic is displaced along seeded tangential sine modes; the
    amplitude is bisected until the length matches target_length to 1e-9.
    """
    if not isinstance(m, RoundSphere):
        raise ValueError("random_wiggle is defined on round spheres")
    rng = np.random.default_rng(seed)
    p = np.array([0.0, 0.0, m.radius]) if p is None else np.asarray(p, dtype=float)
    q = m.project(np.array([0.2, -0.5, -0.8])) if q is None else np.asarray(q, dtype=float)
    base = minimal_geodesic(m, p, q, gap=0.02)
    if target_length < base.length:
        raise ValueError("target length below the distance between the endpoints")
    ph = rng.uniform(0.0, 2.0 * math.pi, size=2)
    k1, k2 = modes

    def build(amp: float) -> PLCurve:
        pts = base.points.copy()
        n = pts.shape[0]
        for i in range(1, n - 1):
            f = i / (n - 1)
            w = amp * (math.sin(2 * math.pi * k1 * f + ph[0])
                       + 0.5 * math.sin(2 * math.pi * k2 * f + ph[1])) * math.sin(math.pi * f)
            nvec = np.cross(pts[i], pts[i + 1] - pts[i - 1])
            nn = np.linalg.norm(nvec)
            if nn > 1e-12:
                pts[i] = pts[i] + w * nvec / nn
        pts = m.project(pts)
        pts[0], pts[-1] = p, q
        return refine(PLCurve(m, pts), gap)

    lo, hi = 0.0, 0.05
    while build(hi).length < target_length:
        hi *= 2.0
        if hi > 64.0:
            raise ValueError("cannot reach the target length with these modes")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        c = build(mid)
        if abs(c.length - target_length) < 1e-9:
            return c
        if c.length < target_length:
            lo = mid
        else:
            hi = mid
    return build(0.5 * (lo + hi))


def torus_wind(m: FlatTorus, target_length: float = 2.5, winding=(2, 0),
               seed: int = 0, gap: float = 0.045, freq: int = 3) -> PLCurve:
    """Closed loop through the origin in a given winding class, scaled to
    the target length by bisection on the wiggle amplitude.

    The transverse wiggle frequency keeps the needed amplitude well below
    half a period, so the excursion never changes the winding class.
    """
    if not isinstance(m, FlatTorus) or m.dim != 2:
        raise ValueError("torus_wind needs a 2-dimensional flat torus")
    w = np.asarray(winding, dtype=float) * m.periods
    straight = float(np.linalg.norm(w))
    if straight == 0:
        raise ValueError("winding class must be nontrivial")
    if target_length < straight:
        raise ValueError("target below the straight representative's length")
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    perp = np.array([-w[1], w[0]]) / straight
    n = max(16, int(math.ceil(2.0 * target_length / gap)))
    t = np.linspace(0.0, 1.0, n + 1)

    def build(amp: float) -> PLCurve:
        pts = t[:, None] * w[None, :] + (amp * np.sin(2 * math.pi * freq * t + phase)
                                         - amp * math.sin(phase))[:, None] * perp[None, :]
        pts = np.mod(pts, m.periods)
        pts[0] = np.zeros(2)
        pts[-1] = np.zeros(2)
        return PLCurve(m, pts)

    lo, hi = 0.0, 0.25
    while build(hi).length < target_length:
        hi *= 2.0
        if hi > 64.0:
            raise ValueError("cannot reach the target length")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        c = build(mid)
        if abs(c.length - target_length) < 1e-9:
            return c
        if c.length < target_length:
            lo = mid
        else:
            hi = mid
    return build(0.5 * (lo + hi))


def constant_family(m: Manifold, p, n_nodes: int = 4) -> LoopFamily:
    """Closed family of constant loops at one point."""
    p = np.asarray(p, dtype=float)
    lp = LoopAt.constant(m, p)
    loops = [lp] * (n_nodes + 1)
    return LoopFamily(m, p, np.linspace(0.0, 1.0, n_nodes + 1), loops, closed=True)


GENERATORS = {
    "meridian_sweep": meridian_sweep,
    "random_wiggle": random_wiggle,
    "torus_wind": torus_wind,
    "constant_family": constant_family,
}
