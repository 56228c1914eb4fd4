"""Metric backends: model manifolds with geodesic tracing and distances.

Four model families are provided. The round sphere and the flat torus are
fully analytic; the ellipsoid works on its embedding in R^3; a parametric
chart surface works from first-fundamental-form callbacks. Every operation
is a pure function of immutable inputs, so instances are safe to share
across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteState, ShootingFailed

# Default injectivity margin: consecutive curve breakpoints closer than this
# stay inside a convex ball on every bundled model.
DEFAULT_MARGIN = 0.1

# Chord resolution used when measuring local geodesics on embedded surfaces.
_LOCAL_RESOLUTION = 0.002


@dataclass(frozen=True)
class Tangent:
    """A tangent vector: base point plus a direction in the ambient chart."""

    base: np.ndarray
    dir: np.ndarray

    def unit(self) -> np.ndarray:
        n = float(np.linalg.norm(self.dir))
        if n == 0.0:
            raise ValueError("tangent direction must be nonzero")
        return self.dir / n


class Manifold:
    """Common interface of the metric backends.

    Subclasses provide point canonicalization, geodesic tracing (exp),
    local geodesic interpolation between nearby points, local and global
    distances, and a global two-point geodesic solver.
    """

    kind: str = "abstract"
    dim: int = 0
    diameter_bound: float = 0.0
    ricci_floor: float = 0.0
    margin: float = DEFAULT_MARGIN

    # -- points ---------------------------------------------------------

    def canonical_point(self, x) -> np.ndarray:
        raise NotImplementedError

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def project_tangent(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Project an ambient vector onto the tangent space at p."""
        raise NotImplementedError

    def random_tangent(self, p: np.ndarray, rng: np.random.Generator) -> Tangent:
        for _ in range(16):
            v = self.project_tangent(p, rng.standard_normal(p.shape[0]))
            n = np.linalg.norm(v)
            if n > 1e-8:
                return Tangent(p, v / n)
        raise ValueError("could not draw a tangent direction")

    # -- geodesics ------------------------------------------------------

    def exp_trace(self, p: np.ndarray, unit_dir: np.ndarray, arc: float, step: float = 1e-3) -> np.ndarray:
        """Unit-speed geodesic from p with initial direction unit_dir.

        Returns the array of integrator states sampled every `step`
        (the actual step is arc/ceil(arc/step)), endpoints included.
        """
        raise NotImplementedError

    def interpolate(self, p: np.ndarray, q: np.ndarray, t) -> np.ndarray:
        """Point(s) at fraction t of the minimal geodesic from p to q.

        Intended for nearby pairs (within the injectivity margin); t may be
        a scalar or a 1-d array of fractions in [0, 1].
        """
        raise NotImplementedError

    def resample_local(self, P: np.ndarray, Q: np.ndarray, n: int) -> np.ndarray:
        """Batched local geodesics: (B, k) endpoint pairs -> (B, n+1, k) points."""
        B = P.shape[0]
        ts = np.linspace(0.0, 1.0, n + 1)
        out = np.empty((B, n + 1, P.shape[1]))
        for b in range(B):
            out[b] = self.interpolate(P[b], Q[b], ts)
        return out

    def pair_lengths(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        """Batched local distances between row-aligned point arrays."""
        raise NotImplementedError

    def interpolate_batch(self, P: np.ndarray, Q: np.ndarray, f: np.ndarray) -> np.ndarray:
        """Row-wise geodesic interpolation at per-row fractions f."""
        out = np.empty_like(P)
        for b in range(P.shape[0]):
            out[b] = self.interpolate(P[b], Q[b], float(f[b]))
        return out

    def local_distance(self, p: np.ndarray, q: np.ndarray) -> float:
        return float(self.pair_lengths(p[None, :], q[None, :])[0])

    def distance(self, p: np.ndarray, q: np.ndarray) -> float:
        """Global distance between arbitrary points."""
        raise NotImplementedError

    def minimal_geodesic_points(self, p: np.ndarray, q: np.ndarray, gap: float = 0.05) -> np.ndarray:
        """Breakpoints of a minimal geodesic from p to q, gaps below `gap`."""
        raise NotImplementedError

    # -- batched helpers for the shortening engines ----------------------

    def project_points(self, X: np.ndarray) -> np.ndarray:
        """Map ambient/chart points back onto the model (batched)."""
        raise NotImplementedError

    def log_dir(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        """Unit initial directions of minimal geodesics row-wise P -> Q.

        Rows with coincident endpoints come back as zero. Default uses a
        small-fraction interpolation; analytic models override.
        """
        out = np.zeros_like(P)
        for b in range(P.shape[0]):
            d = self.local_distance(P[b], Q[b])
            if d < 1e-12:
                continue
            step = self.interpolate(P[b], Q[b], min(0.05, 0.002 / d)) - P[b]
            v = self.project_tangent(P[b], step)
            n = np.linalg.norm(v)
            if n > 0:
                out[b] = v / n
        return out

    def tangent_basis(self, P: np.ndarray) -> np.ndarray:
        """Orthonormal tangent bases, shape (B, 2, k); only dim == 2 models."""
        raise NotImplementedError

    # -- serialization ----------------------------------------------------

    def to_json(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Round sphere
# ---------------------------------------------------------------------------


class RoundSphere(Manifold):
    """Round sphere of a given intrinsic dimension and radius, embedded in R^(dim+1)."""

    kind = "round_sphere"

    def __init__(self, dim: int = 2, radius: float = 1.0):
        if dim < 2:
            raise ValueError("dim must be at least 2")
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.dim = int(dim)
        self.radius = float(radius)
        self.diameter_bound = math.pi * self.radius
        self.ricci_floor = (self.dim - 1) / self.radius**2

    # -- points --

    def canonical_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim + 1,):
            raise ValueError(f"expected {self.dim + 1} coordinates")
        r = np.linalg.norm(x)
        if abs(r - self.radius) > 1e-9 * max(1.0, self.radius):
            raise ValueError(f"point is off the sphere by {abs(r - self.radius):.3g}")
        return x

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        v = rng.standard_normal(self.dim + 1)
        return v * (self.radius / np.linalg.norm(v))

    def project_tangent(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        n = p / self.radius
        return v - np.dot(v, n) * n

    def project(self, x: np.ndarray) -> np.ndarray:
        return x * (self.radius / np.linalg.norm(x, axis=-1, keepdims=True))

    # -- geodesics --

    def exp_trace(self, p: np.ndarray, unit_dir: np.ndarray, arc: float, step: float = 1e-3) -> np.ndarray:
        n = max(1, int(math.ceil(arc / step))) if arc > 0 else 1
        ang = np.linspace(0.0, arc / self.radius, n + 1)
        u = unit_dir * self.radius
        return np.cos(ang)[:, None] * p[None, :] + np.sin(ang)[:, None] * u[None, :]

    def _slerp(self, p: np.ndarray, q: np.ndarray, ts: np.ndarray) -> np.ndarray:
        r = self.radius
        cosw = np.clip(np.dot(p, q) / r**2, -1.0, 1.0)
        w = math.acos(cosw)
        if w < 1e-8:
            pts = p[None, :] + ts[:, None] * (q - p)[None, :]
            return self.project(pts)
        if w > math.pi - 1e-12:
            # Antipodal pair: pick the coordinate axis most orthogonal to p
            # as a deterministic tie-break and route through it.
            ax = int(np.argmin(np.abs(p)))
            e = np.zeros_like(p)
            e[ax] = 1.0
            mid = self.project(self.project_tangent(p, e) + 0.0)
            lo = self._slerp(p, mid, np.clip(2 * ts[ts <= 0.5], 0, 1))
            hi = self._slerp(mid, q, np.clip(2 * ts[ts > 0.5] - 1.0, 0, 1))
            return np.vstack([lo, hi])
        s = math.sin(w)
        a = np.sin((1.0 - ts) * w) / s
        b = np.sin(ts * w) / s
        return a[:, None] * p[None, :] + b[:, None] * q[None, :]

    def interpolate(self, p: np.ndarray, q: np.ndarray, t) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = self._slerp(p, q, ts)
        return out[0] if np.isscalar(t) or np.asarray(t).ndim == 0 else out

    def resample_local(self, P: np.ndarray, Q: np.ndarray, n: int) -> np.ndarray:
        r = self.radius
        ts = np.linspace(0.0, 1.0, n + 1)
        cosw = np.clip(np.einsum("ij,ij->i", P, Q) / r**2, -1.0, 1.0)
        w = np.arccos(cosw)
        small = w < 1e-8
        s = np.where(small, 1.0, np.sin(np.where(small, 1.0, w)))
        a = np.sin((1.0 - ts)[None, :] * w[:, None]) / s[:, None]
        b = np.sin(ts[None, :] * w[:, None]) / s[:, None]
        out = a[..., None] * P[:, None, :] + b[..., None] * Q[:, None, :]
        if np.any(small):
            lin = P[small, None, :] + ts[None, :, None] * (Q[small] - P[small])[:, None, :]
            out[small] = self.project(lin)
        return out

    def pair_lengths(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        chord = np.linalg.norm(P - Q, axis=-1)
        return 2.0 * self.radius * np.arcsin(np.clip(chord / (2.0 * self.radius), 0.0, 1.0))

    def interpolate_batch(self, P: np.ndarray, Q: np.ndarray, f: np.ndarray) -> np.ndarray:
        r = self.radius
        cosw = np.clip(np.einsum("ij,ij->i", P, Q) / r**2, -1.0, 1.0)
        w = np.arccos(cosw)
        small = w < 1e-8
        s = np.sin(np.where(small, 1.0, w))
        a = np.sin((1.0 - f) * w) / s
        b = np.sin(f * w) / s
        out = a[:, None] * P + b[:, None] * Q
        if np.any(small):
            out[small] = self.project(P[small] + f[small][:, None] * (Q[small] - P[small]))
        return out

    def distance(self, p: np.ndarray, q: np.ndarray) -> float:
        return float(self.pair_lengths(p[None, :], q[None, :])[0])

    def minimal_geodesic_points(self, p: np.ndarray, q: np.ndarray, gap: float = 0.05) -> np.ndarray:
        d = self.distance(p, q)
        n = max(1, int(math.ceil(d / gap)))
        pts = self._slerp(p, q, np.linspace(0.0, 1.0, n + 1))
        pts[0], pts[-1] = p, q
        return pts

    def project_points(self, X: np.ndarray) -> np.ndarray:
        return self.project(X)

    def log_dir(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        r2 = self.radius**2
        u = Q - (np.einsum("ij,ij->i", P, Q) / r2)[:, None] * P
        n = np.linalg.norm(u, axis=1)
        out = np.zeros_like(u)
        ok = n > 1e-14
        out[ok] = u[ok] / n[ok][:, None]
        return out

    def tangent_basis(self, P: np.ndarray) -> np.ndarray:
        if self.dim != 2:
            raise NotImplementedError("tangent bases only provided for dim == 2")
        n = P / self.radius
        ax = np.argmin(np.abs(n), axis=1)
        e = np.zeros_like(P)
        e[np.arange(P.shape[0]), ax] = 1.0
        b1 = e - np.einsum("ij,ij->i", e, n)[:, None] * n
        b1 = b1 / np.linalg.norm(b1, axis=1)[:, None]
        b2 = np.cross(n, b1)
        return np.stack([b1, b2], axis=1)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "radius": self.radius,
            "diameter_bound": self.diameter_bound,
        }


# ---------------------------------------------------------------------------
# Flat torus
# ---------------------------------------------------------------------------


class FlatTorus(Manifold):
    """Flat torus R^k / (period lattice), chart coordinates in [0, period)."""

    kind = "flat_torus"

    def __init__(self, periods: Sequence[float] = (1.0, 1.0)):
        P = np.asarray(periods, dtype=float)
        if P.ndim != 1 or P.shape[0] < 2 or np.any(P <= 0):
            raise ValueError("periods must be a vector of at least two positive lengths")
        self.periods = P
        self.dim = P.shape[0]
        self.diameter_bound = float(np.linalg.norm(P / 2.0))
        self.ricci_floor = 0.0

    def canonical_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coordinates")
        return np.mod(x, self.periods)

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(0.0, self.periods)

    def project_tangent(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float)

    def delta(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Shortest signed displacement from p to q over all deck translates.

        Ties at exactly half a period resolve to the negative representative,
        which keeps the solver deterministic.
        """
        return np.mod(q - p + self.periods / 2.0, self.periods) - self.periods / 2.0

    def exp_trace(self, p: np.ndarray, unit_dir: np.ndarray, arc: float, step: float = 1e-3) -> np.ndarray:
        n = max(1, int(math.ceil(arc / step))) if arc > 0 else 1
        ts = np.linspace(0.0, arc, n + 1)
        return np.mod(p[None, :] + ts[:, None] * unit_dir[None, :], self.periods)

    def interpolate(self, p: np.ndarray, q: np.ndarray, t) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        d = self.delta(p, q)
        out = np.mod(p[None, :] + ts[:, None] * d[None, :], self.periods)
        return out[0] if np.asarray(t).ndim == 0 else out

    def resample_local(self, P: np.ndarray, Q: np.ndarray, n: int) -> np.ndarray:
        ts = np.linspace(0.0, 1.0, n + 1)
        D = np.mod(Q - P + self.periods / 2.0, self.periods) - self.periods / 2.0
        return np.mod(P[:, None, :] + ts[None, :, None] * D[:, None, :], self.periods)

    def pair_lengths(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        D = np.mod(Q - P + self.periods / 2.0, self.periods) - self.periods / 2.0
        return np.linalg.norm(D, axis=-1)

    def interpolate_batch(self, P: np.ndarray, Q: np.ndarray, f: np.ndarray) -> np.ndarray:
        D = np.mod(Q - P + self.periods / 2.0, self.periods) - self.periods / 2.0
        return np.mod(P + f[:, None] * D, self.periods)

    def distance(self, p: np.ndarray, q: np.ndarray) -> float:
        return float(np.linalg.norm(self.delta(p, q)))

    def minimal_geodesic_points(self, p: np.ndarray, q: np.ndarray, gap: float = 0.05) -> np.ndarray:
        d = self.distance(p, q)
        n = max(1, int(math.ceil(d / gap)))
        pts = self.interpolate(p, q, np.linspace(0.0, 1.0, n + 1))
        pts[0], pts[-1] = p, q
        return pts

    def project_points(self, X: np.ndarray) -> np.ndarray:
        return np.mod(X, self.periods)

    def log_dir(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        D = np.mod(Q - P + self.periods / 2.0, self.periods) - self.periods / 2.0
        n = np.linalg.norm(D, axis=1)
        out = np.zeros_like(D)
        ok = n > 1e-14
        out[ok] = D[ok] / n[ok][:, None]
        return out

    def tangent_basis(self, P: np.ndarray) -> np.ndarray:
        if self.dim != 2:
            raise NotImplementedError("tangent bases only provided for dim == 2")
        B = np.zeros((P.shape[0], 2, 2))
        B[:, 0, 0] = 1.0
        B[:, 1, 1] = 1.0
        return B

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "periods": [float(x) for x in self.periods],
            "diameter_bound": self.diameter_bound,
        }


# ---------------------------------------------------------------------------
# Ellipsoid
# ---------------------------------------------------------------------------


class Ellipsoid(Manifold):
    """Triaxial ellipsoid sum((x_i/a_i)^2) = 1 embedded in R^3.

    Local geodesics come from projected chord bisection; the global
    two-point problem runs a deterministic 32-direction shooting fan with
    golden-section refinement of the launch angle.
    """

    kind = "ellipsoid"
    dim = 2

    def __init__(self, semi_axes: Sequence[float] = (1.0, 1.0, 1.2), diameter_bound: float | None = None):
        A = np.asarray(semi_axes, dtype=float)
        if A.shape != (3,) or np.any(A <= 0):
            raise ValueError("semi_axes must be three positive lengths")
        self.semi_axes = A
        self.inv_sq = 1.0 / A**2
        self.diameter_bound = float(diameter_bound) if diameter_bound else math.pi * float(A.max())
        self.ricci_floor = 0.0
        self._dist_cache: dict[bytes, tuple[float, np.ndarray]] = {}

    # -- points --

    def canonical_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (3,):
            raise ValueError("expected 3 coordinates")
        err = abs(float(np.sum(x * x * self.inv_sq)) - 1.0)
        if err > 1e-8:
            raise ValueError(f"point is off the ellipsoid by {err:.3g}")
        return x

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        v = rng.standard_normal(3)
        return self.project(v * self.semi_axes)

    def project(self, x: np.ndarray) -> np.ndarray:
        """Closest-point projection onto the ellipsoid (batched, Newton on the multiplier)."""
        X = np.atleast_2d(np.asarray(x, dtype=float))
        a2 = self.semi_axes**2
        lam = np.zeros(X.shape[0])
        r = np.sqrt(np.sum(X * X * self.inv_sq, axis=-1))
        lam = (r - 1.0) * float(a2.min())
        for _ in range(40):
            denom = a2[None, :] + lam[:, None]
            f = np.sum(X * X * a2[None, :] / denom**2, axis=-1) - 1.0
            fp = -2.0 * np.sum(X * X * a2[None, :] / denom**3, axis=-1)
            step = f / fp
            lam = lam - step
            if np.all(np.abs(step) < 1e-15 * float(a2.max())):
                break
        P = X * a2[None, :] / (a2[None, :] + lam[:, None])
        return P[0] if np.asarray(x).ndim == 1 else P

    def normal(self, p: np.ndarray) -> np.ndarray:
        g = p * self.inv_sq
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def project_tangent(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        n = self.normal(p)
        return v - np.dot(v, n) * n

    # -- geodesic ODE --

    def _accel(self, X: np.ndarray, V: np.ndarray) -> np.ndarray:
        grad = 2.0 * X * self.inv_sq[None, :]
        hess_quad = 2.0 * np.sum(V * V * self.inv_sq[None, :], axis=-1)
        lam = -hess_quad / np.sum(grad * grad, axis=-1)
        return lam[:, None] * grad

    def _rk4(self, X: np.ndarray, V: np.ndarray, n_steps: int, h: float, record: bool = False,
             cleanup_every: int = 1):
        trace = [X.copy()] if record else None
        for step_i in range(1, n_steps + 1):
            k1x, k1v = V, self._accel(X, V)
            k2x, k2v = V + 0.5 * h * k1v, self._accel(X + 0.5 * h * k1x, V + 0.5 * h * k1v)
            k3x, k3v = V + 0.5 * h * k2v, self._accel(X + 0.5 * h * k2x, V + 0.5 * h * k2v)
            k4x, k4v = V + h * k3v, self._accel(X + h * k3x, V + h * k3v)
            X = X + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
            V = V + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
            if not np.isfinite(X).all() or not np.isfinite(V).all():
                raise NonFiniteState("geodesic integrator diverged on the ellipsoid")
            if step_i % cleanup_every == 0 or step_i == n_steps:
                # Constraint cleanup: re-project the point, keep unit speed.
                X = self.project(X)
                n = self.normal(X)
                V = V - np.sum(V * n, axis=-1, keepdims=True) * n
                V = V / np.linalg.norm(V, axis=-1, keepdims=True)
            if record:
                trace.append(X.copy())
        return (X, V, np.stack(trace, axis=1)) if record else (X, V)

    def exp_trace(self, p: np.ndarray, unit_dir: np.ndarray, arc: float, step: float = 1e-3) -> np.ndarray:
        if arc == 0:
            return np.stack([p, p])
        n = max(1, int(math.ceil(arc / step)))
        h = arc / n
        _, _, tr = self._rk4(p[None, :], unit_dir[None, :], n, h, record=True)
        return tr[0]

    # -- local geodesics via projected bisection --

    def _bisect_polyline(self, P: np.ndarray, Q: np.ndarray, depth: int) -> np.ndarray:
        pts = np.stack([P, Q], axis=1)
        for _ in range(depth):
            mids = self.project(0.5 * (pts[:, :-1, :] + pts[:, 1:, :]).reshape(-1, 3))
            mids = mids.reshape(pts.shape[0], -1, 3)
            new = np.empty((pts.shape[0], 2 * pts.shape[1] - 1, 3))
            new[:, 0::2, :] = pts
            new[:, 1::2, :] = mids
            pts = new
        return pts

    def _depth_for(self, chord: float) -> int:
        if chord <= _LOCAL_RESOLUTION:
            return 1
        return max(1, int(math.ceil(math.log2(chord / _LOCAL_RESOLUTION))))

    def resample_local(self, P: np.ndarray, Q: np.ndarray, n: int) -> np.ndarray:
        chord = float(np.max(np.linalg.norm(P - Q, axis=-1))) if P.size else 0.0
        poly = self._bisect_polyline(P, Q, self._depth_for(chord))
        seg = np.linalg.norm(np.diff(poly, axis=1), axis=-1)
        cum = np.concatenate([np.zeros((P.shape[0], 1)), np.cumsum(seg, axis=1)], axis=1)
        total = cum[:, -1]
        out = np.empty((P.shape[0], n + 1, 3))
        targets = np.linspace(0.0, 1.0, n + 1)
        for b in range(P.shape[0]):
            if total[b] < 1e-15:
                out[b] = poly[b, 0]
                continue
            s = targets * total[b]
            idx = np.clip(np.searchsorted(cum[b], s, side="right") - 1, 0, seg.shape[1] - 1)
            f = (s - cum[b, idx]) / np.maximum(seg[b, idx], 1e-300)
            pts = poly[b, idx] + f[:, None] * (poly[b, idx + 1] - poly[b, idx])
            out[b] = self.project(pts)
        out[:, 0, :] = P
        out[:, -1, :] = Q
        return out

    def interpolate(self, p: np.ndarray, q: np.ndarray, t) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        poly = self._bisect_polyline(p[None, :], q[None, :], self._depth_for(float(np.linalg.norm(p - q))))[0]
        seg = np.linalg.norm(np.diff(poly, axis=0), axis=-1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        total = cum[-1]
        if total < 1e-15:
            out = np.repeat(p[None, :], ts.shape[0], axis=0)
        else:
            s = ts * total
            idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, seg.shape[0] - 1)
            f = (s - cum[idx]) / np.maximum(seg[idx], 1e-300)
            out = self.project(poly[idx] + f[:, None] * (poly[idx + 1] - poly[idx]))
            out[ts <= 0.0] = p
            out[ts >= 1.0] = q
        return out[0] if np.asarray(t).ndim == 0 else out

    def pair_lengths(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        if P.size == 0:
            return np.zeros(0)
        chord = float(np.max(np.linalg.norm(P - Q, axis=-1)))
        poly = self._bisect_polyline(P, Q, self._depth_for(chord))
        return np.sum(np.linalg.norm(np.diff(poly, axis=1), axis=-1), axis=1)

    def interpolate_batch(self, P: np.ndarray, Q: np.ndarray, f: np.ndarray) -> np.ndarray:
        if P.size == 0:
            return np.zeros_like(P)
        chord = float(np.max(np.linalg.norm(P - Q, axis=-1)))
        poly = self._bisect_polyline(P, Q, self._depth_for(chord))
        seg = np.linalg.norm(np.diff(poly, axis=1), axis=-1)
        cum = np.concatenate([np.zeros((P.shape[0], 1)), np.cumsum(seg, axis=1)], axis=1)
        total = cum[:, -1]
        s = np.asarray(f, dtype=float) * total
        n_seg = seg.shape[1]
        idx = np.empty(P.shape[0], dtype=int)
        for b in range(P.shape[0]):
            idx[b] = np.clip(np.searchsorted(cum[b], s[b], side="right") - 1, 0, n_seg - 1)
        rows = np.arange(P.shape[0])
        frac = (s - cum[rows, idx]) / np.maximum(seg[rows, idx], 1e-300)
        pts = poly[rows, idx] + frac[:, None] * (poly[rows, idx + 1] - poly[rows, idx])
        out = self.project(pts)
        out[total < 1e-15] = P[total < 1e-15]
        out[np.asarray(f) <= 0.0] = P[np.asarray(f) <= 0.0]
        out[np.asarray(f) >= 1.0] = Q[np.asarray(f) >= 1.0]
        return out

    # -- global solver: 32-direction fan + golden-section + polish --

    def _tangent_basis(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.normal(p)
        ax = int(np.argmin(np.abs(n)))
        e = np.zeros(3)
        e[ax] = 1.0
        u1 = e - np.dot(e, n) * n
        u1 = u1 / np.linalg.norm(u1)
        u2 = np.cross(n, u1)
        return u1, u2

    def _shoot_miss(self, p: np.ndarray, q: np.ndarray, thetas: np.ndarray, h: float, s_max: float):
        """Closest approach to q along geodesics launched at the given angles.

        The approach point is refined by projecting q onto the chords next to
        the best sample, so the reported miss is not limited by the step size.
        """
        u1, u2 = self._tangent_basis(p)
        V = np.cos(thetas)[:, None] * u1[None, :] + np.sin(thetas)[:, None] * u2[None, :]
        X = np.repeat(p[None, :], thetas.shape[0], axis=0)
        n_steps = int(math.ceil(s_max / h))
        _, _, tr = self._rk4(X, V, n_steps, h, record=True, cleanup_every=8)
        d = np.linalg.norm(tr - q[None, None, :], axis=-1)
        arg = np.argmin(d, axis=1)
        miss = d[np.arange(d.shape[0]), arg].copy()
        s_at = arg.astype(float) * h
        for b in range(thetas.shape[0]):
            j = int(arg[b])
            for j0 in (j - 1, j):
                if j0 < 0 or j0 + 1 >= tr.shape[1]:
                    continue
                a, c = tr[b, j0], tr[b, j0 + 1]
                seg = c - a
                den = float(np.dot(seg, seg))
                if den < 1e-300:
                    continue
                t = min(max(float(np.dot(q - a, seg)) / den, 0.0), 1.0)
                cand = a + t * seg
                m = float(np.linalg.norm(cand - q))
                if m < miss[b]:
                    miss[b] = m
                    s_at[b] = (j0 + t) * h
        return miss, s_at, tr

    def _golden_refine(self, p, q, th_lo, th_hi, h, s_max, iters):
        gr = (math.sqrt(5.0) - 1.0) / 2.0
        a_, b_ = th_lo, th_hi
        c_ = b_ - gr * (b_ - a_)
        d_ = a_ + gr * (b_ - a_)
        m, _, _ = self._shoot_miss(p, q, np.array([c_, d_]), h=h, s_max=s_max)
        mc, md = float(m[0]), float(m[1])
        for _ in range(iters):
            if mc < md:
                b_, d_, md = d_, c_, mc
                c_ = b_ - gr * (b_ - a_)
                m, _, _ = self._shoot_miss(p, q, np.array([c_]), h=h, s_max=s_max)
                mc = float(m[0])
            else:
                a_, c_, mc = c_, d_, md
                d_ = a_ + gr * (b_ - a_)
                m, _, _ = self._shoot_miss(p, q, np.array([d_]), h=h, s_max=s_max)
                md = float(m[0])
        return a_, b_

    def _solve_shooting(self, p: np.ndarray, q: np.ndarray) -> tuple[float, np.ndarray]:
        scale = float(self.semi_axes.max())
        s_max = 1.1 * math.pi * scale
        fan = np.arange(32) * (2.0 * math.pi / 32.0)
        miss, s_at, _ = self._shoot_miss(p, q, fan, h=2e-2 * scale, s_max=s_max)
        order = np.argsort(miss, kind="stable")
        best_err = math.inf
        best = None
        half = 2.0 * math.pi / 32.0
        for j in order[:2]:
            s_cap = min(s_max, float(s_at[j]) + 0.3 * scale)
            # Bisection ladder on the launch angle: coarse, then fine steps.
            a_, b_ = self._golden_refine(p, q, fan[j] - half, fan[j] + half,
                                         h=1e-2 * scale, s_max=s_cap, iters=14)
            a_, b_ = self._golden_refine(p, q, a_, b_, h=3e-3 * scale, s_max=s_cap, iters=12)
            theta = 0.5 * (a_ + b_)
            h_fin = 1e-3 * scale
            m_fin, s_fin, tr = self._shoot_miss(p, q, np.array([theta]), h=h_fin, s_max=s_cap)
            if m_fin[0] < best_err:
                n_keep = max(1, int(math.floor(s_fin[0] / h_fin))) + 1
                best = np.vstack([tr[0, :n_keep], q[None, :]])
                best_err = m_fin[0]
            if best_err < 1e-7 * scale:
                break
        if best is None or best_err > 1e-4 * scale:
            raise ShootingFailed(
                f"no connecting geodesic found (best miss {best_err:.3g})"
            )
        length = float(np.sum(np.linalg.norm(np.diff(best, axis=0), axis=-1)))
        return length, best

    def _shoot_cached(self, p: np.ndarray, q: np.ndarray) -> tuple[float, np.ndarray, bool]:
        """Shooting result for the canonically ordered pair; bool = order swapped."""
        swapped = tuple(q) < tuple(p)
        a, b = (q, p) if swapped else (p, q)
        key = a.tobytes() + b.tobytes()
        if key not in self._dist_cache:
            if len(self._dist_cache) > 4096:
                self._dist_cache.clear()
            self._dist_cache[key] = self._solve_shooting(a, b)
        length, pts = self._dist_cache[key]
        return length, pts, swapped

    def distance(self, p: np.ndarray, q: np.ndarray) -> float:
        chord = float(np.linalg.norm(p - q))
        if chord < self.margin:
            return self.local_distance(p, q)
        length, _, _ = self._shoot_cached(p, q)
        return length

    def minimal_geodesic_points(self, p: np.ndarray, q: np.ndarray, gap: float = 0.05) -> np.ndarray:
        chord = float(np.linalg.norm(p - q))
        if chord < self.margin:
            d = self.local_distance(p, q)
            n = max(1, int(math.ceil(d / gap)))
            return self.resample_local(p[None, :], q[None, :], n)[0]
        _, pts, swapped = self._shoot_cached(p, q)
        if swapped:
            pts = pts[::-1]
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=-1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        n = max(1, int(math.ceil(cum[-1] / gap)))
        s = np.linspace(0.0, cum[-1], n + 1)
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, seg.shape[0] - 1)
        f = (s - cum[idx]) / np.maximum(seg[idx], 1e-300)
        out = self.project(pts[idx] + f[:, None] * (pts[idx + 1] - pts[idx]))
        out[0] = p
        out[-1] = q
        return out

    def project_points(self, X: np.ndarray) -> np.ndarray:
        return self.project(X)

    def log_dir(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        if P.size == 0:
            return np.zeros_like(P)
        chord = np.linalg.norm(P - Q, axis=-1)
        out = np.zeros_like(P)
        ok = chord > 1e-13
        if not np.any(ok):
            return out
        poly = self._bisect_polyline(P[ok], Q[ok], 3)
        v = poly[:, 1, :] - P[ok]
        n = self.normal(P[ok])
        v = v - np.sum(v * n, axis=-1, keepdims=True) * n
        nv = np.linalg.norm(v, axis=-1)
        good = nv > 1e-300
        v[good] = v[good] / nv[good][:, None]
        out[ok] = v
        return out

    def tangent_basis(self, P: np.ndarray) -> np.ndarray:
        n = self.normal(P)
        ax = np.argmin(np.abs(n), axis=1)
        e = np.zeros_like(P)
        e[np.arange(P.shape[0]), ax] = 1.0
        b1 = e - np.einsum("ij,ij->i", e, n)[:, None] * n
        b1 = b1 / np.linalg.norm(b1, axis=1)[:, None]
        b2 = np.cross(n, b1)
        return np.stack([b1, b2], axis=1)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "semi_axes": [float(x) for x in self.semi_axes],
            "diameter_bound": self.diameter_bound,
        }


# ---------------------------------------------------------------------------
# Parametric chart surface
# ---------------------------------------------------------------------------


@dataclass
class ChartMetric:
    """First fundamental form callbacks E, F, G on a rectangular chart."""

    E: Callable[[float, float], float]
    F: Callable[[float, float], float]
    G: Callable[[float, float], float]
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    name: str = "custom"


class ParamSurface(Manifold):
    """Surface given in a chart by metric-coefficient callbacks.

    Christoffel symbols come from central finite differences of the metric
    coefficients; geodesics are integrated with fixed-step RK4 in the chart.
    Local two-point problems are solved by Newton shooting on the initial
    chart velocity, so local distances are exact geodesic lengths.
    """

    kind = "param_surface"
    dim = 2
    _FD = 1e-5

    def __init__(self, metric: ChartMetric, diameter_bound: float):
        self.metric = metric
        self.diameter_bound = float(diameter_bound)
        self.ricci_floor = 0.0
        self._local_cache: dict[bytes, tuple[float, np.ndarray]] = {}

    def canonical_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (2,):
            raise ValueError("expected 2 chart coordinates")
        (u0, u1), (v0, v1) = self.metric.u_range, self.metric.v_range
        if not (u0 - 1e-9 <= x[0] <= u1 + 1e-9 and v0 - 1e-9 <= x[1] <= v1 + 1e-9):
            raise ValueError("point outside the chart domain")
        return x

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        (u0, u1), (v0, v1) = self.metric.u_range, self.metric.v_range
        mu, mv = 0.1 * (u1 - u0), 0.1 * (v1 - v0)
        return np.array([rng.uniform(u0 + mu, u1 - mu), rng.uniform(v0 + mv, v1 - mv)])

    def project_tangent(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float)

    def _g(self, u: float, v: float) -> np.ndarray:
        m = self.metric
        return np.array([[m.E(u, v), m.F(u, v)], [m.F(u, v), m.G(u, v)]])

    def speed(self, p: np.ndarray, w: np.ndarray) -> float:
        g = self._g(p[0], p[1])
        return math.sqrt(max(0.0, float(w @ g @ w)))

    def _christoffel(self, u: float, v: float) -> np.ndarray:
        h = self._FD
        g = self._g(u, v)
        dg_du = (self._g(u + h, v) - self._g(u - h, v)) / (2 * h)
        dg_dv = (self._g(u, v + h) - self._g(u, v - h)) / (2 * h)
        dg = np.stack([dg_du, dg_dv])  # dg[l, i, j] = d_l g_ij
        ginv = np.linalg.inv(g)
        gamma = np.empty((2, 2, 2))
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    s = 0.0
                    for l in range(2):
                        s += ginv[k, l] * (dg[i][j, l] + dg[j][i, l] - dg[l][i, j])
                    gamma[k, i, j] = 0.5 * s
        return gamma

    def _accel(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        gam = self._christoffel(x[0], x[1])
        return -np.einsum("kij,i,j->k", gam, w, w)

    def _rk4_chart(self, x: np.ndarray, w: np.ndarray, n_steps: int, h: float, record: bool = False):
        trace = [x.copy()] if record else None
        for _ in range(n_steps):
            k1x, k1w = w, self._accel(x, w)
            k2x, k2w = w + 0.5 * h * k1w, self._accel(x + 0.5 * h * k1x, w + 0.5 * h * k1w)
            k3x, k3w = w + 0.5 * h * k2w, self._accel(x + 0.5 * h * k2x, w + 0.5 * h * k2w)
            k4x, k4w = w + h * k3w, self._accel(x + h * k3x, w + h * k3w)
            x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
            w = w + (h / 6.0) * (k1w + 2 * k2w + 2 * k3w + k4w)
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
                raise NonFiniteState("geodesic integrator diverged in the chart")
            if record:
                trace.append(x.copy())
        return (x, w, np.stack(trace)) if record else (x, w)

    def exp_trace(self, p: np.ndarray, unit_dir: np.ndarray, arc: float, step: float = 1e-3) -> np.ndarray:
        if arc == 0:
            return np.stack([p, p])
        sp = self.speed(p, unit_dir)
        if not math.isfinite(sp) or sp <= 0.0:
            raise NonFiniteState("metric callbacks give a degenerate speed")
        w = unit_dir / sp
        n = max(1, int(math.ceil(arc / step)))
        h = arc / n
        _, _, tr = self._rk4_chart(p, w, n, h, record=True)
        return tr

    def _solve_local(self, p: np.ndarray, q: np.ndarray) -> tuple[float, np.ndarray]:
        """Newton shooting for the geodesic p -> q in unit time; returns (length, w0)."""
        key = p.tobytes() + q.tobytes()
        if key in self._local_cache:
            return self._local_cache[key]
        w = q - p
        n_steps = 24
        h = 1.0 / n_steps
        for _ in range(30):
            x_end, _ = self._rk4_chart(p, w, n_steps, h)
            r = x_end - q
            if np.linalg.norm(r) < 1e-12:
                break
            eps = 1e-7 * max(1.0, float(np.linalg.norm(w)))
            J = np.empty((2, 2))
            for c in range(2):
                dw = np.zeros(2)
                dw[c] = eps
                xe, _ = self._rk4_chart(p, w + dw, n_steps, h)
                J[:, c] = (xe - x_end) / eps
            try:
                w = w - np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                raise ShootingFailed("singular shooting Jacobian in the chart") from None
        else:
            if np.linalg.norm(r) > 1e-8:
                raise ShootingFailed("local chart shooting did not converge")
        length = self.speed(p, w)
        if len(self._local_cache) > 8192:
            self._local_cache.clear()
        self._local_cache[key] = (length, w)
        return length, w

    def interpolate(self, p: np.ndarray, q: np.ndarray, t) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.allclose(p, q, atol=1e-15):
            out = np.repeat(p[None, :], ts.shape[0], axis=0)
            return out[0] if np.asarray(t).ndim == 0 else out
        _, w = self._solve_local(p, q)
        n_steps = 24
        _, _, tr = self._rk4_chart(p, w, n_steps, 1.0 / n_steps, record=True)
        s = ts * n_steps
        idx = np.clip(s.astype(int), 0, n_steps - 1)
        f = s - idx
        out = tr[idx] + f[:, None] * (tr[idx + 1] - tr[idx])
        out[ts <= 0.0] = p
        out[ts >= 1.0] = q
        return out[0] if np.asarray(t).ndim == 0 else out

    def pair_lengths(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        out = np.empty(P.shape[0])
        for b in range(P.shape[0]):
            if np.allclose(P[b], Q[b], atol=1e-15):
                out[b] = 0.0
            else:
                out[b], _ = self._solve_local(P[b], Q[b])
        return out

    def distance(self, p: np.ndarray, q: np.ndarray) -> float:
        swapped = tuple(q) < tuple(p)
        a, b = (q, p) if swapped else (p, q)
        if np.allclose(a, b, atol=1e-15):
            return 0.0
        try:
            length, _ = self._solve_local(a, b)
            return length
        except ShootingFailed:
            pts = self.minimal_geodesic_points(a, b)
            return float(np.sum(self.pair_lengths(pts[:-1], pts[1:])))

    def minimal_geodesic_points(self, p: np.ndarray, q: np.ndarray, gap: float = 0.05) -> np.ndarray:
        scale = self.diameter_bound
        s_max = 1.2 * scale
        best = None
        best_len = math.inf
        fan = np.arange(32) * (2.0 * math.pi / 32.0)
        base = q - p
        base_ang = math.atan2(base[1], base[0])
        for th in np.concatenate([[base_ang], base_ang + fan]):
            w = np.array([math.cos(th), math.sin(th)])
            sp = self.speed(p, w)
            w = w / sp
            n_steps = int(math.ceil(s_max / 5e-3))
            try:
                _, _, tr = self._rk4_chart(p, w, n_steps, s_max / n_steps, record=True)
            except NonFiniteState:
                continue
            d = np.linalg.norm(tr - q, axis=-1)
            j = int(np.argmin(d))
            if d[j] < 1e-3:
                arc = j * s_max / n_steps
                if arc < best_len:
                    best_len = arc
                    best = tr[: j + 1]
                    break
        if best is None:
            raise ShootingFailed("no connecting chart geodesic found")
        n = max(1, int(math.ceil(best_len / gap)))
        idx = np.linspace(0, best.shape[0] - 1, n + 1).round().astype(int)
        pts = best[idx].copy()
        pts[0], pts[-1] = p, q
        return pts

    def project_points(self, X: np.ndarray) -> np.ndarray:
        (u0, u1), (v0, v1) = self.metric.u_range, self.metric.v_range
        out = np.array(X, dtype=float, copy=True)
        out[..., 0] = np.clip(out[..., 0], u0, u1)
        out[..., 1] = np.clip(out[..., 1], v0, v1)
        return out

    def tangent_basis(self, P: np.ndarray) -> np.ndarray:
        B = np.zeros((P.shape[0], 2, 2))
        B[:, 0, 0] = 1.0
        B[:, 1, 1] = 1.0
        return B

    def to_json(self) -> dict:
        return {"kind": self.kind, "preset": self.metric.name, "diameter_bound": self.diameter_bound}


# ---------------------------------------------------------------------------
# Chart presets and JSON registry
# ---------------------------------------------------------------------------


def sphere_chart(polar_margin: float = 0.2) -> ParamSurface:
    """Unit-sphere polar chart (u = colatitude, v = longitude), poles excluded."""
    metric = ChartMetric(
        E=lambda u, v: 1.0,
        F=lambda u, v: 0.0,
        G=lambda u, v: math.sin(u) ** 2,
        u_range=(polar_margin, math.pi - polar_margin),
        v_range=(-4.0 * math.pi, 4.0 * math.pi),
        name="sphere_chart",
    )
    return ParamSurface(metric, diameter_bound=math.pi)


def flat_chart(size: float = 4.0) -> ParamSurface:
    """Euclidean plane patch; geodesics are straight chart lines."""
    metric = ChartMetric(
        E=lambda u, v: 1.0,
        F=lambda u, v: 0.0,
        G=lambda u, v: 1.0,
        u_range=(-size, size),
        v_range=(-size, size),
        name="flat_chart",
    )
    return ParamSurface(metric, diameter_bound=2.0 * math.sqrt(2.0) * size)


_CHART_PRESETS = {"sphere_chart": sphere_chart, "flat_chart": flat_chart}


def manifold_from_json(spec: dict) -> Manifold:
    """Build a manifold from its scene-JSON description."""
    kind = spec.get("kind")
    if kind == "round_sphere":
        m = RoundSphere(dim=int(spec.get("dim", 2)), radius=float(spec.get("radius", 1.0)))
    elif kind == "flat_torus":
        m = FlatTorus(periods=spec.get("periods", (1.0, 1.0)))
    elif kind == "ellipsoid":
        m = Ellipsoid(semi_axes=spec.get("semi_axes", (1.0, 1.0, 1.2)),
                      diameter_bound=spec.get("diameter_bound"))
    elif kind == "param_surface":
        preset = spec.get("preset")
        if preset not in _CHART_PRESETS:
            raise ValueError(f"unknown chart preset {preset!r}")
        m = _CHART_PRESETS[preset]()
    else:
        raise ValueError(f"unknown manifold kind {kind!r}")
    if "diameter_bound" in spec and spec["diameter_bound"] and kind != "ellipsoid":
        m.diameter_bound = float(spec["diameter_bound"])
    return m


def distance(m: Manifold, p: np.ndarray, q: np.ndarray) -> float:
    """Global distance between two points of m."""
    return m.distance(p, q)


def validate_diameter(m: Manifold, rng: np.random.Generator, samples: int = 50, tol: float = 1e-6) -> float:
    """Largest sampled pairwise distance; raises if it exceeds the declared bound."""
    worst = 0.0
    for _ in range(samples):
        d = m.distance(m.random_point(rng), m.random_point(rng))
        worst = max(worst, d)
    if worst > m.diameter_bound + tol:
        raise ValueError(f"sampled distance {worst:.6g} exceeds diameter bound {m.diameter_bound:.6g}")
    return worst
