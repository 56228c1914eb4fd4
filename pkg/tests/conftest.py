import math

import numpy as np
import pytest

from geoloop import (FlatTorus, Ellipsoid, LoopAt, PLCurve, RoundSphere,
                     ShorteningParams)
from geoloop.generators import meridian_sweep, random_wiggle
from geoloop.family_shorten import shorten_family


@pytest.fixture(scope="session")
def sphere():
    return RoundSphere(2, 1.0)


@pytest.fixture(scope="session")
def torus():
    return FlatTorus((1.0, 1.0))


@pytest.fixture(scope="session")
def ellipsoid():
    return Ellipsoid((1.0, 1.0, 1.2))


@pytest.fixture(scope="session")
def north():
    return np.array([0.0, 0.0, 1.0])


def sphere_wiggle(sphere, seed=7, target=4.0):
    return random_wiggle(sphere, seed, target)


@pytest.fixture(scope="session")
def sweep_run(sphere):
    """The desk-scale family run shared by the family and minimax criteria."""
    fam = meridian_sweep(sphere, 64)
    params = ShorteningParams(l=0.05, a=math.pi, delta=0.01, epsilon=0.01)
    import time
    t0 = time.perf_counter()
    res = shorten_family(fam, params, L=2 * math.pi)
    elapsed = time.perf_counter() - t0
    return {"family": fam, "params": params, "result": res, "seconds": elapsed}


def make_based_loop(manifold, points, basepoint):
    pts = np.asarray(points, dtype=float)
    return LoopAt(PLCurve(manifold, pts), np.asarray(basepoint, dtype=float))


def sphere_circle_loop(sphere, basepoint, radius_angle, n=48):
    """Small circle around the basepoint, wired through it exactly."""
    p = basepoint
    ang = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    axis = np.array([1.0, 0.0, 0.0]) if abs(p[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = axis - np.dot(axis, p) * p
    u = u / np.linalg.norm(u)
    v = np.cross(p, u)
    c = math.cos(radius_angle) * p
    ring = c + math.sin(radius_angle) * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)
    pts = np.vstack([p, ring, p])
    return LoopAt(PLCurve(sphere, pts), p)
