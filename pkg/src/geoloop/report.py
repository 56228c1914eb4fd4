"""Canonical serialization of runs: report JSON, curve files, CSV traces,
and the figures rendered next to them.

Reports are written with sorted keys and a fixed float format, so a rerun
of the same scene is byte-identical and certificate diffs are meaningful.
Every certificate records a witness curve file; the verify pass re-measures
those witnesses from their breakpoints and recomputes each verdict.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .certificates import BoundCertificate
from .curves import PLCurve
from .manifolds import Manifold, manifold_from_json

FLOAT_FORMAT = "%.12g"


def _canon(value):
    if isinstance(value, dict):
        return {k: _canon(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_canon(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(float(value)):
            raise ValueError("non-finite value in report")
        out = float(FLOAT_FORMAT % float(value))
        return 0.0 if out == 0.0 else out
    if isinstance(value, (int, np.integer)):
        return int(value)
    return value


def canonical_dumps(obj) -> str:
    return json.dumps(_canon(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_dumps(obj))


def read_json(path: Path):
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


def curve_to_json(curve: PLCurve, manifold_id: str) -> dict:
    return {"manifold": manifold_id, "breakpoints": curve.points.tolist()}


def curve_from_json(d: dict, manifolds: dict[str, Manifold]) -> PLCurve:
    m = manifolds[d["manifold"]]
    return PLCurve(m, np.asarray(d["breakpoints"], dtype=float))


def write_curve_csv(path: Path, curve: PLCurve) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arclength"] + [f"x{i}" for i in range(curve.points.shape[1])])
        for s, pt in zip(curve.cum, curve.points):
            w.writerow([FLOAT_FORMAT % s] + [FLOAT_FORMAT % x for x in pt])


def write_family_csv(path: Path, rows) -> None:
    """Family trace: rows of (s, tau, length)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "tau", "length"])
        for s, t, ln in rows:
            w.writerow([FLOAT_FORMAT % s, FLOAT_FORMAT % t, FLOAT_FORMAT % ln])


# ---------------------------------------------------------------------------
# Report assembly and verification
# ---------------------------------------------------------------------------


class ReportBuilder:
    """Collects certificates with their witness curves and writes the report."""

    def __init__(self, out_dir: Path, scene: dict, manifold: Manifold):
        self.out = Path(out_dir)
        self.scene = scene
        self.manifold = manifold
        self.manifold_id = "m0"
        self.certificates: list[dict] = []
        self.results: dict = {}
        self.artifacts: dict = {}

    def add_certificate(self, cert: BoundCertificate, witness: PLCurve | None,
                        name: str) -> None:
        entry = cert.to_json()
        if witness is not None:
            rel = f"curves/witness_{name}.json"
            write_json(self.out / rel, curve_to_json(witness, self.manifold_id))
            entry["witness"] = rel
            entry["witness_length"] = witness.length
        self.certificates.append(entry)

    def add_curve(self, name: str, curve: PLCurve) -> str:
        rel = f"curves/{name}.json"
        write_json(self.out / rel, curve_to_json(curve, self.manifold_id))
        write_curve_csv(self.out / f"curves/{name}.csv", curve)
        self.artifacts[name] = rel
        return rel

    def all_pass(self) -> bool:
        return all(c["pass"] for c in self.certificates)

    def write(self) -> Path:
        report = {
            "scene": self.scene,
            "manifolds": {self.manifold_id: self.manifold.to_json()},
            "certificates": self.certificates,
            "results": self.results,
            "artifacts": self.artifacts,
            "all_pass": self.all_pass(),
        }
        path = self.out / "report.json"
        write_json(path, report)
        return path


def verify_report(report_path: Path, curves_dir: Path | None = None) -> tuple[bool, list[str]]:
    """Re-measure every certificate witness and recompute the verdicts.

    Returns (ok, messages); ok is False when any recomputation drifts
    beyond 1e-9 from the recorded values or a verdict flips.
    """
    report_path = Path(report_path)
    base = Path(curves_dir) if curves_dir else report_path.parent
    report = read_json(report_path)
    manifolds = {k: manifold_from_json(v) for k, v in report["manifolds"].items()}
    ok = True
    messages = []
    for entry in report["certificates"]:
        cert = BoundCertificate.from_json(entry)
        expect = f"{entry['formula']}"
        if "witness" in entry:
            wpath = base / entry["witness"]
            if not wpath.exists():
                raise FileNotFoundError(f"witness file missing: {wpath}")
            curve = curve_from_json(read_json(wpath), manifolds)
            measured = curve.length
            if abs(measured - float(entry["witness_length"])) > 1e-9:
                ok = False
                messages.append(f"{expect}: witness re-measures to {measured:.12g}, "
                                f"recorded {entry['witness_length']:.12g}")
                continue
            if measured > cert.measured + 1e-9:
                ok = False
                messages.append(f"{expect}: witness longer than the recorded maximum")
                continue
        redone = BoundCertificate.make(cert.formula_id, cert.params, cert.measured, cert.slack)
        if abs(redone.claimed - cert.claimed) > 1e-9 or redone.passed != cert.passed:
            ok = False
            messages.append(f"{expect}: recomputed verdict differs")
        else:
            messages.append(f"{expect}: ok")
    for name, rel in report.get("artifacts", {}).items():
        cpath = base / rel
        if not cpath.exists():
            raise FileNotFoundError(f"artifact missing: {cpath}")
        if str(rel).endswith(".json"):
            payload = read_json(cpath)
            if isinstance(payload, dict) and "breakpoints" in payload:
                curve_from_json(payload, manifolds)
    return ok, messages


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def figure_lengths(path: Path, traces: dict[str, np.ndarray], hlines: dict[str, float]) -> None:
    """Length histories (shortening stages, minimax trace) with bound lines."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, ys in traces.items():
        ax.plot(np.arange(len(ys)), ys, label=label, lw=1.2)
    for label, y in hlines.items():
        ax.axhline(y, ls="--", lw=0.9, alpha=0.7)
        ax.annotate(label, xy=(0.99, y), xycoords=("axes fraction", "data"),
                    ha="right", va="bottom", fontsize=8)
    ax.set_xlabel("stage")
    ax.set_ylabel("length")
    ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def figure_family_profile(path: Path, s_grid: np.ndarray, lengths: np.ndarray,
                          hlines: dict[str, float]) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(s_grid, lengths, lw=0.8)
    for label, y in hlines.items():
        ax.axhline(y, ls="--", lw=0.9, alpha=0.7)
        ax.annotate(label, xy=(0.99, y), xycoords=("axes fraction", "data"),
                    ha="right", va="bottom", fontsize=8)
    ax.set_xlabel("family parameter s")
    ax.set_ylabel("curve length")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def figure_curves(path: Path, manifold: Manifold, curves: dict[str, PLCurve]) -> None:
    """Initial versus final curves; 3-d for embedded models, chart otherwise."""
    plt = _plt()
    dim = next(iter(curves.values())).points.shape[1]
    if dim == 3:
        fig = plt.figure(figsize=(5.5, 5.0))
        ax = fig.add_subplot(projection="3d")
        u, v = np.mgrid[0 : 2 * np.pi : 40j, 0 : np.pi : 20j]
        r = getattr(manifold, "radius", None)
        if r:
            ax.plot_wireframe(r * np.cos(u) * np.sin(v), r * np.sin(u) * np.sin(v),
                              r * np.cos(v), color="gray", lw=0.2, alpha=0.4)
        for label, c in curves.items():
            ax.plot(c.points[:, 0], c.points[:, 1], c.points[:, 2], label=label, lw=1.4)
        ax.set_box_aspect((1, 1, 1))
        ax.legend(fontsize=8)
    else:
        fig, ax = plt.subplots(figsize=(5.5, 5.0))
        for label, c in curves.items():
            ax.plot(c.points[:, 0], c.points[:, 1], ".-", label=label, ms=2, lw=0.9)
        ax.set_aspect("equal")
        ax.legend(fontsize=8)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130)
    plt.close(fig)
