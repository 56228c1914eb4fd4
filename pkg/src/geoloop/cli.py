"""Command-line experiment driver.

Subcommands: run (execute a scene and write report, curves, traces, and
figures), verify (re-measure a report's certificates from its artifacts),
formula (print the closed-form bound tables), trace (dump a family JSON
to CSV).

Exit codes: 0 all certificates pass, 1 input or configuration error,
2 hypothesis refuted by a stable loop (the loop is serialized next to the
report), 3 verification mismatch.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .certificates import Slack
from .curve_shorten import ShorteningParams, shorten_curve
from .curves import PLCurve
from .errors import GeoloopError, HypothesisViolated
from .family_shorten import shorten_family
from .generators import meridian_sweep, random_wiggle, torus_wind
from .manifolds import Manifold, RoundSphere, FlatTorus, manifold_from_json
from .report import (ReportBuilder, curve_to_json, figure_curves, figure_family_profile,
                     figure_lengths, read_json, verify_report, write_family_csv,
                     write_json)
from .sweepout import bound_formula, loop_count_bound, minimax_geodesic


def _load_scene(path: Path) -> dict:
    scene = read_json(path)
    for key in ("manifold", "mode", "params"):
        if key not in scene:
            raise ValueError(f"scene is missing the {key!r} entry")
    return scene


def _scene_params(scene: dict, slack_c0: float | None) -> tuple[ShorteningParams, Slack]:
    p = scene["params"]
    params = ShorteningParams(
        l=float(p["l"]), a=float(p["a"]), delta=float(p["delta"]),
        epsilon=float(p.get("epsilon", 0.0)))
    c0 = slack_c0 if slack_c0 is not None else 1e-3 * params.a
    return params, Slack(c0=c0)


def _build_curve(scene: dict, m: Manifold, seed: int | None) -> PLCurve:
    gen = scene.get("generator", {})
    name = gen.get("name")
    g_seed = int(seed if seed is not None else gen.get("seed", 0))
    if name == "random_wiggle":
        if not isinstance(m, RoundSphere):
            raise ValueError("random_wiggle runs on round spheres")
        q = np.asarray(gen["q"], dtype=float) if "q" in gen else None
        p = np.asarray(gen["p"], dtype=float) if "p" in gen else None
        return random_wiggle(m, g_seed, float(gen["target_length"]), p=p, q=q)
    if name == "torus_wind":
        if not isinstance(m, FlatTorus):
            raise ValueError("torus_wind runs on flat tori")
        return torus_wind(m, float(gen.get("target_length", 2.5)),
                          tuple(gen.get("winding", (2, 0))), seed=g_seed)
    if name == "explicit":
        return PLCurve(m, np.asarray(gen["breakpoints"], dtype=float))
    raise ValueError(f"unknown curve generator {name!r}")


def _build_family(scene: dict, m: Manifold, seed: int | None):
    gen = scene.get("generator", {})
    name = gen.get("name")
    if name == "meridian_sweep":
        if not isinstance(m, RoundSphere):
            raise ValueError("meridian_sweep runs on round spheres")
        return meridian_sweep(m, int(gen.get("nodes", 64)))
    raise ValueError(f"unknown family generator {name!r}")


def _run_curve_mode(scene, m, params, slack, rb: ReportBuilder) -> None:
    alpha = _build_curve(scene, m, scene.get("seed"))
    rb.add_curve("alpha", alpha)
    res = shorten_curve(m, alpha, params, slack=slack, store="all")
    fam = res.family
    rb.add_curve("final", res.final)
    for cert in res.certificates:
        if cert.formula_id == "l_plus_a":
            rb.add_certificate(cert, res.final, "l_plus_a")
        elif cert.formula_id == "L_plus_2a":
            i = int(np.argmax(res.homotopy_lengths))
            from .curve_shorten import partial_shortening
            witness = partial_shortening(fam, alpha, fam.s_grid[i])
            rb.add_certificate(cert, witness, "L_plus_2a")
        elif cert.formula_id == "l_plus_3a_delta":
            witness = fam.frame(int(np.argmax(fam.lengths)))
            rb.add_certificate(cert, witness, "l_plus_3a_delta")
        else:
            rb.add_certificate(cert, None, cert.formula_id)
    write_json(rb.out / "family.json",
               fam.to_json(certificate=res.certificate("l_plus_3a_delta")))
    write_family_csv(rb.out / "family.csv", fam.rows())
    write_json(rb.out / "traces.json", fam.traces_json())
    rb.artifacts["family_json"] = "family.json"
    rb.artifacts["family_csv"] = "family.csv"
    rb.artifacts["traces_json"] = "traces.json"
    rb.results["initial_length"] = alpha.length
    rb.results["final_length"] = res.final.length
    rb.results["steps_taken"] = res.steps_taken
    rb.results["steps_predicted"] = res.steps_predicted
    figure_lengths(rb.out / "fig_lengths.png",
                   {"partial shortening": res.homotopy_lengths},
                   {"L + 2a": alpha.length + 2 * params.a,
                    "l + a": params.l + params.a})
    figure_family_profile(rb.out / "fig_family.png", fam.s_grid, fam.lengths,
                          {"l + 3a + delta": params.l + 3 * params.a + params.delta})
    figure_curves(rb.out / "fig_curves.png", m, {"initial": alpha, "final": res.final})


def _run_family_mode(scene, m, params, slack, rb: ReportBuilder, with_minimax: bool) -> None:
    family = _build_family(scene, m, scene.get("seed"))
    L = float(scene["params"].get("L", family.max_length))
    res = shorten_family(family, params, L=L, slack=slack)
    rb.add_certificate(res.certificate("two_l_4a"), res.witness_two_l(), "two_l_4a")
    rb.add_certificate(res.certificate("three_l_5a"), res.witness_tilde(), "three_l_5a")
    rb.add_certificate(res.certificate("L_5a_3l"), res.witness_g(), "L_5a_3l")
    rb.results["family_eps_measured"] = family.eps_measured
    rb.results["disjointness"] = {
        "measured_max_min": res.disjoint_max,
        "allowed": res.disjoint_bound,
        "pass": bool(res.disjoint_max <= res.disjoint_bound),
    }
    rb.results["node_final_lengths_max"] = max(c.length for c in res.node_finals)
    longest = max(range(len(res.node_finals)), key=lambda i: res.node_finals[i].length)
    rb.add_curve("node_final_longest", res.node_finals[longest])
    fam0 = res.sync.fams[0]
    write_json(rb.out / "family.json", fam0.to_json())
    write_family_csv(rb.out / "family.csv", fam0.rows())
    write_json(rb.out / "traces.json", fam0.traces_json())
    rb.artifacts["family_json"] = "family.json"
    rb.artifacts["family_csv"] = "family.csv"
    rb.artifacts["traces_json"] = "traces.json"
    figure_family_profile(rb.out / "fig_family.png", fam0.s_grid, fam0.lengths,
                          {"l + 3a + delta": params.l + 3 * params.a + params.delta,
                           "l + a": params.l + params.a})
    if with_minimax:
        q = int(scene["params"].get("q", 1))
        mm = minimax_geodesic(res.tilde_f, q=q, slack=slack)
        rb.add_certificate(mm.bound, mm.critical_loop, "eight_pi_m")
        rb.add_curve("critical_loop", mm.critical_loop)
        rb.results["minimax"] = mm.to_json()
        figure_lengths(rb.out / "fig_minimax.png", {"family maximum": mm.max_trace},
                       {"8 pi q": 8 * math.pi * q, "2 pi": 2 * math.pi})
        figure_curves(rb.out / "fig_curves.png", m,
                      {"input loop": family.loops[0].curve,
                       "critical loop": mm.critical_loop})


def cmd_run(args) -> int:
    scene_path = Path(args.scene)
    out_dir = Path(args.out) if args.out else scene_path.with_suffix("") .parent / (scene_path.stem + "_out")
    try:
        scene = _load_scene(scene_path)
        m = manifold_from_json(scene["manifold"])
        params, slack = _scene_params(scene, args.slack_c0)
        if args.seed is not None:
            scene["seed"] = int(args.seed)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    rb = ReportBuilder(out_dir, scene, m)
    try:
        mode = scene["mode"]
        if mode == "curve":
            _run_curve_mode(scene, m, params, slack, rb)
        elif mode == "family":
            _run_family_mode(scene, m, params, slack, rb, with_minimax=False)
        elif mode == "sweepout":
            _run_family_mode(scene, m, params, slack, rb, with_minimax=True)
        else:
            print(f"error: unknown mode {mode!r}", file=sys.stderr)
            return 1
    except HypothesisViolated as exc:
        refut = {"loop_length": exc.loop_length, "step": exc.step}
        if exc.loop is not None:
            write_json(rb.out / "refuting_loop.json",
                       curve_to_json(exc.loop.curve, rb.manifold_id))
            refut["loop"] = "refuting_loop.json"
        rb.results["hypothesis_violated"] = refut
        rb.write()
        print(f"hypothesis refuted: stable loop of length {exc.loop_length:.6g}")
        return 2
    except (ValueError, GeoloopError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    path = rb.write()
    ok = rb.all_pass()
    print(f"report: {path}")
    for c in rb.certificates:
        print(f"  {c['formula']}: measured {c['measured']:.6g} vs "
              f"{c['claimed']:.6g} + {c['slack']:.3g} -> {'pass' if c['pass'] else 'FAIL'}")
    return 0 if ok else 1


def cmd_verify(args) -> int:
    try:
        ok, messages = verify_report(Path(args.report), args.curves_dir)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for msg in messages:
        print(msg)
    if not ok:
        print("verification FAILED")
        return 3
    print("verification ok")
    return 0


def cmd_formula(args) -> int:
    k, a = args.k, args.a
    print(f"family bound ((4k+2)m + (2k-3))a with k={k:g}, a={a:g}:")
    for mm in range(1, args.m + 1):
        print(f"  m={mm}: {bound_formula(k, mm, a):.12g}")
    print(f"count bounds for n={args.n}:")
    for kk in range(1, args.count + 1):
        print(f"  k={kk}: loops {loop_count_bound(args.n, kk, 'loops'):.12g}"
              f"  paths {loop_count_bound(args.n, kk, 'paths'):.12g}")
    return 0


def cmd_trace(args) -> int:
    try:
        fam = read_json(Path(args.family))
        rows = zip(fam["s"], fam["tau"], fam["lengths"])
        write_family_csv(Path(args.out), rows)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="geoloop",
                                 description="curve and loop-family shortening lab")
    ap.add_argument("--version", action="version", version=f"geoloop {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scene file")
    p_run.add_argument("scene")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--slack-c0", type=float, default=None, dest="slack_c0")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.set_defaults(fn=cmd_run)

    p_ver = sub.add_parser("verify", help="re-measure a report's certificates")
    p_ver.add_argument("report")
    p_ver.add_argument("--curves-dir", default=None)
    p_ver.set_defaults(fn=cmd_verify)

    p_for = sub.add_parser("formula", help="print bound tables")
    p_for.add_argument("--k", type=float, default=1.5)
    p_for.add_argument("--m", type=int, default=3)
    p_for.add_argument("--a", type=float, default=math.pi)
    p_for.add_argument("--n", type=int, default=2)
    p_for.add_argument("--count", type=int, default=3)
    p_for.set_defaults(fn=cmd_formula)

    p_tr = sub.add_parser("trace", help="dump a family JSON to CSV")
    p_tr.add_argument("family")
    p_tr.add_argument("--out", default="family_trace.csv")
    p_tr.set_defaults(fn=cmd_trace)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
