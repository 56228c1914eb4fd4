import json
import math
from pathlib import Path

import pytest

from geoloop.cli import main
from geoloop.report import read_json


def write_scene(tmp_path: Path, name: str, scene: dict) -> Path:
    p = tmp_path / name
    p.write_text(json.dumps(scene))
    return p


@pytest.fixture(scope="module")
def small_curve_scene():
    return {
        "manifold": {"kind": "round_sphere", "dim": 2, "radius": 1.0,
                     "diameter_bound": math.pi},
        "mode": "curve",
        "generator": {"name": "random_wiggle", "seed": 7, "target_length": 4.2},
        "params": {"l": 0.1, "a": math.pi, "delta": 0.1},
    }


def test_run_and_verify_roundtrip(tmp_path, small_curve_scene):
    scene = write_scene(tmp_path, "scene.json", small_curve_scene)
    out = tmp_path / "out"
    assert main(["run", str(scene), "--out", str(out)]) == 0
    report = read_json(out / "report.json")
    assert report["all_pass"]
    assert (out / "fig_lengths.png").exists()
    assert (out / "fig_family.png").exists()
    assert (out / "fig_curves.png").exists()
    assert (out / "family.csv").exists()
    assert main(["verify", str(out / "report.json")]) == 0


def test_run_deterministic(tmp_path, small_curve_scene):
    scene = write_scene(tmp_path, "scene.json", small_curve_scene)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", str(scene), "--out", str(out1)]) == 0
    assert main(["run", str(scene), "--out", str(out2)]) == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


def test_malformed_scene_exits_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{this is not json")
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 1
    missing = tmp_path / "missing_keys.json"
    missing.write_text(json.dumps({"manifold": {"kind": "round_sphere"}}))
    assert main(["run", str(missing), "--out", str(tmp_path / "o2")]) == 1


def test_torus_violation_exits_two(tmp_path):
    scene = write_scene(tmp_path, "torus.json", {
        "manifold": {"kind": "flat_torus", "periods": [1.0, 1.0]},
        "mode": "curve",
        "generator": {"name": "torus_wind", "seed": 3, "target_length": 2.5,
                      "winding": [2, 0]},
        "params": {"l": 0.5, "a": 0.9, "delta": 0.05},
    })
    out = tmp_path / "tor"
    assert main(["run", str(scene), "--out", str(out)]) == 2
    report = read_json(out / "report.json")
    refut = report["results"]["hypothesis_violated"]
    assert abs(refut["loop_length"] - 1.0) < 1e-3
    loop = read_json(out / refut["loop"])
    assert "breakpoints" in loop


def test_verify_detects_tampering(tmp_path, small_curve_scene):
    scene = write_scene(tmp_path, "scene.json", small_curve_scene)
    out = tmp_path / "out"
    assert main(["run", str(scene), "--out", str(out)]) == 0
    report_path = out / "report.json"
    report = json.loads(report_path.read_text())
    report["certificates"][0]["witness_length"] = 0.5
    report_path.write_text(json.dumps(report))
    assert main(["verify", str(report_path)]) == 3


def test_verify_missing_witness_exits_one(tmp_path, small_curve_scene):
    scene = write_scene(tmp_path, "scene.json", small_curve_scene)
    out = tmp_path / "out"
    assert main(["run", str(scene), "--out", str(out)]) == 0
    victim = next((out / "curves").glob("witness_*.json"))
    victim.unlink()
    assert main(["verify", str(out / "report.json")]) == 1


def test_formula_subcommand(capsys):
    assert main(["formula", "--k", "1.5", "--m", "2", "--a", str(math.pi)]) == 0
    out = capsys.readouterr().out
    assert f"{8 * math.pi:.12g}" in out
    assert f"{16 * math.pi:.12g}" in out


def test_trace_subcommand(tmp_path, small_curve_scene):
    scene = write_scene(tmp_path, "scene.json", small_curve_scene)
    out = tmp_path / "out"
    assert main(["run", str(scene), "--out", str(out)]) == 0
    csv_path = tmp_path / "trace.csv"
    assert main(["trace", str(out / "family.json"), "--out", str(csv_path)]) == 0
    header = csv_path.read_text().splitlines()[0]
    assert header == "s,tau,length"


def test_bundled_scenes_parse():
    from importlib.resources import files
    import geoloop
    for name in ("sphere_curve.json", "sphere_sweep.json", "torus_violation.json"):
        payload = json.loads(files(geoloop).joinpath("scenes", name).read_text())
        assert {"manifold", "mode", "params"} <= set(payload)
