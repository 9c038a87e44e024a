import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest

from levicool import cli

GOLDEN = Path(cli.__file__).parent / "data" / "golden"


def run(capsys, *args):
    code = cli.main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def error_payload(out):
    return json.loads(out.splitlines()[-1])["error"]


@pytest.fixture
def baseline_path():
    return cli.bundled_config("baseline")


@pytest.fixture
def mixture_path():
    return cli.bundled_config("mixture")


# ---------------------------------------------------------------------------
# plumbing

def test_bundled_configs_exist(baseline_path, mixture_path):
    assert baseline_path.is_file() and mixture_path.is_file()


def test_load_all_schemas():
    for name in ("manifest-1", "derived-1", "budget-1", "fit-1",
                 "histograms-1", "error-1", "timeseries-1", "events-1",
                 "detections-1"):
        spec = cli.load_schema(name)
        assert spec["$id"].startswith("levicool/")


def test_quantize():
    doc = {"a": float("nan"), "b": np.float64(1.23456789012345678),
           "c": [np.int64(3), float("inf")], "d": True, "e": "x"}
    assert cli._quantize(doc) == {"a": None, "b": 1.23456789012,
                                  "c": [3, None], "d": True, "e": "x"}


def test_triples_from_detections():
    def row(axis, start, count, merged=0):
        return {"axis": axis, "pulse_start_s": start, "duration_s": 1e-3,
                "count": count, "merged": merged}

    rows = [row("z", 1.0, 3), row("x", 1.0, 1), row("y", 1.0, 2),
            row("z", 2.0, 5), row("x", 2.0, 5),          # y row lost
            row("z", 3.0, 1, merged=1), row("x", 3.0, 1), row("y", 3.0, 1),
            row("z", 0.5, 4), row("x", 0.5, 0), row("y", 0.5, 9)]
    triples = cli._triples_from_detections(rows)
    assert triples.shape == (2, 3)
    assert np.array_equal(triples, [[4, 0, 9], [3, 1, 2]])  # time-ordered


# ---------------------------------------------------------------------------
# derive / budget against golden outputs

def test_derive_matches_golden(tmp_path, capsys, baseline_path):
    code, out, err = run(capsys, "derive", "--config", baseline_path,
                         "--out", tmp_path)
    assert code == 0
    produced = (tmp_path / "derived.json").read_bytes()
    assert produced == (GOLDEN / "baseline.derived.json").read_bytes()
    cli.validate_json_file(tmp_path / "derived.json", "derived-1")
    cli.validate_json_file(tmp_path / "manifest.json", "manifest-1")
    doc = json.loads(produced)
    names = {c["name"] for c in doc["reference_comparison"]}
    assert "collision_rate_per_s" in names and "mass_kg" in names
    for c in doc["reference_comparison"]:
        assert 0.5 < c["ratio"] < 2.0


def test_derive_deterministic_bytes(tmp_path, capsys, baseline_path):
    run(capsys, "derive", "--config", baseline_path, "--out", tmp_path / "a")
    run(capsys, "derive", "--config", baseline_path, "--out", tmp_path / "b")
    assert (tmp_path / "a/derived.json").read_bytes() == \
        (tmp_path / "b/derived.json").read_bytes()
    ma = json.loads((tmp_path / "a/manifest.json").read_text())
    mb = json.loads((tmp_path / "b/manifest.json").read_text())
    for m in (ma, mb):
        m.pop("timestamp")
        m["flags"].pop("out")
    assert ma == mb


def test_budget_matches_golden(tmp_path, capsys, baseline_path):
    code, out, err = run(capsys, "budget", "--config", baseline_path,
                         "--out", tmp_path)
    assert code == 0
    assert (tmp_path / "budget.json").read_bytes() == \
        (GOLDEN / "baseline.budget.json").read_bytes()
    cli.validate_json_file(tmp_path / "budget.json", "budget-1")
    for mode in ("TEM00", "TEM01", "TEM10"):
        assert mode in out
    doc = json.loads((tmp_path / "budget.json").read_text())
    assert doc["ok"] is True


# ---------------------------------------------------------------------------
# cool

def test_cool_pipeline(tmp_path, capsys, baseline_path):
    code, out, err = run(capsys, "cool", "--config", baseline_path,
                         "--out", tmp_path, "--t-end", "0.002")
    assert code == 0
    rows = cli.read_csv_checked(tmp_path / "timeseries.csv", "timeseries-1")
    times = [r["time_s"] for r in rows]
    assert times == sorted(times)
    # three axes share each snapshot, in z, x, y order
    assert [r["axis"] for r in rows[:3]] == ["z", "x", "y"]
    assert len(rows) % 3 == 0
    summary = json.loads(out.splitlines()[-1])["summary"]
    assert [s["axis"] for s in summary] == ["z", "x", "y"]
    for s in summary:
        assert 0.0 <= s["final_phonons"] < s["initial_phonons"] == 10.0
        # measured energy decay agrees with the perturbative cooling rate
        assert s["fit_to_formula_ratio"] == pytest.approx(1.0, rel=0.05)
        assert s["steady_state_phonons"] == \
            pytest.approx(s["sideband_floor_phonons"], rel=0.05)
    cli.validate_json_file(tmp_path / "manifest.json", "manifest-1")


def test_cool_unstable_config(tmp_path, capsys, baseline_path):
    cfg = json.loads(baseline_path.read_text())
    cfg["drives"] = [{"mode": "TEM00", "polarization": "x",
                      "detuning": "-0.5 MHz", "target_photons": 5.0e4}]
    bad = tmp_path / "blue.cfg"
    bad.write_text(json.dumps(cfg))
    code, out, err = run(capsys, "cool", "--config", bad, "--out",
                         tmp_path / "o")
    assert code == 3
    payload = error_payload(out)
    assert payload["type"] == "unstable"
    assert payload["details"]["s1"] < 0.0
    assert payload["details"]["axis"] == "z"


# ---------------------------------------------------------------------------
# collide / fit

def test_collide_and_fit_pipeline(tmp_path, capsys, baseline_path):
    code, out, err = run(capsys, "collide", "--config", baseline_path,
                         "--out", tmp_path / "a", "--duration", "120",
                         "--seed", "3")
    assert code == 0
    events = cli.read_csv_checked(tmp_path / "a/events.csv", "events-1")
    detections = cli.read_csv_checked(tmp_path / "a/detections.csv",
                                      "detections-1")
    cli.validate_json_file(tmp_path / "a/histograms.json", "histograms-1")
    assert len(events) == pytest.approx(1210, abs=4 * 35)
    assert len(detections) >= 3 * len(events) - 3 * 40  # few merges
    # same seed, same bytes
    run(capsys, "collide", "--config", baseline_path, "--out", tmp_path / "b",
        "--duration", "120", "--seed", "3")
    for name in ("events.csv", "detections.csv", "histograms.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()

    code, out, err = run(capsys, "fit", tmp_path / "a/detections.csv",
                         "--config", baseline_path, "--out", tmp_path / "a",
                         "--species", "1")
    assert code == 0
    cli.validate_json_file(tmp_path / "a/fit.json", "fit-1")
    doc = json.loads((tmp_path / "a/fit.json").read_text())
    assert doc["masses_kg"][0] == pytest.approx(6.63e-26, rel=0.10)
    assert doc["weights"] == [1.0]


def test_collide_zero_duration(tmp_path, capsys, mixture_path):
    code, out, err = run(capsys, "collide", "--config", mixture_path,
                         "--out", tmp_path, "--duration", "0", "--seed", "1")
    assert code == 0
    assert cli.read_csv_checked(tmp_path / "events.csv", "events-1") == []
    cli.validate_json_file(tmp_path / "histograms.json", "histograms-1")


def test_fit_insufficient_events(tmp_path, capsys, baseline_path):
    run(capsys, "collide", "--config", baseline_path, "--out", tmp_path,
        "--duration", "5", "--seed", "1")
    code, out, err = run(capsys, "fit", tmp_path / "detections.csv",
                         "--config", baseline_path, "--out", tmp_path)
    assert code == 4
    payload = error_payload(out)
    assert payload["type"] == "insufficient_events"
    assert payload["details"]["required"] == 500
    assert payload["details"]["events"] < 500


def test_fit_rejects_corrupt_csv(tmp_path, capsys, baseline_path):
    run(capsys, "collide", "--config", baseline_path, "--out", tmp_path,
        "--duration", "5", "--seed", "1")
    lines = (tmp_path / "detections.csv").read_text().splitlines()
    lines[2] = "z,notafloat,0.001,2,0"
    broken = tmp_path / "broken.csv"
    broken.write_text("\n".join(lines) + "\n")
    code, out, err = run(capsys, "fit", broken, "--config", baseline_path,
                         "--out", tmp_path)
    assert code == 5
    payload = error_payload(out)
    assert payload["type"] == "schema"
    assert payload["line"] == 3
    assert "line 3" in payload["message"]


# ---------------------------------------------------------------------------
# config-level failures

def test_missing_config_field(tmp_path, capsys, baseline_path):
    cfg = json.loads(baseline_path.read_text())
    del cfg["sphere"]["radius"]
    p = tmp_path / "broken.cfg"
    p.write_text(json.dumps(cfg))
    code, out, err = run(capsys, "derive", "--config", p, "--out",
                         tmp_path / "o")
    assert code == 2
    payload = error_payload(out)
    assert payload["type"] == "config"
    assert "sphere.radius" in payload["message"]


def test_unreadable_config(tmp_path, capsys):
    code, out, err = run(capsys, "derive", "--config",
                         tmp_path / "missing.cfg", "--out", tmp_path)
    assert code == 2
    assert error_payload(out)["type"] == "config"

    bad = tmp_path / "bad.cfg"
    bad.write_text("{not json")
    code, out, err = run(capsys, "derive", "--config", bad, "--out", tmp_path)
    assert code == 2
    assert "JSON" in error_payload(out)["message"]
