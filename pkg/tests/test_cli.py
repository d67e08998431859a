import json

import pytest

from gridbed.analytics import TraceError
from gridbed.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main, run_scenario
from gridbed.report import build_report
from gridbed.scenario import ScenarioError, apply_overrides, bundled_path, load_scenario, validate
from gridbed.tracefile import read_trace

SMALL = {
    "schema_version": 1,
    "name": "small",
    "horizon_ms": 3_600_000,
    "seed": 1,
    "topology": {"template": "hostel", "units": 2},
    "network": {"links": {"ZWave": {"base_latency_ms": 0, "jitter_ms": 0}}},
    "base_load": {"model": "constant", "kw": 1.0},
    "appliances": [
        {"id": "a1", "unit": "unit01", "label": "Light", "rated_power_w": 600, "flexible": True, "schedule": [[600000, 3000000]]},
        {"id": "a2", "unit": "unit02", "label": "Light", "rated_power_w": 600, "flexible": True, "schedule": [[900000, 2000000]]},
    ],
    "drm": {"threshold_kw": 2.5},
}


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return p


def test_bundled_scenarios_validate():
    assert validate("fig4_peakshave") == []
    assert validate("wastage_office") == []
    assert bundled_path("fig4_peakshave").exists()


def test_missing_unit_reference_names_the_path(tmp_path):
    doc = json.loads(json.dumps(SMALL))
    doc["appliances"][1]["unit"] = "ghost"
    errs = validate(write(tmp_path, doc))
    assert any(e.startswith("appliances[1].unit") for e in errs)


def test_negative_threshold_message(tmp_path):
    doc = json.loads(json.dumps(SMALL))
    doc["drm"]["threshold_kw"] = -3
    errs = validate(write(tmp_path, doc))
    assert errs == ["drm.threshold_kw: threshold_kw must be > 0"]


def test_unknown_field_is_an_error(tmp_path):
    doc = dict(SMALL, colour="blue")
    assert any("unknown field 'colour'" in e for e in validate(write(tmp_path, doc)))


def test_parse_error_reports_position(tmp_path):
    errs = validate(write(tmp_path, '{\n  "name": "x",\n  oops\n}'))
    assert "line 3" in errs[0]


def test_zero_units_is_no_premises(tmp_path):
    doc = dict(SMALL, topology={"template": "hostel", "units": 0}, appliances=[], drm=None)
    assert "topology: no premises" in validate(write(tmp_path, doc))


def test_occupancy_gap_detected(tmp_path):
    doc = dict(SMALL, units=[{"id": "unit01", "occupancy": [[0, 10, True], [20, 3600000, False]]}, {"id": "unit02"}])
    assert any("units[0].occupancy[1]" in e for e in validate(write(tmp_path, doc)))


def test_overrides_parse_json_and_create_paths():
    raw = apply_overrides({"a": {"b": 1}, "l": [{"x": 1}]}, ["a.b=2.5", "a.c.d=\"s\"", "l.0.x=true", "z=plain"])
    assert raw == {"a": {"b": 2.5, "c": {"d": "s"}}, "l": [{"x": True}], "z": "plain"}
    with pytest.raises(ScenarioError):
        apply_overrides({"l": []}, ["l.3=1"])
    with pytest.raises(ScenarioError):
        apply_overrides({}, ["novalue"])


def test_seed_flag_overrides_file(tmp_path):
    spec, raw = load_scenario(write(tmp_path, SMALL), seed=99)
    assert spec.seed == 99 and raw["seed"] == 99


def test_run_writes_all_outputs(tmp_path):
    out = tmp_path / "out"
    code = main(["run", str(write(tmp_path, SMALL)), "--out", str(out)])
    assert code == EXIT_OK
    for name in ("trace.jsonl", "report.json", "demand_series.csv", "demand.png"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1
    assert report["drm"]["impairment"]["commands_sent"] >= 1


def test_no_figures_flag(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(write(tmp_path, SMALL)), "--out", str(out), "--no-figures"]) == EXIT_OK
    assert not (out / "demand.png").exists()


def test_env_var_overrides_out(tmp_path, monkeypatch):
    target = tmp_path / "from-env"
    monkeypatch.setenv("GRIDBED_OUT", str(target))
    assert main(["run", str(write(tmp_path, SMALL)), "--out", str(tmp_path / "ignored"), "--no-figures"]) == EXIT_OK
    assert (target / "trace.jsonl").exists()
    assert not (tmp_path / "ignored").exists()


def test_threshold_override_echoed(tmp_path):
    report = run_scenario(write(tmp_path, SMALL), ["drm.threshold_kw=33"], out=tmp_path / "o", figures=False)
    assert report["threshold_kw"] == 33
    assert report["drm"]["threshold_kw"] == 33


def test_report_is_idempotent(tmp_path):
    out = tmp_path / "o"
    run_report = run_scenario(write(tmp_path, SMALL), out=out, figures=False)
    again = build_report(read_trace(out / "trace.jsonl"))
    assert again == run_report
    rep_dir = tmp_path / "r"
    assert main(["report", str(out / "trace.jsonl"), "--out", str(rep_dir), "--no-figures"]) == EXIT_OK
    assert json.loads((rep_dir / "report.json").read_text()) == json.loads((out / "report.json").read_text())


def test_same_seed_same_trace_and_seed_changes_it(tmp_path):
    doc = dict(SMALL, network={"links": {}})  # default jitter makes the seed matter
    a = run_scenario(write(tmp_path, doc), out=tmp_path / "a", figures=False)
    b = run_scenario(write(tmp_path, doc), out=tmp_path / "b", figures=False)
    c = run_scenario(write(tmp_path, doc), seed=2, out=tmp_path / "c", figures=False)
    assert a["trace_sha256"] == b["trace_sha256"] != c["trace_sha256"]
    assert (tmp_path / "a" / "trace.jsonl").read_bytes() == (tmp_path / "b" / "trace.jsonl").read_bytes()


def test_trace_events_strictly_ordered(tmp_path):
    out = tmp_path / "o"
    run_scenario(write(tmp_path, SMALL), out=out, figures=False)
    events = read_trace(out / "trace.jsonl").events
    keys = [(e["at"], e["seq"]) for e in events]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)
    assert {e["category"] for e in events} <= {"Demand", "Command", "Message", "Sensor", "Price", "Shed"}


def test_empty_trace_is_truncated(tmp_path):
    p = write(tmp_path, "", "trace.jsonl")
    with pytest.raises(TraceError, match="truncated trace"):
        read_trace(p)
    assert main(["report", str(p)]) == EXIT_RUNTIME


def test_trace_without_end_marker_is_truncated(tmp_path):
    out = tmp_path / "o"
    run_scenario(write(tmp_path, SMALL), out=out, figures=False)
    lines = (out / "trace.jsonl").read_text().splitlines()
    cut = write(tmp_path, "\n".join(lines[:-5]) + "\n", "cut.jsonl")
    with pytest.raises(TraceError, match="truncated trace"):
        read_trace(cut)


def test_zero_excursions_report(tmp_path):
    report = run_scenario(write(tmp_path, SMALL), ["drm.threshold_kw=50"], out=tmp_path / "o", figures=False)
    assert report["drm"]["impairment"]["time_above_threshold_s"] == 0
    assert report["drm"]["impairment"]["commands_sent"] == 0


def test_validation_failure_exit_code(tmp_path, capsys):
    doc = json.loads(json.dumps(SMALL))
    doc["drm"]["threshold_kw"] = 0
    p = write(tmp_path, doc)
    assert main(["validate", str(p)]) == EXIT_INVALID
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "threshold_kw must be > 0" in capsys.readouterr().err


def test_missing_file_is_validation_error(tmp_path):
    assert main(["validate", str(tmp_path / "nope.json")]) == EXIT_INVALID


def test_removed_link_is_reported(tmp_path):
    doc = dict(SMALL, network={"remove_links": ["WiFi:uhg-unit01--ap-b01"]})
    errs = validate(write(tmp_path, doc))
    assert errs and errs[0].startswith("topology:")


def test_sensor_scenario_reports_detector_view(tmp_path):
    occ = [[0, 1_800_000, True], [1_800_000, 3_600_000, False]]
    doc = {
        "name": "office",
        "horizon_ms": 3_600_000,
        "topology": {"template": "office_section", "rooms": 1},
        "units": [{"id": "room01", "occupancy": occ}],
        "appliances": [{"id": "l", "unit": "room01", "label": "Light", "rated_power_w": 300, "schedule": [[0, 3_000_000]]}],
        "sensors": {"period_s": 30, "p_motion_when_occupied": 1.0, "noise_unoccupied": [20.0, 1.0]},
    }
    report = run_scenario(write(tmp_path, doc), out=tmp_path / "o", figures=False)
    w = report["wastage"]
    assert w["rooms"][0]["lights_kwh"] == pytest.approx(0.3 * 1_200_000 / 3_600_000)
    # last trigger at 29:30, so the detector calls the room empty from 44:30
    assert w["detector"]["rooms"][0]["lights_kwh"] == pytest.approx(0.3 * 330_000 / 3_600_000)
    assert (tmp_path / "o" / "wastage.csv").exists()


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "gridbed", "validate", "fig4_peakshave"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "ok"
