import json

import pytest
from hypothesis import given, settings, strategies as st

from ncindex.cli_reports import ExperimentConfig, list_suites, main, regress, run
from ncindex.errors import ConfigInvalid, SchemaMismatch


def report_for(cfg, tmp_path, name="report.json", seed=None):
    path = tmp_path / name
    run(ExperimentConfig.from_dict(cfg, seed, str(path)))
    return path


def test_toeplitz_report():
    rep = run(ExperimentConfig.from_dict({"command": "toeplitz", "k": 1, "window": 64}))
    assert rep.passed
    # complex values are stored as [re, im]
    assert complex(*rep.checks[0].value) == pytest.approx(1.0, abs=1e-9)


def test_forms_identities_report():
    rep = run(ExperimentConfig.from_dict({"command": "forms-identities", "algebra": "m2", "N": 6, "seed": 42}))
    assert rep.passed
    assert all(c.value < 1e-12 for c in rep.checks)


def test_empty_config_rejected():
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_dict({})


def test_unknown_key_rejected():
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_dict({"command": "toeplitz", "k": 1, "radius": 3})


def test_randomized_suite_needs_seed():
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_dict({"command": "trace-check"})


def test_cli_exit_code_without_seed(capsys):
    assert main(["forms-identities"]) == 2
    assert "ConfigInvalid" in capsys.readouterr().err


def test_cli_exit_code_on_pass(capsys):
    assert main(["toeplitz"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_suite_error_recorded_in_report():
    # window 2 is too small for winding 3, which the suite reports as a failed check
    rep = run(ExperimentConfig.from_dict({"command": "toeplitz", "k": 3, "window": 2}))
    assert not rep.passed
    assert rep.checks[0].error.startswith("WindowTooSmall")


def test_list_suites():
    text = list_suites()
    assert "toeplitz" in text and "lefschetz" in text
    parsed = json.loads(text)
    assert json.loads(json.dumps(parsed, indent=2, sort_keys=True)) == parsed


def test_regress_identical(tmp_path):
    path = report_for({"command": "toeplitz"}, tmp_path)
    assert not any(r.flagged for r in regress(path, path))


def test_regress_flags_perturbed_value(tmp_path):
    path = report_for({"command": "toeplitz"}, tmp_path)
    doc = json.loads(path.read_text())
    doc["checks"][0]["value"][0] += 0.5
    moved = tmp_path / "moved.json"
    moved.write_text(json.dumps(doc))
    flags = {r.name: r.flagged for r in regress(path, moved)}
    assert flags["index_pairing"] and not flags["minus_operator_index"]
    assert main(["regress", str(path), str(moved)]) == 1


def test_regress_ignores_version(tmp_path):
    path = report_for({"command": "toeplitz"}, tmp_path)
    doc = json.loads(path.read_text())
    doc["version"] = "99.0.0"
    other = tmp_path / "other.json"
    other.write_text(json.dumps(doc))
    assert not any(r.flagged for r in regress(path, other))


def test_regress_schema_mismatch(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"checks": []}))
    with pytest.raises(SchemaMismatch):
        regress(bad, bad)


def test_anomaly_writes_csv(tmp_path):
    cfg = {"command": "anomaly", "k": 1, "grid": 16, "window": 8}
    path = report_for(cfg, tmp_path)
    rows = (tmp_path / "report.anomaly.csv").read_text().splitlines()
    assert rows[0].startswith("theta") and len(rows) == 17
    assert json.loads(path.read_text())["passed"]


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2 ** 64 - 1))
def test_report_payload_is_deterministic(seed):
    cfg = {"command": "forms-identities", "N": 4, "count": 20}
    a = run(ExperimentConfig.from_dict(cfg, seed))
    b = run(ExperimentConfig.from_dict(cfg, seed))
    assert json.dumps(a.payload(), sort_keys=True) == json.dumps(b.payload(), sort_keys=True)
