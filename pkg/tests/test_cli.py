import csv
import io
import json

import pytest

from coopnoma import cli
from coopnoma.experiments import (CSV_HEADER, PRESETS, ExperimentSpec, SpecError, fmt, preset,
                                  run_experiment, to_csv)


def _write(tmp_path, text, name="spec.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SPEC = """
name: demo
base: {k_max: 2}
sweep:
  - [snr_db, [10, 30]]
engine: both
metrics: [ltat, outage_o1_per_round]
trials: 2000
seed: 5
"""


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_csv_schema_and_rerun_is_byte_identical(tmp_path, monkeypatch):
    spec = _write(tmp_path, SPEC)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["run", spec, "--out", str(a)]) == 0
    monkeypatch.setenv("COOPNOMA_WORKERS", "2")
    assert cli.main(["run", spec, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    rows = _rows(a)
    # 2 points x 3 engines (exact, approx, MC) x (ltat + 2 rounds), in sweep order
    assert len(rows) == 18
    assert [r["param_values"] for r in rows[:9]] == ["10"] * 9
    exact = [r for r in rows if r["engine"] == "analytic-exact"]
    mc = [r for r in rows if r["engine"] == "montecarlo"]
    assert all(r["std_error"] == "" and r["trials"] == "" for r in exact)
    assert all(r["std_error"] != "" and r["trials"] == "2000" and r["seed"] != "" for r in mc)
    assert {r["metric"] for r in rows} == {"ltat", "outage_o1[1]", "outage_o1[2]"}


def test_seed_changes_mc_only(tmp_path):
    spec = _write(tmp_path, SPEC)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["run", spec, "--out", str(a)])
    cli.main(["run", spec, "--out", str(b), "--seed", "6"])
    ra, rb = _rows(a), _rows(b)
    for x, y in zip(ra, rb):
        if x["engine"] == "analytic-exact":
            assert x["value"] == y["value"]
    assert any(x["value"] != y["value"] for x, y in zip(ra, rb) if x["engine"] == "montecarlo")


def test_json_mirror(tmp_path):
    spec = _write(tmp_path, SPEC)
    out, js = tmp_path / "a.csv", tmp_path / "a.json"
    assert cli.main(["run", spec, "--out", str(out), "--json", str(js), "--engine",
                     "analytic-approx"]) == 0
    assert json.loads(js.read_text()) == _rows(out)


def test_empty_sweep_is_one_point():
    spec = ExperimentSpec(name="one", base={"k_max": 1})
    res = run_experiment(spec)
    assert res.points == 1 and len(res.records) == 3
    assert all(r["param_names"] == "" for r in res.records)


def test_values_have_17_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "true" and fmt(3) == "3"
    rec = run_experiment(ExperimentSpec(name="x", metrics=("ltat",))).records[0]
    assert float(rec["value"]) == float(fmt(float(rec["value"])))


def test_stdout_when_no_output(capsys):
    assert cli.main(["preset", "table1", "--out", "", "snr_db=30", "eps=0.1"]) == 0
    text = capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(text)))
    assert {r["metric"] for r in rows} >= {"objective", "beta2", "feasible"}


@pytest.mark.parametrize("text", [
    "name: bad\nengine: quantum\n",
    "name: bad\nbase: {warp: 9}\n",
    "name: bad\nsweep: [[snr_db, []]]\n",
    "name: bad\nbase: {d1: 20, d2: 10}\n",
    "name: bad\nmetrics: [objective]\n",
    "engine: both\n",
    "- just a list\n",
])
def test_invalid_spec_exit_2(tmp_path, text):
    spec = _write(tmp_path, text)
    assert cli.main(["run", spec]) == 2


def test_other_errors_exit_1(tmp_path):
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 1


def test_unknown_preset_exit_2():
    assert cli.main(["preset", "fig99"]) == 2


@pytest.mark.parametrize("name", list(PRESETS))
def test_presets_validate(name):
    spec = preset(name).validate()
    assert spec.outputs == f"results/{name}.csv"
    assert spec.points() is not None


def test_override_replaces_sweep_axis():
    spec = preset("fig3a").override({"snr_db": 30, "trials": 10})
    assert [k for k, _ in spec.sweep] == ["k_max"]
    assert spec.base["snr_db"] == 30 and spec.trials == 10
    with pytest.raises(SpecError):
        cli._parse_overrides(["novalue"])


def test_validate_quick(tmp_path, capsys):
    spec = _write(tmp_path, SPEC)
    assert cli.main(["validate", spec, "--quick"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("PASS spec")
    assert all(line.startswith("PASS") for line in out)


def test_csv_round_trip_order():
    recs = [{k: str(i) for i, k in enumerate(CSV_HEADER)}]
    assert to_csv(recs).splitlines()[1] == ",".join(str(i) for i in range(len(CSV_HEADER)))
