import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from floquet_spec.cli import RunConfig, main, pair_roots
from floquet_spec.errors import SpecError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bands_json_on_stdout(capsys):
    code, out, _ = run(capsys, "bands", "--spec", CONFIGS / "free.json", "--window=-4,2,-0.5,0.5",
                       "--theta-count", 32)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == "1"
    re = [x for c in doc["curves"] for x in c["re_lambda"]]
    im = [x for c in doc["curves"] for x in c["im_lambda"]]
    assert max(abs(x) for x in im) <= 1e-10
    # raw coordinates: the free band is [0, inf)
    assert abs(min(re)) <= 1e-9 and abs(max(re) - 2.0) <= 1e-6


def test_bands_csv_file_output(tmp_path, capsys):
    prefix = tmp_path / "hill"
    code, out, _ = run(capsys, "bands", "--spec", CONFIGS / "hill.json", "--window=-2,6,-0.5,0.5",
                       "--theta-count", 32, "--format", "csv", "--out", prefix)
    assert code == 0
    assert "band curve" in out
    text = (tmp_path / "hill.csv").read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    assert rows[0][:3] == ["branch_id", "theta", "re_lambda"] or "re_lambda" in rows[0]
    assert len(rows) > 10


def test_empty_window_gives_no_curves(capsys):
    code, out, _ = run(capsys, "bands", "--spec", CONFIGS / "free.json", "--window=1,2,0.5,1")
    assert code == 0
    assert json.loads(out)["curves"] == []


def test_missing_order_is_input_error(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"periodic_coeffs": [[], []], "leading_sign": -1.0}))
    code, _, err = run(capsys, "bands", "--spec", p, "--window=-1,0,-1,1")
    assert code == 1
    assert "order" in err


def test_unknown_config_key_is_input_error(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"command": "bands", "spec_path": str(CONFIGS / "free.json"),
                               "window": "-1,0,-1,1", "bogus": 3}))
    code, _, err = run(capsys, "bands", "--config", cfg)
    assert code == 1
    assert "bogus" in err


def test_run_config_rejects_unknown_keys():
    with pytest.raises(SpecError):
        RunConfig.from_mapping({"command": "bands", "nodes": 3})


def test_bad_window_is_input_error(capsys):
    code, _, _ = run(capsys, "bands", "--spec", CONFIGS / "free.json", "--window", "1,2,3")
    assert code == 1


def test_eigs_square_well(capsys):
    code, out, _ = run(capsys, "eigs", "--spec", CONFIGS / "square_well.json",
                       "--window=-0.9,-0.1,-0.3,0.3", "--contour-nodes", 64)
    assert code == 0
    doc = json.loads(out)
    assert doc["winding"] == 1 and len(doc["roots"]) == 1
    assert abs(doc["roots"][0]["re"] + 0.4537531659) <= 1e-8


def test_eigs_zero_perturbation(capsys):
    code, out, _ = run(capsys, "eigs", "--spec", CONFIGS / "free.json", "--window=-2,-0.5,0.2,1",
                       "--contour-nodes", 32)
    assert code == 0
    doc = json.loads(out)
    assert doc["winding"] == 0 and doc["roots"] == []


def test_seed_on_spectrum_is_numerical_failure(capsys):
    code, _, err = run(capsys, "eigs", "--spec", CONFIGS / "poschl_teller.json",
                       "--window=-2,-0.5,-0.5,0.5", "--seed", "1+0j")
    assert code == 2
    assert "enlarg" in err


def test_oracle_poschl_teller(capsys):
    code, out, _ = run(capsys, "oracle", "--spec", CONFIGS / "poschl_teller.json",
                       "--window=-2,-0.5,-0.5,0.5")
    assert code == 0
    ev = json.loads(out)["eigenvalues"]
    assert len(ev) == 1 and abs(ev[0]["re"] + 1) <= 1e-5


def test_resolve_returns_samples(capsys):
    code, out, _ = run(capsys, "resolve", "--spec", CONFIGS / "free.json", "--lambda", "2+1j")
    assert code == 0
    doc = json.loads(out)
    assert len(doc["re"]) == len(doc["im"]) > 0


def test_compare_matches_oracle(capsys):
    code, out, _ = run(capsys, "compare", "--spec", CONFIGS / "poschl_teller.json",
                       "--window=-2,-0.5,-0.5,0.5", "--contour-nodes", 64)
    assert code == 0
    doc = json.loads(out)
    assert [p["matched"] for p in doc["pairs"]] == [True]
    assert doc["max_matched_distance"] <= 1e-3


def test_pair_roots_reports_unmatched():
    rows = pair_roots([1.0 + 0j, 5.0 + 0j], [1.0001 + 0j])
    matched = [r for r in rows if r[3]]
    assert len(matched) == 1 and abs(matched[0][2] - 1e-4) <= 1e-12
    assert any(r[1] is None and r[0] == 5.0 for r in rows)


def test_repeated_runs_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        prefix = tmp_path / f"run{k}"
        subprocess.run([sys.executable, "-m", "floquet_spec.cli", "bands", "--spec",
                        str(CONFIGS / "hill.json"), "--window=-2,6,-0.5,0.5", "--theta-count", "32",
                        "--format", "csv", "--out", str(prefix)], check=True, capture_output=True)
        outs.append((tmp_path / f"run{k}.csv").read_bytes())
    assert outs[0] == outs[1]
