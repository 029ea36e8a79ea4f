import csv
import io
import json

import pytest

from kinvsl import cli

SPEC_39 = {"interval": [0, 1], "p": "mu*x^2", "q": "0", "r": "1", "params": {"mu": 1.0, "c": 1.0},
           "singular": [0], "K": {"A": "(1+c)^(1/2)", "phi": "(1+c)*x/(1+c*x)", "phi_inv": "x/(1+c-c*x)"}}


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _write(tmp_path, data, name="spec.json"):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(path)


def test_verify_exit_codes(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", _write(tmp_path, SPEC_39))
    assert code == cli.EXIT_OK and json.loads(out)["passed"]
    bad = dict(SPEC_39, p="mu*x^2*(1+x/10)")
    code, out, _ = run(capsys, "verify", _write(tmp_path, bad, "bad.json"))
    assert code == cli.EXIT_FAIL and "res_p" in json.loads(out)["failed"]


def test_input_errors(capsys, tmp_path):
    code, _, err = run(capsys, "verify", str(tmp_path / "missing.json"))
    assert code == cli.EXIT_INPUT and "input error" in err
    half = dict(SPEC_39, interval=[0, "inf"], singular=[])
    assert run(capsys, "verify", _write(tmp_path, half, "half.json"))[0] == cli.EXIT_INPUT
    assert run(capsys, "verify", _write(tmp_path, dict(SPEC_39, p="mu*x^^2"), "p.json"))[0] == cli.EXIT_INPUT
    assert run(capsys, "verify", _write(tmp_path, dict(SPEC_39, q="zz*x"), "u.json"))[0] == cli.EXIT_INPUT
    assert run(capsys, "verify", _write(tmp_path, "{not json", "j.json"))[0] == cli.EXIT_INPUT
    assert run(capsys, "verify", "example_3_9", "--param", "mu")[0] == cli.EXIT_INPUT
    assert run(capsys, "gallery", "run", "example_3_9", "--bogus", "1")[0] == cli.EXIT_INPUT


def test_classify_output_is_deterministic(capsys):
    first = run(capsys, "classify", "example_3_9")
    second = run(capsys, "classify", "example_3_9")
    assert first[0] == 0 and first[1] == second[1]
    rep = json.loads(first[1])
    assert rep["endpoints"]["a"]["class"] == "LimitPoint"
    assert rep["endpoints"]["b"]["class"] == "Regular"


def test_gallery_list_and_runs(capsys):
    code, out, _ = run(capsys, "gallery", "list")
    ids = [row["id"] for row in json.loads(out)]
    assert code == 0 and len(ids) >= 8
    code, out, _ = run(capsys, "gallery", "run", "remark_3_6_power", "--n", "3")
    assert code == 0 and json.loads(out)["params"]["n"] == 3.0
    code, out, _ = run(capsys, "gallery", "run", "example_3_14")
    assert code == 0 and json.loads(out)["block"]["count"] == 4


def test_spectrum_csv(capsys, tmp_path):
    dest = tmp_path / "eig.csv"
    code, _, _ = run(capsys, "spectrum", "example_3_9", "--N", "200", "--N", "400",
                     "--bc", "dirichlet", "--count", "2", "--out", str(dest))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(dest.read_text())))
    assert len(rows) == 4
    assert all(float(r["residual"]) <= 1e-10 for r in rows)


def test_transform_reports_lg_pair(capsys):
    code, out, _ = run(capsys, "transform", "example_3_9", "--anchor", "1", "--orientation", "-1",
                       "--points", "50")
    rep = json.loads(out)
    assert code == 0 and rep["cal_B"] == "inf"
    assert max(rep["transformed_residuals"].values()) <= 1e-8


def test_abstract_lab_defect_one(capsys):
    code, out, _ = run(capsys, "abstract-lab", "--zeta", "2")
    assert code == 0 and json.loads(out)["admissible_b"] == [0]
    code, out, _ = run(capsys, "abstract-lab", "--zeta", "1j")
    rep = json.loads(out)
    assert code == 0 and len(rep["admissible_b"]) == len(rep["candidates"])


def test_schroeder_finds_attracting_end(capsys):
    code, out, _ = run(capsys, "schroeder", "example_3_9")
    fps = json.loads(out)["fixed_points"]
    assert code == 0
    assert [fp["attracting"] for fp in fps] == [False, True]
