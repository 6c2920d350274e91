import json

import numpy as np
import pytest

from mdcms import cli
from mdcms.model import AuxModel, DistortionSpec, joint_from_tensor, model_document


def bsc(a):
    return np.array([[1 - a, a], [a, 1 - a]])


@pytest.fixture
def model_file(tmp_path):
    t = np.einsum("x,xv,xa->xva", [0.5, 0.5], bsc(0.25), bsc(0.1))
    m = AuxModel.build(2, "ZB", joint_from_tensor(["X", "V_12", "U_1"], t), {(1, 2): "V_12"}, {1: "U_1"})
    p = tmp_path / "model.json"
    p.write_text(json.dumps(model_document(m, DistortionSpec.hamming([{1}, {2}, {1, 2}]))))
    return p


def test_rd_prints_twelve_digits(capsys):
    assert cli.main(["rd", "--D", "0.25"]) == 0
    assert capsys.readouterr().out == "0.188721875541\n"


def test_rd_curve_csv(tmp_path):
    out = tmp_path / "rd.csv"
    assert cli.main(["rd", "--grid", "0.1:0.3:0.1", "--out", str(out)]) == 0
    raw = out.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "D,R" and len(lines) == 4
    assert lines[1] == "0.1,0.531004406"
    manifest = json.loads((tmp_path / "rd.csv.manifest.json").read_text())
    assert manifest["subcommand"] == "rd" and str(out) in manifest["outputs"]


def test_eval_writes_json(tmp_path, model_file):
    out = tmp_path / "eval.json"
    assert cli.main(["eval", "--model", str(model_file), "--weights", "1,1", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["scheme"] == "ZB" and len(doc["rates"]) == 2
    assert doc["distortions"]["2"] == pytest.approx(0.25)
    assert cli.main(["eval", "--model", str(model_file), "--rates", "5,5", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["inside"] is True
    assert cli.main(["eval", "--model", str(model_file), "--rates", "0,0", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["inside"] is False


def test_decoders_and_lattice(tmp_path, model_file, capsys):
    out = tmp_path / "dec.json"
    assert cli.main(["decoders", "--model", str(model_file), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["1"]["distortion"] == pytest.approx(0.1)
    assert cli.main(["lattice", "--L", "3"]) == 0
    text = capsys.readouterr().out
    assert "tier 2: 12 13 23" in text and "J(3): 13 23 123" in text


@pytest.mark.parametrize(
    "argv",
    [
        ["rd"],
        ["rd", "--D", "0.1", "--grid", "0.1:0.2:0.1"],
        ["separation", "zb"],
        ["cross-section", "ec", "--D", "0.1", "--seed", "-1"],
        ["lattice", "--L", "0"],
        ["bogus"],
    ],
)
def test_usage_errors_exit_2(argv):
    assert cli.main(argv) == 2


def test_bad_inputs_exit_1(tmp_path, model_file):
    bad = tmp_path / "bad.json"
    bad.write_text('{"L": 2}')
    assert cli.main(["eval", "--model", str(bad)]) == 1
    assert cli.main(["eval", "--model", str(tmp_path / "missing.json")]) == 1
    assert cli.main(["rd", "--D", "-0.1"]) == 1
    assert cli.main(["eval", "--model", str(model_file), "--weights", "0,0"]) == 1


def test_separation_outputs_are_reproducible(tmp_path):
    args = ["separation", "zb", "--seed", "3", "--restarts", "4", "--max-iters", "20", "--ec-grid-step", "0", "--grid", "0.1:0.2:0.1"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main([*args, "--jobs", "1", "--out", str(a), "--csv", str(tmp_path / "scan.csv")]) == 0
    assert cli.main([*args, "--jobs", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["gap"] == pytest.approx(doc["value_ec"] - doc["value_cms_or_zb"], abs=1e-10)
    assert (tmp_path / "scan.csv").read_text().splitlines()[0] == "D,value_ec,value_zb,gap"
    assert (tmp_path / "a.json.manifest.json").exists()


def test_sim_command(tmp_path, model_file):
    out = tmp_path / "sim.json"
    argv = ["sim", "--model", str(model_file), "--seed", "1", "--n", "6", "--trials", "10", "--jobs", "1"]
    assert cli.main([*argv, "--out", str(out), "--csv", str(tmp_path / "t.csv")]) == 0
    doc = json.loads(out.read_text())
    assert doc["trials"] == 10 and "allocation" in doc
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "trial,success,D_1,D_2,D_12" and len(lines) == 11
