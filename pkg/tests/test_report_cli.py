import json
from fractions import Fraction as F

import numpy as np
import pytest

from heisfinner.cli import main
from heisfinner.report import Report, RunManifest, config_hash, exact, flatten, tag, to_csv
from heisfinner.voxels import VoxelSet, save_vxl


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_tag_provenance():
    d = tag({"a": F(1, 3), "b": 0.5, "c": [2, True, None]}, "grid(h=0.1)")
    assert d["a"] == {"num": 1, "den": 3, "provenance": "exact"}
    assert d["b"] == {"value": 0.5, "provenance": "grid(h=0.1)"}
    assert d["c"][0]["num"] == 2 and d["c"][1] is True and d["c"][2] is None
    assert tag(d, "other") == d
    assert tag(float("nan"), "x")["value"] == "nan"


def test_report_json_is_deterministic():
    rep = Report(RunManifest(["x"], config_hash({"a": 1})), {"b": 1, "a": exact(2)}, {"ok": True})
    assert rep.to_json() == rep.to_json()
    assert list(json.loads(rep.to_json())["result"]) == ["a", "b"]
    assert "timing_s" not in rep.to_json()


def test_csv_helpers():
    assert to_csv([["a", exact(F(1, 2))], [1, {"value": 0.25, "provenance": "x"}]]) == "a,1/2\n1,0.25\n"
    assert flatten({"x": {"y": 1}, "z": [1, 2]}) == [("x.y", 1), ("z", [1, 2])]


def test_solve_exact_output(capsys):
    code, out, _ = run(capsys, "solve", "--config", "ex2_4")
    assert code == 0
    doc = json.loads(out)
    assert [v["num"] for v in doc["result"]["vertices"][0]] == [5, 5, 5, 10, 15]
    assert all(v["den"] == 31 and v["provenance"] == "exact" for v in doc["result"]["vertices"][0])


def test_runs_are_byte_identical(capsys):
    a = run(capsys, "example", "A2", "--sweep", "4,8")[1]
    b = run(capsys, "example", "A2", "--sweep", "4,8")[1]
    assert a == b


def test_timing_is_opt_in(capsys):
    _, out, _ = run(capsys, "solve", "--config", "ex2_2", "--timing")
    assert "timing_s" in json.loads(out)["manifest"]


def test_config_file_and_csv(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 2, "m": 2, "subspaces": [[2], [1], []]}))
    code, out, _ = run(capsys, "analyze", "--config", str(cfg), "--format", "csv")
    assert code == 0
    assert out.splitlines()[-1] == "weight,3/7,3/7,"


def test_failed_invariant_exits_1(capsys):
    code, _, err = run(capsys, "analyze", "--config", "ex2_2", "--p", "1/2,1/2,1/2")
    assert code == 1 and "invariant failed" in err


def test_usage_errors_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 2,\n "m": }')
    code, _, err = run(capsys, "solve", "--config", str(bad))
    assert code == 2 and "line 2" in err
    assert run(capsys, "solve", "--config", "nope")[0] == 2
    assert run(capsys, "analyze", "--config", "ex2_2", "--p", "a,b")[0] == 2
    assert run(capsys, "bogus")[0] == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["verify-finner", "--exhaustive"],
        ["verify-finner", "--family", "holder", "--grid", "3", "--trials", "50"],
        ["verify-rwt"],
        ["example", "ex2_3"],
        ["jacobian-check", "--trials", "10"],
        ["paraball", "report", "--r", "2", "--rho", "4", "--h", "0.0625"],
        ["paraball", "scale", "--config", "ex2_4", "--r", "1,2,3,4", "--rho", "5", "--lam", "2,1/3,5/7,3", "--a", "6/5"],
        ["paraball", "cover", "--delta", "1"],
        ["classify", "--rho", "8"],
    ],
)
def test_subcommands_pass(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    assert json.loads(out)["invariants"]


def test_classify_voxel_file(capsys, tmp_path):
    p = tmp_path / "s.vxl"
    save_vxl(VoxelSet.box(np.zeros(3), np.ones(3), 1 / 8), str(p))
    code, out, _ = run(capsys, "classify", "--input", str(p))
    assert code == 0 and json.loads(out)["result"]["cells"]["num"] == 512


def test_overlap_requires_other(capsys):
    assert run(capsys, "paraball", "overlap")[0] == 2
    other = json.dumps({"z": [0, 0, 0], "frame_blocks": [[1]], "r": [8], "rho": 4})
    code, out, _ = run(capsys, "paraball", "overlap", "--r", "2", "--rho", "4", "--other", other)
    assert code == 0 and 0 < json.loads(out)["result"]["overlap"][0]["value"] < 1


def test_output_file(capsys, tmp_path):
    dest = tmp_path / "r.json"
    assert run(capsys, "solve", "--config", "ex2_3", "--output", str(dest))[0] == 0
    assert json.loads(dest.read_text())["result"]["singleton"] is True
