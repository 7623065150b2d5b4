import csv
import json
import os
import subprocess
import sys

import pytest

from rydcount.cli import main
from rydcount.instance import BlockadeGraph, parse_cnf


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def test_gen_json_and_dimacs(tmp_path, capsys):
    assert main(["gen", "grid", "3", "3", "--out", str(tmp_path / "g.json")]) == 0
    g = BlockadeGraph.from_json((tmp_path / "g.json").read_text())
    assert (g.n, g.m) == (9, 12)
    assert main(["gen", "punched", "3", "3", "--holes", "4", "--format", "dimacs"]) == 0
    ring = parse_cnf(capsys.readouterr().out)
    assert (ring.n, ring.m) == (8, 8)
    assert main(["gen", "chain", "3", "4"]) == 2


def test_count_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["count", "--chains", "5", "6", "--protocol", "pff", "--seed", "1", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "count.csv").open()))
    assert [r["instance"] for r in rows] == ["chain_5", "chain_6"]
    assert [int(r["exact"]) for r in rows] == [13, 21]
    assert rows[0]["n_samp"] == "625"
    rec = json.loads((out / "count.json").read_text())
    assert rec["command"] == "count" and rec["seed"] == 1
    assert rec["config"]["protocol"] == "pff"
    assert len(rec["instances"][0]["digest"]) == 64
    assert not (out / "count.timing.json").exists()


def test_count_repeats_and_oracle(tmp_path):
    out = tmp_path / "o"
    assert main(["count", "--chains", "8", "8", "--protocol", "oracle", "--n-samp", "2000",
                 "--repeats", "3", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "count.csv").open()))
    assert [r["seed"] for r in rows] == ["0", "1", "2"]
    assert all(float(r["rel_error"]) < 0.2 for r in rows)


def test_count_from_instance_file(tmp_path):
    path = tmp_path / "sq.cnf"
    assert main(["gen", "grid", "2", "2", "--format", "dimacs", "--out", str(path)]) == 0
    out = tmp_path / "o"
    assert main(["count", str(path), "--protocol", "oracle", "--out", str(out)]) == 0
    row = next(csv.DictReader((out / "count.csv").open()))
    assert row["instance"] == "sq" and row["exact"] == "7"


def test_sample_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["sample", "--chains", "6", "6", "--protocol", "fi", "--n-samp", "500",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "distribution.csv").open()))
    assert len(rows) == 21
    assert sum(int(r["count"]) for r in rows) == 500
    assert sum(float(r["exact"]) for r in rows) == pytest.approx(1.0)
    rep = json.loads((out / "sample.json").read_text())["outputs"]["reports"][0]
    assert rep["eta_exact"] > 0
    assert main(["sample", "--chains", "4", "4", "--protocol", "oracle", "--out", str(out)]) == 0


def test_eta_and_survival(tmp_path):
    out = tmp_path / "o"
    assert main(["eta", "--chains", "6", "7", "--protocol", "ff", "--ks", "1", "5",
                 "--trajectories", "2", "--n-times", "50", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "eta.csv").open()))
    assert [(r["protocol"], r["k"]) for r in rows[:3]] == [("fi", ""), ("ff", "1"), ("ff", "5")]
    assert main(["survival", "--chains", "4", "6", "--n-times", "50", "--grid-points", "50",
                 "--out", str(out)]) == 0
    assert (out / "sp_chain_5.csv").read_text().startswith("t,sp\n")
    rec = json.loads((out / "survival.json").read_text())
    assert set(rec["outputs"]["fits"]) == {"survival", "thermal"}
    assert json.loads((out / "sp_chain_5.json").read_text())["hamiltonian"] == "pxp"


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cnf"
    bad.write_text("p cnf 2 1\n1 -2 0\n")
    assert main(["count", str(bad), "--out", str(tmp_path)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["count", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert main(["count", "--out", str(tmp_path)]) == 2
    assert main(["sample", "--chains", "12", "12", "--max-basis", "100", "--out", str(tmp_path)]) == 3
    assert "cap" in capsys.readouterr().err
    assert main(["sample", "--chains", "3", "3", "--t-min", "5", "--t-max", "1", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["count", "--protocol", "nope"])
    assert exc.value.code == 2


def test_max_basis_env(tmp_path, monkeypatch):
    monkeypatch.setenv("RYDCOUNT_MAX_BASIS", "50")
    assert main(["sample", "--chains", "10", "10", "--out", str(tmp_path)]) == 3


def test_config_precedence(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"protocol": "oracle", "n_samp": 300, "seed": 5}))
    out = tmp_path / "o"
    assert main(["count", "--chains", "4", "4", "--config", str(conf), "--seed", "9", "--out", str(out)]) == 0
    rec = json.loads((out / "count.json").read_text())
    assert rec["config"]["protocol"] == "oracle"
    assert rec["config"]["n_samp"] == 300
    assert rec["seed"] == 9
    conf.write_text(json.dumps({"bogus": 1}))
    assert main(["count", "--chains", "4", "4", "--config", str(conf), "--out", str(out)]) == 2


@pytest.mark.parametrize("argv", [
    ["count", "--chains", "6", "7", "--protocol", "pff", "--plot", "--repeats", "2"],
    ["sample", "--chains", "6", "6", "--protocol", "ff", "--n-samp", "200", "--plot"],
    ["eta", "--chains", "6", "7", "--protocol", "pff", "--ks", "1", "3", "--trajectories", "2", "--plot"],
    ["survival", "--chains", "5", "7", "--grid-points", "60", "--plot"],
])
def test_determinism(tmp_path, argv):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--seed", "3", "--out", str(a)]) == 0
    assert main(argv + ["--seed", "3", "--out", str(b)]) == 0
    fa, fb = files(a), files(b)
    assert fa.keys() == fb.keys()
    assert any(name.endswith(".png") for name in fa)
    for name in fa:
        assert fa[name] == fb[name], name


def test_timings_sidecar(tmp_path):
    assert main(["count", "--chains", "3", "3", "--protocol", "oracle", "--timings",
                 "--out", str(tmp_path)]) == 0
    assert "wall_seconds" in json.loads((tmp_path / "count.timing.json").read_text())


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "rydcount.cli", "gen", "chain", "3"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["n"] == 3


def test_max_basis_flag_does_not_leak(tmp_path, monkeypatch):
    monkeypatch.delenv("RYDCOUNT_MAX_BASIS", raising=False)
    assert main(["sample", "--chains", "3", "3", "--max-basis", "100", "--out", str(tmp_path)]) == 0
    assert "RYDCOUNT_MAX_BASIS" not in os.environ
