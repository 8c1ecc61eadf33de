import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from obsv.cli import main

ROOT = Path(__file__).resolve().parents[1] / "scenarios"


def run(*args):
    return main([str(a) for a in args])


def test_check_pairs_exit_codes(tmp_path):
    assert run("check-pairs", "--scenario", ROOT / "sys2d.json", "--out", tmp_path / "a") == 0
    assert run("check-pairs", "--scenario", ROOT / "b0.json", "--out", tmp_path / "b") == 1
    assert run("check-pairs", "--scenario", ROOT / "malformed.json", "--out", tmp_path / "c") == 2
    rep = json.loads((tmp_path / "b" / "check_pairs.json").read_text())
    assert rep["C,A"]["observable"] and not rep["C,B"]["observable"]
    assert not (tmp_path / "c").exists()


def test_usage_errors(tmp_path, capsys):
    assert run("check-pairs") == 2
    assert run("no-such-command") == 2
    assert run("check-pairs", "--scenario", ROOT / "sys2d.json", "--seed", "-1") == 2
    assert run("simulate", "--scenario", ROOT / "sys2d.json", "--out", tmp_path, "--delta", tmp_path / "nope") == 2


def test_scan_singular_writes_certificate(tmp_path):
    assert run("scan-singular", "--scenario", ROOT / "sys2d.json", "--out", tmp_path) == 0
    lines = (tmp_path / "singular_inputs.csv").read_text().splitlines()
    assert lines[0] == "u,sigma_min,gramian_lambda_min,gramian_tol_obs"
    assert len(lines) == 2
    assert float(lines[1].split(",")[0]) == pytest.approx(-1.0, abs=1e-8)


def test_scan_singular_nilpotent(tmp_path):
    assert run("scan-singular", "--scenario", ROOT / "nilpotent.json", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "singular_inputs.json").read_text())
    assert [round(s["u"], 8) for s in rep["singular_inputs"]] == [0.0]


def test_verify_identities(tmp_path):
    assert run("verify-identities", "--random", 2, 3, 0, "--out", tmp_path / "ok") == 0
    assert run("verify-identities", "--random", 2, 3, 0, "--out", tmp_path / "bad", "--inject-fault") == 1
    assert run("verify-identities", "--random", 2, 13, 0, "--out", tmp_path / "cap") == 2
    rep = json.loads((tmp_path / "bad" / "identities.json").read_text())
    assert not rep["passed"]


def test_inject_fault_is_hidden(capsys):
    with pytest.raises(SystemExit):
        main(["verify-identities", "--help"])
    assert "inject" not in capsys.readouterr().out


def test_simulate_with_and_without_delta(tmp_path):
    sc = ROOT / "flagship.json"
    assert run("search-delta", "--scenario", sc, "--out", tmp_path / "s") == 0
    assert run("simulate", "--scenario", sc, "--out", tmp_path / "plain") == 1
    assert run("simulate", "--scenario", sc, "--out", tmp_path / "pert", "--delta", tmp_path / "s" / "delta.json") == 0
    summary = (tmp_path / "pert" / "summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 7
    assert len(list((tmp_path / "pert").glob("trajectory_*.csv"))) == 7


def test_search_delta_matches_recorded_outcome(tmp_path):
    sc = json.loads((ROOT / "flagship.json").read_text())
    assert run("search-delta", "--scenario", ROOT / "flagship.json", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "search.json").read_text())
    rec = sc["search"]["record"]
    assert rep["tried"] == rec["candidates_tried"]
    assert rep["margin"] == pytest.approx(rec["margin"], rel=1e-6)
    assert rep["vanishes_on_ball"] and rep["norm_below_eta"]


def test_search_delta_exhaustion_exit(tmp_path):
    d = json.loads((ROOT / "flagship.json").read_text())
    d["search"]["budget"] = 1
    d.pop("output_dir")
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(d))
    assert run("search-delta", "--scenario", p, "--out", tmp_path / "tiny") == 1
    assert (tmp_path / "tiny" / "delta.json").exists()


def test_bounds(tmp_path):
    assert run("bounds", "--scenario", ROOT / "sys2d.json", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "bounds.json").read_text())
    assert rep["R"] > 0 and rep["eta1"] > 0
    assert rep["eta0"] == pytest.approx(5 ** -0.5, abs=1e-9)


def test_bounds_negative_when_drift_unobservable(tmp_path):
    d = json.loads((ROOT / "sys2d.json").read_text())
    d["system"]["A"] = [[1, 0], [0, 2]]
    p = tmp_path / "diag.json"
    p.write_text(json.dumps(d))
    assert run("bounds", "--scenario", p, "--out", tmp_path / "o") == 1


def _snapshot(root):
    return {p: p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


COMMANDS = ["check-pairs", "scan-singular", "simulate", "verify-identities", "search-delta", "bounds"]


@pytest.mark.parametrize("command", COMMANDS)
def test_byte_identical_reruns(tmp_path, command, capsys):
    outs = []
    for tag in ("one", "two"):
        run(command, "--scenario", ROOT / "flagship.json", "--out", tmp_path / tag, "--seed", "7")
        outs.append(capsys.readouterr().out)
    a, b = _snapshot(tmp_path / "one"), _snapshot(tmp_path / "two")
    assert a and [p.name for p in a] == [p.name for p in b]
    assert list(a.values()) == list(b.values())
    assert outs[0] == outs[1]


def test_writes_only_inside_output_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    before = set(Path(tmp_path).rglob("*"))
    run("simulate", "--scenario", ROOT / "sys2d.json", "--out", "results")
    new = set(Path(tmp_path).rglob("*")) - before
    assert new and all(p == tmp_path / "results" or (tmp_path / "results") in p.parents for p in new)


def test_module_entry_point(tmp_path):
    env = dict(os.environ, OBSV_THREADS="2")
    proc = subprocess.run([sys.executable, "-m", "obsv", "check-pairs", "--scenario", str(ROOT / "b0.json"),
                           "--out", str(tmp_path)], capture_output=True, text=True, env=env)
    assert proc.returncode == 1
    assert "(C,B)" in proc.stdout
