import csv
import subprocess
import sys

import pytest

from opplab.cli import dispatch


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = dispatch([*argv, "--out", str(out)])
    return code, out


def test_validate_tails_example(tmp_path):
    code, out = run(tmp_path, "validate-tails", "--scheme", "luroth", "--x", "1.5,2,5,10", "--samples", "1e6")
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["manifest.txt", "result.csv", "summary.txt"]
    rows = list(csv.reader((out / "result.csv").open()))
    assert rows[0] == ["n", "stat", "value"]
    assert ["2.0", "exact", "0.5"] in rows
    assert "overall: PASS" in (out / "summary.txt").read_text()
    manifest = (out / "manifest.txt").read_text()
    assert "arg.samples: 1000000" in manifest and "config.scheme=" in manifest


def test_weaklaw_writes_plot_table(tmp_path):
    code, out = run(tmp_path, "weaklaw", "--weights", "a=1/k,b=log^2(n)", "--ngrid", "1e2,1e3", "--reps", "20",
                    "--tolerance", "1.0")
    assert code == 0
    header = (out / "plot.csv").read_text().splitlines()[0]
    assert header == "n,median,q05,q25,q75,q95,centering,limit"


def test_failing_check_exit_code(tmp_path):
    code, _ = run(tmp_path, "weaklaw", "--weights", "a=1/k,b=log^2(n)", "--ngrid", "1e2", "--reps", "20",
                  "--tolerance", "1e-9")
    assert code == 1


@pytest.mark.parametrize("argv", [
    ["weaklaw", "--bogus", "1"],
    ["weaklaw"],
    ["weaklaw", "--weights", "a=nope,b=log^2(n)"],
    ["validate-tails", "--scheme", "engel"],
    ["validate-tails", "--samples", "1.5"],
    ["validate-cf", "--t=2"],
    ["stronglaw", "--scheme", "phi=identity", "--weights", "a=1/k,b=log^2(n)"],
    ["trunc-diagnostic", "--plan", "gamma=0.4"],
    ["validate-indep", "--scheme", "phi=identity,dist=ratioB:c=1"],
    ["frobnicate"],
])
def test_config_errors_exit_2(tmp_path, argv, capsys):
    code = dispatch(argv + ["--out", str(tmp_path / "o")])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# weak law\nweights = a=1/k,b=log^2(n)\nreps = 10\nngrid = 1e2,1e3\ntolerance=1\n")
    code, out = run(tmp_path, "weaklaw", "--config", str(cfg), "--reps", "12")
    assert code == 0
    m = (out / "manifest.txt").read_text()
    assert "arg.reps: 12" in m and "config.ngrid=100,1000" in m


def test_config_file_errors_name_the_line(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("reps = 10\n\nfoo = 1\n")
    assert dispatch(["weaklaw", "--config", str(cfg)]) == 2
    assert "bad.cfg:3" in capsys.readouterr().err
    cfg.write_text("reps 10\n")
    assert dispatch(["weaklaw", "--config", str(cfg)]) == 2


def test_simulate(tmp_path):
    code, out = run(tmp_path, "simulate", "--n", "5", "--reps", "2", "--seed", "3")
    assert code == 0
    lines = (out / "trajectories.csv").read_text().splitlines()
    assert lines[0] == "rep,step,B,Y,R,U,overflow"
    assert len(lines) == 1 + 2 * 6


@pytest.mark.parametrize("cmd", [
    ["stronglaw", "--mode", "general", "--ngrid", "1e2,1e4", "--reps", "5"],
    ["validate-indep", "--pairs", "2:3,1:1", "--samples", "1e5"],
    ["validate-cf", "--t=0.05", "--samples", "1e4"],
    ["validate-tailequiv", "--x", "2,10", "--samples", "1e5"],
    ["trunc-diagnostic", "--ngrid", "2,1e3", "--reps", "5"],
])
def test_subcommands_are_reproducible(tmp_path, cmd):
    a = dispatch(cmd + ["--out", str(tmp_path / "a"), "--seed", "11"])
    b = dispatch(cmd + ["--out", str(tmp_path / "b"), "--seed", "11"])
    assert a == b and a in (0, 1)
    assert (tmp_path / "a" / "result.csv").read_bytes() == (tmp_path / "b" / "result.csv").read_bytes()
    assert (tmp_path / "a" / "summary.txt").read_bytes() == (tmp_path / "b" / "summary.txt").read_bytes()


def test_suite_subset(tmp_path):
    code, out = run(tmp_path, "suite", "--seed", "1", "--only", "1,11")
    assert code == 0
    assert (out / "crit01-exact-sandwich" / "result.csv").exists()
    assert not (out / "crit02-mc-tails").exists()
    assert (out / "summary.txt").read_text().splitlines()[-1] == "overall: PASS"


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "opplab", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("opplab ")
