"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (collected into the terminal
summary) and asserts both the statistical checks and the runtime budget.
Run directly with ``python tests/test_acceptance.py`` for just the lines.
"""
import subprocess
import sys
import time
from pathlib import Path

import pytest

from opplab import battery

# criterion -> runtime budget in seconds
BUDGETS = {1: 1, 2: 10, 3: 10, 4: 60, 5: 90, 6: 90, 7: 120, 8: 300, 9: 180, 10: 30, 11: 30}
SUITE_BUDGET = 15 * 60
SEED = 1


def _line(number, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"


def evaluate(number):
    res = battery.run_criterion(number, SEED)
    failed = [c for c in res.checks if not c.passed]
    in_budget = res.wall_time < BUDGETS[number]
    ok = res.passed and in_budget
    detail = f"{res.name} ({len(res.checks) - len(failed)}/{len(res.checks)} checks, " \
             f"{res.wall_time:.2f} s of {BUDGETS[number]} s)"
    if failed:
        detail += "; failed: " + "; ".join(f"{c.name}: {c.detail}" for c in failed)
    return ok, detail, res


@pytest.mark.parametrize("number", sorted(BUDGETS))
def test_criterion(number, acceptance_report):
    ok, detail, res = evaluate(number)
    line = _line(number, ok, detail)
    print(line)
    acceptance_report.append(line)
    assert res.passed, detail
    assert res.wall_time < BUDGETS[number], detail


def test_criterion_12_reproducible_suite(tmp_path, acceptance_report):
    outs = []
    elapsed = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        t0 = time.perf_counter()
        subprocess.run([sys.executable, "-m", "opplab", "suite", "--seed", str(SEED), "--out", str(out)],
                       capture_output=True, text=True, check=False)
        elapsed.append(time.perf_counter() - t0)
        outs.append(out)
    a_files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
    b_files = sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*.csv"))
    same = bool(a_files) and a_files == b_files and all(
        (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in a_files)
    fast = max(elapsed) < SUITE_BUDGET
    line = _line(12, same and fast, f"suite --seed {SEED} twice: {len(a_files)} CSV files byte-identical={same}, "
                                    f"runtimes {elapsed[0]:.1f} s / {elapsed[1]:.1f} s (budget {SUITE_BUDGET} s)")
    print(line)
    acceptance_report.append(line)
    assert same
    assert fast


if __name__ == "__main__":
    for n in sorted(BUDGETS):
        print(_line(n, *evaluate(n)[:2]), flush=True)
