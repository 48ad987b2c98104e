import io
import math

import numpy as np
import pytest

from opplab.analytic import parse_plan, parse_weights
from opplab.errors import ConfigError
from opplab.expansion import luroth, parse_scheme
from opplab.experiments import (ExperimentConfig, Mode, map_replications, run_strong_law, run_weak_law,
                                summarize, trunc_diagnostic, validate_cf, validate_independence,
                                validate_tailequiv, validate_tails, wilson_interval)

W2 = parse_weights("a=log^0(k)/k,b=log^2(n)", luroth().dist)


def weak_cfg(**kw):
    base = dict(scheme=luroth(), mode=Mode.WEAK_LAW, weights=W2, n_grid=(100, 1000), replications=40, base_seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def csv_bytes(res):
    buf = io.StringIO()
    res.write_csv(buf)
    return buf.getvalue()


def test_config_invariants():
    with pytest.raises(ConfigError):
        weak_cfg(n_grid=(100, 100))
    with pytest.raises(ConfigError):
        weak_cfg(n_grid=())
    with pytest.raises(ConfigError):
        weak_cfg(replications=0)
    with pytest.raises(ConfigError):
        weak_cfg(epsilons=(0.1, -0.1))
    assert weak_cfg().config_hash() == weak_cfg().config_hash()
    assert weak_cfg().config_hash() != weak_cfg(base_seed=4).config_hash()


def test_weak_law_reproducible_and_order_independent():
    a = run_weak_law(weak_cfg())
    b = run_weak_law(weak_cfg())
    c = run_weak_law(weak_cfg(), order=list(range(39, -1, -1)))
    assert csv_bytes(a) == csv_bytes(b) == csv_bytes(c)


def test_thread_count_does_not_change_results(monkeypatch):
    monkeypatch.setenv("OPPLAB_THREADS", "1")
    a = run_weak_law(weak_cfg())
    monkeypatch.setenv("OPPLAB_THREADS", "4")
    b = run_weak_law(weak_cfg())
    assert csv_bytes(a) == csv_bytes(b)
    monkeypatch.setenv("OPPLAB_THREADS", "many")
    with pytest.raises(ConfigError):
        run_weak_law(weak_cfg())


def test_map_replications_rejects_bad_order():
    with pytest.raises(ValueError):
        map_replications(lambda r: r, 3, [0, 1, 1])


def test_weak_law_records():
    res = run_weak_law(weak_cfg(epsilons=(0.05, 0.1, 0.2, 0.5)))
    for n in (100, 1000):
        q = [res.value(n, s) for s in ("q05", "q25", "median", "q75", "q95")]
        assert q == sorted(q)
        for kind in ("centering", "limit"):
            ex = [res.value(n, f"exceed_{kind}[{e!r}]") for e in (0.05, 0.1, 0.2, 0.5)]
            assert all(0 <= v <= 1 for v in ex)
            assert all(b <= a for a, b in zip(ex, ex[1:]))
        assert res.value(n, "limit") == 0.5
    assert res.data.shape == (40, 2)


def test_weak_law_single_term():
    w = parse_weights("a=const:0.5,b=n^1", luroth().dist)
    res = run_weak_law(ExperimentConfig(luroth(), Mode.WEAK_LAW, w, (1,), 1, 0))
    w1 = res.data[0, 0]
    assert res.value(1, "median") == w1 >= 0.5
    # W_1 = a_1 R_1 / b_1 with R_1 an integer for the Lüroth scheme
    assert (2 * w1) == int(2 * w1)


def test_weak_law_rejects_large_weights():
    w = parse_weights("a=const:1,b=n^1", luroth().dist)
    with pytest.raises(ConfigError):
        run_weak_law(ExperimentConfig(luroth(), Mode.WEAK_LAW, w, (100,), 2, 0))
    with pytest.raises(ConfigError):
        run_weak_law(weak_cfg(mode=Mode.TAIL))


def test_strong_law_guards():
    with pytest.raises(ConfigError):
        run_strong_law(ExperimentConfig(parse_scheme("phi=identity"), Mode.STRONG_EXACT, W2, (100,), 2))
    with pytest.raises(ConfigError):
        run_strong_law(ExperimentConfig(parse_scheme("dist=power:alpha=0.5"), Mode.STRONG_EXACT, W2, (100,), 2))
    with pytest.raises(ConfigError):
        run_strong_law(ExperimentConfig(luroth(), Mode.STRONG_GENERAL, None, (100,), 2, plan=parse_plan("gamma=0.9")))
    # exploratory mode runs but asserts nothing
    res = run_strong_law(ExperimentConfig(parse_scheme("phi=identity"), Mode.STRONG_EXACT, W2, (10, 100), 2,
                                          exploratory=True))
    assert res.checks == [] and res.passed


def test_strong_law_trajectories_are_prefix_consistent():
    cfg = ExperimentConfig(luroth(), Mode.STRONG_EXACT, W2, (10, 100, 1000), 3, 5)
    res = run_strong_law(cfg)
    cfg1 = ExperimentConfig(luroth(), Mode.STRONG_EXACT, W2, (1000,), 3, 5)
    res1 = run_strong_law(cfg1)
    np.testing.assert_array_equal(res.data[:, -1], res1.data[:, 0])


def test_strong_law_general_small():
    cfg = ExperimentConfig(luroth(), Mode.STRONG_GENERAL, None, (10**3, 10**5), 10, 1, plan=parse_plan("gamma=1.2"),
                           tolerance=0.01, min_fraction=0.9)
    res = run_strong_law(cfg)
    assert res.passed
    assert len(res.series("traj[0]")) == 2


def test_validate_tails_examples():
    res = validate_tails(ExperimentConfig(luroth(), Mode.TAIL, replications=10**5, base_seed=2), [1, 2])
    assert res.passed
    assert res.value(1, "p_hat") == 1.0
    assert res.value(2, "exact") == 0.5
    res = validate_tails(ExperimentConfig(parse_scheme("dist=ratioA:c=1"), Mode.TAIL, replications=10**5), [3])
    assert res.value(3, "lower") == pytest.approx(1 / 3)
    assert res.value(3, "upper") == pytest.approx(1 / 2)
    assert res.passed


def test_validate_tails_interval_is_discriminating():
    # at N = 10^5 the Wilson interval separates the true tail 1/2 from 0.45
    cfg = ExperimentConfig(luroth(), Mode.TAIL, replications=10**5)
    res = validate_tails(cfg, [2])
    p = res.value(2, "p_hat")
    lo, hi = wilson_interval(int(round(p * 10**5)), 10**5)
    assert lo <= 0.5 <= hi
    assert not (lo <= 0.45 <= hi)


def test_wilson_interval_contains_p_hat():
    for k, n in [(0, 10), (5, 10), (10, 10), (500, 10**6)]:
        lo, hi = wilson_interval(k, n)
        assert 0 <= lo <= k / n <= hi <= 1


def test_validate_independence():
    res = validate_independence(ExperimentConfig(luroth(), Mode.INDEP, replications=2 * 10**5, base_seed=1),
                                [(2, 3), (1, 1)])
    assert res.passed
    assert res.value("1:1", "joint") == 1.0
    assert res.value("2:3", "exact_product") == pytest.approx(1 / 6)
    res = validate_independence(ExperimentConfig(parse_scheme("phi=identity"), Mode.INDEP, replications=10**5),
                                [(2, 2)])
    assert res.value("2:2", "dependence_bound") == pytest.approx(0.25)
    assert res.passed
    with pytest.raises(ConfigError):
        validate_independence(ExperimentConfig(parse_scheme("phi=identity,dist=ratioB:c=1"), Mode.INDEP,
                                               replications=10), [(2, 2)])


def test_validate_cf():
    res = validate_cf(ExperimentConfig(luroth(), Mode.CF), [0.0], 1000)
    assert res.value("0", "distance") == pytest.approx(0.0, abs=1e-15)
    res = validate_cf(ExperimentConfig(luroth(), Mode.CF), [0.05, -0.03], 10**5)
    assert res.passed and res.value("0.05,-0.03", "bound") == pytest.approx(0.08)
    for bad in ([2.0], [0.1] * 9, []):
        with pytest.raises(ConfigError):
            validate_cf(ExperimentConfig(luroth(), Mode.CF), bad, 10)


def test_validate_tailequiv():
    res = validate_tailequiv(ExperimentConfig(luroth(), Mode.TAIL_EQUIV, replications=10**5), [100.5, 2, 10])
    assert res.passed
    assert res.value(100.5, "exact_ratio") == pytest.approx(100.5 / 101)


def test_trunc_diagnostic():
    plan = parse_plan("trunc.b=2,gamma=0.75")
    cfg = ExperimentConfig(luroth(), Mode.TRUNC, n_grid=(2, 100, 10**4), replications=10, plan=plan, tolerance=0.05)
    res = trunc_diagnostic(cfg)
    assert math.isfinite(res.value(2, "median"))
    assert res.passed
    with pytest.raises(ConfigError):
        trunc_diagnostic(ExperimentConfig(luroth(), Mode.TRUNC, plan=parse_plan("gamma=0.4")))
    with pytest.raises(ConfigError):
        trunc_diagnostic(ExperimentConfig(parse_scheme("phi=identity"), Mode.TRUNC, plan=plan))


def test_trunc_diagnostic_centering_is_unbiased():
    # the mean of the centered sum over many replications is near 0 at small n
    plan = parse_plan("trunc.b=2,gamma=0.75")
    cfg = ExperimentConfig(luroth(), Mode.TRUNC, n_grid=(50,), replications=2000, plan=plan, tolerance=1.0)
    v = trunc_diagnostic(cfg).data[:, 0]
    assert abs(v.mean()) <= 4 * v.std() / math.sqrt(len(v))


def test_summarize():
    s = summarize(np.arange(101.0))
    assert s["median"] == 50 and s["q05"] == 5 and s["q95"] == 95 and s["mean"] == 50
