"""The acceptance battery run by ``opplab suite``.

Each criterion is a function ``seed -> ExperimentResult``.  Seeds are
offset per criterion so that criteria never share random streams.
"""
from __future__ import annotations

import math
import time
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import integrate, stats

from . import analytic
from .analytic import parse_plan, parse_weights
from .distributions import ConstC, Power, PowerC, RatioA, RatioB, Uniform
from .expansion import delta, luroth, parse_scheme, simulate_batch
from .experiments import (ExperimentConfig, ExperimentResult, Mode, run_strong_law, run_weak_law,
                          validate_cf, validate_independence, validate_tails)
from .rng import stream

WEAK_TOL = 0.1
RAW_MEDIAN_BAND = (0.3, 0.7)


def _seed(seed: int, crit: int) -> int:
    return seed * 1000 + crit


def _timed(fn):
    def wrapper(seed: int) -> ExperimentResult:
        t0 = time.perf_counter()
        res = fn(seed)
        res.wall_time = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _merge(name: str, seed: int, parts) -> ExperimentResult:
    out = ExperimentResult(name, ",".join(p.config_hash for p in parts if p.config_hash), seed)
    for p in parts:
        out.records.extend(p.records)
        out.checks.extend(p.checks)
    return out


@_timed
def crit01_exact_sandwich(seed: int) -> ExperimentResult:
    """Exact tail of the Lüroth ratio inside the sandwich, in rational arithmetic."""
    res = ExperimentResult("crit01-exact-sandwich", "", seed)
    dist = Uniform()
    for x in [Fraction(1), Fraction(3, 2), Fraction(2), Fraction(5), Fraction(10), Fraction(201, 2)]:
        lo, up = analytic.tail_sandwich(dist, 1, x)
        p = analytic.exact_tail_constant_scheme(1, 0, dist, 1, x)
        closed = Fraction(1, math.ceil(x))
        res.add(float(x), "lower", lo)
        res.add(float(x), "exact", p)
        res.add(float(x), "upper", up)
        res.check(f"sandwich[x={x}]", isinstance(p, Fraction) and lo <= p <= up,
                  f"{lo} <= {p} <= {up}")
        res.check(f"ceil_formula[x={x}]", p == closed, f"exact {p} vs 1/ceil(x) = {closed}")
    return res


@_timed
def crit02_mc_tails(seed: int) -> ExperimentResult:
    """MC tail of the Lüroth ratio against 1/ceil(x), N = 10^6."""
    cfg = ExperimentConfig(luroth(), Mode.TAIL, replications=10**6, base_seed=_seed(seed, 2))
    res = validate_tails(cfg, [1.5, 2, 5, 10])
    res.name = "crit02-mc-tails"
    return res


@_timed
def crit03_independence(seed: int) -> ExperimentResult:
    cfg = ExperimentConfig(luroth(), Mode.INDEP, replications=10**6, base_seed=_seed(seed, 3))
    res = validate_independence(cfg, [(2, 3), (3, 5)])
    res.name = "crit03-independence"
    return res


def _weak_law(name: str, scheme_text: str, weights_text: str, seed: int) -> ExperimentResult:
    scheme = parse_scheme(scheme_text)
    w = parse_weights(weights_text, scheme.dist)
    cfg = ExperimentConfig(scheme, Mode.WEAK_LAW, w, (10**4, 10**5), 300, seed, tolerance=WEAK_TOL)
    res = run_weak_law(cfg)
    res.name = name
    med = res.value(10**5, "median")
    lo, hi = RAW_MEDIAN_BAND
    res.check("raw_median", lo <= med <= hi, f"median(W) at n=100000 is {med:.4f}, band [{lo}, {hi}]")
    return res


@_timed
def crit04_weak_uniform(seed: int) -> ExperimentResult:
    return _weak_law("crit04-weak-uniform", "luroth", "a=log^0(k)/k,b=log^2(n)", _seed(seed, 4))


@_timed
def crit05_weak_ratioA(seed: int) -> ExperimentResult:
    res = _weak_law("crit05-weak-ratioA", "luroth,dist=ratioA:c=k^-1", "a=1/c,b=Cn_logCn", _seed(seed, 5))
    st = analytic.sequence_stats(PowerC(1.0), 10**6)
    res.add(10**6, "ell", st.ell_n)
    res.check("ell", abs(st.ell_n + 0.5) <= 0.1, f"ell at n=10^6 is {st.ell_n:.4f}, target -0.5 +- 0.1")
    return res


@_timed
def crit06_weak_ratioB(seed: int) -> ExperimentResult:
    return _weak_law("crit06-weak-ratioB", "luroth,dist=ratioB:c=k^-1", "a=1/c,b=Cn_logCn", _seed(seed, 6))


@_timed
def crit07_weak_power(seed: int) -> ExperimentResult:
    scheme = parse_scheme("luroth,dist=power:alpha=0.5")
    w = parse_weights("a=const:1,b=n^2.2", scheme.dist)
    grid = (10**2, 10**4, 10**6)
    cfg = ExperimentConfig(scheme, Mode.WEAK_LAW, w, grid, 200, _seed(seed, 7), tolerance=WEAK_TOL)
    res = run_weak_law(cfg)
    res.name = "crit07-weak-power"
    meds = [res.value(n, "median") for n in grid]
    res.check("medians_decreasing", all(b < a for a, b in zip(meds, meds[1:])),
              f"medians {[round(m, 5) for m in meds]}")
    res.check("median_small", meds[-1] < 0.2, f"median at n=10^6 is {meds[-1]:.5f} < 0.2")
    return res


@_timed
def crit08_strong_exact(seed: int) -> ExperimentResult:
    scheme = luroth()
    w = parse_weights("a=log^1(k)/k,b=log^3(n)", scheme.dist)
    grid = tuple(10**e for e in range(2, 8))
    cfg = ExperimentConfig(scheme, Mode.STRONG_EXACT, w, grid, 20, _seed(seed, 8),
                           tolerance=0.1, min_fraction=0.9)
    res = run_strong_law(cfg)
    res.name = "crit08-strong-exact"
    final = res.data[:, -1]
    hits = int(np.sum((final >= 0.15) & (final <= 0.55)))
    res.check("final_in_band", hits >= 18, f"{hits}/20 final values in [0.15, 0.55] (need 18)")
    return res


@_timed
def crit09_strong_general(seed: int) -> ExperimentResult:
    cfg = ExperimentConfig(luroth(), Mode.STRONG_GENERAL, n_grid=(10**2, 10**4, 10**6), replications=100,
                           base_seed=_seed(seed, 9), plan=parse_plan("gamma=1.2"),
                           tolerance=0.01, min_fraction=0.95)
    res = run_strong_law(cfg)
    res.name = "crit09-strong-general"
    return res


@_timed
def crit10_cf(seed: int) -> ExperimentResult:
    base = _seed(seed, 10)
    two = validate_cf(ExperimentConfig(luroth(), Mode.CF, base_seed=base), [0.05, -0.03], 10**5)
    one = validate_cf(ExperimentConfig(luroth(), Mode.CF, base_seed=base + 1), [0.05], 10**5)
    return _merge("crit10-cf", seed, [two, one])


def _unit_families():
    return [Uniform(), Power(0.5), Power(0.25), RatioA(ConstC(1.0)), RatioA(PowerC(1.0)),
            RatioB(ConstC(1.0)), RatioB(PowerC(1.0))]


def _truncated_mean_quad(dist, n, x) -> float:
    v0 = float(dist.y_lower(n))
    cont = 0.0
    if x > v0:
        pts = [v0 * 10**j for j in range(1, 12) if v0 * 10**j < x]
        cont = integrate.quad(lambda v: v * float(dist.y_density(n, v)), v0, x,
                              points=pts or None, epsabs=1e-12, epsrel=1e-12, limit=500)[0]
    return cont + dist.y_atom(n) * 1.0


@_timed
def crit11_unit_invariants(seed: int) -> ExperimentResult:
    res = ExperimentResult("crit11-unit-invariants", "", seed)
    fams = _unit_families()
    ns = [1, 2, 3, 7, 10, 100]

    # quantile/cdf roundtrips on continuous regions
    worst_p = worst_x = 0.0
    p = np.linspace(0.0, 1.0, 1001)
    for d in fams:
        for n in ns:
            top = float(d.cdf(n, 1.0)) if isinstance(d, RatioB) else 1.0
            pc = p[p <= top]
            worst_p = max(worst_p, float(np.max(np.abs(d.cdf(n, d.quantile(n, pc)) - pc))))
            xs = np.asarray(d.quantile(n, p[(p > 0) & (p < top)]))
            worst_x = max(worst_x, float(np.max(np.abs(d.quantile(n, d.cdf(n, xs)) - xs))))
    res.add(0, "roundtrip_p", worst_p)
    res.add(0, "roundtrip_x", worst_x)
    res.check("cdf_quantile_roundtrip", worst_p <= 1e-12, f"max |cdf(quantile(p)) - p| = {worst_p:.3g}")
    res.check("quantile_cdf_roundtrip", worst_x <= 1e-12, f"max |quantile(cdf(x)) - x| = {worst_x:.3g}")

    # truncated means against quadrature at 20 random points
    rng = np.random.default_rng(_seed(seed, 11))
    worst = 0.0
    for _ in range(20):
        d = fams[int(rng.integers(len(fams)))]
        n = int(rng.integers(1, 20))
        x = float(np.exp(rng.uniform(0.0, np.log(1e4))))
        worst = max(worst, abs(float(d.y_truncated_mean(n, x)) - _truncated_mean_quad(d, n, x)))
    res.add(0, "truncated_mean_err", worst)
    res.check("truncated_mean_quadrature", worst <= 1e-8, f"max abs error {worst:.3g}")

    # delta(h, phi(h), y) = 1
    ok = all(delta(c, c, y) == 1 for c in (1, 2, 3, 17) for y in (0, Fraction(1, 3), 2, Fraction(7, 2)))
    ok = ok and all(delta(c, c, y) == 1.0 for c in (1, 2, 5) for y in (0.0, 0.25, 3.0))
    res.check("delta_at_phi", ok, "delta(h, phi(h), y) == 1 for integer phi, rational and float y")

    # Lüroth digit law P(B = k) = 1/(k(k+1))
    N = 10**6
    digits = simulate_batch(luroth(), 1, N, stream(_seed(seed, 11), 0, "digits")).digits[:, 1]
    kmax = 50
    counts = np.bincount(np.minimum(digits, kmax + 1).astype(np.int64), minlength=kmax + 2)[1:]
    k = np.arange(1, kmax + 1)
    probs = np.append(1.0 / (k * (k + 1)), 1.0 / (kmax + 1))
    chi2, pval = stats.chisquare(counts, probs * N)
    res.add(0, "chi2", chi2)
    res.add(0, "chi2_p", pval)
    res.check("digit_law_chi2", pval > 1e-3, f"chi-square {chi2:.2f} on {kmax} df, p = {pval:.4g}")

    # uniformity of F_n(t)/t^alpha -> c over n = 1..10
    for d in fams:
        prof = d.tail_profile
        devs = [max(abs(float(d.cdf(n, t)) / t**prof.alpha - prof.c_unif) for n in range(1, 11))
                for t in (1e-2, 1e-3, 1e-4)]
        for t, v in zip((1e-2, 1e-3, 1e-4), devs):
            res.add(t, f"uniformity[{d}]", v)
        res.check(f"uniformity[{d}]", all(b <= a for a, b in zip(devs, devs[1:])) and devs[-1] < 1e-3,
                  f"sup_n deviation at t=1e-2,1e-3,1e-4: {[f'{v:.3g}' for v in devs]}")
    return res


CRITERIA: list[tuple[int, Callable[[int], ExperimentResult]]] = [
    (1, crit01_exact_sandwich),
    (2, crit02_mc_tails),
    (3, crit03_independence),
    (4, crit04_weak_uniform),
    (5, crit05_weak_ratioA),
    (6, crit06_weak_ratioB),
    (7, crit07_weak_power),
    (8, crit08_strong_exact),
    (9, crit09_strong_general),
    (10, crit10_cf),
    (11, crit11_unit_invariants),
]


def run_criterion(number: int, seed: int) -> ExperimentResult:
    for k, fn in CRITERIA:
        if k == number:
            return fn(seed)
    raise KeyError(number)
