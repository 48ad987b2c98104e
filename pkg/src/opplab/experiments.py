"""Seeded Monte Carlo runners and validators.

Every replication draws from its own stream ``(base_seed, replication,
purpose)`` and results are reduced in replication order, so the output
does not depend on thread count or scheduling.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import analytic
from .analytic import TruncationPlan, WeightScheme
from .errors import ConfigError
from .expansion import ExpansionScheme, iter_ratios, simulate_batch
from .rng import stream

log = logging.getLogger(__name__)

WILSON_Z = float(stats.norm.ppf(1 - 0.001 / 2))
N_SE = 4.0


class Mode(str, Enum):
    WEAK_LAW = "WeakLaw"
    STRONG_EXACT = "StrongLawExact"
    STRONG_GENERAL = "StrongLawGeneral"
    TAIL = "TailValidate"
    INDEP = "IndepValidate"
    CF = "CFValidate"
    TAIL_EQUIV = "TailEquivValidate"
    TRUNC = "TruncDiagnostic"


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: ExpansionScheme
    mode: Mode
    weights: Optional[WeightScheme] = None
    n_grid: tuple = (1000,)
    replications: int = 100
    base_seed: int = 0
    epsilons: tuple = (0.05, 0.1, 0.2)
    plan: Optional[TruncationPlan] = None
    tolerance: float = 0.1
    min_fraction: float = 0.9
    exploratory: bool = False

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"n_grid must be strictly increasing positive integers, got {self.n_grid}")
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilons must be positive")

    def describe(self) -> list[str]:
        lines = [
            f"mode={self.mode.value}",
            f"scheme={self.scheme.describe()}",
            f"weights={self.weights.describe() if self.weights else 'none'}",
            f"plan={self.plan.describe() if self.plan else 'none'}",
            f"ngrid={','.join(str(n) for n in self.n_grid)}",
            f"reps={self.replications}",
            f"seed={self.base_seed}",
            f"eps={','.join(repr(e) for e in self.epsilons)}",
            f"tolerance={self.tolerance!r}",
            f"min_fraction={self.min_fraction!r}",
            f"exploratory={self.exploratory}",
        ]
        return lines

    def config_hash(self) -> str:
        return hashlib.sha256("\n".join(self.describe()).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ExperimentResult:
    """Long-format records ``(n, stat, value)`` plus PASS/FAIL checks.

    ``wall_time`` is kept on the object only; it never reaches the output
    files, which must be byte-identical between runs.
    """

    name: str
    config_hash: str = ""
    seed: int = 0
    records: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    wall_time: float = 0.0
    data: Optional[np.ndarray] = field(default=None, repr=False)

    def add(self, n, stat: str, value) -> None:
        self.records.append((str(n), stat, float(value)))

    def check(self, name: str, passed, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    def value(self, n, stat: str) -> float:
        for rn, rs, v in self.records:
            if rn == str(n) and rs == stat:
                return v
        raise KeyError((n, stat))

    def series(self, stat: str) -> list:
        return [(n, v) for n, s, v in self.records if s == stat]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def write_csv(self, fh, prefix: str = "", header: bool = True) -> None:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["n", "stat", "value"])
        for n, s, v in self.records:
            w.writerow([n, prefix + s, repr(v)])

    def summary_lines(self) -> list[str]:
        lines = [f"experiment: {self.name}", f"config_hash: {self.config_hash}", f"seed: {self.seed}"]
        for c in self.checks:
            lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return lines


# ---------------------------------------------------------------------------
# helpers


def workers() -> int:
    env = os.environ.get("OPPLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"OPPLAB_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def map_replications(fn: Callable[[int], object], reps: int, order: Optional[Sequence[int]] = None) -> list:
    """Run ``fn(r)`` for r in range(reps); results come back indexed by r.

    ``order`` only changes the submission order.
    """
    order = list(range(reps)) if order is None else list(order)
    if sorted(order) != list(range(reps)):
        raise ValueError("order must be a permutation of range(reps)")
    out = [None] * reps
    nw = min(workers(), reps)
    if nw <= 1:
        for r in order:
            out[r] = fn(r)
        return out
    with ThreadPoolExecutor(max_workers=nw) as ex:
        futs = {r: ex.submit(fn, r) for r in order}
        for r in range(reps):
            out[r] = futs[r].result()
    return out


def summarize(values) -> dict:
    v = np.asarray(values, dtype=float)
    q = np.quantile(v, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {
        "mean": float(np.mean(v)),
        "trimmed_mean": float(stats.trim_mean(v, 0.1)),
        "median": float(q[2]),
        "q05": float(q[0]),
        "q25": float(q[1]),
        "q75": float(q[3]),
        "q95": float(q[4]),
    }


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def binomial_close(p_hat: float, p: float, n: int, n_se: float = N_SE) -> tuple[bool, float]:
    se = math.sqrt(max(p * (1 - p), 0.0) / n)
    return abs(p_hat - p) <= n_se * se, se


def partial_sums_at(scheme: ExpansionScheme, a: np.ndarray, grid: Sequence[int],
                    gen: np.random.Generator) -> np.ndarray:
    """sum_{k<=n} a_k R_k at each n of ``grid`` along one trajectory."""
    nmax = grid[-1]
    out = np.empty(len(grid))
    gi = 0
    total = 0.0
    for start, R in iter_ratios(scheme, nmax, gen):
        cs = np.cumsum(a[start - 1:start - 1 + len(R)] * R) + total
        end = start + len(R) - 1
        while gi < len(grid) and grid[gi] <= end:
            out[gi] = cs[grid[gi] - start]
            gi += 1
        total = float(cs[-1])
    return out


def _new_result(name: str, cfg: ExperimentConfig) -> ExperimentResult:
    return ExperimentResult(name, cfg.config_hash(), cfg.base_seed)


def _require_mode(cfg: ExperimentConfig, *modes: Mode) -> None:
    if cfg.mode not in modes:
        raise ConfigError(f"mode {cfg.mode.value} not valid here (expected {[m.value for m in modes]})")


def _inversions(seq) -> int:
    return sum(1 for x, y in zip(seq, seq[1:]) if y > x)


# ---------------------------------------------------------------------------
# laws of large numbers


def run_weak_law(cfg: ExperimentConfig, order: Optional[Sequence[int]] = None) -> ExperimentResult:
    """W_n = b_n^{-1} sum a_k R_k over independent replications at each n of the grid.

    Replication r uses one trajectory of length max(n_grid) and reads W_n
    off its prefixes.
    """
    _require_mode(cfg, Mode.WEAK_LAW)
    t0 = time.perf_counter()
    w = cfg.weights
    if w is None:
        raise ConfigError("weak law needs weights")
    grid = cfg.n_grid
    nmax = grid[-1]
    ratio = analytic.weight_ratio(w, nmax)
    if not ratio < 1:
        raise ConfigError(f"small-weights ratio {ratio:.3g} at n={nmax} is not < 1")
    a = w.a_values(nmax)
    b = np.array([w.b_value(n) for n in grid])

    def one(r):
        return partial_sums_at(cfg.scheme, a, grid, stream(cfg.base_seed, r, "weaklaw")) / b

    W = np.array(map_replications(one, cfg.replications, order))
    res = _new_result("weaklaw", cfg)
    dev_medians = []
    for j, n in enumerate(grid):
        cen = analytic.centering(cfg.scheme.dist, w, n)
        res.add(n, "centering", cen)
        res.add(n, "weight_ratio", analytic.weight_ratio(w, n))
        if w.limit_A is not None:
            res.add(n, "limit", w.limit_A)
        for k, v in summarize(W[:, j]).items():
            res.add(n, k, v)
        dev = W[:, j] - cen
        res.add(n, "median_minus_centering", float(np.median(dev)))
        dev_medians.append(float(np.median(np.abs(dev))))
        res.add(n, "median_abs_dev", dev_medians[-1])
        for eps in cfg.epsilons:
            res.add(n, f"exceed_centering[{eps!r}]", float(np.mean(np.abs(dev) > eps)))
            if w.limit_A is not None:
                res.add(n, f"exceed_limit[{eps!r}]", float(np.mean(np.abs(W[:, j] - w.limit_A) > eps)))
    if len(grid) > 1:
        inv = _inversions(dev_medians)
        res.check("centered_median_trend", inv <= 1,
                  f"median |W_n - centering_n| over n: {[round(x, 4) for x in dev_medians]} ({inv} inversions)")
    last = res.value(grid[-1], "median_minus_centering")
    res.check("centered_median", abs(last) <= cfg.tolerance,
              f"median(W - centering) at n={grid[-1]} is {last:.4f}, tolerance {cfg.tolerance}")
    res.wall_time = time.perf_counter() - t0
    res.data = W
    return res


def run_strong_law(cfg: ExperimentConfig, order: Optional[Sequence[int]] = None) -> ExperimentResult:
    """Running weighted sums along single long trajectories, read at the n_grid checkpoints."""
    _require_mode(cfg, Mode.STRONG_EXACT, Mode.STRONG_GENERAL)
    t0 = time.perf_counter()
    scheme = cfg.scheme
    exact = cfg.mode is Mode.STRONG_EXACT
    if exact:
        if not scheme.is_constant and not cfg.exploratory:
            raise ConfigError("the exact strong law is only established for constant phi and y (independent R_n)")
        if scheme.dist.tail_profile.alpha != 1:
            raise ConfigError("the exact strong law needs a tail exponent of 1")
        w = cfg.weights
        if w is None:
            raise ConfigError("StrongLawExact needs weights a=log^(b-2)(k)/k, b=log^b(n)")
    else:
        if cfg.plan is None or not cfg.plan.gamma > 1:
            raise ConfigError("StrongLawGeneral needs a plan with gamma > 1")
        w = WeightScheme(analytic.InvK(), analytic.NPow(cfg.plan.gamma), 1.0, 0.0)
    grid = cfg.n_grid
    a = w.a_values(grid[-1])
    b = np.array([w.b_value(n) for n in grid])

    def one(r):
        return partial_sums_at(scheme, a, grid, stream(cfg.base_seed, r, "stronglaw")) / b

    V = np.array(map_replications(one, cfg.replications, order))
    res = _new_result("stronglaw-exact" if exact else "stronglaw-general", cfg)
    cen_last = None
    for j, n in enumerate(grid):
        if exact:
            cen_last = analytic.centering(scheme.dist, w, n)
            res.add(n, "centering", cen_last)
        if w.limit_A is not None:
            res.add(n, "limit", w.limit_A)
        for k, v in summarize(V[:, j]).items():
            res.add(n, k, v)
        for r in range(cfg.replications):
            res.add(n, f"traj[{r}]", V[r, j])
    final = V[:, -1]
    if cfg.exploratory:
        pass
    elif exact:
        hits = int(np.sum(np.abs(final - cen_last) <= cfg.tolerance))
        need = math.ceil(cfg.min_fraction * cfg.replications)
        res.check("final_near_centering", hits >= need,
                  f"{hits}/{cfg.replications} trajectories within {cfg.tolerance} of centering "
                  f"{cen_last:.4f} at n={grid[-1]} (need {need})")
    else:
        hits = int(np.sum(final < cfg.tolerance))
        need = math.ceil(cfg.min_fraction * cfg.replications)
        res.check("final_below_tolerance", hits >= need,
                  f"{hits}/{cfg.replications} trajectories below {cfg.tolerance} at n={grid[-1]} (need {need})")
    res.wall_time = time.perf_counter() - t0
    res.data = V
    return res


# ---------------------------------------------------------------------------
# validators


def _constant_params(scheme: ExpansionScheme):
    return scheme.phi.value, scheme.y_rule.value


def validate_tails(cfg: ExperimentConfig, x_grid: Sequence[float], step: int = 1) -> ExperimentResult:
    """MC tails of R_step against the sandwich and, for constant schemes, the exact tail.

    ``cfg.replications`` independent paths are simulated.  The closed tail
    P(R >= x) is the quantity the exact formula gives; the strict tail
    P(R > x) is checked as well.
    """
    t0 = time.perf_counter()
    N = cfg.replications
    scheme, dist = cfg.scheme, cfg.scheme.dist
    batch = simulate_batch(scheme, step, N, stream(cfg.base_seed, 0, "tails"))
    res = _new_result("validate-tails", cfg)
    for x in x_grid:
        if x < 1:
            raise ConfigError("tail points must be >= 1")
        lo, up = analytic.tail_sandwich(dist, step, x)
        up_closed = float(dist.cdf_right(step, 1 / x))
        kc = int(batch.closed_tail(step, x).sum())
        ks = int(batch.strict_tail(step, x).sum())
        pc, ps = kc / N, ks / N
        wc, ws = wilson_interval(kc, N), wilson_interval(ks, N)
        for name, v in [("p_hat", pc), ("p_hat_strict", ps), ("wilson_lo", wc[0]), ("wilson_hi", wc[1]),
                        ("lower", lo), ("upper", up)]:
            res.add(x, name, v)
        res.check(f"sandwich[x={x:g}]", wc[1] >= lo and wc[0] <= up_closed,
                  f"Wilson [{wc[0]:.5f}, {wc[1]:.5f}] vs [{lo:.5f}, {up_closed:.5f}]")
        res.check(f"sandwich_strict[x={x:g}]", ws[1] >= lo and ws[0] <= up,
                  f"Wilson [{ws[0]:.5f}, {ws[1]:.5f}] vs [{lo:.5f}, {up:.5f}]")
        if scheme.is_constant:
            c, d = _constant_params(scheme)
            pe = float(analytic.exact_tail_constant_scheme(c, d, dist, step, x))
            pes = float(analytic.exact_strict_tail_constant_scheme(c, d, dist, step, x))
            res.add(x, "exact", pe)
            res.add(x, "exact_strict", pes)
            ok, se = binomial_close(pc, pe, N)
            res.check(f"exact[x={x:g}]", ok, f"p_hat {pc:.6f} vs exact {pe:.6f}, 4 SE = {N_SE * se:.6f}")
            ok, se = binomial_close(ps, pes, N)
            res.check(f"exact_strict[x={x:g}]", ok, f"p_hat {ps:.6f} vs exact {pes:.6f}, 4 SE = {N_SE * se:.6f}")
    res.wall_time = time.perf_counter() - t0
    return res


def validate_independence(cfg: ExperimentConfig, pairs: Sequence[tuple], steps: tuple = (1, 2)
                          ) -> ExperimentResult:
    """Joint closed tails of (R_i, R_j) against the product of marginals and the dependence bound."""
    t0 = time.perf_counter()
    i, j = steps
    if not 1 <= i < j:
        raise ConfigError("steps must satisfy 1 <= i < j")
    N = cfg.replications
    scheme, dist = cfg.scheme, cfg.scheme.dist
    M = dist.tail_profile.lipschitz_M
    if not scheme.is_constant and M is None:
        raise ConfigError("independence needs a constant scheme; the dependence bound needs a Lipschitz F")
    batch = simulate_batch(scheme, j, N, stream(cfg.base_seed, 0, "indep"))
    res = _new_result("validate-indep", cfg)
    for x, y in pairs:
        key = f"{x:g}:{y:g}"
        ei, ej = batch.closed_tail(i, x), batch.closed_tail(j, y)
        joint = float(np.mean(ei & ej))
        pi, pj = float(ei.mean()), float(ej.mean())
        res.add(key, "joint", joint)
        res.add(key, "p_i", pi)
        res.add(key, "p_j", pj)
        if scheme.is_constant:
            c, d = _constant_params(scheme)
            prod = float(analytic.exact_tail_constant_scheme(c, d, dist, i, x)
                         * analytic.exact_tail_constant_scheme(c, d, dist, j, y))
            res.add(key, "exact_product", prod)
            ok, se = binomial_close(joint, prod, N)
            res.check(f"independence[{key}]", ok,
                      f"joint {joint:.6f} vs product {prod:.6f}, 4 SE = {N_SE * se:.6f}")
            if (i, j) == (1, 2):
                part, rem = analytic.joint_tail_two_step(scheme, x, y)
                res.add(key, "enumerated_joint", part)
                res.check(f"factorization[{key}]", part - 1e-12 <= prod <= part + rem + 1e-12,
                          f"enumerated joint in [{part:.9f}, {part + rem:.9f}], product {prod:.9f}")
        if M is not None:
            bound = analytic.dependence_bound(dist, i, j, x, y)
            se = math.sqrt(max(joint * (1 - joint), 1.0 / N) / N)
            gap = abs(joint - pi * pj)
            res.add(key, "dependence_bound", bound)
            res.check(f"dependence_bound[{key}]", gap <= bound + N_SE * se,
                      f"|joint - p_i p_j| = {gap:.6f} <= {bound:.6f} + 4 SE ({N_SE * se:.6f})")
    res.wall_time = time.perf_counter() - t0
    return res


def validate_cf(cfg: ExperimentConfig, t_vector: Sequence[float], n_samples: int) -> ExperimentResult:
    """|MC joint CF of (R_1..R_n) - prod psi_k(t_k)| <= sum |t_k| + 3 SE."""
    t0 = time.perf_counter()
    t = np.asarray(t_vector, dtype=float)
    if t.ndim != 1 or not 1 <= len(t) <= 8:
        raise ConfigError("t vector must have length 1..8")
    if np.any(np.abs(t) > 1):
        raise ConfigError("|t_k| must be <= 1")
    dist = cfg.scheme.dist
    batch = simulate_batch(cfg.scheme, len(t), n_samples, stream(cfg.base_seed, 0, "cf"))
    phase = batch.ratios @ t
    cos, sin = np.cos(phase), np.sin(phase)
    joint = complex(cos.mean(), sin.mean())
    se = math.sqrt((cos.var() + sin.var()) / n_samples)
    prod = complex(1.0)
    for k, tk in enumerate(t, start=1):
        prod *= dist.psi(k, tk)
    dist_val = abs(joint - prod)
    bound = float(np.abs(t).sum())
    key = ",".join(f"{x:g}" for x in t)
    res = _new_result("validate-cf", cfg)
    for name, v in [("joint_re", joint.real), ("joint_im", joint.imag), ("psi_prod_re", prod.real),
                    ("psi_prod_im", prod.imag), ("distance", dist_val), ("bound", bound), ("se", se),
                    ("margin", bound + 3 * se - dist_val)]:
        res.add(key, name, v)
    res.check(f"cf_distance[t=({key})]", dist_val <= bound + 3 * se,
              f"distance {dist_val:.6f} <= {bound:g} + 3 SE ({3 * se:.6f})")
    res.wall_time = time.perf_counter() - t0
    return res


def validate_tailequiv(cfg: ExperimentConfig, x_grid: Sequence[float], step: int = 1) -> ExperimentResult:
    """P(R >= x)/P(Y > x) against the envelope [F(1/(x+1))/F(1/x), 1] that shrinks to 1."""
    t0 = time.perf_counter()
    scheme, dist = cfg.scheme, cfg.scheme.dist
    xs = sorted(float(x) for x in x_grid)
    N = cfg.replications
    batch = simulate_batch(scheme, step, N, stream(cfg.base_seed, 0, "tailequiv"))
    res = _new_result("validate-tailequiv", cfg)
    widths = []
    for x in xs:
        py = float(dist.y_tail(step, x))
        lo_env = float(dist.cdf(step, 1 / (x + 1))) / py
        hi_env = float(dist.cdf_right(step, 1 / x)) / py
        widths.append(1 - lo_env)
        res.add(x, "envelope_lo", lo_env)
        res.add(x, "envelope_hi", hi_env)
        k = int(batch.closed_tail(step, x).sum())
        wl, wh = wilson_interval(k, N)
        res.add(x, "mc_ratio", k / N / py)
        res.check(f"mc_ratio[x={x:g}]", wh / py >= lo_env and wl / py <= hi_env,
                  f"MC ratio interval [{wl / py:.4f}, {wh / py:.4f}] vs envelope [{lo_env:.4f}, {hi_env:.4f}]")
        if scheme.is_constant:
            c, d = _constant_params(scheme)
            tr = analytic.uniform_tail_ratio(c, d, dist, step, x)
            res.add(x, "exact_ratio", tr.value)
            res.check(f"exact_ratio[x={x:g}]", not tr.underflow and lo_env <= tr.value <= hi_env,
                      f"ratio {tr.value:.6f} in [{lo_env:.6f}, {hi_env:.6f}]")
    res.check("envelope_shrinks", all(b <= a + 1e-15 for a, b in zip(widths, widths[1:])),
              f"1 - envelope_lo over x: {[round(v, 6) for v in widths]}")
    res.wall_time = time.perf_counter() - t0
    return res


def trunc_diagnostic(cfg: ExperimentConfig, order: Optional[Sequence[int]] = None) -> ExperimentResult:
    """(1/n^gamma) sum_k (g_k(R_k) - E g_k(R_k))/k with c_k = k log^b k, at the n_grid checkpoints."""
    _require_mode(cfg, Mode.TRUNC)
    t0 = time.perf_counter()
    plan = cfg.plan
    if plan is None or not plan.gamma > 0.5:
        raise ConfigError("truncation diagnostic needs gamma > 1/2")
    scheme = cfg.scheme
    if not scheme.is_constant:
        raise ConfigError("truncation diagnostic needs a constant scheme (closed-form E g_k(R_k))")
    c, d = _constant_params(scheme)
    grid = cfg.n_grid
    nmax = grid[-1]
    k = np.arange(1, nmax + 1)
    level = plan.level(k)
    eg = analytic.expected_truncated_ratio(c, d, scheme.dist, k, level)
    dn = np.array([plan.d(n) for n in grid])

    def one(r):
        out = np.empty(len(grid))
        gi, total = 0, 0.0
        for start, R in iter_ratios(scheme, nmax, stream(cfg.base_seed, r, "trunc")):
            sl = slice(start - 1, start - 1 + len(R))
            cs = np.cumsum((np.minimum(R, level[sl]) - eg[sl]) / k[sl]) + total
            end = start + len(R) - 1
            while gi < len(grid) and grid[gi] <= end:
                out[gi] = cs[grid[gi] - start]
                gi += 1
            total = float(cs[-1])
        return out / dn

    V = np.array(map_replications(one, cfg.replications, order))
    res = _new_result("trunc-diagnostic", cfg)
    for j, n in enumerate(grid):
        for key, v in summarize(V[:, j]).items():
            res.add(n, key, v)
        res.add(n, "max_abs", float(np.max(np.abs(V[:, j]))))
    hits = int(np.sum(np.abs(V[:, -1]) < cfg.tolerance))
    need = math.ceil(cfg.min_fraction * cfg.replications)
    res.check("final_small", hits >= need,
              f"{hits}/{cfg.replications} with |value| < {cfg.tolerance} at n={grid[-1]} (need {need})")
    res.wall_time = time.perf_counter() - t0
    res.data = V
    return res
