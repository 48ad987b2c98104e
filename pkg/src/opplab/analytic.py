"""Weight sequences, limit constants, finite-n centerings and exact oracles.

Long sums are accumulated with ``math.fsum`` (correctly rounded), since
the limits are read off on a log scale where cancellation matters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import digamma

from .distributions import ConstC, DistributionSpec, PowerC, RatioA, RatioB, Uniform
from .errors import ConfigError, DomainError, NoLipschitzConstant
from .expansion import safe_ceil, safe_floor, tail_threshold

__all__ = [
    "InvK", "LogPowOverK", "ConstA", "InvC",
    "LogPow", "CnLogCn", "NPow",
    "WeightScheme", "SequenceStats", "TruncationPlan",
    "inv_c_sum", "weight_ratio", "limits_ratioA", "limits_ratioB", "sequence_stats",
    "centering", "exact_tail_constant_scheme", "exact_strict_tail_constant_scheme",
    "tail_sandwich", "dependence_bound", "g_trunc", "uniform_tail_ratio", "TailRatio",
    "expected_truncated_ratio", "joint_tail_two_step",
    "parse_weights", "parse_plan", "known_limit",
]


# ---------------------------------------------------------------------------
# weight sequences; each is callable on an integer array of indices


@dataclass(frozen=True)
class InvK:
    def __call__(self, k):
        return 1.0 / np.asarray(k, dtype=float)

    def __str__(self):
        return "1/k"


@dataclass(frozen=True)
class LogPowOverK:
    """a_k = log^p(k) / k (with 0^0 = 1, so p = 0 gives 1/k)."""

    p: float

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        if self.p == 0:
            return 1.0 / k
        return np.log(k) ** self.p / k

    def __str__(self):
        return f"log^{self.p:g}(k)/k"


@dataclass(frozen=True)
class ConstA:
    value: float = 1.0

    def __call__(self, k):
        return np.full(np.shape(k), float(self.value))

    def __str__(self):
        return f"const:{self.value:g}"


@dataclass(frozen=True)
class InvC:
    """a_k = 1 / c_k for the c sequence of a ratio family."""

    c: object

    def __call__(self, k):
        return 1.0 / np.asarray(self.c(np.asarray(k)), dtype=float)

    def __str__(self):
        return "1/c"


def inv_c_sum(cseq, n: int) -> float:
    """C_n = sum_{k<=n} 1/c_k."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if isinstance(cseq, ConstC):
        return n / cseq.value
    if isinstance(cseq, PowerC) and cseq.beta == 1:
        return n * (n + 1) / 2
    k = np.arange(1, n + 1)
    return math.fsum(1.0 / np.asarray(cseq(k), dtype=float))


@dataclass(frozen=True)
class LogPow:
    """b_n = log^p(n)."""

    p: float

    def __call__(self, n):
        return math.log(n) ** self.p

    def __str__(self):
        return f"log^{self.p:g}(n)"


@dataclass(frozen=True)
class CnLogCn:
    """b_n = C_n log C_n with C_n = sum_{k<=n} 1/c_k."""

    c: object

    def __call__(self, n):
        cn = inv_c_sum(self.c, n)
        return cn * math.log(cn)

    def __str__(self):
        return "Cn_logCn"


@dataclass(frozen=True)
class NPow:
    """b_n = n^g."""

    g: float

    def __call__(self, n):
        return float(n) ** self.g

    def __str__(self):
        return f"n^{self.g:g}"


@dataclass(frozen=True)
class WeightScheme:
    a: object
    b: object
    alpha: float = 1.0
    limit_A: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")

    def a_values(self, n: int) -> np.ndarray:
        a = np.asarray(self.a(np.arange(1, n + 1)), dtype=float)
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ConfigError("weights a_k must be finite and non-negative")
        return a

    def b_value(self, n: int) -> float:
        bn = float(self.b(n))
        if not bn > 0 or not math.isfinite(bn):
            raise ConfigError(f"b_n must be positive and finite, got b_{n} = {bn}")
        return bn

    def describe(self) -> str:
        lim = "none" if self.limit_A is None else repr(self.limit_A)
        return f"a={self.a},b={self.b},alpha={self.alpha:g},limit={lim}"


def known_limit(dist: DistributionSpec, a, b) -> Optional[float]:
    """The exact-law constant for the weight/family pairings with a closed-form limit."""
    if isinstance(dist, Uniform) and isinstance(a, (LogPowOverK, InvK)) and isinstance(b, LogPow):
        p = a.p if isinstance(a, LogPowOverK) else 0.0
        if b.p >= 2 and p == b.p - 2:
            return 1.0 / b.p
    if isinstance(dist, (RatioA, RatioB)) and isinstance(a, InvC) and isinstance(b, CnLogCn):
        c = dist.c
        if isinstance(c, ConstC):
            return 1.0
        if isinstance(c, PowerC) and c.beta >= 0:
            # l = -m = -beta/(beta+1), kappa = 0
            return 1.0 - c.beta / (c.beta + 1.0)
    if dist.tail_profile.alpha < 1:
        return 0.0
    return None


def parse_weights(text: str, dist: Optional[DistributionSpec] = None, alpha: Optional[float] = None
                  ) -> WeightScheme:
    """Parse ``a=<rule>,b=<rule>``.

    a: ``1/k``, ``log^p(k)/k``, ``const:v``, ``1/c``; b: ``log^p(n)``,
    ``Cn_logCn``, ``n^g``.  ``1/c`` and ``Cn_logCn`` take c_k from the
    ratio family ``dist``.
    """
    items = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, val = part.partition("=")
        if not sep or key.strip() not in ("a", "b"):
            raise ConfigError(f"bad weight item {part!r}")
        items[key.strip()] = val.strip()
    if set(items) != {"a", "b"}:
        raise ConfigError(f"weights need both a= and b=: {text!r}")

    def cseq():
        c = getattr(dist, "c", None)
        if c is None:
            raise ConfigError("1/c and Cn_logCn need a ratioA or ratioB distribution")
        return c

    av, bv = items["a"], items["b"]
    try:
        if av == "1/k":
            a = InvK()
        elif av == "1/c":
            a = InvC(cseq())
        elif av.startswith("const:"):
            a = ConstA(float(av[6:]))
        elif av.startswith("log^") and av.endswith("(k)/k"):
            a = LogPowOverK(float(av[4:-5]))
        else:
            raise ConfigError(f"bad a rule {av!r}")
        if bv == "Cn_logCn":
            b = CnLogCn(cseq())
        elif bv.startswith("log^") and bv.endswith("(n)"):
            b = LogPow(float(bv[4:-3]))
        elif bv.startswith("n^"):
            b = NPow(float(bv[2:]))
        else:
            raise ConfigError(f"bad b rule {bv!r}")
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"bad weight rule in {text!r}") from None
    if alpha is None:
        alpha = dist.tail_profile.alpha if dist is not None else 1.0
    limit = known_limit(dist, a, b) if dist is not None else None
    return WeightScheme(a, b, alpha, limit)


# ---------------------------------------------------------------------------
# conditions and limit constants


def weight_ratio(w: WeightScheme, n: int) -> float:
    """sum_{k<=n} a_k^alpha / b_n^alpha."""
    if n < 1:
        raise DomainError("n must be >= 1")
    a = w.a_values(n)
    return math.fsum(a ** w.alpha) / w.b_value(n) ** w.alpha


class SequenceStats(NamedTuple):
    n: int
    C_n: float
    ell_n: float
    kappa_n: float
    m_n: float


def sequence_stats(cseq, n: int) -> SequenceStats:
    if n < 1:
        raise DomainError("n must be >= 1")
    cn = inv_c_sum(cseq, n)
    if not cn > 1:
        raise DomainError(f"C_n = {cn} must exceed 1")
    k = np.arange(1, n + 1)
    c = np.asarray(cseq(k), dtype=float)
    norm = cn * math.log(cn)
    ell = math.fsum(np.log(c) / c) / norm
    kappa = n / norm
    m = math.fsum(np.log1p(1.0 / c) / c) / norm
    return SequenceStats(n, cn, ell, kappa, m)


class RatioALimits(NamedTuple):
    ell_n: float
    kappa_n: float
    limit: float


class RatioBLimits(NamedTuple):
    m_n: float
    limit: float


def limits_ratioA(cseq, n: int) -> RatioALimits:
    s = sequence_stats(cseq, n)
    return RatioALimits(s.ell_n, s.kappa_n, s.ell_n + 1.0 + s.kappa_n)


def limits_ratioB(cseq, n: int) -> RatioBLimits:
    s = sequence_stats(cseq, n)
    return RatioBLimits(s.m_n, 1.0 - s.m_n)


def centering(spec: DistributionSpec, w: WeightScheme, n: int) -> float:
    """(1/b_n) sum_k a_k E[Y_k I(Y_k <= b_n/a_k)]; zero weights contribute nothing."""
    if n < 1:
        raise DomainError("n must be >= 1")
    a = w.a_values(n)
    bn = w.b_value(n)
    k = np.arange(1, n + 1)
    pos = a > 0
    terms = a[pos] * np.asarray(spec.y_truncated_mean(k[pos], bn / a[pos]), dtype=float)
    return math.fsum(terms) / bn


# ---------------------------------------------------------------------------
# tails of R_n


def _div(num, den):
    """num/den, kept rational when both sides are ints or Fractions."""
    if isinstance(num, (int, Fraction)) and isinstance(den, (int, Fraction)):
        return Fraction(num) / den
    return num / den


def exact_tail_constant_scheme(c_phi, d_y, spec: DistributionSpec, n, x):
    """F_n(c(1+d) / (ceil(x c + (x-1) d c) + c d)) for phi = c, y = d.

    This is P(R_n >= x): the set {R_n >= x} is {B_{n+1} >= ceil(...)}.  It
    differs from P(R_n > x) only where x c (1+d) - c d is an integer.
    """
    if np.any(np.asarray(x) < 1):
        raise DomainError("x must be >= 1")
    s = safe_ceil(x * c_phi + (x - 1) * d_y * c_phi)
    return spec.cdf_right(n, _div(c_phi * (1 + d_y), s + c_phi * d_y))


def exact_strict_tail_constant_scheme(c_phi, d_y, spec: DistributionSpec, n, x):
    """P(R_n > x) for phi = c, y = d."""
    if np.any(np.asarray(x) < 1):
        raise DomainError("x must be >= 1")
    s = safe_floor(x * c_phi + (x - 1) * d_y * c_phi) + 1
    return spec.cdf_right(n, _div(c_phi * (1 + d_y), s + c_phi * d_y))


def joint_tail_two_step(scheme, x, y, k_max: int = 10**6):
    """P(R_1 >= x, R_2 >= y) by enumerating the law of B_2.

    Returns ``(partial, remainder)``: the sum over B_2 <= k_max and an upper
    bound on the omitted mass, so the true value lies in
    ``[partial, partial + remainder]``.  Works for any scheme.
    """
    if x < 1 or y < 1:
        raise DomainError("x and y must be >= 1")
    dist = scheme.dist
    b1 = scheme.b1
    y1 = float(scheme.y_rule(1, np.array([b1], dtype=float)))
    phi1 = float(scheme.phi(1, b1))
    a1, s1 = phi1 * (1 + y1), phi1 * y1
    lo = int(tail_threshold(phi1, y1, x))
    if lo > k_max:
        return 0.0, float(dist.cdf_right(1, a1 / (lo + s1)))
    h = np.arange(lo, k_max + 1, dtype=float)
    p_h = np.asarray(dist.mass(1, a1 / (h + 1 + s1), a1 / (h + s1)), dtype=float)
    hist = np.column_stack([np.full_like(h, b1), h])
    y2 = np.broadcast_to(np.asarray(scheme.y_rule(2, hist), dtype=float), h.shape)
    phi2 = np.broadcast_to(np.asarray(scheme.phi(2, h), dtype=float), h.shape)
    s2 = tail_threshold(phi2, y2, y)
    z = np.asarray(dist.cdf_right(2, phi2 * (1 + y2) / (s2 + phi2 * y2)), dtype=float)
    remainder = float(dist.cdf_right(1, a1 / (k_max + 1 + s1)))
    return math.fsum(p_h * z), remainder


def tail_sandwich(spec: DistributionSpec, n, x):
    """(F_n(1/(x+1)), F_n(1/x)); brackets P(R_n > x) whenever phi >= 1."""
    if np.any(np.asarray(x) < 1):
        raise DomainError("x must be >= 1")
    return spec.cdf(n, 1 / (x + 1)), spec.cdf(n, 1 / x)


def dependence_bound(spec: DistributionSpec, i, j, x, y):
    """M [F_i(1/x)/y^2 + F_j(1/y)/x^2]."""
    M = spec.tail_profile.lipschitz_M
    if M is None:
        raise NoLipschitzConstant(f"{spec} has no finite Lipschitz constant")
    if x < 1 or y < 1:
        raise DomainError("x and y must be >= 1")
    return M * (spec.cdf(i, 1 / x) / (y * y) + spec.cdf(j, 1 / y) / (x * x))


class TailRatio(NamedTuple):
    value: float
    underflow: bool


def uniform_tail_ratio(c_phi, d_y, spec: DistributionSpec, n, x) -> TailRatio:
    """P(R_n >= x) / P(Y_n > x) for a constant scheme."""
    num = exact_tail_constant_scheme(c_phi, d_y, spec, n, x)
    den = spec.y_tail(n, x)
    if not den > 0:
        return TailRatio(math.nan, True)
    return TailRatio(num / den, False)


# ---------------------------------------------------------------------------
# truncation


@dataclass(frozen=True)
class TruncationPlan:
    b: float = 2.0
    gamma: float = 1.2

    def __post_init__(self):
        if self.b < 2:
            raise ConfigError(f"truncation exponent b must be >= 2, got {self.b}")

    def level(self, n):
        """c_n = n log^b n."""
        n = np.asarray(n, dtype=float)
        out = n * np.log(n) ** self.b
        return float(out) if out.ndim == 0 else out

    def d(self, n):
        return float(n) ** self.gamma

    def describe(self) -> str:
        return f"trunc.b={self.b:g},gamma={self.gamma:g}"


def parse_plan(text: str) -> TruncationPlan:
    vals = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in ("trunc.b", "gamma"):
            raise ConfigError(f"bad plan item {part!r}")
        try:
            vals[key] = float(val)
        except ValueError:
            raise ConfigError(f"bad plan value {part!r}") from None
    return TruncationPlan(vals.get("trunc.b", 2.0), vals.get("gamma", 1.2))


def g_trunc(x, n, plan: TruncationPlan):
    """Clamp x to [-c_n, c_n]."""
    if np.any(np.asarray(n) < 2):
        raise DomainError("n must be >= 2")
    cn = plan.level(n)
    return np.clip(x, -cn, cn) if isinstance(x, np.ndarray) or np.ndim(cn) else min(max(x, -cn), cn)


def expected_truncated_ratio(c_phi: int, d_y: float, spec: DistributionSpec, k, level):
    """E[min(R_k, L)] for the constant scheme, vectorised over (k, L).

    For L >= 1 this is 1 + int_1^L P(R_k > t) dt.  With v = a t - b
    (a = c(1+d), b = c d) the tail is the step function
    F(a / (ceil(v) + b)), so the integral is a finite sum over digits that
    digamma evaluates in closed form for the uniform and ratio families.
    """
    k = np.atleast_1d(np.asarray(k))
    L = np.broadcast_to(np.asarray(level, dtype=float), k.shape).astype(float)
    if spec.tail_profile.alpha != 1:
        raise ConfigError("closed-form truncated means need a tail exponent of 1")
    c = float(c_phi)
    a = c * (1 + d_y)
    b = c * d_y
    out = np.where(L < 1, L, 1.0)
    big = L >= 1
    if not big.any():
        return out
    kk, LL = k[big], L[big]
    V = a * LL - b
    m = np.floor(V)

    def steps_sum(lo, hi, shift):
        # sum_{j=lo}^{hi} a/(j+shift) for integer lo <= hi+1
        return np.where(hi >= lo, a * (digamma(hi + 1 + shift) - digamma(lo + shift)), 0.0)

    def G(j):
        return np.asarray(spec.cdf_right(kk, a / (j + b)), dtype=float)

    lo = c + 1.0
    if isinstance(spec, Uniform):
        s = steps_sum(lo, m, b)
    elif isinstance(spec, RatioB):
        cn = np.asarray(spec.c(kk), dtype=float)
        s = steps_sum(lo, m, b + cn * a)
    elif isinstance(spec, RatioA):
        cn = np.asarray(spec.c(kk), dtype=float)
        # digits j <= j_star sit where F = 1
        j_star = np.floor(a * (1 + cn) - b)
        ones = np.clip(np.minimum(m, j_star) - c, 0.0, None)
        s = ones + steps_sum(np.maximum(lo, j_star + 1), m, b - cn * a)
    else:
        raise ConfigError(f"no closed form for {spec}")
    integral = (s + (V - m) * G(m + 1)) / a
    out[big] = 1.0 + integral
    return out
