"""The four distribution families F_n and the laws of Y_n = 1/U_n, U_n ~ F_n.

Every family lives on [0, 1].  The per-index parameter sequence ``c_n`` of
the two ratio families is given by a small callable (:class:`ConstC` or
:class:`PowerC`) that accepts scalar or array indices.

Scalar calls go through plain Python arithmetic, so rational inputs
(``fractions.Fraction``) stay exact for the rational families.  Array calls
are vectorised with numpy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate

from .errors import ConfigError, QuadratureBudgetExceeded

__all__ = [
    "ConstC",
    "PowerC",
    "TailProfile",
    "DistributionSpec",
    "Uniform",
    "Power",
    "RatioA",
    "RatioB",
    "parse_c",
    "parse_dist",
    "PSI_TOLERANCE",
]

PSI_TOLERANCE = 1e-6


def _is_scalar(*args) -> bool:
    return all(np.ndim(a) == 0 and not isinstance(a, np.ndarray) for a in args)


def _clip01(p):
    if _is_scalar(p):
        return min(max(p, 0), 1)
    return np.clip(p, 0.0, 1.0)


# ---------------------------------------------------------------------------
# parameter sequences


@dataclass(frozen=True)
class ConstC:
    """c_n = value for every n."""

    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ConfigError(f"c must be positive, got {self.value}")

    def __call__(self, n):
        if _is_scalar(n):
            return self.value
        return np.full(np.shape(n), float(self.value))

    @property
    def sup(self) -> float:
        return float(self.value)

    @property
    def beta(self) -> float:
        return 0.0

    def __str__(self):
        return f"const={self.value:g}"


@dataclass(frozen=True)
class PowerC:
    """c_n = n^(-beta)."""

    beta: float

    def __call__(self, n):
        if _is_scalar(n):
            return float(n) ** (-self.beta)
        return np.asarray(n, dtype=float) ** (-self.beta)

    @property
    def sup(self) -> float:
        return 1.0 if self.beta >= 0 else math.inf

    def __str__(self):
        return f"k^-{self.beta:g}"


def parse_c(text: str):
    """Parse ``const=<v>``, ``k^-<beta>`` or a bare positive number."""
    t = text.strip()
    try:
        if t.startswith("const="):
            return ConstC(float(t[len("const="):]))
        if t.startswith("const:"):
            return ConstC(float(t[len("const:"):]))
        if t.startswith("k^-"):
            return PowerC(float(t[3:]))
        return ConstC(float(t))
    except ValueError as exc:
        raise ConfigError(f"cannot parse c sequence {text!r}: {exc}") from None


# ---------------------------------------------------------------------------
# families


class TailProfile(NamedTuple):
    alpha: float
    c_unif: float
    lipschitz_M: Optional[float]


class DistributionSpec:
    """Common interface of the four families.

    ``cdf`` follows the left-limit convention at the RatioB jump
    (``cdf(1) = 1/(1+c_n)``); :meth:`mass` is the interval probability
    ``P(lo < U <= hi)`` and always counts the atom at 1.
    """

    family = "abstract"

    def cdf(self, n, x):
        raise NotImplementedError

    def quantile(self, n, p):
        raise NotImplementedError

    def y_tail(self, n, y):
        raise NotImplementedError

    def y_truncated_mean(self, n, x):
        raise NotImplementedError

    @property
    def tail_profile(self) -> TailProfile:
        raise NotImplementedError

    # pieces of the law of Y used by psi and the quadrature checks
    def y_lower(self, n) -> float:
        return 1.0

    def y_density(self, n, v):
        raise NotImplementedError

    def y_atom(self, n) -> float:
        """Probability of the atom ``Y = 1``."""
        return 0.0

    def cdf_right(self, n, x):
        return self.cdf(n, x)

    def mass(self, n, lo, hi):
        """P(lo < U <= hi)."""
        return _clip01(self.cdf_right(n, hi) - self.cdf_right(n, lo))

    def psi(self, n, t: float) -> complex:
        """Characteristic function of Y_n at ``t``.

        The continuous part of the law of Y is integrated over [y_lower, inf)
        with QUADPACK's Fourier-integral routine; the RatioB atom at 1 is
        added in closed form.
        """
        t = float(t)
        if t == 0.0:
            return complex(1.0, 0.0)
        w = abs(t)
        v0 = float(self.y_lower(n))
        dens = lambda v: float(self.y_density(n, v))  # noqa: E731
        re_out = integrate.quad(dens, v0, np.inf, weight="cos", wvar=w, full_output=1)
        im_out = integrate.quad(dens, v0, np.inf, weight="sin", wvar=w, full_output=1)
        err = re_out[1] + im_out[1]
        if len(re_out) > 3 or len(im_out) > 3 or not math.isfinite(err) or err > PSI_TOLERANCE:
            raise QuadratureBudgetExceeded(
                f"psi({self}, n={n}, t={t}): error estimate {err:.3g} exceeds {PSI_TOLERANCE:g}"
            )
        im = im_out[0] if t > 0 else -im_out[0]
        val = complex(re_out[0], im)
        atom = self.y_atom(n)
        if atom:
            val += atom * complex(math.cos(t), math.sin(t))
        return val

    def __str__(self):
        return self.family


@dataclass(frozen=True)
class Uniform(DistributionSpec):
    family = "uniform"

    def cdf(self, n, x):
        return _clip01(x)

    def quantile(self, n, p):
        return _clip01(p)

    def y_tail(self, n, y):
        if _is_scalar(y):
            return 1 if y <= 1 else 1 / y
        y = np.asarray(y, dtype=float)
        return np.where(y <= 1, 1.0, 1.0 / np.maximum(y, 1.0))

    def y_truncated_mean(self, n, x):
        if _is_scalar(x):
            return math.log(x) if x >= 1 else 0.0
        x = np.asarray(x, dtype=float)
        return np.where(x >= 1, np.log(np.maximum(x, 1.0)), 0.0)

    def y_density(self, n, v):
        return 1.0 / (v * v)

    @property
    def tail_profile(self):
        return TailProfile(1.0, 1.0, 1.0)


@dataclass(frozen=True)
class Power(DistributionSpec):
    alpha: float = 0.5
    family = "power"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"power family needs alpha in (0,1), got {self.alpha}")

    def cdf(self, n, x):
        if _is_scalar(x):
            return 0.0 if x <= 0 else (1.0 if x >= 1 else float(x) ** self.alpha)
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return x ** self.alpha

    def quantile(self, n, p):
        if _is_scalar(p):
            return float(_clip01(p)) ** (1.0 / self.alpha)
        return np.clip(np.asarray(p, dtype=float), 0.0, 1.0) ** (1.0 / self.alpha)

    def y_tail(self, n, y):
        if _is_scalar(y):
            return 1.0 if y <= 1 else float(y) ** (-self.alpha)
        y = np.maximum(np.asarray(y, dtype=float), 1.0)
        return y ** (-self.alpha)

    def y_truncated_mean(self, n, x):
        a = self.alpha
        k = a / (1 - a)
        if _is_scalar(x):
            return k * (float(x) ** (1 - a) - 1) if x >= 1 else 0.0
        x = np.asarray(x, dtype=float)
        return np.where(x >= 1, k * (np.maximum(x, 1.0) ** (1 - a) - 1), 0.0)

    def y_density(self, n, v):
        return self.alpha * v ** (-self.alpha - 1)

    @property
    def tail_profile(self):
        # density alpha x^(alpha-1) is unbounded at 0: no Lipschitz constant
        return TailProfile(self.alpha, 1.0, None)

    def __str__(self):
        return f"power:alpha={self.alpha:g}"


@dataclass(frozen=True)
class RatioA(DistributionSpec):
    """F_n(x) = x / (1 - c_n x) on [0, 1/(1+c_n)), 1 beyond."""

    c: object = ConstC(1.0)
    family = "ratioA"

    def __post_init__(self):
        if not math.isfinite(self.c.sup):
            raise ConfigError("ratioA needs sup_n c_n < infinity")

    def cdf(self, n, x):
        c = self.c(n)
        if _is_scalar(x, n):
            if x <= 0:
                return 0
            if x * (1 + c) >= 1:
                return 1
            return _clip01(x / (1 - c * x))
        x = np.asarray(x, dtype=float)
        top = x * (1 + c) >= 1
        safe = np.where(top | (x <= 0), 0.0, x)
        return np.clip(np.where(top, 1.0, safe / (1 - c * safe)), 0.0, 1.0)

    def quantile(self, n, p):
        c = self.c(n)
        p = _clip01(p)
        return p / (1 + c * p)

    def y_tail(self, n, y):
        c = self.c(n)
        if _is_scalar(y, n):
            return 1 if y <= 1 + c else 1 / (y - c)
        y = np.asarray(y, dtype=float)
        low = y <= 1 + c
        return np.where(low, 1.0, 1.0 / np.where(low, 1.0, y - c))

    def y_truncated_mean(self, n, x):
        # antiderivative of t/(t-c)^2 is log(t-c) - c/(t-c); lower limit 1+c
        c = self.c(n)
        if _is_scalar(x, n):
            if x <= 1 + c:
                return 0.0
            return math.log(x - c) - c / (x - c) + c
        x = np.asarray(x, dtype=float)
        ok = x > 1 + c
        xs = np.where(ok, x, 1 + c + 1.0)
        return np.where(ok, np.log(xs - c) - c / (xs - c) + c, 0.0)

    def y_lower(self, n):
        return 1.0 + self.c(n)

    def y_density(self, n, v):
        c = self.c(n)
        return 1.0 / ((v - c) * (v - c))

    @property
    def tail_profile(self):
        return TailProfile(1.0, 1.0, (1.0 + self.c.sup) ** 2)

    def __str__(self):
        return f"ratioA:c={self.c}"


@dataclass(frozen=True)
class RatioB(DistributionSpec):
    """F_n(x) = x / (1 + c_n x) on [0, 1], 1 for x > 1 (atom c_n/(1+c_n) at 1)."""

    c: object = ConstC(1.0)
    family = "ratioB"

    def cdf(self, n, x):
        c = self.c(n)
        if _is_scalar(x, n):
            if x <= 0:
                return 0
            if x > 1:
                return 1
            return _clip01(x / (1 + c * x))
        x = np.asarray(x, dtype=float)
        xs = np.clip(x, 0.0, 1.0)
        return np.clip(np.where(x > 1, 1.0, xs / (1 + c * xs)), 0.0, 1.0)

    def cdf_right(self, n, x):
        if _is_scalar(x):
            return 1 if x >= 1 else self.cdf(n, x)
        return np.where(np.asarray(x) >= 1, 1.0, self.cdf(n, x))

    def quantile(self, n, p):
        c = self.c(n)
        if _is_scalar(p, n):
            p = _clip01(p)
            if p * (1 + c) >= 1:
                return 1
            return p / (1 - c * p)
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        atom = p * (1 + c) >= 1
        ps = np.where(atom, 0.0, p)
        return np.where(atom, 1.0, ps / (1 - c * ps))

    def y_tail(self, n, y):
        c = self.c(n)
        if _is_scalar(y, n):
            return 1 if y < 1 else 1 / (y + c)
        y = np.asarray(y, dtype=float)
        return np.where(y < 1, 1.0, 1.0 / (np.maximum(y, 1.0) + c))

    def y_truncated_mean(self, n, x):
        c = self.c(n)
        if _is_scalar(x, n):
            if x < 1:
                return 0.0
            return math.log((x + c) / (1 + c)) + c / (x + c)
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, 1.0)
        return np.where(x >= 1, np.log((xs + c) / (1 + c)) + c / (xs + c), 0.0)

    def y_density(self, n, v):
        c = self.c(n)
        return 1.0 / ((v + c) * (v + c))

    def y_atom(self, n):
        c = self.c(n)
        return c / (1 + c)

    @property
    def tail_profile(self):
        return TailProfile(1.0, 1.0, None)

    def __str__(self):
        return f"ratioB:c={self.c}"


def parse_dist(text: str) -> DistributionSpec:
    """Parse ``uniform``, ``power:alpha=0.5``, ``ratioA:c=k^-1``, ``ratioB:c=1``."""
    t = text.strip()
    name, _, rest = t.partition(":")
    key = name.strip().lower()
    params = {}
    if rest:
        k, sep, v = rest.partition("=")
        if not sep:
            raise ConfigError(f"bad distribution parameter in {text!r}")
        params[k.strip()] = v.strip()
    if key == "uniform":
        if params:
            raise ConfigError(f"uniform takes no parameters: {text!r}")
        return Uniform()
    if key == "power":
        if set(params) != {"alpha"}:
            raise ConfigError(f"power needs alpha=<value>: {text!r}")
        try:
            return Power(float(params["alpha"]))
        except ValueError:
            raise ConfigError(f"bad alpha in {text!r}") from None
    if key in ("ratioa", "ratiob"):
        if set(params) != {"c"}:
            raise ConfigError(f"{name} needs c=<sequence>: {text!r}")
        cseq = parse_c(params["c"])
        return RatioA(cseq) if key == "ratioa" else RatioB(cseq)
    raise ConfigError(f"unknown distribution family {name!r}")
