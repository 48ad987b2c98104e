"""Digit chain B_n of a generalized Oppenheim expansion and the ratios R_n.

Given ``B_n = h`` and ``Y_n = y`` the next digit is drawn by inverse
transform: ``U' = F_n^{-1}(p)`` and ``B_{n+1}`` is the unique integer
``k >= phi_n(h)`` with ``delta(phi, k+1, y) < U' <= delta(phi, k, y)``.
The induced law of ``B_{n+1}`` is then exactly
``F_n(delta(phi, k, y)) - F_n(delta(phi, k+1, y))``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .distributions import DistributionSpec, Uniform, parse_dist
from .errors import ConfigError, DomainError
from .rng import open_uniforms

__all__ = [
    "MAX_EXACT_DIGIT",
    "ConstPhi",
    "IdentityPhi",
    "ConstY",
    "ExpansionScheme",
    "Trajectory",
    "Batch",
    "delta",
    "next_digit",
    "simulate",
    "simulate_batch",
    "iter_ratios",
    "safe_ceil",
    "safe_floor",
    "tail_threshold",
    "luroth",
    "parse_scheme",
]

MAX_EXACT_DIGIT = 2.0 ** 53
INT_EPS = 1e-9


def safe_ceil(v):
    """Ceiling that treats values within 1e-9 of an integer as that integer.

    Exact for ints and Fractions; vectorised for arrays.
    """
    if isinstance(v, np.ndarray):
        r = np.round(v)
        return np.where(np.abs(v - r) <= INT_EPS, r, np.ceil(v))
    if isinstance(v, float):
        r = round(v)
        return float(r) if abs(v - r) <= INT_EPS else float(math.ceil(v))
    return math.ceil(v)


def safe_floor(v):
    if isinstance(v, np.ndarray):
        r = np.round(v)
        return np.where(np.abs(v - r) <= INT_EPS, r, np.floor(v))
    if isinstance(v, float):
        r = round(v)
        return float(r) if abs(v - r) <= INT_EPS else float(math.floor(v))
    return math.floor(v)


def delta(phi_val, k, y):
    """delta(h, k, y) = phi(h)(1+y) / (k + phi(h) y), with ``phi_val = phi(h)``."""
    if k < phi_val:
        raise DomainError(f"digit {k} is below phi = {phi_val}")
    if phi_val <= 0 or y < 0:
        raise DomainError("phi must be positive and y non-negative")
    return phi_val * (1 + y) / (k + phi_val * y)


def tail_threshold(phi_val, y, x):
    """Smallest digit k with 1/delta(phi, k, y) >= x, i.e. ceil(x phi + (x-1) y phi)."""
    return safe_ceil(x * phi_val + (x - 1) * y * phi_val)


# ---------------------------------------------------------------------------
# scheme pieces


@dataclass(frozen=True)
class ConstPhi:
    value: int = 1

    def __post_init__(self):
        if int(self.value) != self.value or self.value < 1:
            raise ConfigError(f"phi must be a positive integer, got {self.value}")

    def __call__(self, n, h):
        if np.ndim(h):
            return np.full(np.shape(h), float(self.value))
        return self.value

    def __str__(self):
        return f"const:{self.value}"


@dataclass(frozen=True)
class IdentityPhi:
    def __call__(self, n, h):
        return h

    def __str__(self):
        return "identity"


@dataclass(frozen=True)
class ConstY:
    value: float = 0.0

    def __post_init__(self):
        if not self.value >= 0:
            raise ConfigError(f"y must be non-negative, got {self.value}")

    def __call__(self, n, history):
        h = np.asarray(history)
        if h.ndim > 1:
            return np.full(h.shape[0], float(self.value))
        return self.value

    def __str__(self):
        return f"const:{self.value:g}"


@dataclass(frozen=True)
class ExpansionScheme:
    """(phi_n, y_n, F_n) plus the initial digit.

    ``phi(n, h)`` must return positive integers; ``y_rule(n, history)``
    receives the digits ``h_1..h_n`` (a 1-d array, or 2-d with one row per
    path) and returns non-negative reals.
    """

    phi: Callable = ConstPhi(1)
    y_rule: Callable = ConstY(0.0)
    dist: DistributionSpec = field(default_factory=Uniform)
    b1: int = 1
    name: str = ""

    def __post_init__(self):
        if int(self.b1) != self.b1 or self.b1 < 1:
            raise ConfigError(f"b1 must be a positive integer, got {self.b1}")

    @property
    def is_constant(self) -> bool:
        return isinstance(self.phi, ConstPhi) and isinstance(self.y_rule, ConstY)

    @property
    def label(self) -> str:
        return self.name or self.describe()

    def describe(self) -> str:
        return f"phi={self.phi},y={self.y_rule},dist={self.dist},b1={self.b1}"


def luroth(dist: Optional[DistributionSpec] = None) -> ExpansionScheme:
    """phi = 1, y = 0; with uniform F this is the Lüroth series."""
    return ExpansionScheme(ConstPhi(1), ConstY(0.0), dist or Uniform(), 1, "luroth")


def parse_scheme(text: str) -> ExpansionScheme:
    """Parse ``luroth`` and/or comma separated ``phi=..,y=..,dist=..,b1=..``.

    A leading preset name may be followed by overrides, e.g.
    ``luroth,dist=ratioA:c=k^-1``.
    """
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty scheme")
    phi, y, dist, b1, name = ConstPhi(1), ConstY(0.0), Uniform(), 1, ""
    if "=" not in parts[0]:
        preset = parts.pop(0).lower()
        if preset != "luroth":
            raise ConfigError(f"unknown scheme preset {preset!r}")
        name = "luroth"
    for part in parts:
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"bad scheme item {part!r}")
        if key == "phi":
            if val == "identity":
                phi = IdentityPhi()
            elif val.startswith("const:"):
                try:
                    v = float(val[6:])
                except ValueError:
                    raise ConfigError(f"bad phi {val!r}") from None
                phi = ConstPhi(int(v) if v == int(v) else v)
            else:
                raise ConfigError(f"bad phi {val!r}")
        elif key == "y":
            if not val.startswith("const:"):
                raise ConfigError(f"bad y rule {val!r}")
            try:
                y = ConstY(float(val[6:]))
            except ValueError:
                raise ConfigError(f"bad y rule {val!r}") from None
        elif key == "dist":
            dist = parse_dist(val)
        elif key == "b1":
            try:
                b1 = int(val)
            except ValueError:
                raise ConfigError(f"bad b1 {val!r}") from None
        else:
            raise ConfigError(f"unknown scheme key {key!r}")
    scheme = ExpansionScheme(phi, y, dist, b1)
    if name and scheme == ExpansionScheme():
        return luroth()
    return scheme


# ---------------------------------------------------------------------------
# digit inversion


def _invert(phi_val, y, u):
    """Vectorised digit inversion.

    Returns (digit, ratio, overflow).  Entries whose digit would exceed 2^53
    keep the real value phi(1+y)/u - phi y and ratio 1/u.
    """
    phi_val = np.asarray(phi_val, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        a = phi_val * (1.0 + y)
        b = np.where(y == 0, 0.0, phi_val * y)
        real = a / u - b
    # past the float range (e.g. identity phi on long runs) the digit is +inf
    real = np.where(np.isnan(real), np.inf, real)
    overflow = ~(real <= MAX_EXACT_DIGIT)
    k = np.where(overflow, phi_val, np.maximum(np.floor(np.where(overflow, 0.0, real)), phi_val))
    for _ in range(4):
        # half-open bracket delta(k+1) < u <= delta(k)
        with np.errstate(invalid="ignore"):
            down = (a / (k + b) < u) & (k > phi_val)
            up = a / (k + 1.0 + b) >= u
        if not (down.any() or up.any()):
            break
        k = k - down + (up & ~down)
    k = np.where(overflow, real, k)
    with np.errstate(invalid="ignore"):
        ratio = np.where(overflow, 1.0 / u, (k + b) / a)
    return k, ratio, overflow


def next_digit(scheme: ExpansionScheme, n: int, h_n, y_n: float, p: float):
    """One step of the chain from ``B_n = h_n`` with uniform variate ``p``.

    Returns ``(digit, ratio, draw, overflow)``.
    """
    if h_n < 1:
        raise DomainError("digits must be >= 1")
    if not 0 < p <= 1:
        raise DomainError("p must lie in (0, 1]")
    u = float(scheme.dist.quantile(n, p))
    if u <= 0:
        raise DomainError("quantile returned 0; p too small for this family")
    phi_val = scheme.phi(n, h_n)
    k, r, ov = _invert(phi_val, y_n, u)
    k, r, ov = float(k), float(r), bool(ov)
    return (k if ov else int(k)), r, u, ov


@dataclass(frozen=True)
class Trajectory:
    """One realised path: digits B_1..B_{N+1}, Y_1..Y_N, R_1..R_N and draws U'_1..U'_N."""

    digits: np.ndarray
    overflow: np.ndarray
    y_values: np.ndarray
    ratios: np.ndarray
    draws: Optional[np.ndarray]
    phi_values: np.ndarray
    scheme_label: str = ""
    seed: Optional[int] = None
    stream_id: tuple = ()

    def __len__(self):
        return len(self.ratios)

    def bracket_width(self) -> np.ndarray:
        """A_n = 1 / (phi(B_n)(1 + Y_n)); R_n lies in (1/U'_n - A_n, 1/U'_n]."""
        return 1.0 / (self.phi_values * (1.0 + self.y_values))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "B", "Y", "R", "U", "overflow"])
        n = len(self.ratios)
        for i in range(n + 1):
            b = self.digits[i]
            bs = repr(float(b)) if self.overflow[i] else str(int(b))
            if i < n:
                u = "" if self.draws is None else repr(float(self.draws[i]))
                w.writerow([i + 1, bs, repr(float(self.y_values[i])), repr(float(self.ratios[i])), u,
                            int(self.overflow[i])])
            else:
                w.writerow([i + 1, bs, "", "", "", int(self.overflow[i])])


def _quantiles(dist: DistributionSpec, ks: np.ndarray, p: np.ndarray) -> np.ndarray:
    u = np.asarray(dist.quantile(ks, p), dtype=float)
    # p in (0,1] keeps u > 0 except for underflow in extreme power tails
    return np.maximum(u, np.finfo(float).tiny)


def simulate(scheme: ExpansionScheme, n_steps: int, gen: np.random.Generator,
             keep_draws: bool = True, seed=None, stream_id=()) -> Trajectory:
    """Simulate B_1..B_{n_steps+1} and R_1..R_{n_steps} from one stream."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    p = open_uniforms(gen, n_steps)
    ks = np.arange(1, n_steps + 1)
    u = _quantiles(scheme.dist, ks, p)
    digits = np.empty(n_steps + 1)
    overflow = np.zeros(n_steps + 1, dtype=bool)
    digits[0] = scheme.b1
    if scheme.is_constant:
        c, d = scheme.phi.value, scheme.y_rule.value
        k, r, ov = _invert(float(c), d, u)
        digits[1:] = k
        overflow[1:] = ov
        yv = np.full(n_steps, float(d))
        return Trajectory(digits, overflow, yv, r, u if keep_draws else None,
                          np.full(n_steps, float(c)), scheme.label, seed, stream_id)
    yv = np.empty(n_steps)
    r = np.empty(n_steps)
    phis = np.empty(n_steps)
    for i in range(n_steps):
        n = i + 1
        h = digits[i]
        yn = float(scheme.y_rule(n, digits[: i + 1]))
        if yn < 0:
            raise ConfigError("y rule returned a negative value")
        phi_val = float(scheme.phi(n, h))
        if not overflow[i] and phi_val != int(phi_val):
            raise ConfigError(f"phi returned a non-integer value {phi_val}")
        k, ri, ov = _invert(phi_val, yn, u[i])
        digits[i + 1] = k
        overflow[i + 1] = bool(ov) or overflow[i] and phi_val > MAX_EXACT_DIGIT
        yv[i] = yn
        phis[i] = phi_val
        r[i] = ri
    return Trajectory(digits, overflow, yv, r, u if keep_draws else None,
                      phis, scheme.label, seed, stream_id)


def iter_ratios(scheme: ExpansionScheme, n_steps: int, gen: np.random.Generator,
                chunk: int = 1 << 20) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(first_index, R chunk)`` along one trajectory.

    Constant schemes are streamed chunk by chunk (same variates as
    :func:`simulate`); other schemes are simulated in one piece.
    """
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    if not scheme.is_constant:
        yield 1, simulate(scheme, n_steps, gen, keep_draws=False).ratios
        return
    c, d = float(scheme.phi.value), scheme.y_rule.value
    start = 1
    while start <= n_steps:
        m = min(chunk, n_steps - start + 1)
        p = open_uniforms(gen, m)
        ks = np.arange(start, start + m)
        u = _quantiles(scheme.dist, ks, p)
        yield start, _invert(c, d, u)[1]
        start += m


@dataclass(frozen=True)
class Batch:
    """Many independent paths of equal length; arrays have one row per path."""

    digits: np.ndarray
    overflow: np.ndarray
    y_values: np.ndarray
    ratios: np.ndarray
    draws: np.ndarray
    phi_values: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.ratios.shape[0]

    def closed_tail(self, step: int, x) -> np.ndarray:
        """Indicator of R_step >= x, decided on the digits."""
        i = step - 1
        s = tail_threshold(self.phi_values[:, i], self.y_values[:, i], x)
        return self.digits[:, i + 1] >= s

    def strict_tail(self, step: int, x) -> np.ndarray:
        """Indicator of R_step > x, decided on the digits."""
        i = step - 1
        phi, y = self.phi_values[:, i], self.y_values[:, i]
        return self.digits[:, i + 1] > safe_floor(x * phi + (x - 1) * y * phi)


def simulate_batch(scheme: ExpansionScheme, n_steps: int, n_paths: int,
                   gen: np.random.Generator) -> Batch:
    """Simulate ``n_paths`` independent paths, vectorised across paths."""
    if n_steps < 1 or n_paths < 1:
        raise DomainError("n_steps and n_paths must be >= 1")
    p = open_uniforms(gen, (n_paths, n_steps))
    ks = np.broadcast_to(np.arange(1, n_steps + 1), p.shape)
    u = _quantiles(scheme.dist, ks, p)
    digits = np.empty((n_paths, n_steps + 1))
    overflow = np.zeros_like(digits, dtype=bool)
    digits[:, 0] = scheme.b1
    yv = np.empty((n_paths, n_steps))
    phis = np.empty((n_paths, n_steps))
    r = np.empty((n_paths, n_steps))
    for i in range(n_steps):
        n = i + 1
        yn = np.broadcast_to(np.asarray(scheme.y_rule(n, digits[:, : i + 1]), dtype=float), (n_paths,))
        phi_val = np.broadcast_to(np.asarray(scheme.phi(n, digits[:, i]), dtype=float), (n_paths,))
        if np.any((phi_val != np.floor(phi_val)) & ~overflow[:, i]):
            raise ConfigError("phi returned a non-integer value")
        k, ri, ov = _invert(phi_val, yn, u[:, i])
        digits[:, i + 1] = k
        overflow[:, i + 1] = ov | (overflow[:, i] & (phi_val > MAX_EXACT_DIGIT))
        yv[:, i] = yn
        phis[:, i] = phi_val
        r[:, i] = ri
    return Batch(digits, overflow, yv, r, u, phis)
