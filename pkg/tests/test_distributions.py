import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import sici

from opplab.distributions import ConstC, Power, PowerC, RatioA, RatioB, Uniform, parse_c, parse_dist
from opplab.errors import ConfigError

FAMILIES = [Uniform(), Power(0.5), Power(0.2), RatioA(ConstC(1.0)), RatioA(PowerC(1.0)),
            RatioB(ConstC(1.0)), RatioB(PowerC(0.5))]


def uniform_psi_oracle(t):
    # E exp(it/U) = int_1^inf e^{itv} v^-2 dv, in terms of Si and Ci
    si, ci = sici(t)
    return complex(math.cos(t) - t * (math.pi / 2 - si), math.sin(t) - t * ci)


# --- worked examples -----------------------------------------------------

def test_cdf_examples():
    assert Uniform().cdf(1, 0.3) == 0.3
    assert RatioA(ConstC(1)).cdf(1, 0.4) == pytest.approx(2 / 3, abs=1e-15)
    b = RatioB(ConstC(1))
    assert b.cdf(1, 1.0) == pytest.approx(0.5)
    assert b.cdf(1, 1.01) == 1


def test_quantile_examples():
    assert Uniform().quantile(1, 0.7) == 0.7
    assert RatioA(ConstC(1)).quantile(1, 2 / 3) == pytest.approx(0.4, abs=1e-15)
    assert RatioB(ConstC(1)).quantile(1, 0.9) == 1.0


def test_y_tail_examples():
    assert Uniform().y_tail(1, 4) == 0.25
    assert RatioA(ConstC(1)).y_tail(1, 3) == pytest.approx(0.5)
    assert RatioB(ConstC(1)).y_tail(1, 1) == pytest.approx(0.5)


def test_truncated_mean_examples():
    assert Uniform().y_truncated_mean(1, math.e) == pytest.approx(1.0, abs=1e-15)
    assert RatioB(ConstC(1)).y_truncated_mean(1, 1) == pytest.approx(0.5, abs=1e-15)
    assert Power(0.5).y_truncated_mean(1, 4) == pytest.approx(1.0, abs=1e-15)


def test_exact_arithmetic_with_fractions():
    assert Uniform().cdf(1, Fraction(1, 3)) == Fraction(1, 3)
    assert RatioA(ConstC(1)).cdf(1, Fraction(2, 5)) == Fraction(2, 3)


# --- invariants --------------------------------------------------------------

@pytest.mark.parametrize("d", FAMILIES, ids=str)
def test_cdf_boundary_and_monotone(d):
    x = np.linspace(-0.5, 1.5, 1000)
    for n in (1, 2, 5, 50, 1000):
        F = np.asarray(d.cdf(n, x))
        assert np.all(np.diff(F) >= 0)
        assert d.cdf(n, 0.0) == 0
        assert np.all((F >= 0) & (F <= 1))
        assert d.cdf(n, 1.5) == 1


def test_ratioB_left_limit_convention():
    # cdf(1) is the left limit; the atom c/(1+c) at U = 1 is in cdf_right
    d = RatioB(ConstC(3.0))
    assert d.cdf(1, 1.0) == pytest.approx(0.25)
    assert d.cdf_right(1, 1.0) == 1
    assert d.mass(1, 0.999999, 1.0) == pytest.approx(0.75, abs=1e-5)
    assert d.y_atom(1) == pytest.approx(0.75)


@pytest.mark.parametrize("d", FAMILIES, ids=str)
@given(p=st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_quantile_is_generalized_inverse(d, p):
    # smallest x with cdf(x) >= p
    n = 3
    x = d.quantile(n, p)
    assert 0 <= x <= 1
    assert d.cdf_right(n, x) >= p - 1e-12
    if x > 1e-9:
        assert d.cdf(n, x * (1 - 1e-9)) <= p + 1e-12


@pytest.mark.parametrize("d", FAMILIES, ids=str)
def test_scalar_and_vector_agree(d):
    x = np.linspace(0, 1, 17)
    for n in (1, 4):
        vec = np.asarray(d.cdf(n, x))
        sc = np.array([float(d.cdf(n, float(v))) for v in x])
        np.testing.assert_allclose(vec, sc, rtol=0, atol=1e-15)
        y = np.array([1.0, 1.5, 2.0, 3.0, 10.0, 1e6])
        np.testing.assert_allclose(np.asarray(d.y_tail(n, y)), [float(d.y_tail(n, float(v))) for v in y],
                                   rtol=1e-15)


@pytest.mark.parametrize("d", FAMILIES, ids=str)
def test_y_tail_matches_cdf(d):
    # P(Y > y) = P(U < 1/y) = F(1/y) from the left
    for n in (1, 3):
        for y in (1.0 + 1e-9, 1.7, 2.5, 9.0, 1e4):
            assert d.y_tail(n, y) == pytest.approx(d.cdf(n, 1 / y), rel=1e-7)


@pytest.mark.parametrize("d", FAMILIES, ids=str)
def test_truncated_mean_vs_quadrature(d):
    rng = np.random.default_rng(5)
    for _ in range(5):
        n = int(rng.integers(1, 30))
        x = float(np.exp(rng.uniform(0, np.log(1e5))))
        v0 = d.y_lower(n)
        cont = 0.0
        if x > v0:
            pts = [v0 * 10**j for j in range(1, 8) if v0 * 10**j < x]
            cont = integrate.quad(lambda v: v * d.y_density(n, v), v0, x, points=pts or None,
                                  epsabs=1e-13, epsrel=1e-13, limit=400)[0]
        assert d.y_truncated_mean(n, x) == pytest.approx(cont + d.y_atom(n), abs=1e-8)


@pytest.mark.parametrize("d", FAMILIES, ids=str)
def test_tail_profile_uniformity(d):
    prof = d.tail_profile
    devs = [max(abs(d.cdf(n, t) / t**prof.alpha - prof.c_unif) for n in range(1, 11)) for t in (1e-2, 1e-3, 1e-4)]
    assert all(b <= a for a, b in zip(devs, devs[1:]))
    assert devs[-1] < 1e-3


@pytest.mark.parametrize("d", [f for f in FAMILIES if f.tail_profile.lipschitz_M is not None], ids=str)
def test_lipschitz_constant(d):
    M = d.tail_profile.lipschitz_M
    rng = np.random.default_rng(11)
    x, y = rng.uniform(0, 1, 10**4), rng.uniform(0, 1, 10**4)
    hi, lo = np.maximum(x, y), np.minimum(x, y)
    for n in (1, 2, 10):
        gap = np.asarray(d.cdf(n, hi)) - np.asarray(d.cdf(n, lo))
        assert np.all(gap <= M * (hi - lo) * (1 + 1e-12) + 1e-300)


def test_tail_profiles():
    assert Uniform().tail_profile == (1.0, 1.0, 1.0)
    assert Power(0.3).tail_profile.lipschitz_M is None
    assert RatioA(ConstC(2.0)).tail_profile.lipschitz_M == 9.0
    assert RatioB(ConstC(2.0)).tail_profile.lipschitz_M is None


# --- psi -----------------------------------------------------------------------

@pytest.mark.parametrize("t", [0.01, 0.05, 0.3, 1.0, -0.05])
def test_psi_uniform_matches_sine_cosine_integrals(t):
    want = uniform_psi_oracle(abs(t))
    if t < 0:
        want = want.conjugate()
    assert abs(Uniform().psi(1, t) - want) < 1e-8


def test_psi_known_value():
    v = Uniform().psi(1, 0.05)
    assert v.real == pytest.approx(0.92271009686, abs=1e-9)
    assert v.imag == pytest.approx(0.17093624645, abs=1e-9)


@pytest.mark.parametrize("d", FAMILIES, ids=str)
def test_psi_basic_properties(d):
    assert d.psi(2, 0.0) == 1
    for t in (0.02, 0.2, 1.0):
        v = d.psi(2, t)
        assert abs(v) <= 1 + 1e-9
        assert abs(d.psi(2, -t) - v.conjugate()) < 1e-12


@pytest.mark.parametrize("d", [Uniform(), RatioA(ConstC(1.0)), RatioB(ConstC(1.0))], ids=str)
def test_psi_vs_monte_carlo(d):
    t, N = 0.05, 10**6
    rng = np.random.default_rng(2024)
    u = np.asarray(d.quantile(1, 1 - rng.random(N)))
    z = np.exp(1j * t / u)
    se = math.sqrt((z.real.var() + z.imag.var()) / N)
    assert abs(z.mean() - d.psi(1, t)) <= 3 * se + 1e-9


# --- parsing ---------------------------------------------------------------------

def test_parse_dist_and_c():
    assert parse_dist("uniform") == Uniform()
    assert parse_dist("power:alpha=0.5") == Power(0.5)
    assert parse_dist("ratioA:c=k^-1") == RatioA(PowerC(1.0))
    assert parse_dist("ratioB:c=1") == RatioB(ConstC(1.0))
    assert parse_dist("ratioB:c=const=2") == RatioB(ConstC(2.0))
    assert parse_c("k^-2")(np.array([1, 2]))[1] == pytest.approx(0.25)


@pytest.mark.parametrize("bad", ["normal", "power:alpha=1.5", "power:alpha=0", "ratioA:c=-1",
                                 "ratioA:c=k^1", "ratioB:c=foo"])
def test_parse_dist_rejects(bad):
    with pytest.raises(ConfigError):
        parse_dist(bad)
