import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from csmark.errors import DomainError, InvalidArgumentError
from csmark.sim import (SimSpec, censoring_density, conditional_cdf, conditional_inverse, f0_density,
                        f0_envelope, marginal_cdf, marginal_inverse, sample_censoring, sample_event,
                        sample_events, simulate_dataset, simulate_latent)


def test_f0_examples():
    assert f0_density(0.5, 1.0) == pytest.approx(0.46875)
    assert f0_density(0.5, 0.3) == pytest.approx(0.375 * (0.25 + 0.3))
    assert f0_density(0.0, 0.0) == pytest.approx(0.2625)
    with pytest.raises(DomainError):
        f0_density(1.1, 0.5)
    total, _ = integrate.dblquad(lambda y, x: f0_density(x, y), 0, 1, 0, 2)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_envelope_is_supremum():
    xs, ys = np.meshgrid(np.linspace(0, 1, 201), np.linspace(0, 2, 201))
    assert f0_envelope() == pytest.approx(f0_density(xs, ys).max())


def test_marginal_cdf_oracle():
    assert marginal_cdf(0.0) == 0.0
    assert marginal_cdf(1.0) == 1.0
    val, _ = integrate.quad(lambda u: 0.75 * (u**2 + 1), 0, 0.5)
    assert marginal_cdf(0.5) == pytest.approx(val)
    assert val == pytest.approx(0.40625)


def test_conditional_cdf_oracle():
    for u in (0.0, 0.3, 1.0):
        norm, _ = integrate.quad(lambda v: u**2 + v, 0, 2)
        for v in (0.2, 1.0, 1.7):
            num, _ = integrate.quad(lambda s: u**2 + s, 0, v)
            assert conditional_cdf(v, u) == pytest.approx(num / norm)
    q = np.linspace(0, 1, 11)
    assert conditional_inverse(q, 0.0) == pytest.approx(2 * np.sqrt(q))


def cardano(q):
    # real root of u^3 + 3u - 4q = 0 (depressed cubic, positive discriminant)
    r = np.sqrt(4 * q**2 + 1)
    return np.cbrt(2 * q + r) + np.cbrt(2 * q - r)


@given(st.floats(0, 1))
def test_marginal_inverse_against_cardano(q):
    assert marginal_inverse(np.array([q]))[0] == pytest.approx(cardano(q), abs=1e-11)


@given(st.floats(0, 1), st.floats(0, 1))
def test_conditional_inverse_round_trip(q, u):
    v = conditional_inverse(q, u)
    assert 0 <= v <= 2 + 1e-12
    assert conditional_cdf(v, u) == pytest.approx(q, abs=1e-12)


def test_censoring_law():
    t = sample_censoring(np.random.default_rng(3), 1_000_000)
    assert t.min() >= 0 and t.max() <= 1
    se = np.sqrt(1 / 2 - 4 / 9) / np.sqrt(t.size)
    assert abs(t.mean() - 2 / 3) < 4 * se
    assert abs(np.median(t) - np.sqrt(0.5)) < 2e-3
    assert censoring_density(0.5) == 1.0
    assert censoring_density(1.5) == 0.0


def test_events_in_support(rng):
    x, y = sample_events(rng, 10_000)
    assert x.min() >= 0 and x.max() <= 1 and y.min() >= 0 and y.max() <= 2
    a, b = sample_event(rng)
    assert 0 <= a <= 1 and 0 <= b <= 2


def test_simulate_dataset_contract():
    assert simulate_dataset(SimSpec(0, seed=1)) == []
    x, y, t, z = simulate_latent(SimSpec(5000, seed=9))
    assert np.array_equal(z > 0, x <= t)
    assert np.array_equal(z[z > 0], y[z > 0])
    a = simulate_dataset(SimSpec(50, seed=4))
    b = simulate_dataset(SimSpec(50, seed=4))
    assert a == b
    assert a != simulate_dataset(SimSpec(50, seed=5))
    with pytest.raises(InvalidArgumentError):
        SimSpec(-1)
    with pytest.raises(InvalidArgumentError):
        SimSpec(10, mix_weight=1.5)


def test_censored_fraction_matches_quadrature():
    # P(X > T) = int_0^1 2t (1 - F_X(t)) dt with F_X from the mixture marginal
    def fx(t):
        return 0.3 * marginal_cdf(t) + 0.7 * (1 - marginal_cdf(1 - t))

    p_cens, _ = integrate.quad(lambda t: 2 * t * (1 - fx(t)), 0, 1)
    # same probability by conditioning on the event: P(T < x) = x^2
    brute, _ = integrate.dblquad(lambda y, x: f0_density(x, y) * x**2, 0, 1, 0, 2)
    assert p_cens == pytest.approx(brute, abs=1e-8)
    n = 1_000_000
    _, _, _, z = simulate_latent(SimSpec(n, seed=21))
    frac = np.mean(z == 0)
    assert abs(frac - p_cens) < 4 * np.sqrt(p_cens * (1 - p_cens) / n)
