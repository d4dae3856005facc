import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from csmark.errors import DomainError, InvalidArgumentError, NumericalError
from csmark.grid import BinWeights, GridSpec, cdf_at, density_at, make_grid, true_bin_masses
from csmark.sim import f0_density

from conftest import random_weights


@pytest.mark.parametrize("args, dx, dy, p", [
    ((1, 2, 25, 50), 0.04, 0.04, 1250),
    ((1, 2, 1, 1), 1.0, 2.0, 1),
    ((1, 2, 5, 10), 0.2, 0.2, 50),
])
def test_make_grid_derived_fields(args, dx, dy, p):
    g = make_grid(*args)
    assert g.dx == pytest.approx(dx)
    assert g.dy == pytest.approx(dy)
    assert g.p == p


@pytest.mark.parametrize("args", [(0, 2, 1, 1), (1, -2, 1, 1), (1, 2, 0, 1), (1, 2, 3, -1)])
def test_make_grid_rejects_nonpositive(args):
    with pytest.raises(InvalidArgumentError):
        make_grid(*args)


@given(st.integers(1, 30), st.integers(1, 30), st.data())
def test_index_round_trip(j_bins, k_bins, data):
    g = make_grid(1, 2, j_bins, k_bins)
    idx = data.draw(st.integers(0, g.p - 1))
    j, k = g.coords_of(idx)
    assert g.index_of(j, k) == idx
    assert idx == k * j_bins + j


def test_bins_half_open_with_closed_outer_boundary():
    g = make_grid(1, 2, 2, 2)
    assert g.column_of(0.5) == 1
    assert g.column_of(0.4999) == 0
    assert g.column_of(1.0) == 1
    assert g.row_of(2.0) == 1
    assert g.row_of(0.0) == 0


def test_weights_validation():
    with pytest.raises(InvalidArgumentError):
        BinWeights([0.5, 0.6])
    with pytest.raises(InvalidArgumentError):
        BinWeights([1.5, -0.5])
    with pytest.raises(InvalidArgumentError):
        BinWeights([np.nan, 1.0])
    w = BinWeights([0.25, 0.75])
    with pytest.raises(ValueError):
        w.theta[0] = 1.0


def test_density_examples():
    assert density_at(make_grid(1, 2, 1, 1), BinWeights([1.0]), 0.3, 1.7) == pytest.approx(0.5)
    g = make_grid(1, 2, 2, 2)
    assert density_at(g, BinWeights.uniform(4), 0.1, 0.1) == pytest.approx(0.5)
    assert density_at(g, BinWeights([1.0, 0, 0, 0]), 0.9, 1.9) == 0.0
    with pytest.raises(DomainError):
        density_at(g, BinWeights.uniform(4), 1.1, 0.5)


def test_cdf_examples(rng):
    g = make_grid(1, 2, 3, 4)
    w = random_weights(rng, g.p)
    assert cdf_at(g, w, 0.0, 1.3) == 0.0
    assert cdf_at(g, w, 1.0, 2.0) == pytest.approx(1.0, abs=1e-14)
    assert cdf_at(make_grid(1, 2, 2, 2), BinWeights.uniform(4), 0.5, 1.0) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        cdf_at(g, w, 0.5, 2.5)


def test_density_integrates_to_one(rng):
    for j, k in [(1, 1), (3, 2), (4, 5)]:
        g = make_grid(1, 2, j, k)
        w = random_weights(rng, g.p)
        # integrate cell by cell so the quadrature never straddles a jump
        total = 0.0
        for idx in range(g.p):
            jj, kk = g.coords_of(idx)
            val, _ = integrate.dblquad(lambda y, x: density_at(g, w, x, y),
                                       g.x_edges[jj], g.x_edges[jj + 1],
                                       g.y_edges[kk], g.y_edges[kk + 1])
            total += val
        assert total == pytest.approx(1.0, abs=1e-8)


def test_cdf_monotone(rng):
    g = make_grid(1, 2, 6, 7)
    w = random_weights(rng, g.p, alpha=0.3)
    for _ in range(1000):
        x1, x2 = np.sort(rng.random(2))
        y1, y2 = np.sort(rng.random(2) * 2)
        assert cdf_at(g, w, x1, y1) <= cdf_at(g, w, x2, y1) + 1e-15
        assert cdf_at(g, w, x1, y1) <= cdf_at(g, w, x1, y2) + 1e-15


def test_cdf_matches_density_integral(rng):
    g = make_grid(1, 2, 3, 3)
    w = random_weights(rng, g.p)
    x, y = 0.55, 1.25
    val = 0.0
    for idx in range(g.p):
        jj, kk = g.coords_of(idx)
        lo_x, hi_x = g.x_edges[jj], min(g.x_edges[jj + 1], x)
        lo_y, hi_y = g.y_edges[kk], min(g.y_edges[kk + 1], y)
        if hi_x > lo_x and hi_y > lo_y:
            val += (hi_x - lo_x) * (hi_y - lo_y) * w.theta[idx] / g.cell_area
    assert cdf_at(g, w, x, y) == pytest.approx(val, abs=1e-14)


def test_true_bin_masses_examples():
    assert true_bin_masses(make_grid(1, 2, 1, 1), f0_density).theta == pytest.approx([1.0])
    uniform = true_bin_masses(make_grid(1, 2, 2, 2), lambda x, y: np.full(np.broadcast(x, y).shape, 0.5))
    assert uniform.theta == pytest.approx([0.25] * 4, abs=1e-12)


def test_true_bin_masses_f0_oracle():
    # closed form of the mixture integral over [0, 0.5] x [0, 1]
    def base(a, b):  # integral of (3/8)(u^2 + v) over [a, b] x [0, 1]
        return 0.375 * ((b**3 - a**3) / 3 + (b - a) / 2)
    exact = 0.3 * base(0.0, 0.5) + 0.7 * base(0.5, 1.0)
    assert exact == pytest.approx(0.175)
    w = true_bin_masses(make_grid(1, 2, 2, 2), f0_density)
    assert w.theta[0] == pytest.approx(exact, abs=1e-12)
    val, _ = integrate.dblquad(lambda y, x: f0_density(x, y), 0, 0.5, 0, 1)
    assert w.theta[0] == pytest.approx(val, abs=1e-10)


def test_true_bin_masses_round_trip(rng):
    g = make_grid(1, 2, 7, 5)
    w = random_weights(rng, g.p)

    def f(x, y):
        return density_at(g, w, np.broadcast_to(x, np.broadcast(x, y).shape),
                          np.broadcast_to(y, np.broadcast(x, y).shape))

    assert true_bin_masses(g, f).theta == pytest.approx(w.theta, abs=1e-10)


def test_true_bin_masses_reports_nonconvergence():
    g = make_grid(1, 1, 2, 2)
    with pytest.raises(NumericalError, match="did not converge"):
        true_bin_masses(g, lambda x, y: 1.0 / np.sqrt(np.abs(x - 0.3)) + 0 * y, tol=1e-12)
