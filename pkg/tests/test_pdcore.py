import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import gamma as gamma_fn

from pd_limits.errors import DomainError, TableRangeError
from pd_limits.pdcore import (EULER_GAMMA, PDParams, density_f_theta_k, largest_part_cdf,
                              sample_pd, sample_pd_batch, solve_dickman, solve_gtheta)


@pytest.fixture(scope="module")
def rho():
    return solve_dickman(6.0, 1e-3)


def test_rho_is_one_on_unit_interval(rho):
    assert rho(1.0) == 1.0
    assert np.all(rho.values[rho.grid <= 1.0] == 1.0)
    assert np.all(rho(np.linspace(0, 1, 101)) == 1.0)


def test_rho_two_matches_closed_form(rho):
    assert abs(rho(2.0) - (1 - math.log(2))) <= 1e-8


def test_rho_three_against_quadrature_oracle(rho):
    # rho(3) = rho(2) - int_2^3 rho(u-1)/u du with the closed [1,2] branch
    tail = integrate.quad(lambda u: (1 - math.log(u - 1)) / u, 2, 3, epsabs=1e-14)[0]
    oracle = 1 - math.log(2) - tail
    assert abs(rho(3.0) - oracle) <= 1e-8


def test_rho_monotone_and_positive(rho):
    v = rho.values[rho.grid >= 1.0]
    assert np.all(v > 0)
    assert np.all(np.diff(v) <= 1e-15)


def test_g1_is_scaled_rho_everywhere(rho):
    g1 = solve_gtheta(PDParams(1.0), 6.0, 1e-3)
    t = np.concatenate([rho.grid, np.linspace(0.0005, 5.9995, 3001)])
    assert np.max(np.abs(g1(t) - math.exp(-EULER_GAMMA) * rho(t))) <= 1e-8
    assert abs(g1(0.5) - 0.56145948357) <= 1e-10
    assert abs(g1(2.5) - math.exp(-EULER_GAMMA) * rho(2.5)) <= 1e-8


def test_g_theta_boundary_branch():
    th = 2.5
    g = solve_gtheta(PDParams(th), 3.0)
    t = np.array([0.1, 0.5, 1.0])
    expected = math.exp(-EULER_GAMMA * th) * t ** (th - 1) / gamma_fn(th)
    assert np.allclose(g(t), expected, rtol=1e-13)


@pytest.mark.parametrize("theta", [0.5, 2.0, 3.7])
def test_first_marginal_normalised(theta):
    # mass below 1/40 is of order rho(40), far under the tolerance
    table = solve_gtheta(PDParams(theta), 41.0)
    kinks = [1 / j for j in range(2, 41)]

    def f(x):
        return density_f_theta_k(PDParams(theta), [x], table=table)

    pieces = sorted(kinks) + [1.0]
    total = sum(integrate.quad(f, a, b, epsabs=1e-12, limit=200)[0]
                for a, b in zip(pieces, pieces[1:]))
    assert abs(total - 1) <= 1e-6


def test_density_examples():
    p = PDParams(1.0)
    assert abs(density_f_theta_k(p, [0.7]) - 1 / 0.7) <= 1e-8
    assert density_f_theta_k(p, [0.7, 0.4]) == 0.0  # sum > 1
    assert density_f_theta_k(p, [0.3, 0.4]) == 0.0  # not sorted
    cdf = 1 - integrate.quad(lambda x: density_f_theta_k(p, [x]), 0.6, 1.0)[0]
    assert abs(cdf - (1 + math.log(0.6))) <= 1e-6


def test_density_range_error():
    table = solve_gtheta(PDParams(2.0), 2.0)
    with pytest.raises(TableRangeError):
        density_f_theta_k(PDParams(2.0), [0.5, 0.1], table=table)


def test_largest_part_cdf_examples(rho):
    p = PDParams(1.0)
    assert largest_part_cdf(p, 1.0) == 1.0
    assert abs(largest_part_cdf(p, 0.5) - (1 - math.log(2))) <= 1e-8
    with pytest.raises(DomainError):
        largest_part_cdf(p, 0.0)


@pytest.mark.parametrize("theta", [0.3, 0.5, 0.9, 2.0, 3.7])
def test_largest_part_cdf_identity(theta):
    # P(X_1 <= t) = e^{gamma theta} Gamma(theta) t^{theta-1} g_theta(1/t)
    g = solve_gtheta(PDParams(theta), 12.0)
    t = np.linspace(0.09, 0.99, 61)
    oracle = math.exp(EULER_GAMMA * theta) * gamma_fn(theta) * t ** (theta - 1) * g(1 / t)
    assert np.max(np.abs(largest_part_cdf(PDParams(theta), t) - oracle)) <= 1e-8


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_largest_part_cdf_monotone(theta):
    v = largest_part_cdf(PDParams(theta), np.linspace(0.01, 1.0, 100))
    assert np.all(np.diff(v) >= 0)
    assert v[-1] == 1.0
    assert np.all((v >= 0) & (v <= 1))


@settings(max_examples=30, deadline=None)
@given(theta=st.floats(0.2, 5.0), k=st.integers(1, 6), seed=st.integers(0, 2 ** 32 - 1))
def test_stick_sample_invariants(theta, k, seed):
    s = sample_pd(PDParams(theta), k, seed)
    assert abs(s.parts.sum() + s.residual - 1) <= 1e-12
    assert np.all(np.diff(s.parts) <= 0)
    assert np.all(s.parts > 0)


def test_stick_errors():
    with pytest.raises(DomainError):
        sample_pd(PDParams(1.0), 0, 1)
    with pytest.raises(DomainError):
        PDParams(0.0)


def test_stick_batch_deterministic():
    a = sample_pd_batch(PDParams(1.3), 4, 5000, seed=9)
    b = sample_pd_batch(PDParams(1.3), 4, 5000, seed=9)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_pd_batch(PDParams(1.3), 4, 5000, seed=10))


@pytest.mark.slow
def test_stick_breaking_matches_dickman(rho):
    n = 1_000_000
    x1 = sample_pd_batch(PDParams(1.0), 1, n, seed=2024)[:, 0]
    for t in (0.5, 0.6, 0.8):
        p = rho(1 / t)
        emp = np.mean(x1 <= t)
        assert abs(emp - p) <= 4 * math.sqrt(p * (1 - p) / n)
    # E X_1 = int_0^1 (1 - rho(1/t)) dt
    wide = solve_dickman(31.0, 1e-3)
    pieces = [1 / j for j in range(30, 0, -1)]
    mean = sum(integrate.quad(lambda t: 1 - wide(1 / t), a, b, epsabs=1e-13)[0]
               for a, b in zip(pieces, pieces[1:])) + pieces[0]
    assert abs(mean - 0.6243) <= 1e-4
    assert abs(x1.mean() - mean) <= 3 * x1.std() / math.sqrt(n)


def test_table_validation_and_csv(tmp_path):
    with pytest.raises(DomainError):
        solve_dickman(5, 1.0)
    with pytest.raises(DomainError):
        solve_dickman(5, 2e-3)
    with pytest.raises(DomainError):
        solve_dickman(0.5, 1e-3)
    tab = solve_dickman(3.0, 1e-3)
    with pytest.raises(TableRangeError):
        tab(3.5)
    text = tab.to_csv(tmp_path / "rho.csv")
    lines = text.splitlines()
    assert lines[0] == "t,value"
    row = dict(line.split(",") for line in lines[1:])
    assert row["2"] == f"{1 - math.log(2):.12g}"
    assert (tmp_path / "rho.csv").read_text() == text
