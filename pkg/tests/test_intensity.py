import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from pd_limits.errors import DomainError, GuardError
from pd_limits.families import builtin_family, custom_family
from pd_limits.intensity import (IntervalFamily, exact_intensity, mc_intensity, mertens_sum,
                                 rhs_master, rhs_theta, rhs_theta_pair)
from pd_limits.moments import moment
from pd_limits.pdcore import PDParams

PERM = builtin_family("permutation")


def test_interval_parsing_and_ranges():
    iv = IntervalFamily.parse("0.1:0.2, 0.3:0.4")
    assert iv.k == 2
    assert iv.intervals[0] == (Fraction(1, 10), Fraction(1, 5))
    # a n < i <= b n
    assert list(iv.index_range(0, 20)) == [3, 4]
    assert list(iv.index_range(1, 25)) == [8, 9, 10]
    assert iv.as_strings() == [["1/10", "1/5"], ["3/10", "2/5"]]


@pytest.mark.parametrize("text", ["0.2:0.1", "0:0.3", "0.5:1.2", "0.1:0.3,0.2:0.4",
                                  "0.1:0.3,0.3:0.4", "0.2:0.5,0.55:0.6", "0.1-0.2", ""])
def test_interval_validation(text):
    with pytest.raises((DomainError, ValueError)):
        IntervalFamily.parse(text)


def test_harmonic_intensity():
    exact = exact_intensity(PERM, 1000, "0.4:0.6")
    assert exact == sum(Fraction(1, j) for j in range(401, 601))
    assert abs(float(exact) - math.log(1.5)) <= 2e-3
    # the harmonic remainder is below 1/(a n)
    assert abs(float(exact) - math.log(1.5)) <= 1 / 400


def test_permutation_two_intervals_factorise():
    n = 300
    iv = IntervalFamily.parse("0.1:0.25,0.3:0.5")
    brute = sum(Fraction(1, i * j) for i in iv.index_range(0, n) for j in iv.index_range(1, n))
    assert exact_intensity(PERM, n, iv) == brute


@pytest.mark.parametrize("name,phi", [("polynomial-multiset-F2", 1),
                                      ("polynomial-selection-F3", Fraction(3, 2)),
                                      ("permutation", Fraction(1, 2))])
def test_exact_intensity_matches_moment_sums(name, phi):
    fam = builtin_family(name, phi=phi)
    n = 40
    iv = IntervalFamily.parse("0.1:0.3,0.35:0.5")
    brute = sum(moment(fam, n, t) for t in itertools.product(
        *(iv.index_range(j, n) for j in range(iv.k))))
    assert exact_intensity(fam, n, iv) == brute
    single = sum(moment(fam, n, (i,)) for i in iv.index_range(0, n))
    assert exact_intensity(fam, n, "0.1:0.3") == single


def test_exact_intensity_guard():
    with pytest.raises(GuardError):
        exact_intensity(PERM, 10_000, "0.01:0.1,0.11:0.2,0.21:0.3")
    with pytest.raises(DomainError):
        exact_intensity(custom_family("selection", [0, 1]), 3, "0.5:0.9")


def test_rhs_theta():
    iv = "0.1:0.2,0.3:0.4"
    val = rhs_theta(2.0, iv, -1.0, 0.0)
    assert val == pytest.approx(4 * 0.6 * math.log(2) * math.log(4 / 3))
    pair = rhs_theta_pair(1.0, iv)
    assert len(set(pair.values())) == 1
    pair = rhs_theta_pair(0.5, iv)
    assert pair["alpha=0,beta=1-theta"] == pytest.approx(
        0.25 * math.log(2) * math.log(4 / 3) / math.sqrt(0.4))


def test_rhs_master_brute_loop():
    theta, n = 1.7, 120
    iv = IntervalFamily.parse("0.1:0.3,0.35:0.5")
    brute = 0.0
    for i in iv.index_range(0, n):
        for j in iv.index_range(1, n):
            brute += theta ** 2 * (1 - (i + j) / n) ** (theta - 1) / (i * j)
    assert rhs_master(theta, n, iv) == pytest.approx(brute, rel=1e-13)


def test_mc_matches_exact():
    fam = builtin_family("polynomial-selection-F2", phi=2)
    rep = mc_intensity(fam, 500, "0.1:0.3,0.4:0.6", 20_000, seed=3)
    assert rep.exact is not None
    assert abs(rep.empirical - float(rep.exact)) <= 4 * rep.stderr
    rec = rep.to_record()
    assert rec["schema"] == 1 and Fraction(rec["exact"]) == rep.exact


def _pd_intensity(theta, a, b):
    # PD first correlation function theta (1-x)^(theta-1) / x
    return integrate.quad(lambda x: theta * (1 - x) ** (theta - 1) / x, a, b)[0]


@pytest.mark.parametrize("theta", [0.5, 2.0])
def test_pd_intensity_bracketed(theta):
    rep = mc_intensity(PDParams(theta), None, "0.2:0.5", 40_000, seed=1)
    truth = _pd_intensity(theta, 0.2, 0.5)
    assert rep.rhs_theta_lo <= truth <= rep.rhs_theta_hi
    assert abs(rep.empirical - truth) <= 4 * rep.stderr
    assert rep.rhs_theta_lo - 4 * rep.stderr <= rep.empirical <= rep.rhs_theta_hi + 4 * rep.stderr


def test_stderr_scales_like_root_replicates():
    a = mc_intensity(PDParams(1.0), None, "0.1:0.3", 20_000, seed=5)
    b = mc_intensity(PDParams(1.0), None, "0.1:0.3", 80_000, seed=6)
    assert a.stderr / b.stderr == pytest.approx(2.0, rel=0.1)


def test_mc_argument_errors():
    with pytest.raises(DomainError):
        mc_intensity(PERM, 100, "0.1:0.3", 999, seed=1)
    with pytest.raises(DomainError):
        mc_intensity(object(), 100, "0.1:0.3", 1000, seed=1)


def test_mc_without_singular_data():
    fam = builtin_family("uniform", kind="multiset", c=2)
    rep = mc_intensity(fam, 60, "0.2:0.5", 2000, seed=2)
    rec = rep.to_record()
    assert rec["rhs_theta_lo"] is None and rec["rhs_master"] is None
    assert abs(rep.empirical - float(rep.exact)) <= 4 * rep.stderr


def _primes_naive(limit):
    return [p for p in range(2, limit + 1) if all(p % d for d in range(2, math.isqrt(p) + 1))]


def test_mertens_sum():
    n = 10 ** 4
    ps = _primes_naive(n)
    assert mertens_sum(n, 0.5, 1) == pytest.approx(sum(1 / p for p in ps if p >= 100))
    assert mertens_sum(n, 0.25, 0.5) == pytest.approx(sum(1 / p for p in ps if 10 <= p <= 100))


def test_primes_mc_matches_expectation():
    n = 10 ** 5
    lo, hi = n ** 0.2, n ** 0.5
    # expected number of prime factors in (n^a, n^b], counted with multiplicity
    expected = 0.0
    for p in _primes_naive(int(hi)):
        if lo < p <= hi:
            pk = p
            while pk <= n:
                expected += (n // pk) / n
                pk *= p
    rep = mc_intensity("primes", n, "0.2:0.5", 40_000, seed=4)
    assert abs(rep.empirical - expected) <= 4 * rep.stderr
    assert rep.theta == 1.0 and rep.rhs_master is not None


def test_thread_invariance():
    fam = builtin_family("polynomial-multiset-F2")
    a = mc_intensity(fam, 300, "0.1:0.4", 9000, seed=1, threads=1).to_record()
    b = mc_intensity(fam, 300, "0.1:0.4", 9000, seed=1, threads=3).to_record()
    assert a == b
    assert np.isfinite(a["empirical"])
