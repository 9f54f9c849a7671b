import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from pd_limits.errors import DomainError, GuardError
from pd_limits.families import builtin_family, custom_family
from pd_limits.moments import profile_probabilities
from pd_limits.samplers import (CountVector, ScaledSizeSeq, factorize_many, prime_factor_sizes,
                                primes_upto, sample_prime_factor_batch, sample_prime_factors,
                                sample_structure, sample_structures, scaled_sizes)

PERM = builtin_family("permutation")


def test_count_vector_validation():
    cv = CountVector(8, (0, 1, 2, 0, 0, 0, 0, 0))
    assert cv.components == 3
    with pytest.raises(ValueError):
        CountVector(8, (1, 1, 2, 0, 0, 0, 0, 0))
    with pytest.raises(ValueError):
        CountVector(3, (3, 0))


def test_scaled_sizes_example():
    cv = CountVector(8, (0, 1, 2, 0, 0, 0, 0, 0))
    assert np.allclose(scaled_sizes(cv, 5).values, [0.375, 0.375, 0.25, 0, 0])
    assert np.allclose(scaled_sizes(cv, 2).values, [0.375, 0.375])
    with pytest.raises(ValueError):
        ScaledSizeSeq(np.array([0.2, 0.5]))
    with pytest.raises(ValueError):
        ScaledSizeSeq(np.array([0.7, 0.5]))


def test_size_one():
    assert sample_structure(PERM, 1, seed=3).counts == (1,)


@settings(max_examples=20, deadline=None)
@given(name=st.sampled_from(["permutation", "polynomial-multiset-F2", "polynomial-selection-F3"]),
       n=st.integers(1, 300), seed=st.integers(0, 2 ** 31))
def test_weight_identity(name, n, seed):
    s = sample_structures(builtin_family(name), n, 50, seed)
    prof = np.array(s.profiles())
    assert np.all(prof @ np.arange(1, n + 1) == n)
    assert np.all(prof >= 0)


def test_mean_two_cycles():
    s = sample_structures(PERM, 50, 40_000, seed=11)
    c2 = s.counts_at([2])[:, 0]
    # E C_2 = 1/2 and Var C_2 = 1/2 for uniform permutations of size >= 4
    assert abs(c2.mean() - 0.5) <= 4 * math.sqrt(0.5 / c2.size)


def _cycle_profile(perm, n):
    seen, counts = set(), [0] * n
    for i in range(n):
        if i not in seen:
            L = 0
            while i not in seen:
                seen.add(i)
                i = perm[i]
                L += 1
            counts[L - 1] += 1
    return tuple(counts)


@pytest.mark.parametrize("phi", [Fraction(1), Fraction(5, 2)])
def test_permutation_profiles_chi_square(phi):
    n = 6
    weights = Counter()
    for p in itertools.permutations(range(n)):
        prof = _cycle_profile(p, n)
        weights[prof] += phi ** sum(prof)
    total = sum(weights.values())
    keys = sorted(weights)
    R = 30_000
    got = Counter(sample_structures(PERM.with_phi(phi), n, R, seed=5).profiles())
    obs = [got[k] for k in keys]
    exp = [float(weights[k] / total) * R for k in keys]
    assert sum(obs) == R
    assert chisquare(obs, exp).pvalue > 1e-3


def test_selection_profiles_chi_square():
    fam = custom_family("selection", [2, 1, 3, 1], Fraction(3, 2))
    probs = profile_probabilities(fam, 7)
    keys = sorted(probs)
    R = 30_000
    got = Counter(sample_structures(fam, 7, R, seed=8).profiles())
    assert set(got) <= set(keys)
    assert chisquare([got[k] for k in keys], [float(probs[k]) * R for k in keys]).pvalue > 1e-3


def test_deterministic_and_thread_invariant():
    fam = builtin_family("polynomial-selection-F2")
    a = sample_structures(fam, 400, 9000, seed=1, threads=1)
    b = sample_structures(fam, 400, 9000, seed=1, threads=4)
    for attr in ("rep", "size", "count"):
        assert np.array_equal(getattr(a, attr), getattr(b, attr))
    c = sample_structures(fam, 400, 9000, seed=2)
    assert not np.array_equal(a.scaled_sizes(3), c.scaled_sizes(3))


def test_interval_counts_half_open():
    s = sample_structures(PERM, 10, 2000, seed=4)
    prof = np.array(s.profiles())
    got = s.interval_counts([(Fraction(1, 5), Fraction(1, 2))])[:, 0]
    assert np.array_equal(got, prof[:, 2:5].sum(axis=1))  # sizes 3, 4, 5


def test_sampler_guards(monkeypatch):
    with pytest.raises(GuardError):
        sample_structures(PERM, 10_001, 1, seed=0)
    with pytest.raises(DomainError):
        sample_structures(PERM, 10, 0, seed=0)
    with pytest.raises(DomainError):
        sample_structures(custom_family("selection", [0, 1]), 3, 5, seed=0)
    with pytest.raises(GuardError):
        sample_prime_factor_batch(10 ** 9 + 1, 5, seed=0)
    monkeypatch.setenv("PD_LIMITS_GUARD_OVERRIDE", "0.001")
    with pytest.raises(GuardError):
        sample_structures(PERM, 11, 1, seed=0)


def test_primes_upto():
    assert primes_upto(30).tolist() == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert primes_upto(1).size == 0
    assert primes_upto(10 ** 5).size == 9592


def _is_prime(p):
    return p >= 2 and all(p % d for d in range(2, math.isqrt(p) + 1))


def test_factorize_many_oracle():
    rng = np.random.default_rng(0)
    vals = np.concatenate([rng.integers(1, 10 ** 9, size=300), [1, 2, 97 * 97, 2 ** 29, 999999937]])
    rows, primes = factorize_many(vals)
    for r, v in enumerate(vals.tolist()):
        ps = primes[rows == r].tolist()
        assert math.prod(ps) == v
        assert all(_is_prime(p) for p in ps)


def test_prime_factor_sizes():
    s = prime_factor_sizes(12, 100, pad=4).values
    assert np.allclose(s, np.array([math.log(3), math.log(2), math.log(2), 0]) / math.log(100))
    N = 2 * 3 * 3 * 101
    assert prime_factor_sizes(N, N).values.sum() == pytest.approx(1.0)
    assert prime_factor_sizes(1, 10).values.sum() == 0


def test_prime_sample_batch():
    fs = sample_prime_factor_batch(10 ** 6, 5000, seed=3)
    sizes = fs.scaled_sizes(30)
    assert np.allclose(sizes.sum(axis=1), np.log(fs.values) / math.log(10 ** 6))
    assert np.all(np.diff(sizes, axis=1) <= 0)
    b = sample_prime_factor_batch(10 ** 6, 5000, seed=3)
    assert np.array_equal(fs.values, b.values)
    one = sample_prime_factors(10 ** 6, seed=3, pad=30)
    assert np.allclose(one.values, sizes[0])


def test_prime_interval_counts_exact():
    fs = sample_prime_factor_batch(10 ** 4, 3000, seed=9)
    got = fs.interval_counts([(Fraction(1, 2), Fraction(1))])[:, 0]
    # primes p with 100 < p <= 10^4
    rows, primes = factorize_many(fs.values)
    expected = np.zeros(fs.replicates, dtype=np.int64)
    np.add.at(expected, rows[primes > 100], 1)
    assert np.array_equal(got, expected)
