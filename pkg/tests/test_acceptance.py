"""Acceptance criteria 1-10, each at its stated tolerance.

Every criterion prints one PASS/FAIL line.  The Mertens part of criterion 9
cannot meet its 5% band at n = 10^6 (the prime sum sits about 6.8% below
log 2.5), so that sub-check is a strict xfail rather than a loosened band.
"""

import pytest

from pd_limits.verify import CRITERIA, DEFAULT_SEED, STOCHASTIC, criterion_10

MERTENS = "Mertens sum within 5%"


@pytest.fixture(scope="module")
def results():
    out = {}
    for num, fn in CRITERIA.items():
        out[num] = fn(DEFAULT_SEED) if num in STOCHASTIC else fn()
    first = {num: out[num].report for num in STOCHASTIC}
    out[10] = criterion_10(DEFAULT_SEED, first)
    return out


def _show(capsys, res):
    with capsys.disabled():
        print("\n" + res.line())


@pytest.mark.parametrize("number", range(1, 9))
def test_criterion(results, capsys, number):
    res = results[number]
    _show(capsys, res)
    assert res.passed, res.checks


def test_criterion_9_largest_prime_factor(results, capsys):
    res = results[9]
    _show(capsys, res)
    others = {k: v for k, v in res.checks.items() if k != MERTENS}
    assert others and all(others.values()), others


@pytest.mark.xfail(strict=True, reason="sum of 1/p over [10^1.2, 10^3] is 0.854, "
                                       "6.8% below log 2.5; the 5% band needs far larger n")
def test_criterion_9_mertens_band(results):
    res = results[9]
    assert res.report["relative_error"] == pytest.approx(-0.0679, abs=5e-4)
    assert res.checks[MERTENS]


def test_criterion_10(results, capsys):
    res = results[10]
    _show(capsys, res)
    assert res.passed, res.checks
