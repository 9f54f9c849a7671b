"""Exact coefficients of the tilted object series and their exp-log asymptotics.

All three constructions are computed with first-order recurrences from the
logarithmic derivative of the generating function:

    assemblies  Q = exp(phi M),  M = sum m_i x^i / i!
                n c_n = sum_j (phi m_j / (j-1)!) c_{n-j},        c_n = q_phi(n)/n!
    multisets   Q = prod (1 - phi x^i)^(-m_i)
                n q(n) = sum_j b_j q(n-j),  b_j = sum_{d|j} d m_d phi^(j/d)
    selections  Q = prod (1 + phi x^i)^(m_i)
                n q(n) = sum_j b_j q(n-j),  b_j = sum_{d|j} (-1)^(j/d+1) d m_d phi^(j/d)

Exact arithmetic runs on gmpy2 rationals; results are exposed as
``fractions.Fraction``.  A float64 path with scaling and a running relative
error bound covers sizes where exact rationals get too large.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from gmpy2 import mpq
from scipy.special import gammaln

from .errors import DomainError

KINDS = ("assembly", "multiset", "selection")
FLOAT_PATH_THRESHOLD = 2000
TAIL_TOL = 1e-12


def to_fraction(x) -> Fraction:
    """Coerce ints, Fractions, mpq, decimal strings ("0.5") or "p/q" strings."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(str(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    if hasattr(x, "numerator") and hasattr(x, "denominator"):
        return Fraction(int(x.numerator), int(x.denominator))
    raise TypeError(f"cannot interpret {x!r} as a rational")


def _mpq(x) -> mpq:
    f = to_fraction(x)
    return mpq(f.numerator, f.denominator)


def _from_mpq(x) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class SingularData:
    """Dominant singularity data of the irreducible series G = M."""

    rho: float
    theta: float
    lam: float
    phi: Fraction

    def __post_init__(self):
        if not 0 < float(self.rho) <= 1:
            raise DomainError(f"rho must lie in (0, 1], got {self.rho}")
        if not self.theta > 0:
            raise DomainError(f"theta must be positive, got {self.theta}")
        if not self.phi > 0:
            raise DomainError(f"phi must be positive, got {self.phi}")

    @property
    def tilted_theta(self) -> float:
        """Parameter of the limiting PD law, phi * theta."""
        return float(self.phi) * self.theta


@dataclass(frozen=True, eq=False)
class CoeffSeries:
    """Coefficients c_0..c_N of an object series.

    ``normalization`` is ``"exponential"`` (c_n = q_phi(n)/n!) for assemblies
    and ``"ordinary"`` (c_n = q_phi(n)) otherwise.
    """

    degree: int
    normalization: str
    _raw: tuple = field(repr=False)

    @property
    def coeffs(self) -> tuple[Fraction, ...]:
        return tuple(_from_mpq(c) for c in self._raw)

    def coeff(self, n: int) -> Fraction:
        if n < 0:
            return Fraction(0)
        return _from_mpq(self._raw[n])

    def q(self, n: int) -> Fraction:
        """Weighted object count q_phi(n); zero for negative n."""
        if n < 0:
            return Fraction(0)
        c = self._raw[n]
        if self.normalization == "exponential":
            c = c * math.factorial(n)
        return _from_mpq(c)

    def raw(self, n: int):
        """Coefficient as a gmpy2 rational (zero for negative n)."""
        return self._raw[n] if n >= 0 else mpq(0)

    def truncate(self, n: int) -> "CoeffSeries":
        if n > self.degree:
            raise ValueError("cannot extend a series by truncation")
        return CoeffSeries(n, self.normalization, self._raw[: n + 1])

    def to_csv_rows(self):
        """``(n, q_phi(n))`` rows; integers verbatim, other rationals as ``p/q``."""
        for n in range(self.degree + 1):
            v = self.q(n)
            yield n, str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


@dataclass(frozen=True)
class AsymptoticPrediction:
    n: int
    predicted: float
    exact: float
    ratio: float
    log_predicted: float = float("nan")
    log_exact: float = float("nan")


# ---------------------------------------------------------------------------
# exact recurrences


def _check_m(m: Sequence[int], N: int) -> list[int]:
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    ms = [int(v) for v in m[:N]] if not callable(m) else [int(m(i)) for i in range(1, N + 1)]
    if len(ms) < N:
        ms += [0] * (N - len(ms))
    for i, v in enumerate(ms, start=1):
        if v < 0:
            raise DomainError(f"m_{i} = {v} is negative")
    return ms


def _check_phi(phi) -> mpq:
    p = _mpq(phi)
    if p <= 0:
        raise DomainError(f"phi must be positive, got {phi}")
    return p


def _log_derivative_solve(b: list, N: int) -> tuple:
    """Solve n q(n) = sum_{j=1}^n b_j q(n-j), q(0) = 1."""
    q = [mpq(1)]
    rev = []  # q in reverse order, rev[k] = q(n-1-k)
    for n in range(1, N + 1):
        rev.insert(0, q[-1])
        s = sum(map(operator.mul, b[1:n + 1], rev), mpq(0))
        q.append(s / n)
    return tuple(q)


def assembly_series(m, phi, N: int) -> CoeffSeries:
    """Exponential coefficients of exp(phi M(x)) up to degree N."""
    ms = _check_m(m, N)
    p = _check_phi(phi)
    w = [mpq(0)] + [p * ms[j - 1] / math.factorial(j - 1) for j in range(1, N + 1)]
    return CoeffSeries(N, "exponential", _log_derivative_solve(w, N))


def _power_sum_weights(ms, p, N, alternating):
    b = [mpq(0)] * (N + 1)
    powers = [mpq(1)]
    for _ in range(N):
        powers.append(powers[-1] * p)
    for d in range(1, N + 1):
        dm = d * ms[d - 1]
        if dm == 0:
            continue
        for e in range(1, N // d + 1):
            term = dm * powers[e]
            if alternating and e % 2 == 0:
                b[d * e] -= term
            else:
                b[d * e] += term
    return b


def multiset_series(m, phi, N: int) -> CoeffSeries:
    """Ordinary coefficients of prod (1 - phi x^i)^(-m_i) up to degree N."""
    ms = _check_m(m, N)
    p = _check_phi(phi)
    return CoeffSeries(N, "ordinary", _log_derivative_solve(_power_sum_weights(ms, p, N, False), N))


def selection_series(m, phi, N: int) -> CoeffSeries:
    """Ordinary coefficients of prod (1 + phi x^i)^(m_i) up to degree N."""
    ms = _check_m(m, N)
    p = _check_phi(phi)
    return CoeffSeries(N, "ordinary", _log_derivative_solve(_power_sum_weights(ms, p, N, True), N))


def object_series(kind: str, m, phi, N: int) -> CoeffSeries:
    try:
        fn = {"assembly": assembly_series, "multiset": multiset_series,
              "selection": selection_series}[kind]
    except KeyError:
        raise DomainError(f"unknown construction {kind!r}") from None
    return fn(m, phi, N)


# ---------------------------------------------------------------------------
# float path


@dataclass(frozen=True, eq=False)
class FloatSeries:
    """Scaled float coefficients: c_n = scaled[n] * scale**(-n).

    ``rel_error[n]`` is a running first-order bound on the relative error of
    ``scaled[n]`` (unit roundoff times accumulated condition numbers).
    """

    degree: int
    normalization: str
    scale: float
    scaled: np.ndarray
    rel_error: np.ndarray

    def log_coeff(self, n: int) -> float:
        return math.log(self.scaled[n]) - n * math.log(self.scale)


def _log_int(v: int) -> float:
    return math.log(v) if v > 0 else -math.inf


def object_series_float(kind: str, m, phi, N: int, scale: float = 1.0) -> FloatSeries:
    """Float64 coefficients with x -> scale*x rescaling to stay in range.

    Choosing ``scale`` near the radius of convergence keeps the scaled
    coefficients polynomially bounded.
    """
    ms = _check_m(m, N)
    phi_f = float(to_fraction(phi))
    if phi_f <= 0:
        raise DomainError("phi must be positive")
    logs = math.log(scale)
    lphi = math.log(phi_f)
    w = np.zeros(N + 1)
    if kind == "assembly":
        for j in range(1, N + 1):
            if ms[j - 1]:
                w[j] = math.exp(lphi + _log_int(ms[j - 1]) - math.lgamma(j) + j * logs)
        norm = "exponential"
    elif kind in ("multiset", "selection"):
        alt = kind == "selection"
        for d in range(1, N + 1):
            if not ms[d - 1]:
                continue
            ldm = math.log(d) + _log_int(ms[d - 1])
            for e in range(1, N // d + 1):
                t = math.exp(ldm + e * lphi + d * e * logs)
                w[d * e] += -t if (alt and e % 2 == 0) else t
        norm = "ordinary"
    else:
        raise DomainError(f"unknown construction {kind!r}")
    u = np.finfo(float).eps / 2
    c = np.zeros(N + 1)
    err = np.zeros(N + 1)
    c[0] = 1.0
    for n in range(1, N + 1):
        terms = w[1:n + 1] * c[n - 1::-1]
        s = terms.sum()
        absum = np.abs(terms).sum()
        if s <= 0 or not math.isfinite(s):
            raise DomainError(f"float path lost the coefficient at n={n}; adjust scale")
        c[n] = s / n
        err[n] = (np.abs(terms) @ err[n - 1::-1] + (n + 2) * u * absum) / s
    return FloatSeries(N, norm, scale, c, err)


# ---------------------------------------------------------------------------
# exp-log asymptotics


def _m_at(m, i):
    if callable(m):
        return int(m(i))
    return int(m[i - 1]) if i <= len(m) else None


def _log_m_rho(m_i: int, i: int, rho) -> float:
    if m_i == 0:
        return -math.inf
    return math.log(m_i) + i * math.log(float(rho))


def eval_G(m, x: float, max_terms: int = 5000) -> float:
    """G(x) = sum m_i x^i for 0 < x strictly inside the disc of convergence.

    Summation stops once ten consecutive terms fall below 1e-18 of the sum.
    """
    total = 0.0
    small = 0
    lx = math.log(x)
    for i in range(1, max_terms + 1):
        mi = _m_at(m, i)
        if mi is None:
            break
        term = math.exp(math.log(mi) + i * lx) if mi else 0.0
        total += term
        small = small + 1 if term <= 1e-18 * max(total, 1e-300) else 0
        if small >= 10:
            return total
    return total


def multiset_log_constant(sd: SingularData, m) -> float:
    """R(rho) = sum_{j>=2} phi^j G(rho^j)/j, which requires phi*rho < 1.

    Since G(x)/x increases, successive terms shrink by at least phi*rho, so
    the remainder after term J is at most term_J * phi rho / (1 - phi rho).
    """
    phi, rho = float(sd.phi), float(sd.rho)
    r = phi * rho
    if r >= 1:
        raise DomainError(
            f"multiset asymptotics need phi < 1/rho (phi*rho = {r:.6g} >= 1)")
    total = 0.0
    j = 1
    while True:
        j += 1
        term = phi ** j * eval_G(m, rho ** j) / j
        total += term
        bound = term * r / (1 - r)
        if (term < 1e-14 * abs(total) or term == 0) and bound < TAIL_TOL:
            return total
        if j > 10_000:
            raise DomainError("R(rho) series failed to converge")


def selection_constant(sd: SingularData, m, max_terms: int = 5000) -> float:
    """S(rho) = exp(sum_i m_i (log(1 + phi rho^i) - phi rho^i)).

    Converges for every phi > 0; terms are O(m_i rho^(2i)).
    """
    phi, rho = float(sd.phi), float(sd.rho)
    total = 0.0
    small = 0
    for i in range(1, max_terms + 1):
        mi = _m_at(m, i)
        if mi is None:
            break
        if mi == 0:
            continue
        y = phi * rho ** i
        term = mi * (math.log1p(y) - y) if y > 1e-4 else -math.exp(
            _log_m_rho(mi, 2 * i, rho) + 2 * math.log(phi)) * (0.5 - y / 3 + y * y / 4)
        total += term
        small = small + 1 if abs(term) <= 1e-16 * max(abs(total), 1e-300) else 0
        if small >= 10:
            break
    return math.exp(total)


@dataclass(frozen=True)
class LambdaEstimate:
    value: float
    deltas: tuple
    values: tuple
    terms: int

    @property
    def agreement(self) -> float:
        return abs(self.values[0] - self.values[1])

    @property
    def stable(self) -> bool:
        return self.agreement < 1e-6


def estimate_lambda(m, rho, theta: float, deltas=(1e-7, 1e-8), max_terms: int = 4000) -> LambdaEstimate:
    """Estimate lambda = lim G(rho(1-delta)) - theta log(1/delta).

    G is summed exactly up to the point where m_i rho^i - theta/i has
    settled, and the remaining tail is replaced by its asymptotic form
    theta (1-delta)^i / i, whose sum is known in closed form.  This leaves
        lambda(delta) = sum_{i<=N} (m_i rho^i - theta/i) (1-delta)^i,
    evaluated at two deltas as a stability check; the reported value is
    the linear extrapolation of the two to delta = 0.
    """
    rho_f = to_fraction(rho) if not isinstance(rho, float) else None
    diffs = []
    small = 0
    for i in range(1, max_terms + 1):
        mi = _m_at(m, i)
        if mi is None:
            break
        if rho_f is not None:
            d = float(Fraction(mi) * rho_f ** i - to_fraction(theta) / i)
        else:
            d = math.exp(_log_m_rho(mi, i, rho)) - theta / i
        diffs.append(d)
        small = small + 1 if abs(d) < 1e-17 else 0
        if small >= 10:
            break
    idx = np.arange(1, len(diffs) + 1)
    diffs = np.array(diffs)
    vals = tuple(float(np.sum(diffs * np.exp(idx * math.log1p(-dl)))) for dl in deltas)
    # the truncated sum is smooth in delta: remove the linear term
    d1, d2 = deltas[0], deltas[-1]
    limit = (d1 * vals[-1] - d2 * vals[0]) / (d1 - d2)
    return LambdaEstimate(limit, tuple(deltas), vals, len(diffs))


def predict_coeff_G(sd: SingularData, n: int) -> float:
    """theta rho^(-n) / n."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return sd.theta * math.exp(-n * math.log(float(sd.rho))) / n


def singular_constant(sd: SingularData, kind: str, m) -> float:
    """C in the object asymptotics: 1, exp(R(rho)) or S(rho) by construction."""
    if kind == "assembly":
        return 1.0
    if kind == "multiset":
        return math.exp(multiset_log_constant(sd, m))
    if kind == "selection":
        return selection_constant(sd, m)
    raise DomainError(f"unknown construction {kind!r}")


def _log_abs_fraction(x) -> float:
    num, den = int(x.numerator), int(x.denominator)
    return _log_int(num) - _log_int(den)


def predict_coeff_F(sd: SingularData, kind: str, n: int, m,
                    exact=None, constant: float | None = None) -> AsymptoticPrediction:
    """Compare [z^n] of the object series with C e^(phi lam)/Gamma(phi theta) n^(phi theta-1) rho^-n.

    ``exact`` defaults to the exact coefficient from the recurrence (for
    assemblies the exponential coefficient q_phi(n)/n!).
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if kind == "multiset" and float(sd.phi) * float(sd.rho) >= 1:
        raise DomainError("multiset asymptotics are only available for phi < 1/rho")
    if constant is None:
        constant = singular_constant(sd, kind, m)
    a = sd.tilted_theta
    log_pred = (math.log(constant) + float(sd.phi) * sd.lam - float(gammaln(a))
                + (a - 1) * math.log(n) - n * math.log(float(sd.rho)))
    if exact is None:
        exact = object_series(kind, m, sd.phi, n).raw(n)
    log_exact = _log_abs_fraction(exact) if not isinstance(exact, float) else math.log(exact)
    ratio = math.exp(log_exact - log_pred)
    with np.errstate(over="ignore"):
        predicted = float(np.exp(log_pred))
        exact_f = float(np.exp(log_exact))
    return AsymptoticPrediction(n, predicted, exact_f, ratio, log_pred, log_exact)


MProvider = Callable[[int], int]
