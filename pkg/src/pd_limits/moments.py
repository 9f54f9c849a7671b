"""Exact mixed moments E[C_i1 ... C_ik] of component counts under the phi-tilt.

Formula paths use the exact object series.  The enumeration oracle walks
every structure of size n and shares no code with the formulas.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from gmpy2 import mpq

from ._guards import guard_limit
from .errors import DomainError, GuardError
from .families import FamilySpec
from .series import _from_mpq, _mpq

ASSEMBLY_ENUM_MAX_N = 10
ENUM_MAX_N = 14
ENUM_MAX_OBJECTS = 300_000


@dataclass(frozen=True)
class MomentQuery:
    family: FamilySpec
    n: int
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if not idx:
            raise DomainError("at least one index is required")
        if len(set(idx)) != len(idx):
            raise DomainError(f"indices must be distinct, got {idx}")
        if min(idx) < 1:
            raise DomainError(f"indices must be positive, got {idx}")

    @property
    def total(self) -> int:
        return sum(self.indices)


@dataclass(frozen=True)
class MomentResult:
    exact: Fraction
    master_rhs: float | None
    ratio: float | None

    def to_record(self, family: FamilySpec, n: int, indices) -> dict:
        ex = self.exact
        return {
            "schema": 1,
            "family": family.descriptor(),
            "n": n,
            "indices": list(indices),
            "exact": str(ex.numerator) if ex.denominator == 1 else f"{ex.numerator}/{ex.denominator}",
            "exact_float": float(ex),
            "master_rhs": self.master_rhs,
            "ratio": self.ratio,
        }


def _query(q, n=None, indices=None) -> MomentQuery:
    if isinstance(q, MomentQuery):
        return q
    return MomentQuery(q, n, tuple(indices))


def _normaliser(series, n):
    total = series.raw(n)
    if total == 0:
        raise DomainError(f"the family has no objects of size {n}")
    return total


def assembly_moment(q, n=None, indices=None) -> Fraction:
    """(c_{n-m} / c_n) * prod phi m_i / i!, with c the exponential coefficients.

    The rho^(-m) prefactor and the rho^(i_j) factors cancel, so no
    singularity data enters.
    """
    q = _query(q, n, indices)
    fam = q.family
    if fam.kind != "assembly":
        raise DomainError("assembly_moment needs an assembly family")
    if q.total > q.n:
        return Fraction(0)
    s = fam.series(q.n)
    m = fam.m_list(max(q.indices))
    phi = _mpq(fam.phi)
    val = s.raw(q.n - q.total) / _normaliser(s, q.n)
    for i in q.indices:
        val *= phi * m[i - 1] / math.factorial(i)
    return _from_mpq(val)


def _h_sum(series, n, indices, phi, alternating):
    """sum over h_j >= 1 of (+-1)^(sum h + k) phi^(sum h) q(n - sum h_j i_j)."""
    k = len(indices)
    acc = mpq(0)

    def walk(j, rem, hsum):
        nonlocal acc
        if j == k:
            term = phi ** hsum * series.raw(rem)
            if alternating and (hsum + k) % 2:
                acc -= term
            else:
                acc += term
            return
        i = indices[j]
        h = 1
        while h * i <= rem:
            walk(j + 1, rem - h * i, hsum + h)
            h += 1

    walk(0, n, 0)
    return acc


def _product_moment(q: MomentQuery, kind: str) -> Fraction:
    fam = q.family
    if fam.kind != kind:
        raise DomainError(f"{kind}_moment needs a {kind} family")
    if q.total > q.n:
        return Fraction(0)
    s = fam.series(q.n)
    m = fam.m_list(max(q.indices))
    pre = mpq(1)
    for i in q.indices:
        pre *= m[i - 1]
    if pre == 0:
        return Fraction(0)
    acc = _h_sum(s, q.n, q.indices, _mpq(fam.phi), kind == "selection")
    return _from_mpq(pre * acc / _normaliser(s, q.n))


def multiset_moment(q, n=None, indices=None) -> Fraction:
    """(prod m_i / q(n)) sum_{h>=1} phi^(sum h) q(n - sum h_j i_j); q(<0) = 0."""
    return _product_moment(_query(q, n, indices), "multiset")


def selection_moment(q, n=None, indices=None) -> Fraction:
    """As :func:`multiset_moment` with the sign (-1)^(sum h + k)."""
    return _product_moment(_query(q, n, indices), "selection")


def moment(family: FamilySpec, n: int, indices) -> Fraction:
    q = MomentQuery(family, n, tuple(indices))
    return {"assembly": assembly_moment, "multiset": multiset_moment,
            "selection": selection_moment}[family.kind](q)


def master_rhs(theta: float, n: int, indices) -> float:
    """theta^k / (1 - m/n)^(1-theta) / prod i_j, with m = sum of indices."""
    indices = tuple(indices)
    m = sum(indices)
    if m >= n:
        raise DomainError(f"sum of indices ({m}) must be < n ({n})")
    val = theta ** len(indices) / (1.0 - m / n) ** (1.0 - theta)
    for i in indices:
        val /= i
    return val


def moment_result(family: FamilySpec, n: int, indices) -> MomentResult:
    exact = moment(family, n, indices)
    theta = family.tilted_theta
    if theta is None or sum(indices) >= n:
        return MomentResult(exact, None, None)
    rhs = master_rhs(theta, n, indices)
    return MomentResult(exact, rhs, float(exact) / rhs)


def leading_term_dominance(family: FamilySpec, n: int, indices) -> tuple[Fraction, Fraction, float]:
    """Split the multiset/selection h-sum into the h = (1,...,1) term and the rest.

    Returns ``(leading, rest_abs, eps)`` with eps = rest_abs / leading.
    """
    q = MomentQuery(family, n, tuple(indices))
    if family.kind not in ("multiset", "selection"):
        raise DomainError("dominance check applies to multisets and selections")
    s = family.series(n)
    phi = _mpq(family.phi)
    k = len(q.indices)
    leading = phi ** k * s.raw(n - q.total)
    total_abs = mpq(0)

    def walk(j, rem, hsum):
        nonlocal total_abs
        if j == k:
            total_abs += phi ** hsum * s.raw(rem)
            return
        i = q.indices[j]
        h = 1
        while h * i <= rem:
            walk(j + 1, rem - h * i, hsum + h)
            h += 1

    walk(0, n, 0)
    rest = total_abs - leading
    return _from_mpq(leading), _from_mpq(rest), float(rest / leading) if leading else math.inf


# ---------------------------------------------------------------------------
# enumeration oracle


def _set_partitions(n):
    """Yield the block sizes of every set partition of {0..n-1}."""
    blocks: list[int] = []

    def rec(i):
        if i == n:
            yield tuple(blocks)
            return
        for b in range(len(blocks)):
            blocks[b] += 1
            yield from rec(i + 1)
            blocks[b] -= 1
        blocks.append(1)
        yield from rec(i + 1)
        blocks.pop()

    yield from rec(0)


@lru_cache(maxsize=None)
def set_partition_profiles(n: int) -> dict:
    """Block-size profile (C_1..C_n) -> number of set partitions of [n]."""
    out: Counter = Counter()
    for sizes in _set_partitions(n):
        prof = [0] * n
        for b in sizes:
            prof[b - 1] += 1
        out[tuple(prof)] += 1
    return dict(out)


@lru_cache(maxsize=256)
def _universe_profiles(kind: str, m: tuple, n: int) -> dict:
    """Enumerate multisets (or sets) of irreducibles of total weight n.

    The universe holds m[i-1] distinct kinds of weight i; kinds are listed in
    decreasing weight and each object is generated once, in canonical order.
    """
    items = [i for i in range(n, 0, -1) for _ in range(m[i - 1])]
    out: Counter = Counter()
    prof = [0] * n
    repeat = kind == "multiset"
    # first item index whose weight is <= w
    first_fit = [0] * (n + 1)
    for w in range(n + 1):
        t = 0
        while t < len(items) and items[t] > w:
            t += 1
        first_fit[w] = t

    def rec(start, rem):
        if rem == 0:
            out[tuple(prof)] += 1
            return
        for t in range(max(start, first_fit[rem]), len(items)):
            wgt = items[t]
            prof[wgt - 1] += 1
            rec(t if repeat else t + 1, rem - wgt)
            prof[wgt - 1] -= 1

    rec(0, n)
    return dict(out)


def _enum_guard(family: FamilySpec, n: int):
    if family.kind == "assembly":
        limit = guard_limit(ASSEMBLY_ENUM_MAX_N)
        if n > limit:
            raise GuardError(f"assembly enumeration limited to n <= {limit}; "
                             f"n={n} needs Bell({n}) set partitions", estimate=n)
        return
    limit = guard_limit(ENUM_MAX_N)
    if n > limit:
        raise GuardError(f"enumeration limited to n <= {limit}", estimate=n)
    count = family.with_phi(1).series(n).q(n)
    cap = guard_limit(ENUM_MAX_OBJECTS)
    if count > cap:
        raise GuardError(f"{int(count)} objects of size {n} exceed the cap {cap}",
                         estimate=int(count))


def enumerate_profiles(family: FamilySpec, n: int) -> dict:
    """Profile (C_1..C_n) -> number of objects of size n with that profile."""
    _enum_guard(family, n)
    m = tuple(family.m_list(n))
    if family.kind == "assembly":
        out = {}
        for prof, cnt in set_partition_profiles(n).items():
            mult = cnt
            for i, c in enumerate(prof, start=1):
                if c:
                    mult *= m[i - 1] ** c
            if mult:
                out[prof] = mult
        return out
    return _universe_profiles(family.kind, m, n)


def profile_probabilities(family: FamilySpec, n: int) -> dict:
    """Exact tilted probability of each profile, by enumeration."""
    prof = enumerate_profiles(family, n)
    phi = family.phi
    weights = {p: c * phi ** sum(p) for p, c in prof.items()}
    total = sum(weights.values())
    return {p: w / total for p, w in weights.items()}


def brute_force_moment(family: FamilySpec, n: int, indices) -> Fraction:
    q = MomentQuery(family, n, tuple(indices))
    if q.total > n:
        return Fraction(0)
    probs = profile_probabilities(family, n)
    acc = Fraction(0)
    for prof, p in probs.items():
        v = p
        for i in q.indices:
            v *= prof[i - 1] if i <= n else 0
        acc += v
    return acc
