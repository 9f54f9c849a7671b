"""Combinatorial families: construction kind, irreducible counts m_i, tilt phi."""

from __future__ import annotations

import csv
import json
import math
import re
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable

from .errors import DomainError
from .series import (KINDS, CoeffSeries, SingularData, estimate_lambda, object_series,
                     to_fraction)


def mobius(n: int) -> int:
    result, p = 1, 2
    while p * p <= n:
        if n % p == 0:
            n //= p
            if n % p == 0:
                return 0
            result = -result
        p += 1
    return -result if n > 1 else result


def necklace_counts(q: int, N: int) -> list[int]:
    """Number of monic irreducibles of degree 1..N over F_q."""
    if q < 2:
        raise DomainError(f"q must be >= 2, got {q}")
    out = []
    for i in range(1, N + 1):
        s = sum(mobius(d) * q ** (i // d) for d in range(1, i + 1) if i % d == 0)
        out.append(s // i)
    return out


class CountProvider:
    """Lazily evaluated, memoised irreducible counts m_1, m_2, ...

    ``fn`` computes a prefix ``m_1..m_N`` in one call; finite sequences
    (CSV input) are padded with zeros past their last entry.
    """

    def __init__(self, label: str, fn: Callable[[int], list[int]] | None = None,
                 values=None):
        self.label = label
        self._fn = fn
        self._values = list(values) if values is not None else []
        self._finite = fn is None
        self._lock = threading.Lock()

    def upto(self, N: int) -> list[int]:
        if N > len(self._values) and not self._finite:
            with self._lock:
                if N > len(self._values):
                    self._values = list(self._fn(max(N, 2 * len(self._values))))
        vals = self._values[:N]
        return vals + [0] * (N - len(vals))

    def __call__(self, i: int) -> int:
        return self.upto(i)[i - 1]

    def __getitem__(self, i: int) -> int:
        if isinstance(i, slice):
            if i.stop is None:
                raise ValueError("open-ended slices are not supported")
            return self.upto(i.stop)[i]
        return self(i + 1)

    def __len__(self):
        # infinite providers report a large nominal length for summations
        return len(self._values) if self._finite else 10 ** 9

    def __repr__(self):
        return f"CountProvider({self.label!r})"


@dataclass(frozen=True, eq=False)
class FamilySpec:
    kind: str
    m: CountProvider
    phi: Fraction
    singular: SingularData | None = None
    name: str = "custom"
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "phi", to_fraction(self.phi))
        if self.phi <= 0:
            raise DomainError(f"phi must be positive, got {self.phi}")
        sd = self.singular
        if sd is not None and self.kind == "multiset" and self.phi * to_fraction(sd.rho) >= 1:
            raise DomainError(
                f"multisets need phi < 1/rho; phi={self.phi}, rho={sd.rho} "
                "(the limiting behaviour beyond that is not covered)")

    @property
    def key(self) -> tuple:
        return (self.kind, self.m.label, self.phi)

    @property
    def tilted_theta(self) -> float | None:
        return None if self.singular is None else self.singular.tilted_theta

    def m_list(self, N: int) -> list[int]:
        return self.m.upto(N)

    def series(self, N: int) -> CoeffSeries:
        """Exact object series up to degree ``N`` (memoised per family key)."""
        return _series_for(self, N)

    def with_phi(self, phi) -> "FamilySpec":
        phi = to_fraction(phi)
        sd = self.singular
        if sd is not None:
            sd = SingularData(sd.rho, sd.theta, sd.lam, phi)
        return FamilySpec(self.kind, self.m, phi, sd, self.name, self.source)

    def descriptor(self) -> dict:
        """JSON-serialisable descriptor (kind, phi, source, q)."""
        d = {"kind": self.kind, "phi": str(self.phi), "source": self.name}
        d.update(self.source)
        return d


_series_cache: dict = {}
_series_lock = threading.Lock()


def _series_for(family: FamilySpec, N: int) -> CoeffSeries:
    key = family.key
    with _series_lock:
        cached = _series_cache.get(key)
    if cached is not None and cached.degree >= N:
        return cached.truncate(N) if cached.degree > N else cached
    s = object_series(family.kind, family.m_list(N), family.phi, N)
    with _series_lock:
        old = _series_cache.get(key)
        if old is None or old.degree < N:
            _series_cache[key] = s
    return s


# ---------------------------------------------------------------------------
# built-ins


def _factorials(N):
    return [math.factorial(i - 1) for i in range(1, N + 1)]


@lru_cache(maxsize=None)
def _polynomial_provider(q: int) -> CountProvider:
    return CountProvider(f"necklace-F{q}", lambda N: necklace_counts(q, N))


@lru_cache(maxsize=None)
def _polynomial_lambda(q: int):
    return estimate_lambda(_polynomial_provider(q), Fraction(1, q), 1.0)


PERMUTATIONS = CountProvider("factorial", _factorials)

_POLY = re.compile(r"^polynomial-(multiset|selection)-F(\d+)$")


def builtin_family(name: str, phi=1, q: int | None = None, kind: str | None = None,
                   path: str | None = None, c: int | None = None) -> FamilySpec:
    """Construct a named family.

    Names: ``permutation`` (Ewens when phi != 1), ``polynomial-multiset-Fq``,
    ``polynomial-selection-Fq`` (``q`` from the name or the argument),
    ``uniform`` (m_i = c, needs ``kind``) and ``custom-csv`` (needs ``kind``
    and ``path``).  Custom families carry no singular data.
    """
    phi = to_fraction(phi)
    if name == "permutation":
        sd = SingularData(1.0, 1.0, 0.0, phi)
        return FamilySpec("assembly", PERMUTATIONS, phi, sd, "permutation")
    mt = _POLY.match(name)
    if mt or name in ("polynomial-multiset", "polynomial-selection"):
        fam_kind = mt.group(1) if mt else name.split("-")[1]
        qq = int(mt.group(2)) if mt else q
        if qq is None or qq < 2:
            raise DomainError(f"{name} needs a field size q >= 2")
        if fam_kind == "multiset" and phi >= qq:
            raise DomainError(
                f"polynomial-multiset-F{qq} needs phi < {qq} (phi < 1/rho), got {phi}")
        lam = _polynomial_lambda(qq)
        sd = SingularData(1.0 / qq, 1.0, lam.value, phi)
        return FamilySpec(fam_kind, _polynomial_provider(qq), phi, sd,
                          f"polynomial-{fam_kind}-F{qq}", {"q": qq})
    if name == "uniform":
        if kind is None or c is None:
            raise DomainError("uniform family needs kind and c")
        cc = int(c)
        if cc < 0:
            raise DomainError("c must be non-negative")
        prov = CountProvider(f"uniform-{cc}", lambda N: [cc] * N)
        return FamilySpec(kind, prov, phi, None, "uniform", {"c": cc})
    if name == "custom-csv":
        if kind is None or path is None:
            raise DomainError("custom-csv family needs kind and path")
        values = read_m_csv(path)
        prov = CountProvider(f"csv:{path}:{hash(tuple(values))}", values=values)
        return FamilySpec(kind, prov, phi, None, "custom-csv", {"path": str(path)})
    raise DomainError(f"unknown family {name!r}")


def custom_family(kind: str, m, phi=1, label: str | None = None) -> FamilySpec:
    """Family from an explicit finite m sequence (m_1, m_2, ...)."""
    values = [int(v) for v in m]
    if any(v < 0 for v in values):
        raise DomainError("m_i must be non-negative")
    prov = CountProvider(label or f"explicit:{tuple(values)}", values=values)
    return FamilySpec(kind, prov, phi, None, "custom")


def read_m_csv(path) -> list[int]:
    """Read ``i,m_i`` rows (header optional, exact integers) into m_1..m_N."""
    entries = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                i, v = int(row[0]), int(row[1])
            except ValueError:
                if not entries:
                    continue  # header
                raise DomainError(f"bad row in {path}: {row}") from None
            if i < 1 or v < 0:
                raise DomainError(f"bad entry i={i}, m_i={v} in {path}")
            entries[i] = v
    if not entries:
        raise DomainError(f"no m_i rows in {path}")
    return [entries.get(i, 0) for i in range(1, max(entries) + 1)]


def family_from_descriptor(desc: dict | str) -> FamilySpec:
    """Inverse of :meth:`FamilySpec.descriptor`; accepts a dict or JSON text."""
    if isinstance(desc, str):
        desc = json.loads(desc)
    src = desc.get("source", desc.get("name"))
    return builtin_family(src, phi=desc.get("phi", 1), q=desc.get("q"),
                          kind=desc.get("kind"), path=desc.get("path"), c=desc.get("c"))
