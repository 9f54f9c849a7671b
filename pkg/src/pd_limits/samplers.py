"""Exact samplers for tilted structures and for prime factors of random integers.

Structures are drawn by sequential conditioning on a table of partial
object weights

    T_j(w) = weighted number of size-w structures using component sizes <= j,
    T_j(w) = sum_c a_j(c) T_{j-1}(w - j c),

with per-size count weights a_j(c):

    assembly   (phi m_j / j!)^c / c!
    multiset   binom(m_j + c - 1, c) phi^c
    selection  binom(m_j, c) phi^c

Going from the top size down with w units left, P(no component of size in
(j, i]) = T_j(w) / T_i(w), so the next occupied size is found by one
inverse-CDF draw over the column T_.(w) instead of visiting every empty size;
then C_j >= 1 is drawn from a_j(c) T_{j-1}(w - j c).  The table is kept in
log space.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._guards import guard_limit
from .errors import DomainError, GuardError
from .families import FamilySpec

BLOCK = 4096
SAMPLER_MAX_N = 10_000
FACTOR_MAX_N = 10 ** 9
_WIDE = 64


@dataclass(frozen=True)
class CountVector:
    n: int
    counts: tuple  # counts[i-1] = C_i

    def __post_init__(self):
        if len(self.counts) != self.n:
            raise ValueError("counts must have length n")
        if sum(i * c for i, c in enumerate(self.counts, start=1)) != self.n:
            raise ValueError("sum of i*C_i must equal n")

    @property
    def components(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class ScaledSizeSeq:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(np.diff(v) > 0):
            raise ValueError("scaled sizes must be non-increasing")
        if np.any(v < 0) or v.sum() > 1 + 1e-12:
            raise ValueError("scaled sizes must be non-negative with sum <= 1")
        object.__setattr__(self, "values", v)


def scaled_sizes(cv: CountVector, pad: int) -> ScaledSizeSeq:
    sizes = [i for i in range(cv.n, 0, -1) for _ in range(cv.counts[i - 1])]
    vals = [s / cv.n for s in sizes[:pad]]
    vals += [0.0] * (pad - len(vals))
    return ScaledSizeSeq(np.array(vals))


# ---------------------------------------------------------------------------
# conditioning table


def _log_count_weights(kind, m_j, j, phi, cmax):
    """log a_j(c) for c = 0..cmax (-inf where the weight vanishes)."""
    out = np.full(cmax + 1, -np.inf)
    out[0] = 0.0
    if m_j == 0:
        return out
    lphi = math.log(phi)
    if kind == "assembly":
        base = lphi + math.log(m_j) - math.lgamma(j + 1)
        c = np.arange(1, cmax + 1)
        out[1:] = c * base - np.array([math.lgamma(x + 1) for x in c])
        return out
    acc = 0.0
    for c in range(1, cmax + 1):
        if kind == "multiset":
            acc += math.log(m_j + c - 1) - math.log(c)
        else:
            if c > m_j:
                break
            acc += math.log(m_j - c + 1) - math.log(c)
        out[c] = acc + c * lphi
    return out


class ConditioningTable:
    """log T_j(w) for 0 <= j, w <= n, plus the count weights."""

    def __init__(self, family: FamilySpec, n: int):
        limit = guard_limit(SAMPLER_MAX_N)
        if n > limit:
            raise GuardError(f"sampler tables limited to n <= {limit} "
                             f"(~{8 * (n + 1) ** 2 / 1e6:.0f} MB at n={n})", estimate=n)
        if n < 1:
            raise DomainError("n must be >= 1")
        self.n = n
        self.kind = family.kind
        phi = float(family.phi)
        m = family.m_list(n)
        self.log_a = [None] + [_log_count_weights(family.kind, m[j - 1], j, phi, n // j)
                               for j in range(1, n + 1)]
        lt = np.full((n + 1, n + 1), -np.inf)
        lt[0, 0] = 0.0
        with np.errstate(invalid="ignore"):
            for j in range(1, n + 1):
                prev = lt[j - 1]
                acc = prev.copy()
                la = self.log_a[j]
                for c in range(1, n // j + 1):
                    if la[c] == -np.inf:
                        continue
                    s = j * c
                    acc[s:] = np.logaddexp(acc[s:], la[c] + prev[: n + 1 - s])
                lt[j] = acc
        if not np.isfinite(lt[n, n]):
            raise DomainError(f"no structures of size {n} in this family")
        self.log_t = lt
        # monotone copy for the inverse-CDF search
        self.log_t_mono = np.maximum.accumulate(lt, axis=0)


_tables: dict = {}
_tables_lock = threading.Lock()


def conditioning_table(family: FamilySpec, n: int) -> ConditioningTable:
    key = family.key + (n,)
    with _tables_lock:
        tab = _tables.get(key)
    if tab is None:
        tab = ConditioningTable(family, n)
        with _tables_lock:
            if len(_tables) > 8:
                _tables.pop(next(iter(_tables)))
            _tables[key] = tab
    return tab


def _draw_counts(tab, rng, j, w):
    """C_j >= 1 given the next occupied size j and w units remaining."""
    cmax = w // j
    width = min(int(cmax.max()), _WIDE)
    c = np.arange(1, width + 1)
    rows = np.arange(len(j))
    la = np.full((len(j), width), -np.inf)
    lt_prev = np.full((len(j), width), -np.inf)
    valid = c[None, :] <= cmax[:, None]
    rr, cc = np.nonzero(valid)
    jj = j[rr]
    la[rr, cc] = [tab.log_a[a][b] for a, b in zip(jj.tolist(), (cc + 1).tolist())]
    lt_prev[rr, cc] = tab.log_t[jj - 1, w[rr] - jj * (cc + 1)]
    logw = la + lt_prev
    u = rng.random(len(j))
    out = np.empty(len(j), dtype=np.int64)
    for r in rows[cmax > _WIDE]:
        cs = np.arange(1, cmax[r] + 1)
        full = np.array([tab.log_a[j[r]][x] for x in cs]) + tab.log_t[j[r] - 1, w[r] - j[r] * cs]
        p = np.exp(full - full.max())
        cum = np.cumsum(p)
        out[r] = cs[min(np.searchsorted(cum, u[r] * cum[-1], side="right"), len(cs) - 1)]
    narrow = cmax <= _WIDE
    if np.any(narrow):
        lw = logw[narrow]
        top = lw.max(axis=1, keepdims=True)
        p = np.exp(lw - top)
        cum = np.cumsum(p, axis=1)
        pick = (cum < (u[narrow] * cum[:, -1])[:, None]).sum(axis=1)
        out[narrow] = np.minimum(pick, cmax[narrow] - 1) + 1
    return out


def _sample_block(tab: ConditioningTable, rng, rows: int):
    n = tab.n
    lt = tab.log_t
    ltm = tab.log_t_mono
    w = np.full(rows, n, dtype=np.int64)
    top = np.full(rows, n, dtype=np.int64)
    reps, sizes, counts = [], [], []
    steps = max(1, math.ceil(math.log2(n + 1)))
    active = np.arange(rows)
    while active.size:
        wa, ia = w[active], top[active]
        target = np.log1p(-rng.random(active.size)) + lt[ia, wa]
        lo = np.zeros(active.size, dtype=np.int64)
        hi = ia.copy()
        for _ in range(steps):
            mid = (lo + hi) // 2
            ok = ltm[mid, wa] >= target
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        j = hi
        c = _draw_counts(tab, rng, j, wa)
        reps.append(active)
        sizes.append(j)
        counts.append(c)
        w[active] = wa - j * c
        top[active] = np.minimum(j - 1, w[active])
        active = active[w[active] > 0]
    rep = np.concatenate(reps)
    size = np.concatenate(sizes)
    cnt = np.concatenate(counts)
    order = np.lexsort((-size, rep))
    return rep[order], size[order], cnt[order]


class StructureSample:
    """Sparse component counts of many sampled structures of size ``n``.

    Entry ``t`` says replicate ``rep[t]`` has ``count[t]`` components of size
    ``size[t]``; entries are sorted by replicate, then by decreasing size.
    """

    def __init__(self, n, replicates, rep, size, count):
        self.n = n
        self.replicates = replicates
        self.rep = rep
        self.size = size
        self.count = count
        weight = np.bincount(rep, weights=size * count, minlength=replicates)
        if not np.all(weight == n):
            raise AssertionError("sampled structure violates sum i*C_i = n")

    def count_vector(self, r: int) -> CountVector:
        sel = self.rep == r
        counts = [0] * self.n
        for s, c in zip(self.size[sel], self.count[sel]):
            counts[s - 1] = int(c)
        return CountVector(self.n, tuple(counts))

    def profiles(self) -> list[tuple]:
        """One (C_1..C_n) tuple per replicate (small n only)."""
        out = np.zeros((self.replicates, self.n), dtype=np.int64)
        out[self.rep, self.size - 1] = self.count
        return [tuple(row) for row in out.tolist()]

    def counts_at(self, indices) -> np.ndarray:
        """(replicates, k) matrix of C_i for the requested sizes."""
        out = np.zeros((self.replicates, len(indices)), dtype=np.int64)
        for col, i in enumerate(indices):
            sel = self.size == i
            out[self.rep[sel], col] = self.count[sel]
        return out

    def scaled_sizes(self, pad: int) -> np.ndarray:
        """(replicates, pad) array of L_1 >= L_2 >= ... padded with zeros."""
        reps = np.repeat(self.rep, np.minimum(self.count, pad))
        vals = np.repeat(self.size, np.minimum(self.count, pad)) / self.n
        start = np.searchsorted(reps, np.arange(self.replicates))
        rank = np.arange(len(reps)) - start[reps]
        keep = rank < pad
        out = np.zeros((self.replicates, pad))
        out[reps[keep], rank[keep]] = vals[keep]
        return out

    def interval_counts(self, intervals) -> np.ndarray:
        """(replicates, k) counts of components with a*n < size <= b*n."""
        out = np.zeros((self.replicates, len(intervals)), dtype=np.int64)
        for col, (a, b) in enumerate(intervals):
            a, b = Fraction(a), Fraction(b)
            lo = math.floor(a * self.n)  # size > a n  <=>  size > floor(a n)
            hi = math.floor(b * self.n)
            sel = (self.size > lo) & (self.size <= hi)
            np.add.at(out[:, col], self.rep[sel], self.count[sel])
        return out


def _block_rng(seed, block):
    return np.random.default_rng([int(seed), int(block)])


def sample_structures(family: FamilySpec, n: int, replicates: int, seed: int,
                      threads: int = 1) -> StructureSample:
    """Draw ``replicates`` independent structures from the phi-tilted law.

    Replicates come in fixed blocks of 4096 with block ``b`` seeded by
    ``(seed, b)``, so results do not depend on ``threads``.
    """
    if replicates < 1:
        raise DomainError("replicates must be >= 1")
    tab = conditioning_table(family, n)
    starts = list(range(0, replicates, BLOCK))

    def run(b):
        rows = min(BLOCK, replicates - starts[b])
        rep, size, cnt = _sample_block(tab, _block_rng(seed, b), rows)
        return rep + starts[b], size, cnt

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, range(len(starts))))
    else:
        parts = [run(b) for b in range(len(starts))]
    return StructureSample(n, replicates,
                           np.concatenate([p[0] for p in parts]),
                           np.concatenate([p[1] for p in parts]),
                           np.concatenate([p[2] for p in parts]))


def sample_structure(family: FamilySpec, n: int, seed: int) -> CountVector:
    return sample_structures(family, n, 1, seed).count_vector(0)


# ---------------------------------------------------------------------------
# prime factors


def primes_upto(limit: int) -> np.ndarray:
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if sieve[p]:
            sieve[p * p::p] = False
    return np.nonzero(sieve)[0].astype(np.int64)


def factorize_many(values: np.ndarray):
    """Trial division of an integer array; returns (row, prime) pairs with multiplicity."""
    values = np.asarray(values, dtype=np.int64)
    rem = values.copy()
    rows, primes = [], []
    idx = np.arange(len(values))
    for p in primes_upto(math.isqrt(int(values.max(initial=1)))).tolist():
        live = rem >= p * p
        if not live.any():
            break
        idx_l = idx[live]
        while True:
            hit = idx_l[rem[idx_l] % p == 0]
            if hit.size == 0:
                break
            rows.append(hit)
            primes.append(np.full(hit.size, p, dtype=np.int64))
            rem[hit] //= p
            idx_l = hit
    big = rem > 1
    rows.append(idx[big])
    primes.append(rem[big])
    return np.concatenate(rows), np.concatenate(primes)


class FactorSample:
    """Prime factors (with multiplicity) of uniform random integers in [1..n]."""

    def __init__(self, n, values, rep, prime):
        self.n = n
        self.values = values
        self.replicates = len(values)
        order = np.lexsort((-prime, rep))
        self.rep = rep[order]
        self.prime = prime[order]

    def scaled_sizes(self, pad: int) -> np.ndarray:
        logs = np.log(self.prime) / math.log(self.n)
        start = np.searchsorted(self.rep, np.arange(self.replicates))
        rank = np.arange(len(self.rep)) - start[self.rep]
        keep = rank < pad
        out = np.zeros((self.replicates, pad))
        out[self.rep[keep], rank[keep]] = logs[keep]
        return out

    def interval_counts(self, intervals) -> np.ndarray:
        """Counts of prime factors p with n^a < p <= n^b (exact integer tests)."""
        out = np.zeros((self.replicates, len(intervals)), dtype=np.int64)
        pr = [int(p) for p in self.prime.tolist()]
        for col, (a, b) in enumerate(intervals):
            a, b = Fraction(a), Fraction(b)
            inside = np.array([p ** a.denominator > self.n ** a.numerator
                               and p ** b.denominator <= self.n ** b.numerator for p in pr],
                              dtype=bool)
            np.add.at(out[:, col], self.rep[inside], 1)
        return out


def sample_prime_factor_batch(n: int, replicates: int, seed: int) -> FactorSample:
    if n < 2:
        raise DomainError("n must be >= 2")
    limit = guard_limit(FACTOR_MAX_N)
    if n > limit:
        raise GuardError(f"factorisation limited to n <= {limit}", estimate=n)
    vals = []
    for b, start in enumerate(range(0, replicates, BLOCK)):
        rows = min(BLOCK, replicates - start)
        vals.append(_block_rng(seed, b).integers(1, n + 1, size=rows))
    values = np.concatenate(vals)
    rep, prime = factorize_many(values)
    return FactorSample(n, values, rep, prime)


def prime_factor_sizes(N: int, n: int, pad: int = 10) -> ScaledSizeSeq:
    """log p / log n over the prime factors of ``N``, sorted and padded."""
    rep, prime = factorize_many(np.array([N]))
    logs = sorted((math.log(int(p)) / math.log(n) for p in prime.tolist()), reverse=True)
    logs = logs[:pad] + [0.0] * max(0, pad - len(logs))
    return ScaledSizeSeq(np.array(logs))


def sample_prime_factors(n: int, seed: int, pad: int = 10) -> ScaledSizeSeq:
    fs = sample_prime_factor_batch(n, 1, seed)
    return ScaledSizeSeq(fs.scaled_sizes(pad)[0])
