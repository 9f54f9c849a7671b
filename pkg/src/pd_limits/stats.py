"""KS distances and joint-CDF checks of scaled sizes against PD(theta)."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .errors import DomainError
from .pdcore import EULER_GAMMA, PDParams, largest_part_cdf, table_covering
from .samplers import ScaledSizeSeq

MIN_SAMPLES = 1000
QUAD_TOL = 1e-5


@dataclass(frozen=True)
class KSResult:
    statistic: float
    sample_size: int
    reference: str


def _largest_parts(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        arr = samples if samples.ndim == 1 else samples[:, 0]
    else:
        arr = np.array([s.values[0] if isinstance(s, ScaledSizeSeq) else s[0] for s in samples])
    return np.asarray(arr, dtype=float)


def _cdf_at(params: PDParams, x: np.ndarray) -> np.ndarray:
    """largest_part_cdf over many points, evaluated once per distinct value."""
    uniq, inv = np.unique(x, return_inverse=True)
    out = np.zeros(uniq.shape)
    pos = uniq > 0
    if pos.any():
        out[pos] = largest_part_cdf(params, uniq[pos])
    return out[inv]


def ks_statistic(sample, cdf, cdf_left=None) -> float:
    """sup_t |F_n(t) - F(t)| (vectorised).

    Tied sample values are handled: the sup is taken against the empirical
    CDF just before the first and just after the last copy of each value.
    A reference with jumps passes its left limits as ``cdf_left``.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n == 0:
        raise DomainError("empty sample")
    f = cdf(x)
    f_left = f if cdf_left is None else cdf_left(x)
    upper = np.searchsorted(x, x, side="right") / n
    lower = np.searchsorted(x, x, side="left") / n
    return float(max(np.max(np.abs(upper - f)), np.max(np.abs(f_left - lower))))


def ks_largest_part(samples, params: PDParams) -> KSResult:
    x = _largest_parts(samples)
    if x.size < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    stat = ks_statistic(x, lambda v: _cdf_at(params, v))
    return KSResult(stat, int(x.size), f"largest_part_cdf(theta={params.theta:g})")


def ecdf_table(samples, params: PDParams, grid) -> list[tuple]:
    """(t, empirical, theoretical) rows for the largest part."""
    x = np.sort(_largest_parts(samples))
    grid = np.asarray(grid, dtype=float)
    emp = np.searchsorted(x, grid, side="right") / x.size
    theo = _cdf_at(params, grid)
    return list(zip(grid.tolist(), emp.tolist(), theo.tolist()))


def ecdf_csv(rows, dest=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "empirical_cdf", "theoretical_cdf"])
    for t, e, f in rows:
        w.writerow([f"{t:.12g}", f"{e:.12g}", f"{f:.12g}"])
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# joint CDF of the top k parts


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _panel_points(lo, hi, rest, depth=10):
    """Breakpoints on [lo, hi] for the last coordinate t given 1 - sum(prefix) = rest.

    g((rest - t)/t) has kinks where rest/t is an integer and may blow up as
    t -> rest (theta < 1), so panels are graded geometrically at those points.
    """
    pts = [lo, hi]
    j_lo = max(1, int(np.ceil(rest / hi)) if hi > 0 else 1)
    j_hi = int(np.floor(rest / lo))
    for j in range(j_lo, j_hi + 1):
        c = rest / j
        if lo <= c <= hi:
            pts.append(c)
    base = sorted(set(pts))
    extra = []
    for c in base:
        for side in (-1, 1):
            span = (hi - lo) * 0.5 ** np.arange(1, depth + 1)
            extra.extend((c + side * span).tolist())
    allp = np.unique(np.clip(np.array(base + extra), lo, hi))
    return allp


def _last_coordinate_mass(params, prefix, lo, hi, table) -> float:
    """int_lo^hi f_{theta,k}(prefix, t) dt, vectorised Gauss-Legendre panels."""
    if hi <= lo:
        return 0.0
    theta = params.theta
    k = len(prefix) + 1
    rest = 1.0 - sum(prefix)
    # for theta >= 1 the kinks are derivative jumps; a breakpoint suffices
    pts = _panel_points(lo, hi, rest, depth=10 if theta < 1 else 0)
    a, b = pts[:-1], pts[1:]
    half = 0.5 * (b - a)
    t = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
    u = np.maximum(rest - t, 0.0) / t
    const = (np.exp(EULER_GAMMA * theta) * theta ** k * gamma_fn(theta)
             / np.prod(prefix))
    f = const * t ** (theta - 2.0) * table(u.ravel()).reshape(u.shape)
    return float(np.sum(half * (f @ _GL_W)))


def _orthant_mass(params: PDParams, x: tuple, table) -> float:
    """P(L_1 <= x_1, ..., L_k <= x_k) for non-increasing x.

    Peels off the last coordinate:
      P_k(x) = P_{k-1}(x_1..x_{k-1}) - P(L_j <= x_j for j < k, L_k > x_k),
    where the subtracted term integrates f_{theta,k} over a region with every
    coordinate above x_k > 0, so the x -> 0 singularity never enters.
    """
    k = len(x)
    if k == 1:
        return float(largest_part_cdf(params, x[0]))
    head = _orthant_mass(params, x[:-1], table)
    xk = x[-1]

    def nested(prefix):
        depth = len(prefix)
        if depth == k - 1:
            hi = min(prefix[-1], 1.0 - sum(prefix))
            return _last_coordinate_mass(params, prefix, xk, hi, table)
        hi = x[0] if depth == 0 else min(x[depth], prefix[-1])
        if hi <= xk:
            return 0.0
        rest = 1.0 - sum(prefix)
        # where the inner integrand changes form: range switches and g kinks
        cand = [rest / 2] + [rest - j * xk for j in range(1, int(rest / xk) + 1)]
        cand += [rest / (j + 1) for j in range(1, int(rest / xk) + 1)]
        if depth + 1 < k - 1:
            cand.append(x[depth + 1])
        pts = sorted({c for c in cand if xk < c < hi})
        val, _ = integrate.quad(lambda y: nested(prefix + (y,)), xk, hi,
                                epsabs=QUAD_TOL / 10, epsrel=QUAD_TOL, limit=200,
                                points=pts or None)
        return val

    return head - nested(())


@dataclass(frozen=True)
class JointCheck:
    k: int
    max_deviation: float
    points: tuple  # ((x, empirical, theoretical), ...)


def joint_cdf(params: PDParams, x) -> float:
    """P(L_1 <= x_1, ..., L_k <= x_k) under PD(theta), k <= 3."""
    x = np.asarray(x, dtype=float)
    if x.size > 3:
        raise DomainError("joint CDF quadrature is limited to k <= 3")
    if np.any(x <= 0):
        return 0.0
    # L_j <= L_{j-1}, so only the running minimum matters
    x = tuple(np.minimum.accumulate(np.minimum(x, 1.0)).tolist())
    table = table_covering("g-theta", params.theta, 1.0 / x[-1] + 1)
    return float(np.clip(_orthant_mass(params, x, table), 0.0, 1.0))


def joint_cdf_check(samples, params: PDParams, k: int, grid) -> JointCheck:
    """Max over grid points of |empirical - theoretical| joint CDF of (L_1..L_k)."""
    if k > 3:
        raise DomainError("joint_cdf_check is limited to k <= 3")
    if k < 1:
        raise DomainError("k must be >= 1")
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[1] < k:
        raise DomainError(f"samples carry {arr.shape[1]} parts, need {k}")
    arr = arr[:, :k]
    grid = [tuple(np.atleast_1d(np.asarray(g, dtype=float)).tolist()) for g in grid]
    pts = []
    worst = 0.0
    for g in grid:
        if len(g) != k:
            raise DomainError(f"grid points must have {k} coordinates")
        emp = float(np.mean(np.all(arr <= np.asarray(g), axis=1)))
        theo = joint_cdf(params, g)
        pts.append((g, emp, theo))
        worst = max(worst, abs(emp - theo))
    return JointCheck(k, worst, tuple(pts))


def product_grid(axes, k: int) -> list[tuple]:
    return list(itertools.product(axes, repeat=k))
