"""Poisson-Dirichlet PD(theta): stick-breaking sampler, Dickman rho, g_theta.

The two delay functions are tabulated on a uniform grid whose step divides 1,
so every breakpoint of the delay equations (the integers) is a grid node:

    rho(t) = 1                         on [0, 1]
    t rho'(t) = -rho(t - 1)            for t > 1

    g(t) = c t**(theta-1)              on (0, 1],  c = exp(-gamma theta)/Gamma(theta)
    t g'(t) = (theta-1) g(t) - theta g(t-1)   for t > 1

Dickman's rho is the theta = 1 case with c = 1.  On [1, 2] both are solved in
closed form; beyond 2 the delay ODE is stepped with classical RK4, using the
closed form for the lagged value on [2, 3] and cubic Hermite interpolation of
the table (node derivatives taken from the ODE) further out.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn
from scipy.special import hyp2f1

from .errors import DomainError, TableRangeError

EULER_GAMMA = float(np.euler_gamma)

DEFAULT_STEP = 1e-3
DEFAULT_STICK_EPS = 1e-9
BLOCK = 4096


@dataclass(frozen=True)
class PDParams:
    theta: float

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise DomainError(f"theta must be positive and finite, got {self.theta}")


@dataclass(frozen=True)
class StickSample:
    """Top ``k`` sorted parts of one PD realisation."""

    parts: np.ndarray
    residual: float

    def __post_init__(self):
        if np.any(np.diff(self.parts) > 0):
            raise ValueError("parts must be non-increasing")


# ---------------------------------------------------------------------------
# delay-function tables


def _log_branch_integral(z, theta):
    """sum_j z**(theta+j)/(theta+j) = int_0^z y**(theta-1)/(1-y) dy, z <= 1/2."""
    z = np.asarray(z, dtype=float)
    return np.power(z, theta) / theta * hyp2f1(1.0, theta, theta + 1.0, z)


def _branch_scale(kind, theta):
    if kind == "dickman-rho":
        return 1.0
    return math.exp(-EULER_GAMMA * theta) / float(gamma_fn(theta))


@dataclass(frozen=True, eq=False)
class FunctionTable:
    """Dense table of rho or g_theta with cubic Hermite interpolation.

    Evaluation outside ``[0, t_max]`` raises :class:`TableRangeError`.
    On ``[0, 2]`` the closed-form branches are used directly.
    """

    kind: str
    theta: float
    grid: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    step: float

    @property
    def t_max(self) -> float:
        return float(self.grid[-1])

    @property
    def scale(self) -> float:
        return _branch_scale(self.kind, self.theta)

    def _first_branch(self, t):
        with np.errstate(divide="ignore"):
            return self.scale * np.power(t, self.theta - 1.0)

    def _second_branch(self, t):
        z = (t - 1.0) / t
        return self.scale * t ** (self.theta - 1.0) * (
            1.0 - self.theta * _log_branch_integral(z, self.theta))

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        t_arr = np.atleast_1d(t_arr)
        hi = self.t_max * (1 + 1e-12)
        if np.any(t_arr < 0) or np.any(t_arr > hi) or np.any(np.isnan(t_arr)):
            bad = t_arr[(t_arr < 0) | (t_arr > hi) | np.isnan(t_arr)][0]
            raise TableRangeError(
                f"{self.kind} table covers [0, {self.t_max}], asked for t={bad}")
        out = np.empty_like(t_arr)
        b1 = t_arr <= 1.0
        b2 = (t_arr > 1.0) & (t_arr <= 2.0)
        b3 = t_arr > 2.0
        out[b1] = self._first_branch(t_arr[b1])
        out[b2] = self._second_branch(t_arr[b2])
        if np.any(b3):
            out[b3] = self._hermite(np.minimum(t_arr[b3], self.t_max))
            if self.theta < 1:
                cusp = b3 & (t_arr < 2.0 + 4 * self.step)
                out[cusp] = [self._past_two(x) for x in t_arr[cusp]]
        return float(out[0]) if scalar else out

    def _past_two(self, t):
        # cubic interpolation cannot follow the (t-2)**(1+theta) cusp
        th = self.theta
        i = int((t - 2.0) / self.step + 1e-9)
        t0 = 2.0 + i * self.step
        y0 = float(self.values[round(t0 / self.step)])
        integral = quad(lambda s: s ** -th * float(self._second_branch(np.array([s - 1.0]))[0]),
                        t0, t, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        return t ** (th - 1.0) * (y0 * t0 ** (1.0 - th) - th * integral)

    def _hermite(self, t):
        h = self.step
        idx = np.minimum(((t - self.grid[0]) / h).astype(np.int64), len(self.grid) - 2)
        s = (t - self.grid[idx]) / h
        y0, y1 = self.values[idx], self.values[idx + 1]
        d0, d1 = self.derivs[idx] * h, self.derivs[idx + 1] * h
        s2, s3 = s * s, s * s * s
        return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * d0
                + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * d1)

    def to_csv(self, dest=None) -> str:
        """Write ``t,value`` rows with 12 significant digits; returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.grid, self.values):
            w.writerow([f"{t:.12g}", f"{v:.12g}"])
        text = buf.getvalue()
        if dest is not None:
            with open(dest, "w", newline="") as fh:
                fh.write(text)
        return text


def _solve_delay(kind, theta, t_max, step):
    if not t_max >= 1:
        raise DomainError(f"t_max must be >= 1, got {t_max}")
    if not step > 0:
        raise DomainError(f"step must be positive, got {step}")
    if step >= 1:
        raise DomainError("step must be < 1 so the unit delay spans several nodes")
    if step > DEFAULT_STEP:
        raise DomainError(f"step must be <= {DEFAULT_STEP}, got {step}")
    per_unit = math.ceil(1.0 / step - 1e-9)
    h = 1.0 / per_unit
    n_nodes = math.ceil(t_max * per_unit - 1e-9) + 1
    grid = np.arange(n_nodes) * h

    table = FunctionTable(kind, float(theta), grid, np.zeros(n_nodes), np.zeros(n_nodes), h)
    c = table.scale
    vals, ders = table.values, table.derivs

    first = grid <= 1.0
    vals[first] = table._first_branch(grid[first])
    if theta == 1:
        ders[first] = 0.0
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            ders[first] = (theta - 1.0) * vals[first] / grid[first]

    two = min(2 * per_unit, n_nodes - 1)
    sec = slice(per_unit + 1, two + 1)
    ts = grid[sec]
    vals[sec] = table._second_branch(ts)
    ders[sec] = ((theta - 1.0) * vals[sec] - theta * c * (ts - 1.0) ** (theta - 1.0)) / ts

    def rhs(t, y, lag):
        return ((theta - 1.0) * y - theta * lag) / t

    def lag_exact(t):
        return float(table._second_branch(np.array([t]))[0])

    start = two
    if theta < 1 and n_nodes - 1 > two:
        # the lag has a (t-2)**theta cusp just past t = 2; RK4 loses order
        # there, so the first nodes use the integrating-factor form
        #   g(t) t**(1-theta) = g(2) 2**(1-theta) - theta int_2^t s**-theta g(s-1) ds
        stop = min(two + max(per_unit // 10, 4), n_nodes - 1)
        base = vals[two] * 2.0 ** (1.0 - theta)
        acc = 0.0
        for i in range(two, stop):
            acc += quad(lambda s: s ** -theta * lag_exact(s - 1.0), grid[i], grid[i + 1],
                        epsabs=1e-15, epsrel=1e-13, limit=200)[0]
            t1 = grid[i + 1]
            vals[i + 1] = t1 ** (theta - 1.0) * (base - theta * acc)
            ders[i + 1] = rhs(t1, vals[i + 1], lag_exact(t1 - 1.0))
        start = stop

    for i in range(start, n_nodes - 1):
        t = grid[i]
        y = vals[i]
        j = i - per_unit
        if t < 3.0 - 0.5 * h:
            l0 = vals[j]
            lm = lag_exact(t - 1.0 + 0.5 * h)
            l1 = vals[j + 1]
        else:
            l0, l1 = vals[j], vals[j + 1]
            lm = 0.5 * (l0 + l1) + h * (ders[j] - ders[j + 1]) / 8.0
        k1 = rhs(t, y, l0)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1, lm)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2, lm)
        k4 = rhs(t + h, y + h * k3, l1)
        y1 = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        vals[i + 1] = y1
        ders[i + 1] = rhs(grid[i + 1], y1, l1)
    vals.setflags(write=False)
    ders.setflags(write=False)
    grid.setflags(write=False)
    return table


def solve_dickman(t_max: float, step: float = DEFAULT_STEP) -> FunctionTable:
    """Tabulate Dickman's rho on ``[0, t_max]``.

    ``step`` is rounded down to ``1/ceil(1/step)`` so integers are nodes.
    """
    return _solve_delay("dickman-rho", 1.0, t_max, step)


def solve_gtheta(params: PDParams, t_max: float, step: float = DEFAULT_STEP) -> FunctionTable:
    """Tabulate g_theta on ``[0, t_max]`` (the node at 0 holds the t -> 0 limit)."""
    return _solve_delay("g-theta", params.theta, t_max, step)


@lru_cache(maxsize=64)
def _cached_table(kind, theta, t_ceil):
    return _solve_delay(kind, theta, float(t_ceil), DEFAULT_STEP)


def table_covering(kind: str, theta: float, t_max: float) -> FunctionTable:
    """Shared immutable table covering ``[0, t_max]`` (rounded up to an integer)."""
    t_ceil = max(2, math.ceil(t_max))
    if kind == "dickman-rho":
        theta = 1.0
    return _cached_table(kind, float(theta), t_ceil)


# ---------------------------------------------------------------------------
# densities and CDFs


def density_f_theta_k(params: PDParams, x, table: FunctionTable | None = None) -> float:
    """Joint density of the ``k`` largest PD(theta) parts at ``x``."""
    x = np.asarray(x, dtype=float)
    theta = params.theta
    if x.ndim != 1 or x.size == 0:
        raise DomainError("x must be a non-empty vector")
    if np.any(x <= 0) or np.any(x > 1) or np.any(np.diff(x) > 0) or x.sum() > 1:
        return 0.0
    k = x.size
    u = (1.0 - x.sum()) / x[-1]
    if table is None:
        table = table_covering("g-theta", theta, u)
    elif table.kind != "g-theta" or table.theta != theta:
        raise DomainError("density needs the g_theta table for the same theta")
    g = table(u)
    return float(math.exp(EULER_GAMMA * theta) * theta ** k * gamma_fn(theta)
                 * x[-1] ** (theta - 1.0) / np.prod(x) * g)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _upper_tail_near_one(t, theta):
    """P(X_1 > t) for t >= 1/2, where f_1(x) = theta (1-x)**(theta-1) / x."""
    return theta * _log_branch_integral(1.0 - t, theta)


def largest_part_cdf(params: PDParams, t, table: FunctionTable | None = None):
    """P(X_1 <= t) for the largest PD(theta) part.

    theta = 1 reads Dickman's rho at 1/t.  Other theta integrate the first
    marginal density over [t, 1]: exactly on [1/2, 1], and with Gauss-Legendre
    panels split at the kinks x = 1/(j+1) below 1/2.  Accepts scalars or arrays.
    """
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    if np.any(~(t_arr > 0)):
        raise DomainError("largest_part_cdf needs t > 0")
    theta = params.theta
    out = np.ones_like(t_arr)
    inside = t_arr < 1.0
    tv = t_arr[inside]
    if tv.size:
        if theta == 1.0:
            tab = table if table is not None else table_covering("dickman-rho", 1.0, 1.0 / tv.min())
            out[inside] = tab(1.0 / tv)
        else:
            out[inside] = 1.0 - _upper_tail(tv, theta, table)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def _graded_points(tmin, levels=(40, 24, 12)):
    # the density has algebraic cusps just below x = 1/2, 1/3, 1/4, ...
    pts = [0.5]
    for j, depth in enumerate(levels, start=2):
        kink, below = 1.0 / j, 1.0 / (j + 1)
        pts.extend(kink - (kink - below) * 0.5 ** np.arange(1, depth + 1))
    pts = np.asarray(pts)
    return pts[pts >= tmin]


def _upper_tail(tv, theta, table):
    res = np.empty_like(tv)
    high = tv >= 0.5
    res[high] = _upper_tail_near_one(tv[high], theta)
    low_t = tv[~high]
    if low_t.size == 0:
        return res
    tmin = low_t.min()
    if table is None:
        table = table_covering("g-theta", theta, 1.0 / tmin)
    kinks = 1.0 / np.arange(2, math.floor(1.0 / tmin) + 2)
    pts = np.unique(np.concatenate([low_t, kinks[kinks >= tmin], _graded_points(tmin)]))
    a, b = pts[:-1], pts[1:]
    half = 0.5 * (b - a)
    xs = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
    u = (1.0 - xs) / xs
    const = math.exp(EULER_GAMMA * theta) * theta * float(gamma_fn(theta))
    f = const * xs ** (theta - 2.0) * table(u.ravel()).reshape(u.shape)
    seg = half * (f @ _GL_WEIGHTS)
    # tail from each point up to 1/2, accumulated from the top
    above = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    tail_half = float(_upper_tail_near_one(np.array([0.5]), theta)[0])
    pos = np.searchsorted(pts, low_t)
    res[~high] = above[pos] + tail_half
    return res


# ---------------------------------------------------------------------------
# stick-breaking


def _block_rng(seed, block):
    return np.random.default_rng([int(seed), int(block)])


def _stick_block(rng, theta, k, rows, eps):
    n0 = int(math.ceil(1.5 * theta * math.log(1.0 / eps))) + k + 8
    top = np.zeros((rows, k))
    logrem = np.zeros(rows)
    active = np.arange(rows)
    first = True
    while active.size:
        width = n0 if first else max(16, n0 // 2)
        first = False
        u = rng.random((active.size, width))
        with np.errstate(divide="ignore"):
            logv = np.log(u) / theta
        cum = logrem[active, None] + np.cumsum(logv, axis=1)
        prev = np.concatenate([logrem[active, None], cum[:, :-1]], axis=1)
        sticks = np.exp(prev) * -np.expm1(logv)
        merged = np.concatenate([top[active], sticks], axis=1)
        merged = -np.sort(-merged, axis=1)[:, :k]
        top[active] = merged
        logrem[active] = cum[:, -1]
        rem = np.exp(logrem[active])
        done = (rem < eps) & (top[active, k - 1] > rem)
        active = active[~done]
    return top


def sample_pd_batch(params: PDParams, k: int, replicates: int, seed: int,
                    eps: float = DEFAULT_STICK_EPS) -> np.ndarray:
    """``(replicates, k)`` array of the top-k sorted PD(theta) parts.

    Sticks are generated until the unbroken remainder is below ``eps`` and
    below the k-th largest stick found, so the top k are final.  Replicates
    are produced in fixed blocks of 4096, block ``b`` drawing from the stream
    seeded by ``(seed, b)``; output does not depend on scheduling.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if replicates < 1:
        raise DomainError("replicates must be >= 1")
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    out = np.empty((replicates, k))
    for b, start in enumerate(range(0, replicates, BLOCK)):
        rows = min(BLOCK, replicates - start)
        out[start:start + rows] = _stick_block(_block_rng(seed, b), params.theta, k, rows, eps)
    return out


def sample_pd(params: PDParams, k: int, seed: int, eps: float = DEFAULT_STICK_EPS) -> StickSample:
    parts = sample_pd_batch(params, k, 1, seed, eps)[0]
    return StickSample(parts=parts, residual=float(1.0 - parts.sum()))
