"""Affine gap penalties, the order-preserving matching prior and its normalizer.

Penalties use the sentinels j_0 = k_0 = 0, j_{L+1} = m + 1 and k_{L+1} = n + 1,
so a run of r - 1 unmatched residues between consecutive matched indices costs
f(r) = 0 (r = 1), g (r = 2) or g + (r - 2) h (r > 2).
"""

from __future__ import annotations

import math
import threading
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter
from scipy.special import gammaln, logsumexp

from .domain import GapParams, Matching, MatchingError, validate_matching


def f_penalty(r: int, gp: GapParams) -> float:
    if r < 1:
        raise ValueError(f"index difference must be >= 1, got {r}")
    if r == 1:
        return 0.0
    if r == 2:
        return gp.g
    return gp.g + (r - 2) * gp.h


@dataclass(frozen=True)
class PenaltyBreakdown:
    s: int  # gap openings
    ext: int  # gap extensions
    u: float


def gap_counts(pairs, m: int, n: int) -> tuple[int, int]:
    """Number of gap openings and extensions of a (valid) pair list."""
    s = ext = 0
    pj = pk = 0
    for j, k in list(pairs) + [(m + 1, n + 1)]:
        for r in (j - pj, k - pk):
            if r >= 2:
                s += 1
                ext += r - 2
        pj, pk = j, k
    return s, ext


def total_penalty(mt: Matching, gp: GapParams) -> PenaltyBreakdown:
    report = validate_matching(mt)
    if report is not None:
        raise MatchingError(str(report))
    s, ext = gap_counts(mt.pairs, mt.m, mt.n)
    return PenaltyBreakdown(s, ext, gp.g * s + gp.h * ext)


def gap_change(idx: int, lo: int, hi: int) -> tuple[int, int]:
    """Change in (openings, extensions) when ``idx`` is matched inside the gap (lo, hi)."""
    if not lo < idx < hi:
        raise ValueError(f"index {idx} is not strictly inside ({lo}, {hi})")
    if hi - lo == 2:
        return -1, 0
    if idx == lo + 1 or idx == hi - 1:
        return 0, -1
    return 1, -2


def reduction(idx_star: int, idx_lo: int, idx_hi: int, gp: GapParams) -> float:
    """Decrease in the one-sided penalty when ``idx_star`` becomes matched.

    May be negative: splitting a long gap in its interior opens a new gap.
    """
    if idx_hi - idx_lo < 2:
        raise ValueError("no room for a match between the bounding indices")
    ds, dext = gap_change(idx_star, idx_lo, idx_hi)
    if ds == -1:
        return gp.g
    if ds == 0:
        return gp.h
    return 2 * gp.h - gp.g


def log_partition_batch(m: int, n: int, g: np.ndarray, h: float) -> np.ndarray:
    """log sum_M exp(-u(M; g_i, h)) over all monotone matchings, for each g_i.

    Row-by-row dynamic program over the (m + 2) x (n + 2) lattice. F[j, k] sums
    exp(-penalty so far) over matchings whose last match is (j, k); the end
    sentinel (m + 1, n + 1) collects the total. Since exp(-f(r)) is a point
    mass at r = 1 plus a geometric tail, both axes reduce to first-order linear
    recurrences. Rows are rescaled to stay in floating-point range.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    g = np.atleast_1d(np.asarray(g, dtype=float))
    eg = np.exp(-g)[:, None]
    lam = math.exp(-h)
    width = n + 2
    f_prev = np.zeros((g.size, width))
    f_prev[:, 0] = 1.0
    c_prev = f_prev.copy()  # C[j - 1]
    c_pp = np.zeros_like(f_prev)  # C[j - 2]
    log_scale = np.zeros(g.size)
    den = [1.0, -lam]
    for _ in range(1, m + 2):
        grow = f_prev + eg * c_pp
        dacc = lfilter([1.0], den, grow, axis=1)
        f_row = np.zeros_like(grow)
        f_row[:, 1:] = grow[:, :-1]
        f_row[:, 2:] += eg * dacc[:, :-2]
        c_row = f_row + lam * c_prev
        c_pp, c_prev, f_prev = c_prev, c_row, f_row
        # C >= F elementwise, so F never sets the scale
        scale = np.maximum(c_prev.max(axis=1), c_pp.max(axis=1))[:, None]
        f_prev = f_prev / scale
        c_prev = c_prev / scale
        c_pp = c_pp / scale
        log_scale += np.log(scale[:, 0])
    return np.log(f_prev[:, n + 1]) + log_scale


def log_normalizer(m: int, n: int, gp: GapParams) -> float:
    """log Z(g, h), where 1 / Z(g, h) = sum over all monotone matchings of exp(-u)."""
    return float(-log_partition_batch(m, n, np.array([gp.g]), gp.h)[0])


class LogNormalizerCache:
    """Memoized log Z(g, h) for one (m, n); keys are (g, h) rounded to 1e-12."""

    def __init__(self, m: int, n: int, maxsize: int = 4096):
        self.m, self.n = m, n
        self.maxsize = maxsize
        self._cache: dict = {}
        self._lock = threading.Lock()

    def __call__(self, g: float, h: float) -> float:
        key = (round(g, 12), round(h, 12))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = log_normalizer(self.m, self.n, GapParams(g, h))
        with self._lock:
            if len(self._cache) >= self.maxsize:
                self._cache.pop(next(iter(self._cache)))
            self._cache.setdefault(key, value)
        return value


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Midpoint grid over (g, h) with the table of log Z at each node."""

    m: int
    n: int
    g_lo: float
    g_hi: float
    h_lo: float
    h_hi: float
    N: int
    logZ_table: np.ndarray = field(repr=False)

    @property
    def dg(self) -> float:
        return (self.g_hi - self.g_lo) / self.N

    @property
    def dh(self) -> float:
        return (self.h_hi - self.h_lo) / self.N

    @property
    def g_nodes(self) -> np.ndarray:
        return self.g_lo + (np.arange(1, self.N + 1) - 0.5) * self.dg

    @property
    def h_nodes(self) -> np.ndarray:
        return self.h_lo + (np.arange(1, self.N + 1) - 0.5) * self.dh


def build_grid(m: int, n: int, g_max: float = 20.0, h_max: float = 2.0, N: int = 100,
               g_min: float = 0.0, h_min: float = 0.0) -> QuadratureGrid:
    if not (g_min < g_max and h_min < h_max) or N < 2:
        raise ValueError("grid needs g_lo < g_hi, h_lo < h_hi and N >= 2")
    dg = (g_max - g_min) / N
    dh = (h_max - h_min) / N
    g_nodes = g_min + (np.arange(1, N + 1) - 0.5) * dg
    h_nodes = h_min + (np.arange(1, N + 1) - 0.5) * dh
    table = np.empty((N, N))
    for jh, h in enumerate(h_nodes):
        table[:, jh] = -log_partition_batch(m, n, g_nodes, float(h))
    if not np.all(np.isfinite(table)):
        raise FloatingPointError("non-finite log Z on the quadrature grid")
    table.setflags(write=False)
    return QuadratureGrid(m, n, g_min, g_max, h_min, h_max, N, table)


class MarginalGapPrior:
    """log p(M) with (g, h) integrated out under independent gamma priors.

    Depends on M only through (S(M), L(M)); values are cached per pair.
    """

    def __init__(self, grid: QuadratureGrid, a_g: float, b_g: float, a_h: float, b_h: float):
        if min(a_g, a_h) < 1:
            raise ValueError("gamma shapes below 1 make the integrand singular at zero")
        self.grid = grid
        self.a_g, self.b_g, self.a_h, self.b_h = a_g, b_g, a_h, b_h
        g = grid.g_nodes[:, None]
        h = grid.h_nodes[None, :]
        # the parts of psi(g, h) that do not depend on M
        self._base = (grid.logZ_table - g * b_g - h * b_h
                      + (a_g - 1) * np.log(g) + (a_h - 1) * np.log(h))
        self._g = g
        self._h = h
        self._const = (math.log(grid.dg * grid.dh) + a_g * math.log(b_g) + a_h * math.log(b_h)
                       - gammaln(a_g) - gammaln(a_h))
        self._cache: dict = {}

    def check_shape(self, m: int, n: int):
        if (m, n) != (self.grid.m, self.grid.n):
            raise ValueError(f"grid built for {(self.grid.m, self.grid.n)}, not {(m, n)}")

    def __call__(self, s: int, ext: int) -> float:
        key = (int(s), int(ext))
        hit = self._cache.get(key)
        if hit is None:
            if key[0] < 0 or key[1] < 0:
                raise ValueError("gap counts must be non-negative")
            psi = self._base - self._g * key[0] - self._h * key[1]
            hit = self._cache.setdefault(key, float(logsumexp(psi) + self._const))
        return hit


_PRIORS: "weakref.WeakKeyDictionary[QuadratureGrid, dict]" = weakref.WeakKeyDictionary()


def marginal_log_prior(s: int, ext: int, grid: QuadratureGrid, a_g: float, b_g: float,
                       a_h: float, b_h: float) -> float:
    per_grid = _PRIORS.setdefault(grid, {})
    hyper = (a_g, b_g, a_h, b_h)
    prior = per_grid.get(hyper)
    if prior is None:
        prior = per_grid.setdefault(hyper, MarginalGapPrior(grid, *hyper))
    return prior(s, ext)
