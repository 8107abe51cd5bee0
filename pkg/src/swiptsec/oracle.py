"""Independent brute-force validators for the closed-form solvers.

These exist to falsify the per-state closed forms and the ellipsoid search;
they share only the model-module formula evaluators with the code they
check, and they may be orders of magnitude slower.  Exercised by the test
suite and the CLI 'verify' command; not re-exported from the package root.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .dual import Constraints, ProblemKind
from .model import (
    DualPoint,
    FadingEnsemble,
    FadingState,
    SystemParams,
    rate_an_cancelled,
)


def grid_min_L1(state: FadingState, dual: DualPoint, params: SystemParams,
                n_p: int = 500, n_alpha: int = 500) -> tuple[float, float, float]:
    """Exhaustive minimum of the outage Lagrangian over a uniform (p, alpha) grid.

    Returns (value, p, alpha) at the grid minimum; ties resolve to the first
    grid point scanned (smallest p, then smallest alpha).
    """
    if n_p < 2 or n_alpha < 2:
        raise ValueError("grids need at least two points per axis")
    p = np.linspace(0.0, params.p_peak, n_p)
    alpha = np.linspace(0.0, 1.0, n_alpha)
    rates = rate_an_cancelled(state.h, state.g, p[:, None], alpha[None, :],
                              params.sigma1_sq, params.sigma2_sq)
    outage = (rates < params.r0).astype(float)
    price = dual.lam - params.zeta * dual.mu * state.g
    values = outage + price * p[:, None]
    flat = int(np.argmin(values))
    i, j = divmod(flat, n_alpha)
    return float(values[i, j]), float(p[i]), float(alpha[j])


def grid_max_L2(state: FadingState, dual: DualPoint, alpha_bar: float,
                params: SystemParams, n_p: int = 100_000) -> tuple[float, float]:
    """Exhaustive maximum of the rate Lagrangian over a uniform power grid."""
    if n_p < 2:
        raise ValueError("grid needs at least two points")
    p = np.linspace(0.0, params.p_peak, n_p)
    rates = rate_an_cancelled(state.h, state.g, p, alpha_bar,
                              params.sigma1_sq, params.sigma2_sq)
    price = dual.lam - params.zeta * dual.mu * state.g
    values = rates - price * p
    i = int(np.argmax(values))
    return float(values[i]), float(p[i])


def bisect_rate_inverse(state: FadingState, alpha: float, params: SystemParams,
                        bracket_factor: float = 1e3, iters: int = 120) -> float:
    """Invert the AN-cancelled rate in p by bisection; inf when out of bracket.

    The rate-vs-target condition is single-crossing in p, so plain bisection
    on [0, bracket_factor * p_peak] suffices.  Returns math.inf when even
    the bracket top misses the target.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"splitting ratio must lie in [0, 1], got {alpha}")
    r0 = params.r0
    if r0 <= 0.0:
        return 0.0
    s1, s2 = params.sigma1_sq, params.sigma2_sq

    def rate(p: float) -> float:
        return float(rate_an_cancelled(state.h, state.g, p, alpha, s1, s2))

    hi = bracket_factor * params.p_peak
    if rate(hi) < r0:
        return math.inf
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if rate(mid) >= r0:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# exhaustive dual-grid search
# ---------------------------------------------------------------------------

def _upper_concave_hull(p: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the upper concave hull of the points (p, r), p ascending."""
    hull_p: list[float] = []
    hull_r: list[float] = []
    for x, y in zip(p, r):
        while len(hull_p) >= 2:
            x1, y1 = hull_p[-2], hull_r[-2]
            x2, y2 = hull_p[-1], hull_r[-1]
            if (y2 - y1) * (x - x1) <= (y - y1) * (x2 - x1):
                hull_p.pop()
                hull_r.pop()
            else:
                break
        if hull_p and x == hull_p[-1]:
            if y > hull_r[-1]:
                hull_p[-1], hull_r[-1] = x, y
            continue
        hull_p.append(float(x))
        hull_r.append(float(y))
    return np.array(hull_p), np.array(hull_r)


def _hull_query(hull_p: np.ndarray, hull_r: np.ndarray, k: np.ndarray) -> np.ndarray:
    """max_j (hull_r[j] - k * hull_p[j]) for every price k, via edge slopes."""
    if hull_p.shape[0] == 1:
        return hull_r[0] - k * hull_p[0]
    slopes = np.diff(hull_r) / np.diff(hull_p)  # decreasing along the hull
    # vertex j is optimal when slopes[j-1] >= k >= slopes[j]
    idx = np.searchsorted(-slopes, -k, side="left")
    return hull_r[idx] - k * hull_p[idx]


def _rate_grid_summary(state: FadingState, params: SystemParams,
                       n_alpha: int, n_p: int):
    """Brute per-state reductions over an (alpha, p) grid.

    Returns (p grid, best rate over alpha at each p); the grid is geometric
    in p (relative resolution everywhere) plus the endpoints.
    """
    p_lo = params.p_peak * 1e-8
    p = np.concatenate(([0.0], np.geomspace(p_lo, params.p_peak, n_p)))
    alpha = np.linspace(0.0, 1.0, n_alpha)
    best = np.zeros(p.shape[0])
    chunk = max(1, 4_000_000 // n_alpha)
    for start in range(0, p.shape[0], chunk):
        sl = slice(start, min(start + chunk, p.shape[0]))
        rates = rate_an_cancelled(state.h, state.g, p[sl, None], alpha[None, :],
                                  params.sigma1_sq, params.sigma2_sq)
        best[sl] = rates.max(axis=1)
    return p, best


def _min_nonoutage_power(state: FadingState, params: SystemParams,
                         n_alpha: int, iters: int = 70) -> float:
    """Cheapest power that avoids outage for any split on a dense split grid.

    For each split the non-outage power set is a half-line, so per-split
    bisection on [0, p_peak] is exact; the minimum over splits follows.
    Returns inf when even peak power misses the target at every split.
    """
    alpha = np.linspace(0.0, 1.0, n_alpha)
    s1, s2 = params.sigma1_sq, params.sigma2_sq

    def feasible(p):
        return rate_an_cancelled(state.h, state.g, p, alpha, s1, s2) >= params.r0

    ok = feasible(params.p_peak)
    if not ok.any():
        return math.inf
    lo = np.zeros(n_alpha)
    hi = np.full(n_alpha, params.p_peak)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f = feasible(mid)
        hi = np.where(f, mid, hi)
        lo = np.where(f, lo, mid)
    return float(np.min(hi[ok]))


def grid_dual_search(kind: ProblemKind, ensemble: FadingEnsemble, params: SystemParams,
                     constraints: Constraints, box: tuple[tuple[float, float], tuple[float, float]],
                     n: int, n_alpha: int = 1001, n_p: int = 3001
                     ) -> tuple[DualPoint, float]:
    """Exhaustive n-by-n evaluation of the dual function over a multiplier box.

    The per-state inner optimum at multiplier price k = lam - zeta*mu*g is
    obtained from a brute (alpha, p) rate grid: for the outage family only
    the cheapest non-outage power matters, and for the rate family the
    grid collapses to the upper concave hull of (p, best rate), whose
    price-query reproduces the grid maximum exactly.  Returns the best grid
    point (maximum for the outage family, minimum for the rate family) and
    its value.  Intended for small ensembles (<= a few hundred states).
    """
    if n < 2:
        raise ValueError(f"need at least a 2x2 grid, got n={n}")
    (lam_lo, lam_hi), (mu_lo, mu_hi) = box
    lam_grid = np.linspace(lam_lo, lam_hi, n)
    mu_grid = np.linspace(mu_lo, mu_hi, n)
    lam_flat = np.repeat(lam_grid, n)
    mu_flat = np.tile(mu_grid, n)
    total = np.zeros(lam_flat.shape[0])
    zeta = params.zeta
    n_states = len(ensemble)

    for state in ensemble.states:
        k = lam_flat - zeta * mu_flat * state.g
        if kind is ProblemKind.OUTAGE_MIN:
            m_i = _min_nonoutage_power(state, params, n_alpha)
            v = np.empty_like(k)
            neg = k < 0.0
            if math.isinf(m_i):
                v[neg] = 1.0 + k[neg] * params.p_peak
                v[~neg] = 1.0
            else:
                v[neg] = k[neg] * params.p_peak
                v[~neg] = np.minimum(1.0, k[~neg] * m_i)
            total += v
        else:
            p_grid, best_rate = _rate_grid_summary(state, params, n_alpha, n_p)
            hull_p, hull_r = _upper_concave_hull(p_grid, best_rate)
            total += _hull_query(hull_p, hull_r, k)

    total /= n_states
    if kind is ProblemKind.OUTAGE_MIN:
        values = total - lam_flat * params.p_avg + mu_flat * constraints.q_bar
        i = int(np.argmax(values))
    else:
        values = total + lam_flat * params.p_avg - mu_flat * constraints.q_bar
        i = int(np.argmin(values))
    return DualPoint(lam=float(lam_flat[i]), mu=float(mu_flat[i])), float(values[i])
