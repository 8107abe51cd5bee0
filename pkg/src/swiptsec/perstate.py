"""Per-fading-state subproblem solvers.

Closed forms and searches used by the dual decomposition: the minimum
transmit power meeting a target secrecy rate as a function of the AN split,
the split minimizing that power, the per-state minimizers of the outage
Lagrangian, the rate-maximizing split for a fixed power, and the
cubic-candidate maximizer of the rate Lagrangian for a fixed split.

Scalar operations wrap vectorized kernels (suffix ``_batch``) that operate
on whole gain arrays; ensemble-level solvers call the kernels directly.
Unreachable rate targets are signalled with ``math.inf``; every consumer
guards with ``isinf`` before arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import (
    LN2,
    DualPoint,
    FadingState,
    PerStateDecision,
    SystemParams,
    rate_an_cancelled,
)

#: open-interval guard below alpha = 1 for the rate-maximization split search
EPS_ALPHA = 1e-9
#: relative nudge above the minimum-power crossing so float round-off cannot
#: flip the strict outage comparison at p exactly on the crossing
_CROSSING_PAD = 1e-9
#: leading coefficients below this fraction of the coefficient scale are
#: treated as zero when classifying polynomial degree
_DEGENERATE_REL = 1e-14
#: dense fallback grid for split/power searches on degenerate channels
_FALLBACK_GRID_N = 10_001

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# minimum power to sustain the target secrecy rate
# ---------------------------------------------------------------------------

def min_power_batch(alpha, h, g, params: SystemParams) -> np.ndarray:
    """Minimum p with secrecy rate >= r0 at split ``alpha``; +inf if unreachable.

    The rate constraint is a single-crossing condition in p: for
    0 < alpha < 1 it reduces to a quadratic with exactly one positive root,
    for alpha = 0 to a linear condition that is feasible only when the IR
    channel beats the ER channel by the factor 2**r0, and alpha = 1 carries
    no information at all.  Broadcasts over its array arguments.
    """
    alpha, h, g = np.broadcast_arrays(np.asarray(alpha, dtype=float),
                                      np.asarray(h, dtype=float),
                                      np.asarray(g, dtype=float))
    s1, s2, r0 = params.sigma1_sq, params.sigma2_sq, params.r0
    if r0 <= 0.0:
        return np.zeros(alpha.shape)
    big = 2.0 ** r0
    out = np.full(alpha.shape, math.inf)

    zero_split = (alpha == 0.0)
    if zero_split.any():
        denom = h * s2 - big * s1 * g
        ok = zero_split & (denom > 0.0)
        out[ok] = (big - 1.0) * s1 * s2 / denom[ok]

    interior = (alpha > 0.0) & (alpha < 1.0) & (h > 0.0)
    no_eve = interior & (g == 0.0)
    if no_eve.any():
        out[no_eve] = ((big - 1.0) * s1 / ((1.0 - alpha) * h))[no_eve]

    quad = interior & (g > 0.0)
    if quad.any():
        a = alpha * (1.0 - alpha) * h * g
        b = alpha * s1 * g + (1.0 - alpha) * s2 * h - big * s1 * g
        c = s1 * s2 * (1.0 - big)
        # one positive root since a > 0, c < 0; picked with the stable form
        sgn = np.where(b >= 0.0, 1.0, -1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            q = -0.5 * (b + sgn * np.sqrt(b * b - 4.0 * a * c))
            root = np.where(q > 0.0, q / a, c / q)
        out[quad] = root[quad]
    return out


def min_power_for_rate(alpha: float, state: FadingState, params: SystemParams) -> float:
    """Scalar minimum power for one state; ``math.inf`` when the target is unreachable."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"splitting ratio must lie in [0, 1], got {alpha}")
    out = min_power_batch(np.array([alpha]), np.array([state.h]), np.array([state.g]), params)
    return float(out[0])


# ---------------------------------------------------------------------------
# split minimizing the minimum-power curve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSearchResult:
    """Best split found and the minimum power it needs (may be ``math.inf``)."""

    alpha_tilde: float
    p_min: float


def _golden_refine_min(fn, lo, hi, best_x, best_f, n_iter: int):
    """Vectorized golden-section descent of ``fn`` on per-state brackets.

    Keeps and returns the best (x, f) seen, which can only improve on the
    incoming grid winner.
    """
    a = lo.copy()
    b = hi.copy()
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1 = fn(x1)
    f2 = fn(x2)
    for x, f in ((x1, f1), (x2, f2)):
        better = f < best_f
        best_x = np.where(better, x, best_x)
        best_f = np.where(better, f, best_f)
    for _ in range(n_iter):
        left = f1 <= f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        new_x = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        new_f = fn(new_x)
        x1n = np.where(left, new_x, x2)
        f1n = np.where(left, new_f, f2)
        x2n = np.where(left, x1, new_x)
        f2n = np.where(left, f1, new_f)
        x1, f1, x2, f2 = x1n, f1n, x2n, f2n
        better = new_f < best_f
        best_x = np.where(better, new_x, best_x)
        best_f = np.where(better, new_f, best_f)
    return best_x, best_f


def min_split_batch(h: np.ndarray, g: np.ndarray, params: SystemParams,
                    grid_n: int = 1001, tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Per-state minimizer of the minimum-power curve over the split in [0, 1].

    Uniform grid scan followed by golden-section refinement around the
    winning cell; the curve is not assumed unimodal.  States where every
    split is infeasible return (0, inf).
    """
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    n = h.shape[0]
    alphas = np.linspace(0.0, 1.0, grid_n)
    best_a = np.zeros(n)
    best_p = np.full(n, math.inf)
    chunk = max(1, int(2_000_000 // grid_n))
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        pmat = min_power_batch(alphas[:, None], h[None, sl], g[None, sl], params)
        idx = np.argmin(pmat, axis=0)
        cols = np.arange(pmat.shape[1])
        best_a[sl] = alphas[idx]
        best_p[sl] = pmat[idx, cols]
    # refine inside the winning cell
    step = 1.0 / (grid_n - 1)
    lo = np.clip(best_a - step, 0.0, 1.0)
    hi = np.clip(best_a + step, 0.0, 1.0)
    n_iter = max(8, min(60, int(math.ceil(math.log(max(2.0 * step / max(tol, 1e-15), 4.0))
                                          / math.log(1.0 / _INVPHI)))))
    fn = lambda a: min_power_batch(a, h, g, params)
    best_a, best_p = _golden_refine_min(fn, lo, hi, best_a, best_p, n_iter)
    infeasible = np.isinf(best_p)
    best_a[infeasible] = 0.0
    return best_a, best_p


def search_min_split(state: FadingState, params: SystemParams,
                     tol: float = 1e-6, grid_n: int = 1001) -> SplitSearchResult:
    """One-state wrapper of :func:`min_split_batch`."""
    a, p = min_split_batch(np.array([state.h]), np.array([state.g]), params,
                           grid_n=grid_n, tol=tol)
    return SplitSearchResult(alpha_tilde=float(a[0]), p_min=float(p[0]))


# ---------------------------------------------------------------------------
# outage Lagrangian per-state minimizers
# ---------------------------------------------------------------------------

def p1_policy_batch(p1_vals: np.ndarray, split_vals: np.ndarray, g: np.ndarray,
                    lam: float, mu: float, params: SystemParams,
                    fixed_split: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-state minimizer of X + (lam - zeta*mu*g) * p over p in [0, p_peak].

    ``p1_vals`` is the per-state minimum power for the split in
    ``split_vals`` (+inf where infeasible).  With ``fixed_split`` the
    returned split always equals ``split_vals`` (the split is not a decision
    variable); otherwise outage/shutdown states report split 0.

    Returns (p, split, outage_flag) arrays.  There are three regimes:
    a negative net price forces peak power (harvest reward beats the power
    price), a non-negative price admits transmission at the minimum power iff
    its Lagrangian cost stays below the unit outage penalty, and everything
    else shuts down.
    """
    price = lam - params.zeta * mu * g
    peak_forced = price < 0.0
    can_avoid = p1_vals <= params.p_peak
    with np.errstate(divide="ignore"):
        cutoff = np.where(price > 0.0, 1.0 / np.where(price > 0.0, price, 1.0), math.inf)
    cutoff = np.minimum(cutoff, params.p_peak)
    transmit = ~peak_forced & (p1_vals <= cutoff)
    finite_p1 = np.where(np.isfinite(p1_vals), p1_vals, 0.0)
    p_on = np.minimum(finite_p1 * (1.0 + _CROSSING_PAD), params.p_peak)
    p = np.where(peak_forced, params.p_peak, np.where(transmit, p_on, 0.0))
    outage = np.where(peak_forced, ~can_avoid, ~transmit).astype(float)
    if fixed_split:
        split = np.broadcast_arrays(split_vals, p)[0].copy()
    else:
        keep = (peak_forced & can_avoid) | transmit
        split = np.where(keep, split_vals, 0.0)
    return p, split, outage


def solve_p1_sub(state: FadingState, dual: DualPoint, params: SystemParams,
                 grid_n: int = 1001, tol: float = 1e-6) -> PerStateDecision:
    """Optimal (p, alpha) for the per-state outage Lagrangian subproblem."""
    res = search_min_split(state, params, tol=tol, grid_n=grid_n)
    p, a, _ = p1_policy_batch(np.array([res.p_min]), np.array([res.alpha_tilde]),
                              np.array([state.g]), dual.lam, dual.mu, params)
    return PerStateDecision(p=float(p[0]), alpha=float(a[0]))


def solve_p11_sub(state: FadingState, dual: DualPoint, alpha_bar: float,
                  params: SystemParams) -> PerStateDecision:
    """Optimal power for the outage subproblem with the split frozen at ``alpha_bar``."""
    if not 0.0 <= alpha_bar <= 1.0:
        raise ValueError(f"splitting ratio must lie in [0, 1], got {alpha_bar}")
    p1 = min_power_for_rate(alpha_bar, state, params)
    p, a, _ = p1_policy_batch(np.array([p1]), np.array([alpha_bar]),
                              np.array([state.g]), dual.lam, dual.mu, params,
                              fixed_split=True)
    return PerStateDecision(p=float(p[0]), alpha=float(a[0]))


# ---------------------------------------------------------------------------
# rate-maximizing split for a fixed power
# ---------------------------------------------------------------------------

def split_given_power_batch(h: np.ndarray, g: np.ndarray, p_bar, params: SystemParams) -> np.ndarray:
    """Split maximizing the AN-cancelled rate at fixed power, elementwise.

    With x = sigma1^2/(h p) - sigma2^2/(g p) the maximizer is the clamp of
    (1 + x)/2 to [0, 1]; the limits h -> 0 and g -> 0 give 1 and 0.
    """
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    p_arr = np.broadcast_arrays(np.asarray(p_bar, dtype=float), h)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = params.sigma1_sq / (h * p_arr) - params.sigma2_sq / (g * p_arr)
        alpha = np.clip(0.5 * (1.0 + x), 0.0, 1.0)
    alpha = np.where(np.isnan(x), 0.0, alpha)  # h = g = 0: rate is 0 for every split
    return alpha


def optimal_split_given_power(state: FadingState, p_bar: float, params: SystemParams) -> float:
    """Scalar rate-maximizing split for one state at power ``p_bar`` > 0."""
    if p_bar <= 0.0:
        raise ValueError(f"power must be positive, got {p_bar}")
    return float(split_given_power_batch(np.array([state.h]), np.array([state.g]),
                                         p_bar, params)[0])


def solve_nocancel_split(state: FadingState, p_bar: float, params: SystemParams) -> float:
    """Best split when the IR cannot cancel the AN: always 0 (AN only hurts)."""
    return 0.0


# ---------------------------------------------------------------------------
# cubic stationarity machinery for the rate Lagrangian
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CubicCoefficients:
    """Numerator coefficients of d/dp of the rate Lagrangian (fixed split).

    The derivative above the clamp breakpoint is (a p^3 + b p^2 + c p + d)
    divided by a positive denominator; ``f`` is the shared subexpression
    entering b and c.  The denominator depends on p and is exposed as
    :func:`cubic_denominator` rather than stored.
    """

    a: float
    b: float
    c: float
    d: float
    f: float


def cubic_coeffs_batch(h, g, lam: float, mu: float, alpha_bar, params: SystemParams):
    """Vectorized numerator coefficients (a, b, c, d) plus shared term f."""
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    ab = np.broadcast_arrays(np.asarray(alpha_bar, dtype=float), h)[0]
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    w = (lam - mu * params.zeta * g) * LN2
    am1 = ab - 1.0
    f = g * s2 * w * (1.0 + ab)
    a = ab * h * g * g * w * am1
    b = h * am1 * f - ab * h * g * g * am1 - ab * g * g * s1 * w
    c = (h * s2 * s2 * w * am1 - s1 * f - h * g * s2 * am1 * am1
         - (h * g * s2 + ab * h * g * s2) * am1)
    d = g * s2 * s1 * am1 - h * s2 * s2 * am1 - s2 * s2 * s1 * w
    return a, b, c, d, f


def cubic_coefficients(state: FadingState, dual: DualPoint, alpha_bar: float,
                       params: SystemParams) -> CubicCoefficients:
    """Scalar coefficients for one state; requires 0 <= alpha_bar < 1."""
    if not 0.0 <= alpha_bar < 1.0:
        raise ValueError(f"fixed split must lie in [0, 1), got {alpha_bar}")
    a, b, c, d, f = cubic_coeffs_batch(state.h, state.g, dual.lam, dual.mu, alpha_bar, params)
    return CubicCoefficients(a=float(a), b=float(b), c=float(c), d=float(d), f=float(f))


def cubic_denominator(state: FadingState, alpha_bar: float, params: SystemParams,
                      p: float) -> float:
    """Positive denominator of the rate-Lagrangian derivative at power ``p``."""
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    return float((s1 + (1.0 - alpha_bar) * p * state.h)
                 * (s2 + alpha_bar * p * state.g)
                 * (s2 + p * state.g) * LN2)


class IdenticallyZeroError(ValueError):
    """All four polynomial coefficients vanish: every point is a root."""


def real_roots_batch(a, b, c, d) -> tuple[np.ndarray, np.ndarray]:
    """Real roots of a x^3 + b x^2 + c x + d per row, NaN-padded to width 3.

    Degenerate leading coefficients (relative to the per-row coefficient
    scale) fall back to quadratic, then linear solving.  Returns
    (roots array (n, 3), all_zero mask).  Roots are polished with two
    Newton steps on the original coefficients.
    """
    a, b, c, d = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c, d)))
    a, b, c, d = (np.atleast_1d(v) for v in (a, b, c, d))
    n = a.shape[0]
    roots = np.full((n, 3), np.nan)
    scale = np.maximum.reduce([np.abs(a), np.abs(b), np.abs(c), np.abs(d)])
    all_zero = scale == 0.0
    cut = _DEGENERATE_REL * scale

    cubic = np.abs(a) > cut
    if cubic.any():
        ac, bc, cc, dc = a[cubic], b[cubic], c[cubic], d[cubic]
        bm, cm, dm = bc / ac, cc / ac, dc / ac
        pth = cm - bm * bm / 3.0
        qth = dm - bm * cm / 3.0 + 2.0 * bm ** 3 / 27.0
        half_q = 0.5 * qth
        disc = half_q * half_q + (pth / 3.0) ** 3
        sub = np.full((pth.shape[0], 3), np.nan)
        one = disc > 0.0
        if one.any():
            sq = np.sqrt(disc[one])
            sub[one, 0] = np.cbrt(-half_q[one] + sq) + np.cbrt(-half_q[one] - sq)
        three = ~one
        if three.any():
            pt = pth[three]
            qt = qth[three]
            m = 2.0 * np.sqrt(np.maximum(-pt / 3.0, 0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                arg = np.clip(3.0 * qt / (pt * m), -1.0, 1.0)
            arg = np.where(np.isnan(arg), 1.0, arg)  # pth == qth == 0: triple root at 0
            phi = np.arccos(arg) / 3.0
            for k in range(3):
                sub[three, k] = m * np.cos(phi - 2.0 * math.pi * k / 3.0)
        roots[cubic] = sub - bm[:, None] / 3.0

    quad = ~cubic & (np.abs(b) > cut)
    if quad.any():
        bq, cq, dq = b[quad], c[quad], d[quad]
        disc = cq * cq - 4.0 * bq * dq
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        sgn = np.where(cq >= 0.0, 1.0, -1.0)
        qq = -0.5 * (cq + sgn * sq)
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(ok, qq / bq, np.nan)
            r2 = np.where(ok & (qq != 0.0), dq / qq, np.where(ok, -cq / bq, np.nan))
        block = np.full((bq.shape[0], 3), np.nan)
        block[:, 0] = r1
        block[:, 1] = r2
        roots[quad] = block

    lin = ~cubic & ~quad & (np.abs(c) > cut)
    if lin.any():
        roots[lin, 0] = -d[lin] / c[lin]

    # two Newton polish passes on the original coefficients
    for _ in range(2):
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            x = roots
            fx = ((a[:, None] * x + b[:, None]) * x + c[:, None]) * x + d[:, None]
            fpx = (3.0 * a[:, None] * x + 2.0 * b[:, None]) * x + c[:, None]
            step = np.where(np.abs(fpx) > 0.0, fx / fpx, 0.0)
            moved = x - step
            improved = np.abs(((a[:, None] * moved + b[:, None]) * moved + c[:, None]) * moved
                              + d[:, None]) <= np.abs(fx)
            roots = np.where(np.isnan(x) | ~np.isfinite(moved), x,
                             np.where(improved, moved, x))
    return roots, all_zero


def real_roots_cubic(a: float, b: float, c: float, d: float) -> list[float]:
    """All distinct real roots of a x^3 + b x^2 + c x + d, ascending.

    Raises :class:`IdenticallyZeroError` when all coefficients vanish.
    A constant non-zero polynomial yields an empty list.
    """
    roots, all_zero = real_roots_batch(np.array([a]), np.array([b]),
                                       np.array([c]), np.array([d]))
    if bool(all_zero[0]):
        raise IdenticallyZeroError("identically zero polynomial: every point is a root")
    vals = sorted(float(r) for r in roots[0] if np.isfinite(r))
    out: list[float] = []
    span = max(1.0, *(abs(v) for v in vals)) if vals else 1.0
    for v in vals:
        if not out or abs(v - out[-1]) > 1e-9 * span:
            out.append(v)
    return out


def candidate_set(roots: Iterable[float], threshold_p: float, p_peak: float) -> list[float]:
    """Sorted, de-duplicated maximizer candidates in [0, p_peak].

    Union of the in-range real roots, both endpoints, and the piecewise
    breakpoint of the derivative when it falls strictly inside the range.
    ``threshold_p`` may be infinite or NaN, in which case it is skipped.
    """
    cands = [0.0, float(p_peak)]
    if math.isfinite(threshold_p) and 0.0 < threshold_p < p_peak:
        cands.append(float(threshold_p))
    for r in roots:
        if math.isfinite(r) and 0.0 <= r <= p_peak:
            cands.append(float(r))
    cands.sort()
    tol = 1e-12 * max(1.0, p_peak)
    out = [cands[0]]
    for v in cands[1:]:
        if v - out[-1] > tol:
            out.append(v)
    return out


# ---------------------------------------------------------------------------
# rate Lagrangian maximizer for a fixed split
# ---------------------------------------------------------------------------

def p2_fixed_split_batch(h: np.ndarray, g: np.ndarray, lam: float, mu: float,
                         alpha_bar, params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-state maximizer of R(alpha_bar, p) - (lam - zeta*mu*g) * p on [0, p_peak].

    Candidates are the real roots of the derivative numerator, the clamp
    breakpoint and the interval endpoints; the actual (clamped) objective is
    evaluated at each.  Ties resolve to the smallest power.  Zero channel
    gains fall back to a dense power grid.  Returns (p, objective value).
    """
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    ab = np.broadcast_arrays(np.asarray(alpha_bar, dtype=float), h)[0]
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    p_peak = params.p_peak
    n = h.shape[0]
    price = lam - params.zeta * mu * g

    p_star = np.zeros(n)
    val_star = np.zeros(n)

    analytic = (h > 0.0) & (g > 0.0)
    if analytic.any():
        ha, ga, aba, pra = h[analytic], g[analytic], ab[analytic], price[analytic]
        a4, b4, c4, d4, _ = cubic_coeffs_batch(ha, ga, lam, mu, aba, params)
        roots, _ = real_roots_batch(a4, b4, c4, d4)
        with np.errstate(divide="ignore", invalid="ignore"):
            p_th = np.where(aba > 0.0, s1 / (aba * ha) - s2 / (aba * ga), np.nan)
        cand = np.empty((ha.shape[0], 6))
        cand[:, 0] = 0.0
        cand[:, 1] = p_peak
        cand[:, 2] = np.where(np.isfinite(p_th) & (p_th > 0.0) & (p_th < p_peak), p_th, 0.0)
        good = np.isfinite(roots) & (roots >= 0.0) & (roots <= p_peak)
        cand[:, 3:6] = np.where(good, roots, 0.0)
        cand.sort(axis=1)
        vals = rate_an_cancelled(ha[:, None], ga[:, None], cand, aba[:, None], s1, s2) \
            - pra[:, None] * cand
        j = np.argmax(vals, axis=1)
        rows = np.arange(cand.shape[0])
        p_star[analytic] = cand[rows, j]
        val_star[analytic] = vals[rows, j]

    degenerate = ~analytic
    if degenerate.any():
        grid = np.linspace(0.0, p_peak, _FALLBACK_GRID_N)
        hd, gd, abd, prd = h[degenerate], g[degenerate], ab[degenerate], price[degenerate]
        vals = rate_an_cancelled(hd[:, None], gd[:, None], grid[None, :], abd[:, None], s1, s2) \
            - prd[:, None] * grid[None, :]
        j = np.argmax(vals, axis=1)
        rows = np.arange(hd.shape[0])
        p_star[degenerate] = grid[j]
        val_star[degenerate] = vals[rows, j]
    return p_star, val_star


def solve_p2_sub_fixed_alpha(state: FadingState, dual: DualPoint, alpha_bar: float,
                             params: SystemParams) -> float:
    """Scalar maximizing power for one state at a frozen split in [0, 1)."""
    if not 0.0 <= alpha_bar < 1.0:
        raise ValueError(f"fixed split must lie in [0, 1), got {alpha_bar}")
    p, _ = p2_fixed_split_batch(np.array([state.h]), np.array([state.g]),
                                dual.lam, dual.mu, alpha_bar, params)
    return float(p[0])


def _golden_refine_max(fn, lo, hi, best_x, best_f, best_p, n_iter: int):
    """Vectorized golden-section ascent returning the best (x, f, payload) seen."""
    a = lo.copy()
    b = hi.copy()
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    p1, f1 = fn(x1)
    p2, f2 = fn(x2)
    for x, f, p in ((x1, f1, p1), (x2, f2, p2)):
        better = f > best_f
        best_x = np.where(better, x, best_x)
        best_f = np.where(better, f, best_f)
        best_p = np.where(better, p, best_p)
    for _ in range(n_iter):
        left = f1 >= f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        new_x = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        new_p, new_f = fn(new_x)
        x1n = np.where(left, new_x, x2)
        f1n = np.where(left, new_f, f2)
        x2n = np.where(left, x1, new_x)
        f2n = np.where(left, f1, new_f)
        x1, f1, x2, f2 = x1n, f1n, x2n, f2n
        better = new_f > best_f
        best_x = np.where(better, new_x, best_x)
        best_f = np.where(better, new_f, best_f)
        best_p = np.where(better, new_p, best_p)
    return best_x, best_f, best_p


def p2_two_stage_batch(h: np.ndarray, g: np.ndarray, lam: float, mu: float,
                       params: SystemParams, alpha_grid_n: int = 1001,
                       tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint per-state maximizer over (p, split) of the rate Lagrangian.

    Stage one scans a uniform split grid on [0, 1) (clipped just below 1),
    solving the fixed-split problem at each point; stage two refines the
    winning cell by golden section.  Returns (p, split, value) arrays.
    """
    if alpha_grid_n < 2:
        raise ValueError(f"split grid needs at least 2 points, got {alpha_grid_n}")
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    n = h.shape[0]
    hi_alpha = 1.0 - EPS_ALPHA
    alphas = np.linspace(0.0, hi_alpha, alpha_grid_n)
    best_a = np.zeros(n)
    best_p = np.zeros(n)
    best_v = np.full(n, -math.inf)
    for abar in alphas:
        p_j, v_j = p2_fixed_split_batch(h, g, lam, mu, abar, params)
        upd = v_j > best_v
        best_a[upd] = abar
        best_p[upd] = p_j[upd]
        best_v[upd] = v_j[upd]
    step = hi_alpha / (alpha_grid_n - 1)
    lo = np.clip(best_a - step, 0.0, hi_alpha)
    hi = np.clip(best_a + step, 0.0, hi_alpha)
    n_iter = max(8, min(60, int(math.ceil(math.log(max(2.0 * step / max(tol, 1e-15), 4.0))
                                          / math.log(1.0 / _INVPHI)))))

    def fn(avec):
        return p2_fixed_split_batch(h, g, lam, mu, avec, params)

    best_a, best_v, best_p = _golden_refine_max(fn, lo, hi, best_a, best_v, best_p, n_iter)
    return best_p, best_a, best_v


def solve_p2_sub(state: FadingState, dual: DualPoint, params: SystemParams,
                 alpha_grid_n: int = 1001) -> PerStateDecision:
    """Optimal (p, alpha) for the per-state rate Lagrangian subproblem."""
    p, a, _ = p2_two_stage_batch(np.array([state.h]), np.array([state.g]),
                                 dual.lam, dual.mu, params, alpha_grid_n=alpha_grid_n)
    return PerStateDecision(p=float(p[0]), alpha=float(a[0]))


# ---------------------------------------------------------------------------
# power-envelope form of the joint rate subproblem
# ---------------------------------------------------------------------------

def best_split_rate(h, g, p, params: SystemParams):
    """Rate with the split already optimized at each power, elementwise.

    Substituting the closed-form fixed-power split collapses the joint
    (p, split) maximization to one dimension: the joint optimum of the rate
    Lagrangian is the maximum over p of this envelope minus the power cost.
    Returns (rate, split); p = 0 reports split 0.
    """
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    with np.errstate(divide="ignore", invalid="ignore"):
        x = s1 / (h * p) - s2 / (g * p)
        alpha = np.clip(0.5 * (1.0 + x), 0.0, 1.0)
    alpha = np.where(np.isnan(x), 0.0, alpha)
    return rate_an_cancelled(h, g, p, alpha, s1, s2), alpha


class PowerEnvelope:
    """Per-state best-rate-vs-power tables for fast repeated dual evaluations.

    Built once per (ensemble, params); each multiplier pair then reduces to
    a table argmax per state plus golden-section refinement of the winning
    cell on the exact envelope.  Values agree with the two-stage split-grid
    search up to the refinement tolerance (property-tested).
    """

    def __init__(self, h: np.ndarray, g: np.ndarray, params: SystemParams,
                 grid_n: int = 1537, chunk: int = 2048):
        self.h = np.asarray(h, dtype=float)
        self.g = np.asarray(g, dtype=float)
        self.params = params
        p_lo = params.p_peak * 1e-8
        self.p_grid = np.concatenate(([0.0], np.geomspace(p_lo, params.p_peak, grid_n - 1)))
        n = self.h.shape[0]
        self.rates = np.empty((n, grid_n))
        for start in range(0, n, chunk):
            sl = slice(start, min(start + chunk, n))
            r, _ = best_split_rate(self.h[sl, None], self.g[sl, None],
                                   self.p_grid[None, :], params)
            self.rates[sl] = r

    def maximize(self, lam: float, mu: float, refine_iters: int = 30):
        """Per-state maximizer of envelope(p) - (lam - zeta*mu*g) * p.

        Returns (p, split, value) arrays.
        """
        price = lam - self.params.zeta * mu * self.g
        n = self.h.shape[0]
        best_p = np.empty(n)
        best_v = np.empty(n)
        lo = np.empty(n)
        hi = np.empty(n)
        m = self.p_grid.shape[0]
        chunk = max(1, 4_000_000 // m)
        for start in range(0, n, chunk):
            sl = slice(start, min(start + chunk, n))
            vals = self.rates[sl] - price[sl, None] * self.p_grid[None, :]
            j = np.argmax(vals, axis=1)
            rows = np.arange(vals.shape[0])
            best_p[sl] = self.p_grid[j]
            best_v[sl] = vals[rows, j]
            lo[sl] = self.p_grid[np.maximum(j - 1, 0)]
            hi[sl] = self.p_grid[np.minimum(j + 1, m - 1)]

        def fn(p):
            r, _ = best_split_rate(self.h, self.g, p, self.params)
            return p, r - price * p

        _, best_v, best_p = _golden_refine_max(fn, lo, hi, best_p.copy(), best_v, best_p,
                                               refine_iters)
        _, split = best_split_rate(self.h, self.g, best_p, self.params)
        split = np.where(best_p > 0.0, np.minimum(split, 1.0 - EPS_ALPHA), 0.0)
        return best_p, split, best_v
