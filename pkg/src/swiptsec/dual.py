"""Lagrange dual machinery for the two ensemble problems.

The average-power and average-harvest couplings are priced by multipliers
(lam, mu); the per-state subproblems then decouple and are solved in closed
form (outage family) or by the cubic-candidate search (rate family).  The
multipliers are located by a two-dimensional ellipsoid method with
subgradient cuts, and a feasible primal point is recovered afterwards by
monotone bisection on one multiplier at a time.

All constraints and objectives are with respect to the finite ensemble
(sample-average semantics); the duality gap is measured and reported, never
assumed zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .model import (
    DualPoint,
    FadingEnsemble,
    PerStateDecision,
    SystemParams,
    rate_an_cancelled,
)
from .perstate import (
    PowerEnvelope,
    min_power_batch,
    min_split_batch,
    p1_policy_batch,
    p2_fixed_split_batch,
    p2_two_stage_batch,
)


class ProblemKind(Enum):
    """Which ensemble objective is being optimized."""

    OUTAGE_MIN = "outage"
    ESC_MAX = "esc"


@dataclass(frozen=True)
class Constraints:
    """Average harvested-power floor in watts (power limits live in SystemParams)."""

    q_bar: float

    def __post_init__(self) -> None:
        if self.q_bar < 0.0:
            raise ValueError(f"harvest floor must be >= 0, got {self.q_bar}")


@dataclass
class EllipsoidOptions:
    """Multiplier-search and recovery controls.

    tol: relative multiplier-space extent at which the ellipsoid stops.
    feas_tol: relative slack allowed on both coupled constraints.
    alpha_grid_n: split-grid density for the rate-family subproblems.
    p1_grid_n / search_tol: split-search controls for the outage family.
    trace: record one (iter, lam, mu, dual_value, subgrad) row per iteration.
    collect_geometry: record det of the ellipsoid matrix per iteration.
    """

    tol: float = 1e-6
    max_iter: int = 500
    feas_tol: float = 1e-4
    alpha_grid_n: int = 1001
    p1_grid_n: int = 1001
    search_tol: float = 1e-6
    envelope_grid_n: int = 1537
    trace: bool = False
    collect_geometry: bool = False


@dataclass(frozen=True)
class FeasibilityReport:
    """Maximum achievable average harvest and whether the requested floor fits."""

    feasible: bool
    q_max: float


@dataclass
class DualSolveReport:
    """Multipliers, per-state decisions and aggregates of one solve.

    ``objective`` is the primal objective of the recovered (feasible)
    decisions: outage probability for OUTAGE_MIN, ergodic secrecy rate for
    ESC_MAX.  ``dual_gap_estimate`` is primal-minus-bound (outage) or
    bound-minus-primal (rate), both >= 0 up to solver tolerance.
    """

    dual: DualPoint
    decisions: tuple[PerStateDecision, ...]
    objective: float
    avg_power: float
    avg_harvest: float
    iterations: int
    dual_gap_estimate: float
    best_dual_value: float
    trace: Optional[list[tuple[int, float, float, float, float, float]]] = None
    det_history: Optional[list[float]] = None
    rounds: Optional[list[tuple[int, float, float, float]]] = None


class InfeasibleError(ValueError):
    """Requested harvest floor exceeds what the power constraints allow."""

    def __init__(self, q_bar: float, q_max: float):
        super().__init__(
            f"harvest floor {q_bar:.6e} W infeasible: maximum achievable is {q_max:.6e} W")
        self.q_bar = q_bar
        self.q_max = q_max


class RecoveryError(RuntimeError):
    """Primal recovery could not restore feasibility within its iteration cap."""


def check_feasibility(ensemble: FadingEnsemble, params: SystemParams,
                      constraints: Constraints) -> FeasibilityReport:
    """Greedy maximum of the average harvest under the power constraints.

    Sort states by ER gain descending and spend the average-power budget at
    peak power, fractionally on the marginal state.
    """
    g = ensemble.g_array
    n = len(ensemble)
    order = np.argsort(-g)
    budget = n * params.p_avg
    alloc = np.clip(budget - np.arange(n) * params.p_peak, 0.0, params.p_peak)
    q_max = params.zeta * float(np.dot(g[order], alloc)) / n
    return FeasibilityReport(feasible=constraints.q_bar <= q_max, q_max=q_max)


def subgradient(avg_power: float, avg_harvest: float, params: SystemParams,
                constraints: Constraints) -> tuple[float, float]:
    """Ascent direction of the concave outage dual at the evaluated decisions."""
    return (avg_power - params.p_avg, constraints.q_bar - avg_harvest)


# ---------------------------------------------------------------------------
# cached per-ensemble evaluation
# ---------------------------------------------------------------------------

class _Workspace:
    """Arrays shared by every dual evaluation of one (kind, ensemble, params) triple.

    ``fixed_alpha`` freezes the per-state split (scalar or length-n array);
    None lets each subproblem optimize its own split.  For the rate family
    the free-split subproblem is evaluated either through the split-grid
    two-stage search ("twostage", the reference algorithm) or through the
    precomputed best-rate power envelope ("envelope", the fast equivalent
    used inside the multiplier iteration).
    """

    def __init__(self, kind: ProblemKind, ensemble: FadingEnsemble, params: SystemParams,
                 opts: EllipsoidOptions, fixed_alpha=None, esc_mode: str = "envelope"):
        self.kind = kind
        self.params = params
        self.opts = opts
        self.h = ensemble.h_array
        self.g = ensemble.g_array
        self.n = len(ensemble)
        self.envelope: Optional[PowerEnvelope] = None
        if fixed_alpha is None:
            self.fixed_alpha = None
        else:
            self.fixed_alpha = np.broadcast_to(
                np.asarray(fixed_alpha, dtype=float), self.h.shape).copy()
        if kind is ProblemKind.OUTAGE_MIN:
            if self.fixed_alpha is None:
                self.split, self.p_min = min_split_batch(
                    self.h, self.g, params, grid_n=opts.p1_grid_n, tol=opts.search_tol)
            else:
                self.split = self.fixed_alpha
                self.p_min = min_power_batch(self.fixed_alpha, self.h, self.g, params)
        elif self.fixed_alpha is None and esc_mode == "envelope":
            self.envelope = PowerEnvelope(self.h, self.g, params,
                                          grid_n=opts.envelope_grid_n)

    def decisions_at(self, lam: float, mu: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-state (p, split) minimizing/maximizing the state Lagrangian."""
        if self.kind is ProblemKind.OUTAGE_MIN:
            p, split, _ = p1_policy_batch(self.p_min, self.split, self.g, lam, mu,
                                          self.params, fixed_split=self.fixed_alpha is not None)
            return p, split
        if self.fixed_alpha is not None:
            p, _ = p2_fixed_split_batch(self.h, self.g, lam, mu, self.fixed_alpha, self.params)
            return p, self.fixed_alpha
        if self.envelope is not None:
            p, split, _ = self.envelope.maximize(lam, mu)
            return p, split
        p, split, _ = p2_two_stage_batch(self.h, self.g, lam, mu, self.params,
                                         alpha_grid_n=self.opts.alpha_grid_n)
        return p, split

    def dual_value(self, lam: float, mu: float):
        """Dual function value plus the optimizing per-state arrays and aggregates."""
        params = self.params
        if self.kind is ProblemKind.OUTAGE_MIN:
            p, split, outage = p1_policy_batch(
                self.p_min, self.split, self.g, lam, mu, params,
                fixed_split=self.fixed_alpha is not None)
            per_state = float(np.mean(outage))
        else:
            p, split = self.decisions_at(lam, mu)
            per_state = None
        avg_p = float(np.mean(p))
        avg_q = params.zeta * float(np.mean(self.g * p))
        if self.kind is ProblemKind.OUTAGE_MIN:
            value = per_state + lam * avg_p - mu * avg_q - lam * params.p_avg
        else:
            rates = rate_an_cancelled(self.h, self.g, p, split,
                                      params.sigma1_sq, params.sigma2_sq)
            value = float(np.mean(rates)) - lam * avg_p + mu * avg_q + lam * params.p_avg
        return value, p, split, avg_p, avg_q

    def primal_stats(self, p: np.ndarray, split: np.ndarray):
        """Objective and constraint aggregates of a concrete decision vector."""
        return evaluate_decision_arrays(self.kind, self.h, self.g, p, split, self.params)


def evaluate_decision_arrays(kind: ProblemKind, h: np.ndarray, g: np.ndarray,
                             p: np.ndarray, split: np.ndarray, params: SystemParams,
                             rate_fn=rate_an_cancelled):
    """Objective and constraint aggregates of explicit per-state decisions.

    Returns (objective, avg_power, avg_harvest); ``rate_fn`` selects the
    scheme-specific rate (AN-cancelled by default).
    """
    rates = rate_fn(h, g, p, split, params.sigma1_sq, params.sigma2_sq)
    if kind is ProblemKind.OUTAGE_MIN:
        objective = float(np.mean(rates < params.r0))
    else:
        objective = float(np.mean(rates))
    avg_p = float(np.mean(p))
    avg_q = params.zeta * float(np.mean(g * p))
    return objective, avg_p, avg_q


def _dual_constant(kind: ProblemKind, lam: float, mu: float, params: SystemParams,
                   constraints: Constraints) -> float:
    if kind is ProblemKind.OUTAGE_MIN:
        return mu * constraints.q_bar
    return -mu * constraints.q_bar


def dual_value(kind: ProblemKind, ensemble: FadingEnsemble, dual: DualPoint,
               params: SystemParams, constraints: Constraints,
               opts: Optional[EllipsoidOptions] = None
               ) -> tuple[float, list[PerStateDecision]]:
    """Dual function at one multiplier pair, with the optimizing decisions."""
    opts = opts or EllipsoidOptions()
    ws = _Workspace(kind, ensemble, params, opts, esc_mode="twostage")
    value, p, split, _, _ = ws.dual_value(dual.lam, dual.mu)
    value += _dual_constant(kind, dual.lam, dual.mu, params, constraints)
    decisions = [PerStateDecision(p=float(pv), alpha=float(av)) for pv, av in zip(p, split)]
    return value, decisions


# ---------------------------------------------------------------------------
# ellipsoid search
# ---------------------------------------------------------------------------

def _run_ellipsoid(ws: _Workspace, params: SystemParams, constraints: Constraints,
                   opts: EllipsoidOptions):
    """Cut-and-shrink loop; returns (best DualPoint, best value, iterations, trace, dets)."""
    maximize = ws.kind is ProblemKind.OUTAGE_MIN
    mean_g = float(np.mean(ws.g))
    lam0 = 1.0 / params.p_avg
    mu0 = 1.0 / (params.zeta * mean_g * params.p_peak) if mean_g > 0.0 else 1.0
    scale = np.array([lam0, mu0])
    z = scale.copy()
    mat = np.diag((1e3 * scale) ** 2)

    best_val = -math.inf if maximize else math.inf
    best_point = DualPoint(lam=lam0, mu=mu0)
    trace_rows: list[tuple[int, float, float, float, float, float]] = []
    dets: list[float] = []
    iterations = 0

    for it in range(1, opts.max_iter + 1):
        iterations = it
        lam, mu = float(z[0]), float(z[1])
        if lam < 0.0:
            cut = np.array([-1.0, 0.0])
        elif mu < 0.0:
            cut = np.array([0.0, -1.0])
        else:
            value, _, _, avg_p, avg_q = ws.dual_value(lam, mu)
            value += _dual_constant(ws.kind, lam, mu, params, constraints)
            sg = np.array(subgradient(avg_p, avg_q, params, constraints))
            if (maximize and value > best_val) or (not maximize and value < best_val):
                best_val = value
                best_point = DualPoint(lam=lam, mu=mu)
            if opts.trace:
                trace_rows.append((it, lam, mu, value, float(sg[0]), float(sg[1])))
            # the objective cut direction is the same for both problem kinds
            cut = -sg
        if opts.collect_geometry:
            dets.append(float(np.linalg.det(mat)))
        mg = mat @ cut
        denom = float(cut @ mg)
        if denom <= 0.0 or not math.isfinite(denom):
            break
        gn = mg / math.sqrt(denom)
        z = z - gn / 3.0
        mat = (4.0 / 3.0) * (mat - (2.0 / 3.0) * np.outer(gn, gn))
        mat = 0.5 * (mat + mat.T)
        extent = np.sqrt(np.maximum(np.diagonal(mat), 0.0)) / scale
        if float(np.max(extent)) < opts.tol:
            break
    if not math.isfinite(best_val):
        # every iterate sat outside the feasible quadrant; evaluate the projection
        lam, mu = max(float(z[0]), 0.0), max(float(z[1]), 0.0)
        best_val, _, _, avg_p, avg_q = ws.dual_value(lam, mu)
        best_val += _dual_constant(ws.kind, lam, mu, params, constraints)
        best_point = DualPoint(lam=lam, mu=mu)
    return best_point, best_val, iterations, trace_rows, dets


def _bisect_multiplier(eval_fn, lo: float, target_ok, grow_scale: float,
                       max_doublings: int = 80, iters: int = 60) -> float:
    """Smallest multiplier >= lo whose evaluation satisfies ``target_ok``.

    ``eval_fn`` maps a multiplier to the monitored aggregate; ``target_ok``
    is monotone in the multiplier.  Raises RecoveryError when no bracket is
    found.
    """
    if target_ok(eval_fn(lo)):
        return lo
    hi = max(lo * 2.0, grow_scale)
    for _ in range(max_doublings):
        if target_ok(eval_fn(hi)):
            break
        hi *= 2.0
    else:
        raise RecoveryError("could not bracket a feasible multiplier")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if target_ok(eval_fn(mid)):
            hi = mid
        else:
            lo = mid
    return hi


def _patch_power_for_harvest(p: np.ndarray, g: np.ndarray, params: SystemParams,
                             q_target: float, avg_p_cap: float) -> np.ndarray:
    """Raise powers toward the peak on the highest-gain states until the
    harvest target is met, spending at most the average-power budget.

    Implements the time-sharing completion at the marginal states: the
    per-state dual minimizers are quantized on a finite ensemble, so the
    last sliver of harvest is bought with a fractional power increase.
    Raising power never creates an outage (the non-outage power set is
    upward closed) and never violates the budget by construction.
    """
    n = p.shape[0]
    out = p.copy()
    need = q_target * n / params.zeta - float(np.dot(g, out))
    budget = avg_p_cap * n - float(np.sum(out))
    if need <= 0.0:
        return out
    for i in np.argsort(-g):
        if need <= 0.0 or budget <= 0.0:
            break
        if g[i] <= 0.0:
            break
        head = min(params.p_peak - out[i], budget)
        if head <= 0.0:
            continue
        dp = min(head, need / g[i])
        out[i] += dp
        need -= dp * g[i]
        budget -= dp
    return out


def _greedy_feasible_power(g: np.ndarray, params: SystemParams) -> np.ndarray:
    """The harvest-maximal power vector under the power constraints."""
    n = g.shape[0]
    order = np.argsort(-g)
    alloc = np.clip(n * params.p_avg - np.arange(n) * params.p_peak, 0.0, params.p_peak)
    p = np.empty(n)
    p[order] = alloc
    return p


def _recover(ws: _Workspace, best: DualPoint, best_val: float, iterations: int,
             params: SystemParams, constraints: Constraints, opts: EllipsoidOptions,
             trace=None, dets=None) -> DualSolveReport:
    """Feasible primal decisions near the best dual point.

    Violations beyond the relative feasibility tolerance are repaired by
    raising one multiplier at a time (mu for the harvest floor, lam for the
    power budget), re-checking after each repair since the two interact.
    When the multiplier staircase cannot hit both constraints at once (the
    decision family is quantized over a finite ensemble), a direct
    fractional power patch on the highest-gain states closes the residual
    harvest shortfall inside the remaining budget.
    """
    feas = opts.feas_tol
    q_bar = constraints.q_bar
    lam, mu = best.lam, best.mu

    def stats(lam_v: float, mu_v: float):
        p, split = ws.decisions_at(lam_v, mu_v)
        obj, avg_p, avg_q = ws.primal_stats(p, split)
        return p, split, obj, avg_p, avg_q

    mean_g = float(np.mean(ws.g))
    mu_scale = 1.0 / (params.zeta * mean_g * params.p_peak) if mean_g > 0.0 else 1.0
    lam_scale = 1.0 / params.p_avg
    q_target = q_bar * (1.0 - 0.5 * feas)
    p_cap = params.p_avg * (1.0 + 0.5 * feas)

    p, split, obj, avg_p, avg_q = stats(lam, mu)
    for _ in range(4):
        q_ok = avg_q >= q_bar * (1.0 - feas)
        p_ok = avg_p <= params.p_avg * (1.0 + feas)
        if q_ok and p_ok:
            break
        if not q_ok:
            mu = _bisect_multiplier(
                lambda m: ws.primal_stats(*ws.decisions_at(lam, m))[2],
                mu, lambda q: q >= q_target, mu_scale)
            p, split, obj, avg_p, avg_q = stats(lam, mu)
        if avg_p > params.p_avg * (1.0 + feas):
            lam = _bisect_multiplier(
                lambda l: ws.primal_stats(*ws.decisions_at(l, mu))[1],
                lam, lambda pw: pw <= p_cap, lam_scale)
            p, split, obj, avg_p, avg_q = stats(lam, mu)

    if avg_q < q_bar * (1.0 - feas) and avg_p <= params.p_avg * (1.0 + feas):
        p = _patch_power_for_harvest(p, ws.g, params, q_target, p_cap)
        obj, avg_p, avg_q = ws.primal_stats(p, split)
    if avg_q < q_bar * (1.0 - feas) or avg_p > params.p_avg * (1.0 + feas):
        # last resort: the harvest-maximal vector is feasible for any screened floor
        p = _greedy_feasible_power(ws.g, params)
        obj, avg_p, avg_q = ws.primal_stats(p, split)
    if avg_q < q_bar * (1.0 - feas) or avg_p > params.p_avg * (1.0 + feas):
        raise RecoveryError(
            f"feasibility not restored: avg_power={avg_p:.6e} (cap {params.p_avg:.6e}), "
            f"avg_harvest={avg_q:.6e} (floor {q_bar:.6e})")

    if ws.kind is ProblemKind.OUTAGE_MIN:
        gap = obj - best_val
    else:
        gap = best_val - obj
    decisions = tuple(PerStateDecision(p=float(pv), alpha=float(av))
                      for pv, av in zip(p, split))
    return DualSolveReport(
        dual=DualPoint(lam=lam, mu=mu),
        decisions=decisions,
        objective=obj,
        avg_power=avg_p,
        avg_harvest=avg_q,
        iterations=iterations,
        dual_gap_estimate=gap,
        best_dual_value=best_val,
        trace=trace if trace else None,
        det_history=dets if dets else None,
    )


def ellipsoid_solve(kind: ProblemKind, ensemble: FadingEnsemble, params: SystemParams,
                    constraints: Constraints, opts: Optional[EllipsoidOptions] = None,
                    fixed_alpha=None) -> DualSolveReport:
    """Full dual solve: feasibility screen, ellipsoid search, primal recovery.

    ``fixed_alpha`` (scalar or per-state array) freezes the splits, giving
    the one-shot fixed-split solvers; None optimizes splits per state.
    """
    opts = opts or EllipsoidOptions()
    feas = check_feasibility(ensemble, params, constraints)
    if not feas.feasible:
        raise InfeasibleError(constraints.q_bar, feas.q_max)
    ws = _Workspace(kind, ensemble, params, opts, fixed_alpha=fixed_alpha)
    best, best_val, iterations, trace, dets = _run_ellipsoid(ws, params, constraints, opts)
    return _recover(ws, best, best_val, iterations, params, constraints, opts,
                    trace=trace, dets=dets)


def recover_primal(kind: ProblemKind, ensemble: FadingEnsemble, best_dual: DualPoint,
                   params: SystemParams, constraints: Constraints,
                   opts: Optional[EllipsoidOptions] = None) -> DualSolveReport:
    """Feasible decisions evaluated at (and repaired around) a given dual point."""
    opts = opts or EllipsoidOptions()
    ws = _Workspace(kind, ensemble, params, opts)
    value, _, _, _, _ = ws.dual_value(best_dual.lam, best_dual.mu)
    value += _dual_constant(kind, best_dual.lam, best_dual.mu, params, constraints)
    return _recover(ws, best_dual, value, 0, params, constraints, opts)
