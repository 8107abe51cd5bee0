"""Alternating-optimization solvers and the uniform fixed-split heuristic.

Each round first re-optimizes the per-state powers with the splits frozen
(a full dual solve of the fixed-split problem), then updates every split in
closed form at the new powers.  A round's power vector is accepted only if
it does not worsen the objective, and the split update can never worsen it,
so the reported objective sequence is monotone by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dual import (
    Constraints,
    DualSolveReport,
    EllipsoidOptions,
    ProblemKind,
    check_feasibility,
    ellipsoid_solve,
    evaluate_decision_arrays,
    InfeasibleError,
)
from .model import FadingEnsemble, PerStateDecision, SystemParams
from .perstate import EPS_ALPHA, split_given_power_batch


@dataclass
class AlternatingOptions:
    """Round budget, stopping tolerance and the uniform starting split."""

    max_rounds: int = 20
    obj_tol: float = 1e-6
    initial_alpha: float = 0.5
    decision_tol: float = 1e-12
    solver: EllipsoidOptions = field(default_factory=EllipsoidOptions)

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError(f"need at least one round, got {self.max_rounds}")
        if self.obj_tol <= 0.0:
            raise ValueError(f"objective tolerance must be positive, got {self.obj_tol}")
        if not 0.0 <= self.initial_alpha <= 1.0:
            raise ValueError(f"initial split must lie in [0, 1], got {self.initial_alpha}")


def solve_fixed_alpha(kind: ProblemKind, ensemble: FadingEnsemble, params: SystemParams,
                      constraints: Constraints, alpha_bar: float,
                      opts: Optional[EllipsoidOptions] = None) -> DualSolveReport:
    """One-shot solve with the same split frozen at every state.

    ``alpha_bar = 0`` is the no-AN benchmark.  The rate family requires
    alpha_bar < 1.
    """
    if not 0.0 <= alpha_bar <= 1.0:
        raise ValueError(f"fixed split must lie in [0, 1], got {alpha_bar}")
    if kind is ProblemKind.ESC_MAX and alpha_bar >= 1.0:
        raise ValueError("the rate family needs a fixed split strictly below 1")
    return ellipsoid_solve(kind, ensemble, params, constraints, opts,
                           fixed_alpha=alpha_bar)


def _alternate(kind: ProblemKind, ensemble: FadingEnsemble, params: SystemParams,
               constraints: Constraints, opts: AlternatingOptions) -> DualSolveReport:
    feas = check_feasibility(ensemble, params, constraints)
    if not feas.feasible:
        raise InfeasibleError(constraints.q_bar, feas.q_max)

    minimize = kind is ProblemKind.OUTAGE_MIN
    h = ensemble.h_array
    g = ensemble.g_array
    n = len(ensemble)
    alpha = np.full(n, float(opts.initial_alpha))
    if kind is ProblemKind.ESC_MAX:
        alpha = np.minimum(alpha, 1.0 - EPS_ALPHA)

    best_obj = math.inf if minimize else -math.inf
    p_vec: Optional[np.ndarray] = None
    last_report: Optional[DualSolveReport] = None
    total_iterations = 0
    rounds: list[tuple[int, float, float, float]] = []
    prev_round_obj: Optional[float] = None
    prev_p = None
    prev_alpha = None

    for rnd in range(1, opts.max_rounds + 1):
        report = ellipsoid_solve(kind, ensemble, params, constraints, opts.solver,
                                 fixed_alpha=alpha)
        total_iterations += report.iterations
        improved = (report.objective < best_obj) if minimize else (report.objective > best_obj)
        if p_vec is None or improved:
            p_vec = np.array([d.p for d in report.decisions])
            best_obj = report.objective
            last_report = report
        # closed-form split update at the accepted powers (exact, never worse)
        on = p_vec > 0.0
        new_alpha = alpha.copy()
        if on.any():
            upd = split_given_power_batch(h[on], g[on], p_vec[on], params)
            if kind is ProblemKind.ESC_MAX:
                upd = np.minimum(upd, 1.0 - EPS_ALPHA)
            new_alpha[on] = upd
        alpha = new_alpha
        obj, avg_p, avg_q = evaluate_decision_arrays(kind, h, g, p_vec, alpha, params)
        best_obj = obj
        rounds.append((rnd, obj, avg_p, avg_q))
        converged = (prev_round_obj is not None
                     and abs(prev_round_obj - obj) <= opts.obj_tol * max(1.0, abs(obj)))
        unchanged = (prev_p is not None
                     and float(np.max(np.abs(prev_p - p_vec))) <= opts.decision_tol
                     and float(np.max(np.abs(prev_alpha - alpha))) <= opts.decision_tol)
        prev_round_obj = obj
        prev_p = p_vec.copy()
        prev_alpha = alpha.copy()
        if converged or unchanged:
            break

    obj, avg_p, avg_q = evaluate_decision_arrays(kind, h, g, p_vec, alpha, params)
    decisions = tuple(PerStateDecision(p=float(pv), alpha=float(av))
                      for pv, av in zip(p_vec, alpha))
    gap = (obj - last_report.best_dual_value) if minimize \
        else (last_report.best_dual_value - obj)
    return replace(last_report,
                   decisions=decisions,
                   objective=obj,
                   avg_power=avg_p,
                   avg_harvest=avg_q,
                   iterations=total_iterations,
                   dual_gap_estimate=gap,
                   rounds=rounds)


def solve_p1_alternating(ensemble: FadingEnsemble, params: SystemParams,
                         constraints: Constraints,
                         opts: Optional[AlternatingOptions] = None) -> DualSolveReport:
    """Alternating solver for the outage family; objective non-increasing per round."""
    return _alternate(ProblemKind.OUTAGE_MIN, ensemble, params, constraints,
                      opts or AlternatingOptions())


def solve_p2_alternating(ensemble: FadingEnsemble, params: SystemParams,
                         constraints: Constraints,
                         opts: Optional[AlternatingOptions] = None) -> DualSolveReport:
    """Alternating solver for the rate family; objective non-decreasing per round."""
    opts = opts or AlternatingOptions()
    if opts.initial_alpha >= 1.0:
        raise ValueError("the rate family needs an initial split strictly below 1")
    return _alternate(ProblemKind.ESC_MAX, ensemble, params, constraints, opts)
