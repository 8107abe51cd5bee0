"""Trade-off region boundaries: sweep the harvest floor and re-solve.

Produces the outage-energy boundary (non-outage probability vs average
harvested power) or the rate-energy boundary (ergodic secrecy rate vs
average harvested power) for any of the supported schemes.  The harvested
coordinate reports the achieved average, not the requested floor, so
dominated points stay visible.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .alternating import AlternatingOptions, solve_fixed_alpha, solve_p1_alternating, \
    solve_p2_alternating
from .dual import (
    Constraints,
    DualSolveReport,
    EllipsoidOptions,
    ProblemKind,
    check_feasibility,
    ellipsoid_solve,
    evaluate_decision_arrays,
)
from .model import FadingEnsemble, SystemParams, TradeoffPoint, rate_no_cancel

SCHEMES = ("optimal", "alt", "fixed:<alpha>", "noan", "nocancel")


@dataclass(frozen=True)
class SweepSpec:
    """Scheme identifier, problem kind and harvest-floor grid controls.

    ``scheme`` is one of 'optimal', 'alt', 'fixed:<alpha>', 'noan',
    'nocancel'.  The grid runs from 0 to q_max_fraction times the maximum
    feasible floor; the fraction stays below 1 because the solve conditions
    poorly on the infeasibility knife-edge.
    """

    scheme: str
    kind: ProblemKind
    q_points: int = 9
    q_max_fraction: float = 0.98

    def __post_init__(self) -> None:
        if self.q_points < 2:
            raise ValueError(f"need at least two sweep points, got {self.q_points}")
        if not 0.0 < self.q_max_fraction <= 1.0:
            raise ValueError(f"q_max_fraction must lie in (0, 1], got {self.q_max_fraction}")


class SweepError(RuntimeError):
    """A solve inside a boundary sweep failed; message carries the failing floor."""


def _parse_fixed(scheme: str) -> float:
    alpha = float(scheme.split(":", 1)[1])
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"fixed split must lie in [0, 1], got {alpha}")
    return alpha


def solve_scheme(scheme: str, kind: ProblemKind, ensemble: FadingEnsemble,
                 params: SystemParams, constraints: Constraints,
                 ell_opts: Optional[EllipsoidOptions] = None,
                 alt_opts: Optional[AlternatingOptions] = None) -> DualSolveReport:
    """Run one scheme at one harvest floor and return its report."""
    if scheme == "optimal":
        return ellipsoid_solve(kind, ensemble, params, constraints, ell_opts)
    if scheme == "alt":
        opts = alt_opts or AlternatingOptions()
        if ell_opts is not None:
            opts = replace(opts, solver=ell_opts)
        if kind is ProblemKind.OUTAGE_MIN:
            return solve_p1_alternating(ensemble, params, constraints, opts)
        return solve_p2_alternating(ensemble, params, constraints, opts)
    if scheme.startswith("fixed:"):
        return solve_fixed_alpha(kind, ensemble, params, constraints,
                                 _parse_fixed(scheme), ell_opts)
    if scheme == "noan":
        return solve_fixed_alpha(kind, ensemble, params, constraints, 0.0, ell_opts)
    if scheme == "nocancel":
        return benchmark_nocancel(kind, ensemble, params, constraints, ell_opts)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def benchmark_nocancel(kind: ProblemKind, ensemble: FadingEnsemble, params: SystemParams,
                       constraints: Constraints,
                       opts: Optional[EllipsoidOptions] = None) -> DualSolveReport:
    """Benchmark where the IR cannot cancel the AN.

    The best split is then 0 at every state, so the solve reduces to the
    no-AN problem; the objective is re-evaluated under the interfered-IR
    rate, which coincides with the no-AN rate at split 0.
    """
    rep = solve_fixed_alpha(kind, ensemble, params, constraints, 0.0, opts)
    p = np.array([d.p for d in rep.decisions])
    split = np.zeros(len(rep.decisions))
    obj, avg_p, avg_q = evaluate_decision_arrays(
        kind, ensemble.h_array, ensemble.g_array, p, split, params,
        rate_fn=rate_no_cancel)
    return replace(rep, objective=obj, avg_power=avg_p, avg_harvest=avg_q)


@dataclass(frozen=True)
class BoundaryRow:
    """One sweep entry: the requested floor plus the full solve report."""

    q_bar: float
    report: DualSolveReport


def sweep_reports(spec: SweepSpec, ensemble: FadingEnsemble, params: SystemParams,
                  ell_opts: Optional[EllipsoidOptions] = None,
                  alt_opts: Optional[AlternatingOptions] = None,
                  threads: int = 1) -> list[BoundaryRow]:
    """Solve the scheme across the harvest-floor grid, in grid order."""
    feas = check_feasibility(ensemble, params, Constraints(q_bar=0.0))
    q_grid = np.linspace(0.0, spec.q_max_fraction * feas.q_max, spec.q_points)

    def run(q_bar: float) -> BoundaryRow:
        try:
            rep = solve_scheme(spec.scheme, spec.kind, ensemble, params,
                               Constraints(q_bar=float(q_bar)), ell_opts, alt_opts)
        except Exception as exc:
            raise SweepError(f"scheme {spec.scheme!r} failed at q_bar={q_bar:.6e} W: {exc}") from exc
        return BoundaryRow(q_bar=float(q_bar), report=rep)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, q_grid))
    else:
        rows = [run(q) for q in q_grid]
    return rows


def trace_boundary(spec: SweepSpec, ensemble: FadingEnsemble, params: SystemParams,
                   ell_opts: Optional[EllipsoidOptions] = None,
                   alt_opts: Optional[AlternatingOptions] = None,
                   threads: int = 1) -> list[TradeoffPoint]:
    """Boundary points (objective coordinate, achieved harvest), ordered by the floor.

    The objective coordinate is the non-outage probability for the outage
    family and the ergodic secrecy rate for the rate family.
    """
    rows = sweep_reports(spec, ensemble, params, ell_opts, alt_opts, threads)
    points = []
    for row in rows:
        if spec.kind is ProblemKind.OUTAGE_MIN:
            objective = 1.0 - row.report.objective
        else:
            objective = row.report.objective
        points.append(TradeoffPoint(objective=objective, harvested=row.report.avg_harvest))
    return points
