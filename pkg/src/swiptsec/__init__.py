"""Secrecy/energy trade-off toolkit for a three-node fading wiretap channel.

A transmitter splits its power between a confidential message and an
artificial-noise component that simultaneously jams a potential
eavesdropper and delivers wireless power to it.  The package solves the
secrecy-outage-minimization and ergodic-secrecy-rate-maximization power
allocation problems over a fading ensemble under average/peak transmit
power and average harvested-power constraints, and traces the resulting
outage-energy and rate-energy trade-off boundaries.
"""

from .model import (
    DualPoint,
    FadingEnsemble,
    FadingState,
    PerStateDecision,
    SchemeKind,
    SystemParams,
    TradeoffPoint,
    dbm_to_watts,
    ensemble_average,
    harvested_power,
    outage_indicator,
    secrecy_rate,
    watts_to_dbm,
)
from .channel import (
    EnsembleFormatError,
    GeometryConfig,
    generate_ensemble,
    load_ensemble,
    path_loss,
    save_ensemble,
)
from .perstate import (
    CubicCoefficients,
    SplitSearchResult,
    candidate_set,
    cubic_coefficients,
    cubic_denominator,
    min_power_for_rate,
    optimal_split_given_power,
    real_roots_cubic,
    search_min_split,
    solve_nocancel_split,
    solve_p1_sub,
    solve_p11_sub,
    solve_p2_sub,
    solve_p2_sub_fixed_alpha,
)
from .dual import (
    Constraints,
    DualSolveReport,
    EllipsoidOptions,
    FeasibilityReport,
    InfeasibleError,
    ProblemKind,
    RecoveryError,
    check_feasibility,
    dual_value,
    ellipsoid_solve,
    recover_primal,
    subgradient,
)
from .alternating import (
    AlternatingOptions,
    solve_fixed_alpha,
    solve_p1_alternating,
    solve_p2_alternating,
)
from .region import (
    BoundaryRow,
    SweepError,
    SweepSpec,
    benchmark_nocancel,
    solve_scheme,
    sweep_reports,
    trace_boundary,
)

__version__ = "0.1.0"
