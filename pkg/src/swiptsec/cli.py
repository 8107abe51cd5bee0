"""Configuration-driven command-line entry point.

Commands: ``ensemble`` (generate and save fading states), ``solve`` (one
scenario, one scheme), ``region`` (trade-off boundary sweep) and ``verify``
(oracle cross-checks).  Configuration is an INI file with sections
[system], [geometry], [ensemble], [solver] and [sweep]; powers accept an
explicit unit suffix (dBm, W, mW, uW) and bare numbers mean watts.  Every
output CSV embeds the fully resolved configuration (linear watts) as
leading comment lines, and identical config + seed produce byte-identical
outputs.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import oracle
from .alternating import AlternatingOptions
from .channel import GeometryConfig, generate_ensemble, load_ensemble, save_ensemble
from .dual import (
    Constraints,
    DualPoint,
    DualSolveReport,
    EllipsoidOptions,
    InfeasibleError,
    ProblemKind,
    check_feasibility,
)
from .model import FadingEnsemble, FadingState, SystemParams, dbm_to_watts
from .perstate import (
    min_power_for_rate,
    search_min_split,
    solve_p1_sub,
    solve_p2_sub_fixed_alpha,
)
from .region import SweepSpec, solve_scheme, sweep_reports

_FMT = "{:.16e}"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation found."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = errors


def parse_power(text: str) -> float:
    """Parse a power with optional unit suffix into watts.

    Accepts 'dBm', 'W', 'mW', 'uW' (case-insensitive); a bare number is
    taken as watts.
    """
    t = text.strip()
    lowered = t.lower()
    for suffix, conv in (("dbm", None), ("mw", 1e-3), ("uw", 1e-6), ("w", 1.0)):
        if lowered.endswith(suffix):
            number = t[: len(t) - len(suffix)].strip()
            value = float(number)
            if conv is None:
                return dbm_to_watts(value)
            return value * conv
    return float(t)


@dataclass
class RunConfig:
    """Fully resolved run configuration in linear units."""

    params: SystemParams
    geometry: GeometryConfig
    n_states: int = 10_000
    seed: int = 1
    ensemble_path: Optional[str] = None
    solver: EllipsoidOptions = field(default_factory=EllipsoidOptions)
    alt: AlternatingOptions = field(default_factory=AlternatingOptions)
    q_points: int = 9
    q_max_fraction: float = 0.98
    schemes: tuple[str, ...] = ("optimal", "alt", "fixed:0.5", "noan", "nocancel")
    threads: int = 1

    def header_lines(self) -> list[str]:
        p = self.params
        geo = self.geometry
        items = [
            ("p_avg_w", p.p_avg), ("p_peak_w", p.p_peak), ("zeta", p.zeta),
            ("sigma1_sq_w", p.sigma1_sq), ("sigma2_sq_w", p.sigma2_sq),
            ("r0_bps_hz", p.r0), ("d_ir_m", geo.d_ir), ("d_er_m", geo.d_er),
            ("a0", geo.a0), ("d0_m", geo.d0), ("path_exp", geo.path_exp),
            ("n_states", self.n_states), ("seed", self.seed),
            ("solver_tol", self.solver.tol), ("solver_max_iter", self.solver.max_iter),
            ("solver_feas_tol", self.solver.feas_tol),
            ("solver_alpha_grid_n", self.solver.alpha_grid_n),
            ("q_points", self.q_points), ("q_max_fraction", self.q_max_fraction),
            ("threads", self.threads),
        ]
        out = []
        for key, val in items:
            if isinstance(val, float):
                out.append(f"# {key} = " + _FMT.format(val))
            else:
                out.append(f"# {key} = {val}")
        return out


_SECTIONS = {
    "system": {"p_avg", "p_peak", "zeta", "sigma1_sq", "sigma2_sq", "r0"},
    "geometry": {"d_ir", "d_er", "a0", "d0", "path_exp"},
    "ensemble": {"n", "seed", "path"},
    "solver": {"tol", "max_iter", "feas_tol", "alpha_grid_n", "p1_grid_n",
               "max_rounds", "obj_tol", "initial_alpha", "threads"},
    "sweep": {"q_points", "q_max_fraction", "schemes"},
}


def load_config(path: Optional[str]) -> RunConfig:
    """Parse and validate an INI config; defaults match the reference setup."""
    raw = configparser.ConfigParser()
    if path is not None:
        read = raw.read(path)
        if not read:
            raise ConfigError([f"config file not found: {path}"])
    errors: list[str] = []
    for section in raw.sections():
        if section not in _SECTIONS:
            errors.append(f"unknown section [{section}]")
            continue
        for key in raw[section]:
            if key not in _SECTIONS[section]:
                errors.append(f"unknown key '{key}' in [{section}]")

    def get(section: str, key: str, default, conv):
        if raw.has_option(section, key):
            text = raw.get(section, key)
            try:
                return conv(text)
            except (ValueError, ConfigError) as exc:
                errors.append(f"[{section}] {key} = {text!r}: {exc}")
                return default
        return default

    p_avg = get("system", "p_avg", dbm_to_watts(20.0), parse_power)
    p_peak = get("system", "p_peak", dbm_to_watts(30.0), parse_power)
    zeta = get("system", "zeta", 0.5, float)
    s1 = get("system", "sigma1_sq", dbm_to_watts(-50.0), parse_power)
    s2 = get("system", "sigma2_sq", dbm_to_watts(-50.0), parse_power)
    r0 = get("system", "r0", 6.5, float)
    d_ir = get("geometry", "d_ir", 2.0, float)
    d_er = get("geometry", "d_er", 2.0, float)
    a0 = get("geometry", "a0", 1e-3, float)
    d0 = get("geometry", "d0", 1.0, float)
    path_exp = get("geometry", "path_exp", 3.0, float)
    n_states = get("ensemble", "n", 10_000, int)
    seed = get("ensemble", "seed", 1, int)
    ens_path = raw.get("ensemble", "path", fallback=None)
    tol = get("solver", "tol", 1e-6, float)
    max_iter = get("solver", "max_iter", 500, int)
    feas_tol = get("solver", "feas_tol", 1e-4, float)
    alpha_grid_n = get("solver", "alpha_grid_n", 1001, int)
    p1_grid_n = get("solver", "p1_grid_n", 1001, int)
    max_rounds = get("solver", "max_rounds", 20, int)
    obj_tol = get("solver", "obj_tol", 1e-6, float)
    initial_alpha = get("solver", "initial_alpha", 0.5, float)
    threads = get("solver", "threads", 1, int)
    q_points = get("sweep", "q_points", 9, int)
    q_max_fraction = get("sweep", "q_max_fraction", 0.98, float)
    schemes = get("sweep", "schemes", "optimal,alt,fixed:0.5,noan,nocancel",
                  lambda t: t)
    scheme_list = tuple(s.strip() for s in schemes.split(",") if s.strip())

    try:
        params = SystemParams(p_avg=p_avg, p_peak=p_peak, zeta=zeta,
                              sigma1_sq=s1, sigma2_sq=s2, r0=r0)
    except ValueError as exc:
        errors.append(f"[system]: {exc}")
        params = None
    try:
        geometry = GeometryConfig(d_ir=d_ir, d_er=d_er, a0=a0, d0=d0, path_exp=path_exp)
    except ValueError as exc:
        errors.append(f"[geometry]: {exc}")
        geometry = None
    if n_states < 1:
        errors.append("[ensemble]: n must be >= 1")
    if q_points < 2:
        errors.append("[sweep]: q_points must be >= 2")
    if not 0.0 < q_max_fraction <= 1.0:
        errors.append("[sweep]: q_max_fraction must lie in (0, 1]")
    if threads < 1:
        errors.append("[solver]: threads must be >= 1")
    if errors:
        raise ConfigError(errors)

    solver = EllipsoidOptions(tol=tol, max_iter=max_iter, feas_tol=feas_tol,
                              alpha_grid_n=alpha_grid_n, p1_grid_n=p1_grid_n)
    alt = AlternatingOptions(max_rounds=max_rounds, obj_tol=obj_tol,
                             initial_alpha=initial_alpha, solver=solver)
    return RunConfig(params=params, geometry=geometry, n_states=n_states, seed=seed,
                     ensemble_path=ens_path, solver=solver, alt=alt,
                     q_points=q_points, q_max_fraction=q_max_fraction,
                     schemes=scheme_list, threads=threads)


def _get_ensemble(cfg: RunConfig) -> FadingEnsemble:
    if cfg.ensemble_path:
        return load_ensemble(cfg.ensemble_path)
    return generate_ensemble(cfg.geometry, cfg.n_states, cfg.seed)


def _write_csv(path: Path, header_lines: list[str], columns: Sequence[str],
               rows: Sequence[Sequence]) -> None:
    with path.open("w", encoding="ascii") as fh:
        for line in header_lines:
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_FMT.format(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _kind_from_flag(kind: str) -> ProblemKind:
    return ProblemKind.OUTAGE_MIN if kind == "outage" else ProblemKind.ESC_MAX


def _cmd_ensemble(cfg: RunConfig, args) -> int:
    ens = generate_ensemble(cfg.geometry, cfg.n_states, cfg.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "ensemble.csv"
    save_ensemble(ens, path)
    print(f"wrote {len(ens)} states to {path}")
    return 0


def _report_rows(q_bar: float, scheme: str, kind: str, rep: DualSolveReport):
    if kind == "outage":
        objective = 1.0 - rep.objective
    else:
        objective = rep.objective
    return [scheme, kind, q_bar, objective, rep.avg_harvest, rep.avg_power,
            rep.iterations]


def _cmd_solve(cfg: RunConfig, args) -> int:
    ens = _get_ensemble(cfg)
    kind = _kind_from_flag(args.kind)
    q_bar = parse_power(args.qbar) if args.qbar is not None else 0.0
    constraints = Constraints(q_bar=q_bar)
    solver = replace(cfg.solver, trace=args.out is not None)
    try:
        rep = solve_scheme(args.scheme, kind, ens, cfg.params, constraints,
                           solver, cfg.alt)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"scheme={args.scheme} kind={args.kind} q_bar={q_bar:.6e} W")
    label = "outage" if kind is ProblemKind.OUTAGE_MIN else "esc"
    print(f"objective ({label}) = {rep.objective:.6e}")
    print(f"avg_power = {rep.avg_power:.6e} W, avg_harvest = {rep.avg_harvest:.6e} W")
    print(f"multipliers: lam = {rep.dual.lam:.6e}, mu = {rep.dual.mu:.6e}; "
          f"iterations = {rep.iterations}, dual gap ~= {rep.dual_gap_estimate:.3e}")
    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        head = cfg.header_lines()
        _write_csv(out_dir / "report.csv", head,
                   ["scheme", "kind", "q_bar", "objective", "harvested_w",
                    "avg_power_w", "iterations"],
                   [_report_rows(q_bar, args.scheme, args.kind, rep)])
        _write_csv(out_dir / "decisions.csv", head, ["p_w", "alpha"],
                   [(d.p, d.alpha) for d in rep.decisions])
        if rep.trace:
            _write_csv(out_dir / "trace.csv", head,
                       ["iter", "lambda", "mu", "dual_value", "subgrad_p", "subgrad_q"],
                       rep.trace)
        if rep.rounds:
            _write_csv(out_dir / "rounds.csv", head,
                       ["round", "objective", "avg_power", "avg_harvest"],
                       rep.rounds)
        print(f"wrote CSVs to {out_dir}")
    return 0


def _cmd_region(cfg: RunConfig, args) -> int:
    ens = _get_ensemble(cfg)
    kind = _kind_from_flag(args.kind)
    schemes = [args.scheme] if args.scheme else list(cfg.schemes)
    rows = []
    try:
        for scheme in schemes:
            spec = SweepSpec(scheme=scheme, kind=kind, q_points=cfg.q_points,
                             q_max_fraction=cfg.q_max_fraction)
            for row in sweep_reports(spec, ens, cfg.params, cfg.solver, cfg.alt,
                                     threads=cfg.threads):
                rows.append(_report_rows(row.q_bar, scheme, args.kind, row.report))
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"boundary_{args.kind}.csv"
    _write_csv(path, cfg.header_lines(),
               ["scheme", "kind", "q_bar", "objective", "harvested_w",
                "avg_power_w", "iterations"], rows)
    print(f"wrote {len(rows)} boundary rows to {path}")
    return 0


# ---------------------------------------------------------------------------
# verify: oracle cross-checks
# ---------------------------------------------------------------------------

def _random_instance(rng: np.random.Generator):
    h = 10.0 ** rng.uniform(-6.0, -2.0)
    g = 10.0 ** rng.uniform(-6.0, -2.0)
    s1 = 10.0 ** rng.uniform(-10.0, -7.0)
    s2 = 10.0 ** rng.uniform(-10.0, -7.0)
    p_peak = 10.0 ** rng.uniform(-1.0, 1.0)
    params = SystemParams(p_avg=p_peak * rng.uniform(0.2, 1.0), p_peak=p_peak,
                          zeta=rng.uniform(0.3, 1.0), sigma1_sq=s1, sigma2_sq=s2,
                          r0=rng.uniform(0.2, 7.0))
    lam = 10.0 ** rng.uniform(-2.0, 2.0)
    mu = 10.0 ** rng.uniform(-2.0, 2.0) / (params.zeta * g * p_peak)
    if rng.random() < 0.2:
        mu = 0.0
    if rng.random() < 0.1:
        lam = 0.0
    return FadingState(h=h, g=g), DualPoint(lam=lam, mu=mu), params


def _verify_perstate(trials: int, seed: int) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    worst_l1 = worst_l2 = worst_split = 0.0
    for _ in range(trials):
        state, dual, params = _random_instance(rng)
        d = solve_p1_sub(state, dual, params, grid_n=257)
        price = dual.lam - params.zeta * dual.mu * state.g
        from .model import rate_an_cancelled
        rate = float(rate_an_cancelled(state.h, state.g, d.p, d.alpha,
                                       params.sigma1_sq, params.sigma2_sq))
        l1 = float(rate < params.r0) + price * d.p
        ref, _, _ = oracle.grid_min_L1(state, dual, params, n_p=200, n_alpha=200)
        worst_l1 = max(worst_l1, l1 - ref)
        abar = rng.uniform(0.0, 0.999)
        p2 = solve_p2_sub_fixed_alpha(state, dual, abar, params)
        l2 = float(rate_an_cancelled(state.h, state.g, p2, abar,
                                     params.sigma1_sq, params.sigma2_sq)) - price * p2
        ref2, _ = oracle.grid_max_L2(state, dual, abar, params, n_p=20_000)
        worst_l2 = max(worst_l2, ref2 - l2)
        p_bar = rng.uniform(1e-3, params.p_peak)
        from .perstate import optimal_split_given_power
        astar = optimal_split_given_power(state, p_bar, params)
        r_star = float(rate_an_cancelled(state.h, state.g, p_bar, astar,
                                         params.sigma1_sq, params.sigma2_sq))
        agrid = np.linspace(0.0, 1.0, 2001)
        r_grid = float(np.max(rate_an_cancelled(state.h, state.g, p_bar, agrid,
                                                params.sigma1_sq, params.sigma2_sq)))
        worst_split = max(worst_split, r_grid - r_star)
    checks = [
        ("outage-lagrangian closed form vs grid", worst_l1 <= 1e-6,
         f"worst excess {worst_l1:.3e}"),
        ("rate-lagrangian candidates vs grid", worst_l2 <= 1e-6,
         f"worst shortfall {worst_l2:.3e}"),
        ("fixed-power split vs grid", worst_split <= 1e-9,
         f"worst shortfall {worst_split:.3e}"),
    ]
    return checks


def _verify_rate(trials: int, seed: int) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < trials:
        state, _, params = _random_instance(rng)
        alpha = rng.uniform(0.0, 0.999)
        p1 = min_power_for_rate(alpha, state, params)
        if not math.isfinite(p1):
            continue
        from .model import rate_an_cancelled
        rate = float(rate_an_cancelled(state.h, state.g, p1, alpha,
                                       params.sigma1_sq, params.sigma2_sq))
        worst = max(worst, abs(rate - params.r0) / params.r0)
        done += 1
    return [("minimum-power rate-target consistency", worst <= 1e-8,
             f"worst relative error {worst:.3e}")]


def _verify_dual(trials: int, seed: int) -> list[tuple[str, bool, str]]:
    from .dual import ellipsoid_solve
    geo = GeometryConfig(d_ir=2.0, d_er=2.0)
    params = SystemParams(p_avg=0.1, p_peak=1.0, zeta=0.5,
                          sigma1_sq=1e-8, sigma2_sq=1e-8, r0=6.5)
    checks = []
    n_runs = max(1, min(trials, 3))
    for i in range(n_runs):
        ens = generate_ensemble(geo, 30, seed + i)
        feas = check_feasibility(ens, params, Constraints(0.0))
        constraints = Constraints(q_bar=0.5 * feas.q_max)
        for kind, label in ((ProblemKind.OUTAGE_MIN, "outage"), (ProblemKind.ESC_MAX, "esc")):
            opts = EllipsoidOptions(alpha_grid_n=129)
            rep = ellipsoid_solve(kind, ens, params, constraints, opts)
            box = ((0.0, max(4.0 * rep.dual.lam, 1.0 / params.p_avg)),
                   (0.0, max(4.0 * rep.dual.mu, 1.0)))
            _, ref = oracle.grid_dual_search(kind, ens, params, constraints, box,
                                             n=150, n_alpha=301, n_p=1501)
            rel = abs(rep.best_dual_value - ref) / max(abs(ref), 1e-12)
            checks.append((f"ellipsoid vs dual grid ({label}, seed {seed + i})",
                           rel <= 5e-3, f"relative mismatch {rel:.3e}"))
    return checks


def _cmd_verify(cfg: RunConfig, args) -> int:
    suites = {
        "perstate": lambda: _verify_perstate(args.trials, args.seed),
        "rate": lambda: _verify_rate(args.trials, args.seed),
        "dual": lambda: _verify_dual(args.trials, args.seed),
    }
    names = list(suites) if args.suite == "all" else [args.suite]
    failures = 0
    for name in names:
        for check, ok, detail in suites[name]():
            status = "PASS" if ok else "FAIL"
            print(f"[{status}] {name}: {check} ({detail})")
            failures += 0 if ok else 1
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swiptsec",
        description="Secrecy/energy trade-off solvers for a fading wiretap "
                    "channel with wireless power transfer")
    parser.add_argument("--config", default=None, help="INI configuration file")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ens = sub.add_parser("ensemble", help="generate and save a fading ensemble")
    p_ens.add_argument("--out", required=True, help="output directory")
    p_ens.add_argument("--seed", type=int, default=None)

    p_solve = sub.add_parser("solve", help="solve one scenario with one scheme")
    p_solve.add_argument("--scheme", default="optimal",
                         help="optimal | alt | fixed:<alpha> | noan | nocancel")
    p_solve.add_argument("--kind", choices=("outage", "esc"), default="outage")
    p_solve.add_argument("--qbar", default=None,
                         help="harvest floor (unit suffix allowed, e.g. '7 uW')")
    p_solve.add_argument("--r0", type=float, default=None, help="target secrecy rate")
    p_solve.add_argument("--seed", type=int, default=None)
    p_solve.add_argument("--threads", type=int, default=None)
    p_solve.add_argument("--out", default=None, help="directory for CSV outputs")

    p_region = sub.add_parser("region", help="trace a trade-off boundary")
    p_region.add_argument("--kind", choices=("outage", "esc"), default="outage")
    p_region.add_argument("--scheme", default=None,
                          help="single scheme (default: all schemes from config)")
    p_region.add_argument("--seed", type=int, default=None)
    p_region.add_argument("--threads", type=int, default=None)
    p_region.add_argument("--out", required=True, help="directory for the boundary CSV")

    p_verify = sub.add_parser("verify", help="run oracle cross-checks")
    p_verify.add_argument("--suite", choices=("perstate", "rate", "dual", "all"),
                          default="all")
    p_verify.add_argument("--trials", type=int, default=200)
    p_verify.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "threads", None) is not None:
        cfg = replace(cfg, threads=args.threads)
    if getattr(args, "r0", None) is not None:
        cfg = replace(cfg, params=replace(cfg.params, r0=args.r0))
    handlers = {
        "ensemble": _cmd_ensemble,
        "solve": _cmd_solve,
        "region": _cmd_region,
        "verify": _cmd_verify,
    }
    try:
        return handlers[args.command](cfg, args)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
