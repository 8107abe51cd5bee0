"""Shared fixtures-in-code for the test suite: reference setup and samplers."""

import numpy as np

from swiptsec import (
    Constraints,
    DualPoint,
    FadingEnsemble,
    FadingState,
    GeometryConfig,
    SystemParams,
    dbm_to_watts,
)


def reference_params(r0: float = 6.5) -> SystemParams:
    """The simulation setup used throughout: 20 dBm average, 30 dBm peak,
    50% harvesting efficiency, -50 dBm noise floors."""
    return SystemParams(
        p_avg=dbm_to_watts(20.0),
        p_peak=dbm_to_watts(30.0),
        zeta=0.5,
        sigma1_sq=dbm_to_watts(-50.0),
        sigma2_sq=dbm_to_watts(-50.0),
        r0=r0,
    )


def geometry(d_ir: float = 2.0, d_er: float = 2.0) -> GeometryConfig:
    return GeometryConfig(d_ir=d_ir, d_er=d_er, a0=1e-3, d0=1.0, path_exp=3.0)


def rand_instance(rng: np.random.Generator):
    """One randomized (state, dual, params) triple covering all policy regimes."""
    h = 10.0 ** rng.uniform(-6.0, -2.0)
    g = 10.0 ** rng.uniform(-6.0, -2.0)
    s1 = 10.0 ** rng.uniform(-10.0, -7.0)
    s2 = 10.0 ** rng.uniform(-10.0, -7.0)
    p_peak = 10.0 ** rng.uniform(-1.0, 1.0)
    params = SystemParams(
        p_avg=p_peak * rng.uniform(0.2, 1.0),
        p_peak=p_peak,
        zeta=rng.uniform(0.3, 1.0),
        sigma1_sq=s1,
        sigma2_sq=s2,
        r0=rng.uniform(0.2, 7.0),
    )
    lam = 10.0 ** rng.uniform(-2.0, 2.0)
    mu = 10.0 ** rng.uniform(-2.0, 2.0) / (params.zeta * g * p_peak)
    if rng.random() < 0.2:
        mu = 0.0
    if rng.random() < 0.1:
        lam = 0.0
    return FadingState(h=h, g=g), DualPoint(lam=lam, mu=mu), params


def tiny_ensemble(values) -> FadingEnsemble:
    """Ensemble from explicit (h, g) pairs."""
    states = tuple(FadingState(h=h, g=g) for h, g in values)
    return FadingEnsemble(states=states, seed=0)
