"""Domain types and closed-form physical-layer evaluators.

Three-node downlink at one fading state: a transmitter sends an
information-bearing signal plus an artificial-noise (AN) component to an
information receiver (IR) while an energy receiver (ER) harvests the total
radiated power and may attempt to eavesdrop.  Everything here works in
linear watts; dBm is converted only at the configuration boundary.

The formula evaluators accept scalars or numpy arrays (broadcasting
elementwise) so that ensemble-level solvers can reuse them directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

LN2 = math.log(2.0)


class SchemeKind(Enum):
    """Which SNR model applies at the two receivers.

    AN_CANCELLED: AN is known to the IR and subtracted before decoding;
        the ER sees it as interference.
    NO_AN: no AN transmitted; both receivers see plain SNRs.
    NO_CANCEL: AN transmitted but unknown to both receivers, so it
        interferes at the IR as well.
    """

    AN_CANCELLED = "an"
    NO_AN = "noan"
    NO_CANCEL = "nocancel"


@dataclass(frozen=True)
class SystemParams:
    """Transmit power limits, noise floors and harvesting efficiency.

    All powers in watts.  ``r0`` is the target secrecy rate in bits/sec/Hz
    and only matters for the outage-minimization problem family.
    """

    p_avg: float
    p_peak: float
    zeta: float
    sigma1_sq: float
    sigma2_sq: float
    r0: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.p_avg <= self.p_peak:
            raise ValueError(f"need 0 < p_avg <= p_peak, got {self.p_avg}, {self.p_peak}")
        if not 0.0 < self.zeta <= 1.0:
            raise ValueError(f"harvesting efficiency must lie in (0, 1], got {self.zeta}")
        if self.sigma1_sq <= 0.0 or self.sigma2_sq <= 0.0:
            raise ValueError("noise powers must be positive")
        if self.r0 < 0.0:
            raise ValueError("target secrecy rate must be non-negative")


@dataclass(frozen=True)
class FadingState:
    """Channel power gains for one joint fading state (Tx->IR, Tx->ER)."""

    h: float
    g: float

    def __post_init__(self) -> None:
        if self.h < 0.0 or self.g < 0.0 or not (math.isfinite(self.h) and math.isfinite(self.g)):
            raise ValueError(f"channel power gains must be finite and >= 0, got {self.h}, {self.g}")


@dataclass(frozen=True)
class FadingEnsemble:
    """Equal-weight Monte Carlo collection of fading states.

    The expectation over fading is implemented everywhere as the arithmetic
    mean over ``states``.  ``seed`` records the generator seed (0 for
    ensembles of unknown provenance, e.g. hand-written files).
    """

    states: tuple[FadingState, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.states) == 0:
            raise ValueError("ensemble must contain at least one fading state")

    def __len__(self) -> int:
        return len(self.states)

    @classmethod
    def from_arrays(cls, h: np.ndarray, g: np.ndarray, seed: int = 0) -> "FadingEnsemble":
        h = np.asarray(h, dtype=float)
        g = np.asarray(g, dtype=float)
        if h.shape != g.shape or h.ndim != 1:
            raise ValueError("h and g must be 1-D arrays of equal length")
        states = tuple(FadingState(float(hv), float(gv)) for hv, gv in zip(h, g))
        return cls(states=states, seed=seed)

    @cached_property
    def h_array(self) -> np.ndarray:
        arr = np.array([s.h for s in self.states], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def g_array(self) -> np.ndarray:
        arr = np.array([s.g for s in self.states], dtype=float)
        arr.flags.writeable = False
        return arr


@dataclass(frozen=True)
class PerStateDecision:
    """Transmit power p (watts) and AN power-splitting ratio alpha for one state."""

    p: float
    alpha: float

    def __post_init__(self) -> None:
        if self.p < 0.0:
            raise ValueError(f"transmit power must be >= 0, got {self.p}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"splitting ratio must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class DualPoint:
    """Non-negative multipliers for the average-power and harvested-power constraints."""

    lam: float
    mu: float

    def __post_init__(self) -> None:
        if self.lam < 0.0 or self.mu < 0.0:
            raise ValueError(f"multipliers must be >= 0, got lam={self.lam}, mu={self.mu}")


@dataclass(frozen=True)
class TradeoffPoint:
    """One boundary point of a trade-off region.

    ``objective`` is the non-outage probability (outage family) or the
    ergodic secrecy rate in bits/sec/Hz (rate family); ``harvested`` is the
    achieved average harvested power in watts.
    """

    objective: float
    harvested: float


# ---------------------------------------------------------------------------
# formula evaluators (ufunc-style: scalars or broadcasting arrays)
# ---------------------------------------------------------------------------

def rate_an_cancelled(h, g, p, alpha, sigma1_sq: float, sigma2_sq: float):
    """Secrecy rate when the IR subtracts the AN before decoding.

    IR SNR is (1-alpha)*h*p/sigma1^2; the ER decodes against the AN as
    interference, (1-alpha)*g*p/(alpha*g*p + sigma2^2).  Clamped at zero.
    """
    signal = (1.0 - alpha) * p
    snr_ir = signal * h / sigma1_sq
    snr_er = signal * g / (alpha * g * p + sigma2_sq)
    return np.maximum((np.log1p(snr_ir) - np.log1p(snr_er)) / LN2, 0.0)


def rate_no_an(h, g, p, sigma1_sq: float, sigma2_sq: float):
    """Secrecy rate without AN: plain SNR difference, clamped at zero."""
    snr_ir = h * p / sigma1_sq
    snr_er = g * p / sigma2_sq
    return np.maximum((np.log1p(snr_ir) - np.log1p(snr_er)) / LN2, 0.0)


def rate_no_cancel(h, g, p, alpha, sigma1_sq: float, sigma2_sq: float):
    """Secrecy rate when the AN interferes at both receivers."""
    signal = (1.0 - alpha) * p
    snr_ir = signal * h / (alpha * h * p + sigma1_sq)
    snr_er = signal * g / (alpha * g * p + sigma2_sq)
    return np.maximum((np.log1p(snr_ir) - np.log1p(snr_er)) / LN2, 0.0)


def scheme_rate(scheme: SchemeKind, h, g, p, alpha, sigma1_sq: float, sigma2_sq: float):
    """Array-friendly dispatch over the three schemes (NO_AN ignores alpha)."""
    if scheme is SchemeKind.AN_CANCELLED:
        return rate_an_cancelled(h, g, p, alpha, sigma1_sq, sigma2_sq)
    if scheme is SchemeKind.NO_AN:
        return rate_no_an(h, g, p, sigma1_sq, sigma2_sq)
    if scheme is SchemeKind.NO_CANCEL:
        return rate_no_cancel(h, g, p, alpha, sigma1_sq, sigma2_sq)
    raise ValueError(f"unknown scheme {scheme!r}")


def secrecy_rate(scheme: SchemeKind, state: FadingState, d: PerStateDecision,
                 params: SystemParams) -> float:
    """Achievable secrecy rate (bits/sec/Hz) for one state and decision."""
    return float(scheme_rate(scheme, state.h, state.g, d.p, d.alpha,
                             params.sigma1_sq, params.sigma2_sq))


def harvested_power(state: FadingState, p: float, params: SystemParams) -> float:
    """Power harvested by the ER: zeta * g * p, independent of the AN split."""
    if p < 0.0:
        raise ValueError(f"transmit power must be >= 0, got {p}")
    return params.zeta * state.g * p


def outage_indicator(scheme: SchemeKind, state: FadingState, d: PerStateDecision,
                     params: SystemParams) -> int:
    """1 iff the secrecy rate falls strictly below the target r0, else 0."""
    return int(secrecy_rate(scheme, state, d, params) < params.r0)


def ensemble_average(ensemble: FadingEnsemble,
                     per_state_fn: Callable[[FadingState], float]) -> float:
    """Arithmetic mean of ``per_state_fn`` over the ensemble states."""
    if len(ensemble) == 0:
        raise ValueError("cannot average over an empty ensemble")
    return math.fsum(per_state_fn(s) for s in ensemble.states) / len(ensemble)


def dbm_to_watts(dbm: float) -> float:
    """Convert a power in dBm to linear watts."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    """Convert a power in linear watts to dBm; requires a positive input."""
    if watts <= 0.0:
        raise ValueError(f"cannot express non-positive power in dBm: {watts}")
    return 30.0 + 10.0 * math.log10(watts)
