"""Reproducible Rayleigh-fading ensembles from a distance/path-loss geometry.

Channel power gains are exponentially distributed (short-term Rayleigh
fading) with means fixed by a reference-gain power-law path loss.  Draws
use the counter-based Philox generator keyed by the seed, with exponential
variates obtained by inverse CDF (-mean * ln(1 - U)), one uniform pair per
state, so identical (geometry, n, seed) reproduce bit-identical ensembles
across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .model import FadingEnsemble

_CSV_HEADER = "h,g"


class EnsembleFormatError(ValueError):
    """Raised when an ensemble file cannot be parsed; message carries the line number."""


@dataclass(frozen=True)
class GeometryConfig:
    """Distances and path-loss law for the two links.

    Mean gain at distance d is a0 * (d / d0) ** -path_exp, defined for
    d >= d0 only.
    """

    d_ir: float
    d_er: float
    a0: float = 1e-3
    d0: float = 1.0
    path_exp: float = 3.0

    def __post_init__(self) -> None:
        if self.d0 <= 0.0:
            raise ValueError(f"reference distance must be positive, got {self.d0}")
        if self.d_ir < self.d0 or self.d_er < self.d0:
            raise ValueError("link distances must not be below the reference distance")
        if self.a0 <= 0.0:
            raise ValueError(f"reference gain must be positive, got {self.a0}")
        if self.path_exp <= 0.0:
            raise ValueError(f"path-loss exponent must be positive, got {self.path_exp}")


def path_loss(d: float, cfg: GeometryConfig) -> float:
    """Average channel power gain at distance ``d`` (meters)."""
    if d < cfg.d0:
        raise ValueError(f"path loss undefined below reference distance: d={d} < d0={cfg.d0}")
    return cfg.a0 * (d / cfg.d0) ** (-cfg.path_exp)


def generate_ensemble(cfg: GeometryConfig, n: int, seed: int) -> FadingEnsemble:
    """Draw ``n`` independent fading states for the given geometry.

    h ~ Exponential(mean path_loss(d_ir)), g ~ Exponential(mean
    path_loss(d_er)), mutually independent.  Deterministic in (cfg, n, seed).
    """
    if n < 1:
        raise ValueError(f"ensemble size must be >= 1, got {n}")
    mean_h = path_loss(cfg.d_ir, cfg)
    mean_g = path_loss(cfg.d_er, cfg)
    rng = np.random.Generator(np.random.Philox(key=seed))
    u = rng.random((n, 2))
    h = -mean_h * np.log1p(-u[:, 0])
    g = -mean_g * np.log1p(-u[:, 1])
    return FadingEnsemble.from_arrays(h, g, seed=seed)


def save_ensemble(ensemble: FadingEnsemble, path: Union[str, Path]) -> None:
    """Write an ensemble as CSV: optional '# seed=N' comment, 'h,g' header, one row per state.

    Values use 17 significant digits so binary64 round-trips exactly.
    """
    path = Path(path)
    with path.open("w", encoding="ascii") as fh:
        fh.write(f"# seed={ensemble.seed}\n")
        fh.write(_CSV_HEADER + "\n")
        for s in ensemble.states:
            fh.write(f"{s.h:.16e},{s.g:.16e}\n")


def load_ensemble(path: Union[str, Path]) -> FadingEnsemble:
    """Read an ensemble written by :func:`save_ensemble` (or hand-written in that format)."""
    path = Path(path)
    seed = 0
    h_vals: list[float] = []
    g_vals: list[float] = []
    header_seen = False
    with path.open("r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("seed="):
                    try:
                        seed = int(body[5:])
                    except ValueError as exc:
                        raise EnsembleFormatError(f"{path}: line {lineno}: bad seed comment {line!r}") from exc
                continue
            if not header_seen:
                if line.replace(" ", "") != _CSV_HEADER:
                    raise EnsembleFormatError(
                        f"{path}: line {lineno}: expected header {_CSV_HEADER!r}, got {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise EnsembleFormatError(f"{path}: line {lineno}: expected two comma-separated values")
            try:
                h_vals.append(float(parts[0]))
                g_vals.append(float(parts[1]))
            except ValueError as exc:
                raise EnsembleFormatError(f"{path}: line {lineno}: non-numeric value") from exc
    if not header_seen:
        raise EnsembleFormatError(f"{path}: missing {_CSV_HEADER!r} header")
    if not h_vals:
        raise EnsembleFormatError(f"{path}: no fading states found")
    return FadingEnsemble.from_arrays(np.array(h_vals), np.array(g_vals), seed=seed)
