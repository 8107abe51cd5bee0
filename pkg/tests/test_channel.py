"""Path loss, ensemble generation determinism, statistics and persistence."""

import numpy as np
import pytest
from scipy import stats

from swiptsec import (
    EnsembleFormatError,
    FadingEnsemble,
    FadingState,
    GeometryConfig,
    generate_ensemble,
    load_ensemble,
    path_loss,
    save_ensemble,
)

from helpers import geometry


def test_path_loss_values():
    cfg = GeometryConfig(d_ir=2.0, d_er=2.0, a0=1e-3, d0=1.0, path_exp=3.0)
    assert path_loss(1.0, cfg) == pytest.approx(1e-3)
    assert path_loss(2.0, cfg) == pytest.approx(1.25e-4)
    assert path_loss(cfg.d0, cfg) == pytest.approx(cfg.a0)
    with pytest.raises(ValueError):
        path_loss(0.5, cfg)


def test_geometry_invariants():
    with pytest.raises(ValueError):
        GeometryConfig(d_ir=0.5, d_er=2.0)
    with pytest.raises(ValueError):
        GeometryConfig(d_ir=2.0, d_er=2.0, a0=0.0)
    with pytest.raises(ValueError):
        GeometryConfig(d_ir=2.0, d_er=2.0, path_exp=-1.0)


def test_generation_determinism_and_seed_sensitivity():
    cfg = geometry()
    a = generate_ensemble(cfg, 500, 42)
    b = generate_ensemble(cfg, 500, 42)
    assert a == b
    c = generate_ensemble(cfg, 500, 43)
    assert c.states[0] != a.states[0]
    with pytest.raises(ValueError):
        generate_ensemble(cfg, 0, 1)


def test_sample_means_match_path_loss():
    cfg = geometry(d_ir=2.0, d_er=1.0)
    ens = generate_ensemble(cfg, 100_000, 12345)
    assert float(np.mean(ens.h_array)) == pytest.approx(1.25e-4, rel=0.02)
    assert float(np.mean(ens.g_array)) == pytest.approx(1e-3, rel=0.02)


def test_exponential_marginal_and_independence():
    cfg = geometry()
    ens = generate_ensemble(cfg, 100_000, 2024)
    mean_h = path_loss(cfg.d_ir, cfg)
    ks = stats.kstest(ens.h_array / mean_h, "expon")
    critical_1pct = 1.628 / np.sqrt(len(ens))
    assert ks.statistic < critical_1pct
    corr = np.corrcoef(ens.h_array, ens.g_array)[0, 1]
    assert abs(corr) < 0.02


def test_save_load_round_trip(tmp_path):
    ens = generate_ensemble(geometry(), 200, 77)
    path = tmp_path / "ens.csv"
    save_ensemble(ens, path)
    back = load_ensemble(path)
    assert back == ens  # bit-identical states and seed


def test_load_hand_written_fixture(tmp_path):
    path = tmp_path / "hand.csv"
    path.write_text("h,g\n1.0e-4,2.0e-4\n0.0,3.5e-5\n7.75e-6,0.0\n")
    ens = load_ensemble(path)
    assert len(ens) == 3
    assert ens.states[0] == FadingState(h=1.0e-4, g=2.0e-4)
    assert ens.states[1] == FadingState(h=0.0, g=3.5e-5)
    assert ens.states[2] == FadingState(h=7.75e-6, g=0.0)
    assert ens.seed == 0


def test_load_errors_carry_line_numbers(tmp_path):
    missing_header = tmp_path / "bad1.csv"
    missing_header.write_text("1.0e-4,2.0e-4\n")
    with pytest.raises(EnsembleFormatError, match="line 1"):
        load_ensemble(missing_header)

    bad_value = tmp_path / "bad2.csv"
    bad_value.write_text("h,g\n1.0e-4,xyz\n")
    with pytest.raises(EnsembleFormatError, match="line 2"):
        load_ensemble(bad_value)

    bad_cols = tmp_path / "bad3.csv"
    bad_cols.write_text("h,g\n1.0e-4\n")
    with pytest.raises(EnsembleFormatError, match="line 2"):
        load_ensemble(bad_cols)

    empty = tmp_path / "bad4.csv"
    empty.write_text("h,g\n")
    with pytest.raises(EnsembleFormatError, match="no fading states"):
        load_ensemble(empty)
