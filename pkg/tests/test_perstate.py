"""Per-state solvers against closed-form cases and brute-force oracles."""

import math

import numpy as np
import pytest

from swiptsec import (
    DualPoint,
    FadingState,
    SystemParams,
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
from swiptsec.model import LN2, rate_an_cancelled
from swiptsec.oracle import bisect_rate_inverse, grid_max_L2, grid_min_L1
from swiptsec.perstate import (
    IdenticallyZeroError,
    PowerEnvelope,
    min_power_batch,
    p2_two_stage_batch,
)

from helpers import rand_instance, reference_params


def _rate(state, p, alpha, params):
    return float(rate_an_cancelled(state.h, state.g, p, alpha,
                                   params.sigma1_sq, params.sigma2_sq))


def _l1(state, dual, params, p, alpha):
    price = dual.lam - params.zeta * dual.mu * state.g
    return float(_rate(state, p, alpha, params) < params.r0) + price * p


def _l2(state, dual, params, p, alpha):
    price = dual.lam - params.zeta * dual.mu * state.g
    return _rate(state, p, alpha, params) - price * p


# ---------------------------------------------------------------------------
# minimum power for the rate target
# ---------------------------------------------------------------------------

class TestMinPower:
    def test_zero_split_infeasible_channel(self):
        params = reference_params(r0=2.0)
        # IR channel not better than the ER channel by the factor 2**r0
        st = FadingState(h=3.9e-4, g=1e-4)
        assert math.isinf(min_power_for_rate(0.0, st, params))
        # strictly better: finite
        st2 = FadingState(h=4.1e-4, g=1e-4)
        assert math.isfinite(min_power_for_rate(0.0, st2, params))

    def test_vanishing_target(self):
        st = FadingState(h=1e-3, g=1e-4)
        for r0 in (1e-6, 1e-9):
            params = reference_params(r0=r0)
            p = min_power_for_rate(0.0, st, params)
            assert 0.0 < p < 1e-6

    def test_full_split_is_infeasible(self):
        params = reference_params(r0=1.0)
        assert math.isinf(min_power_for_rate(1.0, FadingState(h=1e-2, g=1e-6), params))

    def test_matches_bisection(self):
        rng = np.random.default_rng(21)
        checked = 0
        while checked < 400:
            st, _, params = rand_instance(rng)
            alpha = rng.uniform(0.0, 0.999)
            p1 = min_power_for_rate(alpha, st, params)
            pb = bisect_rate_inverse(st, alpha, params)
            if math.isinf(p1):
                assert math.isinf(pb)
                continue
            if p1 > 1e3 * params.p_peak:
                assert math.isinf(pb)  # beyond the oracle bracket
                continue
            assert p1 == pytest.approx(pb, rel=1e-8)
            checked += 1

    def test_rate_target_consistency(self):
        rng = np.random.default_rng(22)
        checked = 0
        while checked < 1000:
            st, _, params = rand_instance(rng)
            alpha = rng.uniform(0.0, 0.999)
            p1 = min_power_for_rate(alpha, st, params)
            if not math.isfinite(p1):
                continue
            assert _rate(st, p1, alpha, params) == pytest.approx(params.r0, rel=1e-8)
            checked += 1

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(23)
        st, _, params = rand_instance(rng)
        alphas = np.linspace(0.0, 1.0, 101)
        batch = min_power_batch(alphas, st.h, st.g, params)
        for a, pb in zip(alphas, batch):
            assert min_power_for_rate(float(a), st, params) == float(pb)


# ---------------------------------------------------------------------------
# split minimizing the required power
# ---------------------------------------------------------------------------

class TestSearchMinSplit:
    def test_symmetric_high_snr_prefers_half(self):
        # equal gains and noise floors make the required power symmetric in
        # the split, with its minimum exactly at one half
        params = reference_params(r0=6.5)
        st = FadingState(h=1e-3, g=1e-3)
        res = search_min_split(st, params)
        assert res.alpha_tilde == pytest.approx(0.5, abs=1e-3)
        assert math.isfinite(res.p_min)

    def test_against_dense_grid(self):
        rng = np.random.default_rng(24)
        for _ in range(40):
            st, _, params = rand_instance(rng)
            res = search_min_split(st, params)
            grid = min_power_batch(np.linspace(0, 1, 10_001), st.h, st.g, params)
            best = float(np.min(grid))
            if math.isinf(best):
                assert math.isinf(res.p_min) and res.alpha_tilde == 0.0
            else:
                assert res.p_min <= best * (1.0 + 1e-6)

    def test_infeasible_target(self):
        # a dead legitimate channel leaves every split infeasible
        params = SystemParams(p_avg=0.1, p_peak=1.0, zeta=0.5,
                              sigma1_sq=1e-8, sigma2_sq=1e-8, r0=1.0)
        res = search_min_split(FadingState(h=0.0, g=1e-2), params)
        assert math.isinf(res.p_min)
        assert res.alpha_tilde == 0.0


# ---------------------------------------------------------------------------
# outage Lagrangian policies
# ---------------------------------------------------------------------------

class TestOutagePolicy:
    def test_peak_when_harvest_price_dominates(self):
        # zero power price with a positive harvest reward forces peak power,
        # and an unavoidable outage reports split zero
        params = reference_params(r0=40.0)
        st = FadingState(h=1e-6, g=1e-3)
        d = solve_p1_sub(st, DualPoint(lam=0.0, mu=1e4), params)
        assert d.p == params.p_peak
        assert d.alpha == 0.0

    def test_shutdown_when_power_too_expensive(self):
        params = reference_params(r0=6.5)
        st = FadingState(h=1e-4, g=1e-4)
        p1 = search_min_split(st, params).p_min
        lam = 2.0 / p1  # cost of avoiding the outage exceeds the unit penalty
        d = solve_p1_sub(st, DualPoint(lam=lam, mu=0.0), params)
        assert d.p == 0.0 and d.alpha == 0.0

    def test_transmit_at_minimum_power(self):
        params = reference_params(r0=6.5)
        st = FadingState(h=1e-4, g=1e-4)
        res = search_min_split(st, params)
        lam = 0.5 / res.p_min
        d = solve_p1_sub(st, DualPoint(lam=lam, mu=0.0), params)
        assert d.p == pytest.approx(res.p_min, rel=1e-8)
        assert d.alpha == pytest.approx(res.alpha_tilde, abs=1e-9)
        assert _rate(st, d.p, d.alpha, params) >= params.r0

    def test_against_grid_oracle(self):
        rng = np.random.default_rng(25)
        for _ in range(60):
            st, dual, params = rand_instance(rng)
            d = solve_p1_sub(st, dual, params, grid_n=257)
            ref, _, _ = grid_min_L1(st, dual, params, n_p=300, n_alpha=300)
            assert _l1(st, dual, params, d.p, d.alpha) <= ref + 1e-6

    def test_fixed_split_variant(self):
        rng = np.random.default_rng(26)
        params = reference_params(r0=5.0)
        st = FadingState(h=5e-4, g=2e-4)
        # harvest-dominated: peak power regardless of the frozen split
        d = solve_p11_sub(st, DualPoint(lam=0.1, mu=1e5), 0.3, params)
        assert d.p == params.p_peak and d.alpha == 0.3
        # unreachable target at the frozen split: shut down, split unchanged
        st2 = FadingState(h=1e-6, g=1e-3)
        d2 = solve_p11_sub(st2, DualPoint(lam=1.0, mu=0.0), 0.7, params)
        assert d2.p == 0.0 and d2.alpha == 0.7
        # random instances against a grid in p at the frozen split
        for _ in range(40):
            st, dual, params = rand_instance(rng)
            ab = rng.uniform(0.0, 1.0)
            d = solve_p11_sub(st, dual, ab, params)
            assert d.alpha == ab
            p_grid = np.linspace(0.0, params.p_peak, 20_000)
            price = dual.lam - params.zeta * dual.mu * st.g
            rates = rate_an_cancelled(st.h, st.g, p_grid, ab,
                                      params.sigma1_sq, params.sigma2_sq)
            ref = float(np.min((rates < params.r0) + price * p_grid))
            assert _l1(st, dual, params, d.p, d.alpha) <= ref + 1e-6


# ---------------------------------------------------------------------------
# rate-maximizing split at fixed power
# ---------------------------------------------------------------------------

class TestSplitGivenPower:
    def test_balanced_channels_give_half(self):
        params = reference_params()
        st = FadingState(h=1e-3, g=1e-3)
        assert optimal_split_given_power(st, 0.5, params) == pytest.approx(0.5)

    def test_saturation_to_one(self):
        params = reference_params()
        # tiny IR gain drives the balance point beyond one
        st = FadingState(h=1e-9, g=1e-3)
        assert optimal_split_given_power(st, 1e-3, params) == 1.0

    def test_saturation_to_zero(self):
        params = reference_params()
        st = FadingState(h=1e-2, g=1e-9)
        assert optimal_split_given_power(st, 1.0, params) == 0.0

    def test_zero_gain_limits(self):
        params = reference_params()
        assert optimal_split_given_power(FadingState(h=0.0, g=1e-3), 0.5, params) == 1.0
        assert optimal_split_given_power(FadingState(h=1e-3, g=0.0), 0.5, params) == 0.0
        assert optimal_split_given_power(FadingState(h=0.0, g=0.0), 0.5, params) == 0.0

    def test_against_alpha_grid(self):
        rng = np.random.default_rng(27)
        for _ in range(200):
            st, _, params = rand_instance(rng)
            p_bar = rng.uniform(1e-3, params.p_peak)
            astar = optimal_split_given_power(st, p_bar, params)
            r_star = _rate(st, p_bar, astar, params)
            grid = np.linspace(0.0, 1.0, 10_001)
            r_grid = float(np.max(rate_an_cancelled(st.h, st.g, p_bar, grid,
                                                    params.sigma1_sq, params.sigma2_sq)))
            assert r_star >= r_grid - 1e-9


class TestNoCancelSplit:
    def test_always_zero(self):
        params = reference_params()
        assert solve_nocancel_split(FadingState(h=1e-3, g=1e-4), 0.5, params) == 0.0
        assert solve_nocancel_split(FadingState(h=0.0, g=0.0), 0.0, params) == 0.0

    def test_zero_split_dominates_interfered_rate(self):
        from swiptsec.model import rate_no_cancel

        rng = np.random.default_rng(28)
        for _ in range(100):
            st, _, params = rand_instance(rng)
            p_bar = rng.uniform(1e-3, params.p_peak)
            r0_split = float(rate_no_cancel(st.h, st.g, p_bar, 0.0,
                                            params.sigma1_sq, params.sigma2_sq))
            alphas = rng.uniform(0.0, 1.0, size=100)
            rates = rate_no_cancel(st.h, st.g, p_bar, alphas,
                                   params.sigma1_sq, params.sigma2_sq)
            assert r0_split >= float(np.max(rates)) - 1e-12


# ---------------------------------------------------------------------------
# cubic machinery
# ---------------------------------------------------------------------------

class TestCubic:
    def test_constructed_roots(self):
        assert real_roots_cubic(1.0, -6.0, 11.0, -6.0) == pytest.approx([1.0, 2.0, 3.0])

    def test_linear_fallback(self):
        assert real_roots_cubic(0.0, 0.0, 2.0, -4.0) == [2.0]

    def test_quadratic_fallback(self):
        roots = real_roots_cubic(0.0, 1.0, -3.0, 2.0)
        assert roots == pytest.approx([1.0, 2.0])

    def test_single_real_root_vs_bisection(self):
        (root,) = real_roots_cubic(1.0, 0.0, 1.0, 1.0)
        lo, hi = -2.0, 0.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if mid ** 3 + mid + 1.0 < 0.0:
                lo = mid
            else:
                hi = mid
        assert root == pytest.approx(0.5 * (lo + hi), abs=1e-10)

    def test_no_roots_and_identically_zero(self):
        assert real_roots_cubic(0.0, 0.0, 0.0, 5.0) == []
        with pytest.raises(IdenticallyZeroError):
            real_roots_cubic(0.0, 0.0, 0.0, 0.0)

    def test_residuals_on_random_coefficients(self):
        rng = np.random.default_rng(29)
        for _ in range(500):
            a, b, c, d = rng.normal(size=4) * 10.0 ** rng.integers(-8, 8)
            for r in real_roots_cubic(a, b, c, d):
                res = abs(((a * r + b) * r + c) * r + d)
                bound = 1e-9 * max(1.0, abs(a * r ** 3), abs(b * r ** 2), abs(c * r), abs(d))
                assert res <= bound

    def test_coefficients_vanish_with_harvest_balance(self):
        # when the harvest reward exactly offsets the power price, the
        # price-weighted terms drop out of every coefficient
        params = reference_params()
        st = FadingState(h=1e-3, g=1e-4)
        mu = 1.0
        lam = params.zeta * mu * st.g
        co = cubic_coefficients(st, DualPoint(lam=lam, mu=mu), 0.4, params)
        assert co.a == 0.0
        assert co.f == 0.0

    def test_continuity_toward_full_split(self):
        params = reference_params()
        st = FadingState(h=1e-3, g=1e-4)
        dual = DualPoint(lam=1.0, mu=100.0)
        co = cubic_coefficients(st, dual, 1.0 - 1e-12, params)
        for v in (co.a, co.b, co.c, co.d, co.f):
            assert math.isfinite(v)
        assert abs(co.a) < 1e-12  # the (split - 1) factor kills the leading term

    def test_derivative_matches_finite_differences(self):
        rng = np.random.default_rng(30)
        for _ in range(100):
            st, dual, params = rand_instance(rng)
            ab = rng.uniform(0.01, 0.99)
            co = cubic_coefficients(st, dual, ab, params)
            price = dual.lam - params.zeta * dual.mu * st.g

            def l2_unclamped(p):
                sig = (1.0 - ab) * p
                return (math.log1p(sig * st.h / params.sigma1_sq)
                        - math.log1p(sig * st.g / (ab * st.g * p + params.sigma2_sq))) / LN2 \
                    - price * p

            for p in (0.011, 0.33, 0.92):
                p = p * params.p_peak
                dp = 1e-6 * p
                fd = (l2_unclamped(p + dp) - l2_unclamped(p - dp)) / (2.0 * dp)
                num = ((co.a * p + co.b) * p + co.c) * p + co.d
                analytic = num / cubic_denominator(st, ab, params, p)
                assert analytic == pytest.approx(fd, rel=1e-5, abs=1e-10)


class TestCandidateSet:
    def test_endpoints_only(self):
        assert candidate_set([], math.nan, 1.0) == [0.0, 1.0]
        assert candidate_set([-0.5, 2.0], math.inf, 1.0) == [0.0, 1.0]

    def test_three_roots_in_range(self):
        cands = candidate_set([0.2, 0.5, 0.8], math.nan, 1.0)
        assert cands == [0.0, 0.2, 0.5, 0.8, 1.0]

    def test_breakpoint_included_and_deduplicated(self):
        cands = candidate_set([0.5, 1.0], 0.25, 1.0)
        assert cands == [0.0, 0.25, 0.5, 1.0]
        assert len(candidate_set([1.0, 1.0, 1.0], math.nan, 1.0)) == 2

    def test_size_bounds(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            roots = list(rng.uniform(-1, 2, size=3))
            thr = rng.uniform(-1, 2)
            cands = candidate_set(roots, thr, 1.0)
            assert 2 <= len(cands) <= 6
            assert cands == sorted(cands)


# ---------------------------------------------------------------------------
# rate Lagrangian maximizers
# ---------------------------------------------------------------------------

class TestRateSubproblem:
    def test_heavy_power_price_shuts_down(self):
        params = reference_params()
        st = FadingState(h=1e-4, g=1e-4)
        p = solve_p2_sub_fixed_alpha(st, DualPoint(lam=1e4, mu=0.0), 0.4, params)
        assert p == 0.0

    def test_harvest_reward_pushes_to_peak(self):
        params = reference_params()
        rng = np.random.default_rng(32)
        for _ in range(20):
            st, _, params_r = rand_instance(rng)
            mu = 100.0 / (params_r.zeta * st.g * params_r.p_peak)
            dual = DualPoint(lam=0.0, mu=mu)
            ab = rng.uniform(0.0, 0.99)
            p = solve_p2_sub_fixed_alpha(st, dual, ab, params_r)
            ref, p_ref = grid_max_L2(st, dual, ab, params_r, n_p=20_000)
            assert _l2(st, dual, params_r, p, ab) >= ref - 1e-6
            assert p == params_r.p_peak

    def test_fixed_split_against_grid(self):
        rng = np.random.default_rng(33)
        for _ in range(150):
            st, dual, params = rand_instance(rng)
            ab = rng.uniform(0.0, 0.999)
            p = solve_p2_sub_fixed_alpha(st, dual, ab, params)
            ref, _ = grid_max_L2(st, dual, ab, params, n_p=50_000)
            assert _l2(st, dual, params, p, ab) >= ref - 1e-6

    def test_degenerate_gains_fall_back(self):
        params = reference_params()
        dual = DualPoint(lam=1.0, mu=0.0)
        assert solve_p2_sub_fixed_alpha(FadingState(h=0.0, g=1e-4), dual, 0.5, params) == 0.0
        p = solve_p2_sub_fixed_alpha(FadingState(h=1e-2, g=0.0), DualPoint(lam=0.1, mu=0.0),
                                     0.5, params)
        ref, _ = grid_max_L2(FadingState(h=1e-2, g=0.0), DualPoint(lam=0.1, mu=0.0),
                             0.5, params, n_p=20_000)
        assert _l2(FadingState(h=1e-2, g=0.0), DualPoint(lam=0.1, mu=0.0), params, p, 0.5) \
            >= ref - 1e-6

    def test_joint_no_eavesdropper_prefers_zero_split(self):
        params = reference_params()
        st = FadingState(h=1e-3, g=0.0)
        d = solve_p2_sub(st, DualPoint(lam=1.0, mu=0.0), params, alpha_grid_n=101)
        assert d.alpha == 0.0
        assert d.p > 0.0

    def test_joint_symmetric_high_snr_split_near_half(self):
        params = reference_params()
        st = FadingState(h=1e-3, g=1e-3)
        d = solve_p2_sub(st, DualPoint(lam=1.0, mu=0.0), params, alpha_grid_n=201)
        assert d.alpha == pytest.approx(0.5, abs=0.05)

    def test_joint_against_2d_grid(self):
        rng = np.random.default_rng(34)
        for _ in range(30):
            st, dual, params = rand_instance(rng)
            d = solve_p2_sub(st, dual, params, alpha_grid_n=301)
            got = _l2(st, dual, params, d.p, d.alpha)
            ps = np.linspace(0.0, params.p_peak, 300)
            als = np.linspace(0.0, 1.0 - 1e-9, 300)
            price = dual.lam - params.zeta * dual.mu * st.g
            grid = rate_an_cancelled(st.h, st.g, ps[:, None], als[None, :],
                                     params.sigma1_sq, params.sigma2_sq) \
                - price * ps[:, None]
            assert got >= float(grid.max()) - 1e-5

    def test_envelope_matches_two_stage(self):
        rng = np.random.default_rng(35)
        params = reference_params()
        h = 10 ** rng.uniform(-6, -2, size=200)
        g = 10 ** rng.uniform(-6, -2, size=200)
        env = PowerEnvelope(h, g, params)
        for _ in range(6):
            lam = 10 ** rng.uniform(-1, 2)
            mu = 0.0 if rng.random() < 0.3 else 10 ** rng.uniform(2, 6)
            _, _, v_env = env.maximize(lam, mu)
            _, _, v_ref = p2_two_stage_batch(h, g, lam, mu, params, alpha_grid_n=401)
            assert np.max(np.abs(v_env - v_ref) / np.maximum(np.abs(v_ref), 1e-9)) < 1e-8
