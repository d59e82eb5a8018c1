from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from dnse.attractor import (
    BallSpec,
    ball_invariance_trial,
    check_cond1,
    check_cond2,
    check_contraction,
    cond2_lhs,
    continuous_ball_trial,
    contraction_experiment,
    contraction_terms,
    find_attractor,
    find_radius,
    radius_grid,
    random_state,
    regularity_diagnostics,
    rho_radius,
    scan_viscosity,
    stokes_steady_state,
)
from dnse.errors import DomainError
from dnse.flows import FlowParams, FlowState, TrajectoryRecorder, discrete_flow, state_distance, state_norm
from dnse.spectral import SpectralField, random_field, sobolev_norm
from dnse.stepper import Segment, StepScheme

MU = 0.1


class TestRho:
    def test_zero_forcing(self):
        assert rho_radius(3.0, 1.0, MU, 0.0) == 0.0

    def test_hand_value(self):
        rho = rho_radius(10.0, 1.0, 0.1, 1.0)
        assert rho**2 == pytest.approx(0.08 * math.exp(0.5), rel=1e-14)
        # rounded hand values
        assert rho**2 == pytest.approx(0.13191, abs=2e-5)
        assert rho == pytest.approx(0.36320, abs=5e-5)

    def test_doubling_viscosity(self):
        r1 = rho_radius(5.0, 1.0, MU, 2.0) ** 2
        r2 = rho_radius(10.0, 1.0, MU, 2.0) ** 2
        # prefactor divided by 4, exponent grows by nu lam mu / 2
        assert r2 / r1 == pytest.approx(0.25 * math.exp(0.5 * 5.0 * MU), rel=1e-14)

    @pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, 0, 1, 1), (1, 1, -1, 1), (1, 1, 1, -1)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            rho_radius(*args)


class TestConditions:
    def test_cond1_examples(self):
        assert check_cond1(100.0, 1.0, 0.1, 1.0, 1.0)
        assert not check_cond1(10.0, 1.0, 0.1, 1.0, 1.0)
        assert check_cond1(14.0, 1.0, 0.1, 5.0, 0.0)
        assert not check_cond1(13.8, 1.0, 0.1, 5.0, 0.0)

    def test_cond2_zero_forcing(self):
        assert check_cond2(1.0, 1.0, 1.0, 1.0, 0.5, 0.0)

    def test_cond2_hand_value(self):
        rho2 = 8.0 * math.exp(0.5)
        bracket = 2.0 + 2.0 * (math.e + 0.5) + 0.5 * math.exp(-0.5)
        assert cond2_lhs(1.0, 1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(rho2 * bracket, rel=1e-14)
        assert not check_cond2(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)

    @settings(max_examples=40, deadline=None)
    @given(
        nu=st.floats(0.5, 200),
        R=st.floats(1e-4, 10),
        f1=st.floats(0, 10),
        df=st.floats(0, 10),
    )
    def test_cond2_monotone_in_forcing(self, nu, R, f1, df):
        if not check_cond2(nu, 1.0, MU, 2.0, R, f1):
            assert not check_cond2(nu, 1.0, MU, 2.0, R, f1 + df)

    def test_pure(self):
        a = (rho_radius(7.3, 1.1, 0.2, 0.9), check_cond1(7.3, 1.1, 0.2, 2.0, 0.3), cond2_lhs(7.3, 1.1, 0.2, 2.0, 0.3, 0.9))
        b = (rho_radius(7.3, 1.1, 0.2, 0.9), check_cond1(7.3, 1.1, 0.2, 2.0, 0.3), cond2_lhs(7.3, 1.1, 0.2, 2.0, 0.3, 0.9))
        assert np.array(a, dtype=float).tobytes() == np.array(b, dtype=float).tobytes()

    def test_cond2_overflow_is_false(self):
        assert not check_cond2(1.0, 1.0, 0.1, 100.0, 100.0, 1.0)


class TestFindRadius:
    def test_below_threshold(self):
        # nu lam mu / 2 < ln 2 makes the first condition fail for every R
        assert find_radius(10.0, 1.0, 0.1, 1.0, 1.0) is None
        grid = radius_grid(1601)
        assert not any(check_cond1(10.0, 1.0, 0.1, 1.0, float(r)) for r in grid)

    def test_large_viscosity(self):
        R = find_radius(100.0, 1.0, 0.1, 1.0, 1.0)
        assert R is not None
        assert check_cond1(100.0, 1.0, 0.1, 1.0, R) and check_cond2(100.0, 1.0, 0.1, 1.0, R, 1.0)
        grid = radius_grid(1601)
        smaller = grid[grid < R]
        assert not any(
            check_cond1(100.0, 1.0, 0.1, 1.0, float(r)) and check_cond2(100.0, 1.0, 0.1, 1.0, float(r), 1.0) for r in smaller
        )

    def test_zero_forcing(self):
        R = find_radius(100.0, 1.0, 0.1, 1.0, 0.0)
        assert R == radius_grid(1601)[0]

    def test_deterministic(self):
        assert find_radius(64.0, 1.0, 0.1, 4.0, 1.0) == find_radius(64.0, 1.0, 0.1, 4.0, 1.0)


class TestContractionConditions:
    def test_readings_differ(self):
        a = contraction_terms(16.0, 1.0, 0.1, 4.0, 0.2, 0.3, "e_nu")
        b = contraction_terms(16.0, 1.0, 0.1, 4.0, 0.2, 0.3, "literal")
        assert a[1] == b[1]
        assert b[0] < a[0]
        q = 2 * 16.0 * 0.04
        assert a[0] == pytest.approx((q / 256 + 1) * math.exp(-1.6 + q / 16) + 1 / 16, rel=1e-14)
        assert b[0] == pytest.approx((q / 256 + 1) * math.exp(-1.6 + q / 256) + 1 / 16, rel=1e-14)

    def test_unknown_reading(self):
        with pytest.raises(DomainError):
            contraction_terms(16.0, 1.0, 0.1, 4.0, 0.2, 0.3, "other")

    def test_small_viscosity_fails(self):
        assert not check_contraction(1.5, 1.0, 0.1, 1.0, 0.1, 0.1)

    def test_overflow(self):
        assert contraction_terms(1.0, 1.0, 0.1, 100.0, 100.0, 1.0)[0] == math.inf
        assert not check_contraction(1.0, 1.0, 0.1, 100.0, 100.0, 1.0)

    def test_scan(self):
        ch = scan_viscosity(1.0, 0.1, 4.0, 3.0, 1.0)
        assert ch is not None
        assert math.log2(ch.nu) == ch.doublings
        assert check_contraction(ch.nu, 1.0, 0.1, 4.0, ch.spec.R, ch.spec.rho)
        half = ch.nu / 2
        R = find_radius(half, 1.0, 0.1, 4.0, 1.0)
        assert R is None or not check_contraction(half, 1.0, 0.1, 4.0, R, rho_radius(half, 1.0, 0.1, 1.0))

    def test_scan_gives_up(self):
        assert scan_viscosity(1.0, 0.1, 4.0, 3.0, 1.0, max_doublings=2) is None


@pytest.fixture
def lab(grid8):
    rng = np.random.default_rng(11)
    f = random_field(grid8, rng, norm=1.0)
    ch = scan_viscosity(grid8.lambda1, MU, 4.0, 4.0, sobolev_norm(f, 0.0))
    p = FlowParams(ch.nu, MU, 1.0, f, StepScheme("etd1", 8))
    return ch, p


class TestBallTrials:
    def test_zero_everything(self, grid8):
        p = FlowParams(16.0, MU, 1.0, SpectralField.zeros(grid8), StepScheme("etd1", 8))
        rep = ball_invariance_trial(BallSpec(0.0, 0.0, 1.0, 1.0), p, 3, seed=0)
        assert rep.escapes == 0 and rep.max_segment_ratio == 0.0 and rep.max_endpoint_ratio == 0.0

    def test_boundary_states(self, grid8, lab):
        ch, p = lab
        x = random_state(grid8, p, np.random.default_rng(0), ch.spec.R, ch.spec.rho)
        assert math.sqrt(x.segment.l2_norm_sq(2.0)) == pytest.approx(ch.spec.R, rel=1e-13)
        assert sobolev_norm(x.endpoint, 1.0) == pytest.approx(ch.spec.rho, rel=1e-13)

    def test_discrete(self, lab):
        ch, p = lab
        rep = ball_invariance_trial(ch.spec, p, 6, seed=5)
        assert rep.inside and rep.max_segment_ratio <= 1 / math.sqrt(2)

    def test_continuous(self, lab):
        ch, p = lab
        rep = continuous_ball_trial(ch.spec, p, 4, seed=6)
        assert rep.inside

    def test_deterministic(self, lab):
        ch, p = lab
        a = ball_invariance_trial(ch.spec, p, 3, seed=9)
        b = ball_invariance_trial(ch.spec, p, 3, seed=9)
        assert a.segment_ratios == b.segment_ratios and a.endpoint_ratios == b.endpoint_ratios


class TestContraction:
    def test_identical_pair(self, grid8, lab):
        _, p = lab
        x = random_state(grid8, p, np.random.default_rng(1), 0.1, 0.1)
        rep = contraction_experiment(x, x, 3, p)
        assert rep.distances == [0.0] * 4
        assert rep.fitted_factor == 0.0 and rep.passes_half

    def test_large_viscosity(self, grid8, lab):
        ch, p = lab
        rng = np.random.default_rng(2)
        x1 = random_state(grid8, p, rng, ch.spec.R, ch.spec.rho)
        x2 = random_state(grid8, p, rng, ch.spec.R, ch.spec.rho)
        rep = contraction_experiment(x1, x2, 6, p)
        assert rep.passes_half
        assert 0.0 <= rep.fitted_factor <= 0.5
        # the fit reproduces the observed per-step ratios
        lo, hi = rep.window
        win = rep.ratios[lo : hi - 1]
        assert min(win) * 0.5 <= rep.fitted_factor <= max(win) * 2

    def test_small_viscosity_reports(self, grid8):
        rng = np.random.default_rng(3)
        p = FlowParams(0.05, MU, 1.0, random_field(grid8, rng, norm=1.0), StepScheme("etd1", 8))
        x1 = random_state(grid8, p, rng, 1.0, 1.0)
        x2 = random_state(grid8, p, rng, 1.0, 1.0)
        rep = contraction_experiment(x1, x2, 3, p)
        assert len(rep.distances) == 4 and rep.fitted_factor >= 0.0

    def test_floor_truncates(self, grid8):
        p = FlowParams(400.0, MU, 1.0, SpectralField.zeros(grid8), StepScheme("etd1", 8))
        rng = np.random.default_rng(4)
        x1 = random_state(grid8, p, rng, 1e-3, 1e-3)
        x2 = FlowState.zeros(grid8, MU, 8)
        rep = contraction_experiment(x1, x2, 12, p)
        lo, hi = rep.window
        assert all(d >= 1e-14 for d in rep.distances[:hi])
        assert hi == len(rep.distances) or rep.distances[hi] < 1e-14


class TestAttractor:
    def test_unforced_goes_to_zero(self, grid8):
        p = FlowParams(16.0, MU, 1.0, SpectralField.zeros(grid8), StepScheme("etd1", 8))
        x0 = random_state(grid8, p, np.random.default_rng(5), 0.1, 0.1)
        res = find_attractor(x0, p, tol=1e-10, max_iter=200)
        assert res.converged
        assert state_norm(res.state, 1.0) <= 1e-10
        assert res.residual <= 1e-10

    def test_unique_limit(self, grid8, lab):
        ch, p = lab
        rng = np.random.default_rng(6)
        a = find_attractor(random_state(grid8, p, rng, ch.spec.R, ch.spec.rho), p, 1e-10, 200)
        b = find_attractor(random_state(grid8, p, rng, ch.spec.R, ch.spec.rho), p, 1e-10, 200)
        assert a.converged and b.converged
        assert a.residual <= 2e-10 and b.residual <= 2e-10
        assert state_distance(a.state, b.state, 1.0) <= 1e-9

    def test_not_converged_flagged(self, grid8, lab):
        ch, p = lab
        x0 = random_state(grid8, p, np.random.default_rng(7), ch.spec.R, ch.spec.rho)
        res = find_attractor(x0, p, 1e-10, max_iter=2)
        assert not res.converged and res.iterations == 2 and res.residual > 0

    def test_stokes_single_mode(self, grid8):
        f = SpectralField.from_modes(grid8, {(1, 0, 0): (0, 1, 0)})
        nu = 32.0
        p = FlowParams(nu, MU, 1.0, f, StepScheme("etd1", 8))
        res = find_attractor(FlowState.zeros(grid8, MU, 8), p, 1e-12, 200)
        stokes = stokes_steady_state(f, nu)
        np.testing.assert_allclose(stokes.coeffs, f.coeffs / nu, atol=1e-17)
        err = sobolev_norm(res.state.endpoint - stokes, 1.0) / sobolev_norm(stokes, 1.0)
        assert err <= 0.05


class TestRegularity:
    def _heat(self, grid, nu, n):
        u0 = SpectralField.from_modes(grid, {(1, 0, 0): (0, 1, 0)})
        p = FlowParams(nu, MU, 1.0, SpectralField.zeros(grid), StepScheme("etd1", 32))
        rec = TrajectoryRecorder(1.0)
        discrete_flow(n, FlowState(Segment.zeros(grid, MU, 32), u0), p, rec)
        return u0, p, rec.trajectory()

    def test_zero_trajectory(self, grid8):
        p = FlowParams(1.0, MU, 1.0, SpectralField.zeros(grid8), StepScheme("etd1", 8))
        rec = TrajectoryRecorder(1.0)
        discrete_flow(2, FlowState.zeros(grid8, MU, 8), p, rec)
        rep = regularity_diagnostics(rec.trajectory(), p, MU / 4, c=3.0)
        assert (rep.weighted_sup, rep.sup_norm_1a, rep.l2_norm_2a, rep.holder_max) == (0.0, 0.0, 0.0, 0.0)
        assert rep.finite and rep.weighted_bound_ok

    def test_heat_holder(self, grid8):
        nu = 10.0
        u0, p, tr = self._heat(grid8, nu, 4)
        eps = MU / 4
        rep = regularity_diagnostics(tr, p, eps)
        best = minimize_scalar(lambda h: -(-math.expm1(-nu * h)) / math.sqrt(h), bounds=(1e-8, 1.0), method="bounded")
        analytic = sobolev_norm(u0, 1.0) * math.exp(-nu * eps) * (-best.fun)
        assert rep.holder_max == pytest.approx(analytic, rel=0.05)

    def test_heat_sup_and_l2(self, grid8):
        nu = 2.0
        u0, p, tr = self._heat(grid8, nu, 3)
        eps = MU / 4
        rep = regularity_diagnostics(tr, p, eps)
        n2 = sobolev_norm(u0, 2.0) ** 2
        assert rep.sup_norm_1a == pytest.approx(n2 * math.exp(-2 * nu * eps), rel=1e-12)
        T = 3 * MU
        exact = sobolev_norm(u0, 3.0) ** 2 * (math.exp(-2 * nu * eps) - math.exp(-2 * nu * T)) / (2 * nu)
        assert rep.l2_norm_2a == pytest.approx(exact, rel=1e-3)

    def test_forced_weighted_bound(self, grid8):
        rng = np.random.default_rng(8)
        f = random_field(grid8, rng, norm=1.0, s=1.0)
        p = FlowParams(16.0, MU, 1.0, f, StepScheme("etd1", 8))
        x0 = random_state(grid8, p, rng, 0.2, 0.2)
        rec = TrajectoryRecorder(1.0)
        discrete_flow(3, x0, p, rec)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            rep = regularity_diagnostics(rec.trajectory(), p, MU / 4, c=4.0)
        assert rep.weighted_bound_ok and rep.finite

    def test_violation_warns(self, grid8):
        rng = np.random.default_rng(9)
        p = FlowParams(1.0, MU, 1.0, SpectralField.zeros(grid8), StepScheme("etd1", 8))
        # history large enough that convection beats the bound with c = 0
        x0 = random_state(grid8, p, rng, 40.0, 5.0)
        rec = TrajectoryRecorder(1.0)
        discrete_flow(1, x0, p, rec)
        tr = rec.trajectory()
        with pytest.warns(RuntimeWarning):
            rep = regularity_diagnostics(tr, p, MU / 4, c=0.0)
        assert not rep.weighted_bound_ok and rep.finite

    def test_window_errors(self, grid8):
        u0, p, tr = self._heat(grid8, 1.0, 1)
        with pytest.raises(DomainError):
            regularity_diagnostics(tr, p, 0.0)
        with pytest.raises(DomainError):
            regularity_diagnostics(tr, p, MU)
