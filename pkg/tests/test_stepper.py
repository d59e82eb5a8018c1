from __future__ import annotations

import io
import math
import warnings

import numpy as np
import pytest

from dnse.errors import DomainError, GridMismatchError, IntegrationError
from dnse.spectral import SpectralField, TorusGrid, divergence_defect, random_field, reality_defect, sobolev_norm
from dnse.stepper import (
    Segment,
    StepScheme,
    check_energy_inequality,
    convergence_order,
    observed_orders,
    solve_interval,
    trapezoid,
)


def unit_pair(grid):
    return SpectralField.from_modes(grid, {(1, 0, 0): (0, 1, 0)})


def random_segment(grid, mu, M, rng, scale=1.0):
    a, b = random_field(grid, rng), random_field(grid, rng)
    t = np.linspace(0, 1, M + 1)[:, None, None, None, None]
    return Segment(grid, mu, scale * (np.cos(3 * t) * a.coeffs + np.sin(5 * t) * b.coeffs))


class TestSegment:
    def test_trapezoid_constant(self):
        assert trapezoid(np.full(11, 2.0), 0.1) == pytest.approx(2.0, rel=1e-15)

    def test_times_and_relabel(self, grid8):
        s = Segment.zeros(grid8, 0.5, 4)
        np.testing.assert_allclose(s.times, [0, 0.125, 0.25, 0.375, 0.5])
        r = s.relabel(-0.5)
        np.testing.assert_allclose(r.times, [-0.5, -0.375, -0.25, -0.125, 0.0])
        assert r.samples is s.samples

    def test_constant_l2(self, grid8, rng):
        v = random_field(grid8, rng)
        seg = Segment.constant(v, 0.3, 7)
        assert seg.l2_norm_sq(1.5) == pytest.approx(0.3 * sobolev_norm(v, 1.5) ** 2, rel=1e-14)

    def test_shape_checked(self, grid8):
        with pytest.raises(GridMismatchError):
            Segment(grid8, 1.0, np.zeros((1,) + grid8.shape, dtype=complex))
        with pytest.raises(DomainError):
            Segment(grid8, 0.0, np.zeros((3,) + grid8.shape, dtype=complex))

    def test_scheme_validation(self):
        with pytest.raises(DomainError):
            StepScheme("rk4", 8)
        with pytest.raises(DomainError):
            StepScheme("etd1", 0)


class TestHeatOracle:
    @pytest.mark.parametrize("M", [1, 7, 64])
    def test_etd1_exact_decay(self, grid8, M):
        u0 = unit_pair(grid8)
        mu = 0.1
        seg = solve_interval(Segment.zeros(grid8, mu, M), u0, SpectralField.zeros(grid8), 1.0, StepScheme("etd1", M))
        for s in (0.5, 1.0):
            exact = math.exp(-mu) * sobolev_norm(u0, s)
            assert sobolev_norm(seg[M], s) == pytest.approx(exact, rel=1e-12)

    @pytest.mark.parametrize("M", [1, 5, 64])
    def test_etd1_exact_forced(self, grid8, M):
        f = unit_pair(grid8)
        mu = 0.1
        seg = solve_interval(
            Segment.zeros(grid8, mu, M), SpectralField.zeros(grid8), f, 1.0, StepScheme("etd1", M)
        )
        expected = -math.expm1(-mu) * f.coeffs
        np.testing.assert_allclose(seg[M].coeffs, expected, rtol=1e-12, atol=1e-17)

    def test_imex_first_order(self, grid8):
        u0 = unit_pair(grid8)
        mu = 1.0
        errs = []
        for M in (16, 32, 64, 128):
            seg = solve_interval(
                Segment.zeros(grid8, mu, M), u0, SpectralField.zeros(grid8), 1.0, StepScheme("imex_euler", M)
            )
            exact = math.exp(-mu) * math.sqrt(2)
            errs.append(abs(sobolev_norm(seg[M], 0.0) - exact) / exact)
        # relative error <= C / M with a fixed C
        assert max(e * M for e, M in zip(errs, (16, 32, 64, 128))) < 1.0
        for a, b in zip(errs, errs[1:]):
            assert a / b == pytest.approx(2.0, abs=0.15)

    def test_imex_forced_halving(self, grid8):
        f = unit_pair(grid8)
        mu = 1.0
        exact = -math.expm1(-mu) * f.coeffs
        errs = []
        for M in (32, 64):
            seg = solve_interval(
                Segment.zeros(grid8, mu, M), SpectralField.zeros(grid8), f, 1.0, StepScheme("imex_euler", M)
            )
            errs.append(np.abs(seg[M].coeffs - exact).max())
        assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.15)

    def test_zero_data_any_psi(self, grid8, rng):
        psi = random_segment(grid8, 0.1, 8, rng, scale=10.0)
        z = SpectralField.zeros(grid8)
        seg = solve_interval(psi, z, z, 1.0, StepScheme("etd1", 8))
        assert not seg.samples.any()


class TestOrders:
    def test_imex_order(self):
        orders = observed_orders(StepScheme("imex_euler", 32), 4, problem="heat")
        assert all(abs(o - 1.0) <= 0.15 for o in orders)

    def test_etd1_order_convective(self):
        assert convergence_order(StepScheme("etd1", 16), 3) >= 0.9

    def test_imex_order_convective(self):
        assert convergence_order(StepScheme("imex_euler", 16), 3, problem="convective") >= 0.9

    def test_refinements_checked(self):
        with pytest.raises(DomainError):
            convergence_order(StepScheme("etd1", 8), 2)


class TestSolveInterval:
    def test_samples_valid(self, grid8, rng):
        psi = random_segment(grid8, 0.1, 8, rng)
        seg = solve_interval(psi, random_field(grid8, rng), random_field(grid8, rng), 0.5, StepScheme("etd1", 8))
        for j in range(seg.M + 1):
            u = seg[j]
            assert divergence_defect(u) <= 1e-12 * max(sobolev_norm(u, 1.0), 1e-300)
            assert reality_defect(u) == 0.0

    @pytest.mark.parametrize("kind", ["etd1", "imex_euler"])
    def test_superposition(self, grid8, rng, kind):
        psi = random_segment(grid8, 0.1, 8, rng)
        sch = StepScheme(kind, 8)
        a, b, f = random_field(grid8, rng), random_field(grid8, rng), random_field(grid8, rng)
        z = SpectralField.zeros(grid8)
        ua = solve_interval(psi, a, z, 0.7, sch).samples
        ub = solve_interval(psi, b, z, 0.7, sch).samples
        uab = solve_interval(psi, a * 2.0 + b * -0.5, z, 0.7, sch).samples
        np.testing.assert_allclose(uab, 2.0 * ua - 0.5 * ub, rtol=0, atol=1e-10 * np.abs(uab).max())
        uf = solve_interval(psi, z, f, 0.7, sch).samples
        uaf = solve_interval(psi, a, f, 0.7, sch).samples
        np.testing.assert_allclose(uaf, ua + uf, rtol=0, atol=1e-10 * np.abs(uaf).max())

    def test_initial_sample(self, grid8, rng):
        u0 = random_field(grid8, rng)
        seg = solve_interval(random_segment(grid8, 0.1, 4, rng), u0, u0, 1.0, StepScheme("etd1", 4))
        np.testing.assert_array_equal(seg.samples[0], u0.coeffs)

    def test_mismatches(self, grid8):
        z = SpectralField.zeros(grid8)
        with pytest.raises(GridMismatchError):
            solve_interval(Segment.zeros(grid8, 0.1, 4), SpectralField.zeros(TorusGrid(6)), z, 1.0, StepScheme("etd1", 4))
        with pytest.raises(DomainError):
            solve_interval(Segment.zeros(grid8, 0.1, 4), z, z, 1.0, StepScheme("etd1", 8))
        with pytest.raises(DomainError):
            solve_interval(Segment.zeros(grid8, 0.1, 4), z, z, 0.0, StepScheme("etd1", 4))

    def test_non_finite_reports_substep(self, grid8, rng):
        psi = random_segment(grid8, 0.1, 6, rng)
        bad = psi.samples.copy()
        bad[3, 0, 1, 0, 0] = np.inf
        with np.errstate(invalid="ignore", over="ignore"):
            with pytest.raises(IntegrationError) as err:
                solve_interval(Segment(grid8, 0.1, bad), random_field(grid8, rng), SpectralField.zeros(grid8), 1.0, StepScheme("etd1", 6))
        assert err.value.substep == 3

    def test_trace(self, grid8, rng):
        buf = io.StringIO()
        solve_interval(Segment.zeros(grid8, 0.1, 4), unit_pair(grid8), SpectralField.zeros(grid8), 1.0, StepScheme("etd1", 4), trace=buf)
        rows = buf.getvalue().splitlines()
        assert rows[0] == "t,norm_alpha,norm_1+alpha"
        assert len(rows) == 6
        assert float(rows[1].split(",")[1]) == pytest.approx(math.sqrt(2))


class TestEnergyInequality:
    def test_holds_with_estimated_constant(self, grid8, rng):
        psi = random_segment(grid8, 0.1, 16, rng)
        f = random_field(grid8, rng)
        u0 = random_field(grid8, rng)
        seg = solve_interval(psi, u0, f, 1.0, StepScheme("etd1", 16))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            worst = check_energy_inequality(seg, psi, f, 1.0, 1.0, c=2 * 1.85)
        assert worst <= 1.05

    def test_warns_on_violation(self, grid8, rng):
        psi = Segment.zeros(grid8, 0.1, 4)
        u0 = random_field(grid8, rng)
        seg = solve_interval(psi, u0, SpectralField.zeros(grid8), 1.0, StepScheme("etd1", 4))
        grown = seg.samples.copy()
        grown[1:] *= 2.0
        inflated = Segment(grid8, 0.1, grown)
        with pytest.warns(RuntimeWarning):
            worst = check_energy_inequality(inflated, psi, SpectralField.zeros(grid8), 1.0, 1.0, c=1.0)
        assert worst > 3.0
