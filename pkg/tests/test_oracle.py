import math

import numpy as np
import pytest

from app.exceptions import DomainError
from app.schemas import DensityField, FracParams, Grid1D
from app.services.analysis import compare_fields, residual_fpe
from app.services.frac_ops import TimeMap
from app.services.oracle import (gaussian_mixture_density, initial_gaussian, moment_ode, ou_moments,
                                 ou_transition_density, solve_fd, stationary_density)


def ou_field(phys, grid, v0, t):
    return DensityField(grid=grid, t=t, values=ou_transition_density(phys, v0, t, grid.nodes()))


class TestAnalyticDensities:
    def test_stationary_density_is_a_steady_state(self, fig1_phys):
        v = np.linspace(-3.0 * fig1_phys.sigma, 3.0 * fig1_phys.sigma, 25)
        t = np.full_like(v, 1.0)
        report = residual_fpe(lambda a, b: stationary_density(fig1_phys, b) * np.ones_like(a),
                              fig1_phys, t=t, v=v)
        assert report.rel_l_inf < 1e-8

    def test_stationary_mass(self, fig1_phys):
        from scipy.integrate import quad

        mass, _ = quad(lambda v: stationary_density(fig1_phys, v), -np.inf, np.inf)
        assert mass == pytest.approx(1.0, rel=1e-10)

    def test_transition_density_mean(self, fig3_phys):
        from scipy.integrate import trapezoid

        grid = Grid1D.symmetric(8.0 * fig3_phys.sigma, 2001)
        field = ou_field(fig3_phys, grid, 2.0, 1.0)
        mean = trapezoid(grid.nodes() * field.values, grid.nodes())
        assert mean == pytest.approx(2.0 * math.exp(-0.5), rel=1e-6)
        assert mean == pytest.approx(1.2131, abs=1e-4)

    def test_transition_density_solves_the_equation(self, fig3_phys):
        t = np.linspace(0.2, 2.0, 10)
        v = np.linspace(-4.0, 6.0, 10)
        tt, vv = np.meshgrid(t, v, indexing="ij")
        report = residual_fpe(lambda a, b: ou_transition_density(fig3_phys, 2.0, a, b), fig3_phys, t=tt, v=vv)
        assert report.rel_l_inf < 1e-6

    def test_transition_density_needs_positive_time(self, fig3_phys):
        with pytest.raises(DomainError):
            ou_transition_density(fig3_phys, 2.0, 0.0, 1.0)

    def test_mixture_of_one_component(self, fig3_phys):
        v = np.linspace(-5.0, 5.0, 11)
        mixture = gaussian_mixture_density(fig3_phys, [1.0], [2.0], 0.0, 0.7, v)
        np.testing.assert_allclose(mixture, ou_transition_density(fig3_phys, 2.0, 0.7, v), rtol=1e-14)


class TestFiniteDifferenceSolver:
    def test_matches_transition_density(self, fig3_phys, wide_grid):
        init = ou_field(fig3_phys, wide_grid, 2.0, 0.5)
        final = solve_fd(fig3_phys, None, init, 1.0, 1e-3)[-1]
        assert final.t == pytest.approx(1.0)
        l_inf, _, _ = compare_fields(final, ou_field(fig3_phys, wide_grid, 2.0, 1.0))
        assert l_inf < 1e-3

    def test_mass_is_conserved(self, fig3_phys, wide_grid):
        init = initial_gaussian(wide_grid, 2.0, 0.5)
        snapshots = solve_fd(fig3_phys, None, init, 1.0, 1e-3, n_snapshots=10)
        assert len(snapshots) == 11
        for field in snapshots:
            assert abs(field.mass() - init.mass()) < 1e-10

    def test_second_order_in_space(self, fig3_phys):
        errors = []
        for nv in (401, 801):
            grid = Grid1D.symmetric(8.0 * fig3_phys.sigma, nv)
            final = solve_fd(fig3_phys, None, ou_field(fig3_phys, grid, 2.0, 0.5), 1.0, 1e-3)[-1]
            errors.append(compare_fields(final, ou_field(fig3_phys, grid, 2.0, 1.0))[0])
        assert 3.5 <= errors[0] / errors[1] <= 4.5

    def test_stationary_density_is_preserved(self, fig3_phys):
        grid = Grid1D.symmetric(8.0 * fig3_phys.sigma, 1601)
        init = DensityField(grid=grid, t=0.0, values=stationary_density(fig3_phys, grid.nodes()))
        final = solve_fd(fig3_phys, None, init, 1.0, 1e-2)[-1]
        assert compare_fields(final, init)[0] < 1e-6

    def test_positivity(self, fig3_phys, wide_grid):
        init = initial_gaussian(wide_grid, 2.0, 0.5)
        for field in solve_fd(fig3_phys, None, init, 1.0, 1e-3, n_snapshots=20):
            assert field.values.min() >= -1e-12

    def test_fractional_multiplier_slows_relaxation(self, fig3_phys, wide_grid):
        time_map = TimeMap(FracParams.caputo(0.39, 20.0))
        init = initial_gaussian(wide_grid, 2.0, 0.5)
        final = solve_fd(fig3_phys, time_map.p, init, 5.0, 1e-2)[-1]
        tau = time_map.tau(5.0)
        expected_mean, _ = ou_moments(fig3_phys, 2.0, 4.25, tau)
        mean = np.sum(wide_grid.nodes() * final.values) * wide_grid.spacing
        assert mean == pytest.approx(expected_mean, rel=1e-3)

    def test_invalid_arguments(self, fig3_phys, wide_grid):
        init = initial_gaussian(wide_grid, 2.0, 0.5)
        with pytest.raises(DomainError):
            solve_fd(fig3_phys, None, init, 1.0, 0.0)
        with pytest.raises(DomainError):
            solve_fd(fig3_phys, None, init, 0.0, 1e-3)
        with pytest.raises(DomainError):
            solve_fd(fig3_phys, lambda t: -1.0, init, 1.0, 1e-2)


class TestMoments:
    def test_closed_form(self, fig3_phys):
        mean, mean_sq = ou_moments(fig3_phys, 2.0, 4.25, 1.0)
        assert mean == pytest.approx(1.2131, abs=1e-4)
        assert mean_sq == pytest.approx(10.0 + (4.25 - 10.0) * math.exp(-1.0), rel=1e-14)

    def test_ode_matches_closed_form(self, fig3_phys):
        t = np.linspace(0.0, 10.0, 21)
        mean, mean_sq = moment_ode(fig3_phys, None, 2.0, 4.25, t)
        exact_mean, exact_sq = ou_moments(fig3_phys, 2.0, 4.25, t)
        np.testing.assert_allclose(mean, exact_mean, rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(mean_sq, exact_sq, rtol=1e-7)

    def test_fractional_moments_follow_the_time_map(self, fig3_phys):
        time_map = TimeMap(FracParams.caputo(0.39, 20.0))
        t = np.linspace(0.0, 15.0, 16)
        mean, mean_sq = moment_ode(fig3_phys, time_map.p, 2.0, 4.25, t)
        exact_mean, exact_sq = ou_moments(fig3_phys, 2.0, 4.25, time_map.tau(t))
        np.testing.assert_allclose(mean, exact_mean, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(mean_sq, exact_sq, rtol=1e-6)

    def test_fd_moments_against_ode_with_fractional_multiplier(self, fig3_phys, wide_grid):
        time_map = TimeMap(FracParams.caputo(0.39, 20.0))
        init = initial_gaussian(wide_grid, 2.0, 0.5)
        snapshots = solve_fd(fig3_phys, time_map.p, init, 10.0, 1e-2, n_snapshots=10)
        nodes = wide_grid.nodes()
        times = np.array([field.t for field in snapshots])
        ode_mean, ode_sq = moment_ode(fig3_phys, time_map.p, 2.0, 4.25, times)
        for field, m1, m2 in zip(snapshots, ode_mean, ode_sq):
            mass = field.mass()
            fd_mean = np.sum(nodes * field.values) * wide_grid.spacing / mass
            fd_sq = np.sum(nodes ** 2 * field.values) * wide_grid.spacing / mass
            assert abs(fd_mean - m1) <= 2e-2 * max(abs(m1), 1.0)
            assert abs(fd_sq - m2) <= 2e-2 * max(abs(m2), 1.0)

    @staticmethod
    def _deviation_from_classical(phys, alpha):
        time_map = TimeMap(FracParams.caputo(alpha, 20.0))
        t = np.linspace(0.0, 10.0, 101)
        mean, mean_sq = moment_ode(phys, time_map.p, 2.0, 4.25, t)
        classical_mean, classical_sq = ou_moments(phys, 2.0, 4.25, t)
        return (np.max(np.abs(mean - classical_mean) / np.abs(classical_mean)),
                np.max(np.abs(mean_sq - classical_sq) / np.abs(classical_sq)))

    def test_near_classical_order_still_drifts_from_classical_moments(self, fig3_phys):
        # p(0) = 20^0.01 / Gamma(1.01) is not 1, so the mean lags by about 17% at t = 10
        rel_mean, rel_sq = self._deviation_from_classical(fig3_phys, 0.99)
        assert np.isfinite(rel_mean) and np.isfinite(rel_sq)
        assert rel_mean > 1e-2
        assert rel_mean == pytest.approx(0.174, abs=5e-3)
        assert rel_sq < 2e-2

    def test_lower_order_drifts_further(self, fig3_phys):
        near_mean, near_sq = self._deviation_from_classical(fig3_phys, 0.99)
        low_mean, low_sq = self._deviation_from_classical(fig3_phys, 0.39)
        assert np.isfinite(low_mean) and np.isfinite(low_sq)
        assert low_mean > 10.0 * near_mean
        assert low_sq > near_sq

    def test_negative_time(self, fig3_phys):
        with pytest.raises(DomainError):
            moment_ode(fig3_phys, None, 2.0, 4.25, -1.0)
