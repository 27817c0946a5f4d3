import math

import numpy as np
import pytest

from app.exceptions import AccuracyError, DomainError, EmptyReportError, PoleError
from app.schemas import DensityField, Grid1D, PhysParams
from app.services.analysis import (compare_fields, grid_points, moments, normalize, residual_fpe,
                                   residual_report_rows, richardson_order, safe_eval)
from app.services.oracle import stationary_density


def gaussian_bump(t, v):
    return np.exp(-np.asarray(v) ** 2) * np.ones_like(np.asarray(t, dtype=float))


def bump_residual(phys):
    """Exact p f_t - eta f - eta v f_v - B f_vv of e^{-v^2}."""
    def exact(t, v):
        f = np.exp(-v ** 2)
        return -phys.eta * f + 2.0 * phys.eta * v ** 2 * f - phys.big_b * (4.0 * v ** 2 - 2.0) * f
    return exact


class TestResidual:
    def test_known_value(self, fig1_phys):
        report = residual_fpe(gaussian_bump, fig1_phys, t=0.5, v=1.0)
        assert report.residual[0] == pytest.approx(-8.3 * math.exp(-1.0), rel=1e-8)
        assert report.residual[0] == pytest.approx(-3.053, abs=1e-3)
        assert report.n_evaluated == 1
        assert report.excluded_points == []

    def test_linear_in_the_candidate(self, fig1_phys):
        t = np.linspace(0.1, 1.0, 4)
        v = np.linspace(-2.0, 2.0, 4)
        tt, vv = np.meshgrid(t, v, indexing="ij")

        def other(a, b):
            return np.sin(a) * np.cos(b)

        single = residual_fpe(gaussian_bump, fig1_phys, t=tt, v=vv).residual
        combined = residual_fpe(lambda a, b: 2.0 * gaussian_bump(a, b) - 3.0 * other(a, b),
                                fig1_phys, t=tt, v=vv).residual
        second = residual_fpe(other, fig1_phys, t=tt, v=vv).residual
        np.testing.assert_allclose(combined, 2.0 * single - 3.0 * second, rtol=1e-9, atol=1e-7)

    def test_time_multiplier_scales_the_time_derivative(self, fig1_phys):
        def decaying(t, v):
            return np.exp(-t) * np.ones_like(np.asarray(v, dtype=float))

        report = residual_fpe(decaying, fig1_phys, lambda t: 2.0 * np.ones_like(t), t=1.0, v=0.0)
        assert report.residual[0] == pytest.approx(-(2.0 + fig1_phys.eta) * math.exp(-1.0), rel=1e-8)

    def test_one_sided_near_the_floor(self, fig1_phys):
        def linear_in_time(t, v):
            return (1.0 + t) * np.ones_like(np.asarray(v, dtype=float))

        report = residual_fpe(linear_in_time, fig1_phys, t=0.0, v=0.0)
        assert report.residual[0] == pytest.approx(1.0 - fig1_phys.eta, rel=1e-10)

    def test_fourth_order(self, fig1_phys):
        ratio = richardson_order(gaussian_bump, bump_residual(fig1_phys), fig1_phys,
                                 t=0.5, v=0.7, h_v=0.05, h_t=0.1)
        assert 14.0 <= ratio <= 18.0

    def test_poles_are_excluded(self, fig1_phys):
        def with_pole(t, v):
            v = np.asarray(v, dtype=float)
            if np.any(np.abs(v - 1.0) < 1e-2):
                raise PoleError("pole at v=1", [1.0])
            return np.exp(-v ** 2) * np.ones_like(np.asarray(t, dtype=float))

        v = np.array([-1.0, 0.0, 1.0, 2.0])
        report = residual_fpe(with_pole, fig1_phys, t=np.full(4, 0.5), v=v)
        assert report.excluded_points == [(0.5, 1.0)]
        assert report.n_evaluated == 3
        assert report.excluded_fraction == pytest.approx(0.25)

    def test_everything_excluded(self, fig1_phys):
        def always_pole(t, v):
            raise PoleError("pole everywhere")

        with pytest.raises(EmptyReportError):
            residual_fpe(always_pole, fig1_phys, t=np.array([0.5]), v=np.array([0.0]))

    def test_no_points(self, fig1_phys):
        with pytest.raises(EmptyReportError):
            residual_fpe(gaussian_bump, fig1_phys, t=np.array([]), v=np.array([]))

    def test_rows(self, fig1_phys):
        t, v = grid_points([0.5, 1.0], [0.0, 1.0])
        report = residual_fpe(gaussian_bump, fig1_phys, t=t, v=v)
        rows = residual_report_rows(report)
        assert [row[:2] for row in rows] == [(0.5, 0.0), (0.5, 1.0), (1.0, 0.0), (1.0, 1.0)]


class TestSafeEval:
    def test_marks_failures_as_nan(self):
        def picky(t, v):
            if np.any(np.asarray(v) < 0):
                raise DomainError("negative v")
            return np.asarray(v, dtype=float) + t

        out = safe_eval(picky, np.zeros(3), np.array([-1.0, 0.0, 1.0]))
        assert math.isnan(out[0])
        np.testing.assert_array_equal(out[1:], [0.0, 1.0])


class TestMoments:
    @pytest.fixture
    def grid(self, fig1_phys):
        return Grid1D.symmetric(10.0 * fig1_phys.sigma, 2001)

    def test_stationary_moments(self, fig1_phys, grid):
        def stationary(v):
            return stationary_density(fig1_phys, v)

        assert moments(stationary, grid, 1) == pytest.approx(0.0, abs=1e-12)
        assert moments(stationary, grid, 2) == pytest.approx(5.0 / 1.7, rel=1e-8)
        assert moments(stationary, grid, 2) == pytest.approx(2.94118, abs=1e-5)

    def test_scaling_invariance(self, fig1_phys, grid):
        field = DensityField(grid=grid, t=0.0, values=stationary_density(fig1_phys, grid.nodes()))
        scaled = DensityField(grid=grid, t=0.0, values=7.3 * field.values)
        assert moments(scaled, grid, 2) == pytest.approx(moments(field, grid, 2), rel=1e-13)

    def test_time_dependent_callable(self, fig1_phys, grid):
        def shifted(t, v):
            return stationary_density(fig1_phys, v - t)

        assert moments(shifted, grid, 1, t=0.5) == pytest.approx(0.5, rel=1e-8)

    def test_grid_mismatch(self, fig1_phys, grid):
        field = DensityField(grid=Grid1D.symmetric(5.0, 11), t=0.0, values=np.ones(11))
        with pytest.raises(DomainError):
            moments(field, grid, 1)

    def test_zero_mass(self, grid):
        with pytest.raises(DomainError):
            moments(lambda v: np.zeros_like(v), grid, 1)

    def test_undecayed_tails(self):
        grid = Grid1D.symmetric(1.0, 101)
        with pytest.raises(AccuracyError):
            moments(lambda v: np.ones_like(v), grid, 1)


class TestFields:
    def test_normalize(self, wide_grid, fig3_phys):
        field = DensityField(grid=wide_grid, t=1.0, values=3.0 * stationary_density(fig3_phys, wide_grid.nodes()))
        unit = normalize(field)
        assert unit.mass() == pytest.approx(1.0, rel=1e-14)
        assert unit.t == 1.0

    def test_normalize_rejects_zero_mass(self, wide_grid):
        with pytest.raises(DomainError):
            normalize(DensityField(grid=wide_grid, t=0.0, values=np.zeros(wide_grid.nv)))

    def test_compare_identical(self, wide_grid, fig3_phys):
        field = DensityField(grid=wide_grid, t=0.0, values=stationary_density(fig3_phys, wide_grid.nodes()))
        assert compare_fields(field, field) == (0.0, 0.0, 0.0)

    def test_compare_offset(self, wide_grid):
        ones = DensityField(grid=wide_grid, t=0.0, values=np.ones(wide_grid.nv))
        twos = DensityField(grid=wide_grid, t=0.0, values=2.0 * np.ones(wide_grid.nv))
        l_inf, l2, rel = compare_fields(twos, ones)
        assert l_inf == 1.0
        assert l2 == pytest.approx(math.sqrt(wide_grid.v_max - wide_grid.v_min), rel=1e-12)
        assert rel == 1.0

    def test_compare_needs_same_grid(self, wide_grid):
        other = Grid1D.symmetric(1.0, wide_grid.nv)
        with pytest.raises(DomainError):
            compare_fields(DensityField(grid=wide_grid, t=0.0, values=np.ones(wide_grid.nv)),
                           DensityField(grid=other, t=0.0, values=np.ones(wide_grid.nv)))

    def test_phys_params_are_validated(self):
        with pytest.raises(ValueError):
            PhysParams(eta=0.0, big_b=5.0)
