import numpy as np
import pytest
from pydantic import ValidationError

from app.exceptions import DomainError, PoleError
from app.schemas import FracParams, LinearAuxConfig, QuadAuxConfig, SelfSimConfig
from app.services.analysis import residual_fpe
from app.services.exact_solutions import (LinearAuxFamily, QuadAuxFamily, SelfSimFamily, build_solution,
                                          compatibility_residual, construction_residuals,
                                          fractional_lift, select_reading)
from app.services.frac_ops import TimeMap
from app.services.oracle import gaussian_mixture_density
from app.utils import central_diff

T0 = 20.0


def pde_residual(model, phys, n=11):
    t = np.linspace(0.05, 1.0, n)
    v = np.linspace(-2.0 * phys.sigma, 2.0 * phys.sigma, n)
    tt, vv = np.meshgrid(t, v, indexing="ij")
    return residual_fpe(model.f, phys, t=tt, v=vv).rel_l_inf


class TestLinearAux:
    @pytest.fixture
    def model(self, fig1_phys, linear_config):
        return LinearAuxFamily(fig1_phys, linear_config, "weighted")

    def test_construction_residuals(self, model):
        residuals = model.construction_residuals()
        assert set(residuals) == {"s1_ode", "riccati", "antiderivative", "q_plus_s", "b1_ode", "b0_ode",
                                  "a0_ode", "aux_t", "aux_v", "hopf_f", "hopf_g", "hopf_pde"}
        for name, value in residuals.items():
            assert value < 1e-6, name

    def test_intermediates(self, model, fig1_phys):
        cfg = model.config
        t, v = model.sample(n=8, seed=3)
        pieces = model.rational_form(t, v)
        slope = central_diff(model.s1, v, 1e-3 * fig1_phys.sigma)
        np.testing.assert_allclose(pieces.b1, slope, rtol=1e-8, atol=1e-8 * np.max(np.abs(slope)))
        np.testing.assert_allclose(pieces.d1, 0.0)
        np.testing.assert_allclose(pieces.d0, cfg.mu * (cfg.c0 * pieces.s1 - cfg.c1 * pieces.s0), rtol=1e-14)
        np.testing.assert_allclose(pieces.a1, cfg.c1 / cfg.c0)

    def test_hopf_fields_are_log_derivatives(self, model, fig1_phys):
        t, v = model.sample(n=8, seed=4)
        big_f, big_g = model.hopf_fields(t, v)
        f = model.f(t, v)
        f_v = central_diff(lambda x: model.f(t, x), v, 1e-3 * fig1_phys.sigma)
        f_t = central_diff(lambda s: model.f(s, v), t, 1e-3 / model.rate)
        np.testing.assert_allclose(big_f, f_v / f, rtol=1e-6, atol=1e-6 * np.max(np.abs(f_v / f)))
        np.testing.assert_allclose(big_g, f_t / f, rtol=1e-6, atol=1e-6 * np.max(np.abs(f_t / f)))

    def test_constant_s0_breaks_the_b0_equation(self, fig1_phys, linear_config):
        model = LinearAuxFamily(fig1_phys, linear_config, "normalized")
        residuals = model.construction_residuals()
        assert residuals["b1_ode"] < 1e-6
        assert residuals["b0_ode"] > 1e-4
        assert residuals["hopf_pde"] > 1e-4

    @pytest.mark.parametrize("v", [-2.0, 0.0, 1.5])
    def test_stationary_profile(self, model, fig1_phys, v):
        v = np.asarray([v])
        h = 1e-3 * fig1_phys.sigma
        terms = (fig1_phys.big_b * central_diff(model.s1, v, h, order=2),
                 fig1_phys.eta * v * central_diff(model.s1, v, h),
                 fig1_phys.eta * model.s1(v))
        assert abs(float(sum(terms)[0])) < 1e-6 * float(sum(np.abs(term) for term in terms)[0])

    def test_stationary_profile_without_dawson_term(self, fig1_phys):
        config = LinearAuxConfig(amp_a1=0.0, amp_a2=1.0)
        model = LinearAuxFamily(fig1_phys, config, "weighted")
        v = np.linspace(-3.0, 3.0, 7)
        np.testing.assert_allclose(model.s1(v), np.exp(-fig1_phys.eta * v ** 2 / (2.0 * fig1_phys.big_b)),
                                   rtol=1e-14)

    def test_closed_form_ingredient_is_kept(self, model):
        assert not model.ingredient.reconciled
        assert model.divergences() == {}

    def test_h_vanishes_at_origin(self, model):
        assert model.h(np.asarray([0.0]))[0] == 0.0

    def test_poles_are_hermite_zeros(self, model, fig1_phys):
        roots = np.polynomial.hermite.hermroots([0] * 10 + [1]) / fig1_phys.x_scale
        expected = np.sort(roots[np.abs(roots) < 5.0])
        poles = model.poles()
        assert len(poles) == 6
        np.testing.assert_allclose(poles, expected, rtol=0.0, atol=1e-9)

    def test_h_raises_at_pole(self, model):
        pole = model.poles()[0]
        with pytest.raises(PoleError) as e:
            model.h(np.asarray([pole]))
        assert e.value.locations
        with pytest.raises(PoleError):
            model.g(0.5, np.asarray([pole]))

    def test_f_is_finite_at_poles(self, model):
        assert np.all(np.isfinite(model.f(0.5, np.asarray(model.poles()))))

    @pytest.mark.parametrize("v", [0.3, 1.5, 3.3])
    def test_antiderivative_against_quadrature(self, model, v):
        from scipy.integrate import quad

        lo = 0.1 if v < 0.8 else v - 0.2
        expected, _ = quad(lambda s: float(model.h(np.asarray([s]))[0]), lo, v, epsabs=0.0, epsrel=1e-12)
        difference = float(model.int_h(np.asarray([v]))[0] - model.int_h(np.asarray([lo]))[0])
        assert difference == pytest.approx(expected, rel=1e-8, abs=1e-12)

    def test_weighted_reading_solves_the_equation(self, model, fig1_phys):
        assert pde_residual(model, fig1_phys) < 1e-4

    def test_auto_reading_picks_the_smallest_residual(self, fig1_phys, linear_config):
        reading, scores = select_reading("linear_aux", fig1_phys, linear_config)
        assert set(scores) == {"printed", "normalized", "weighted"}
        assert reading == "weighted"
        assert scores["weighted"] == min(scores.values())

    def test_printed_ingredient_is_reconciled(self, fig1_phys, linear_config):
        model = LinearAuxFamily(fig1_phys, linear_config, "printed")
        assert model.ingredient.reconciled
        assert model.divergences()["printed_riccati"] > 1e-6

    def test_c1_must_match(self, fig1_phys):
        with pytest.raises(DomainError):
            LinearAuxFamily(fig1_phys, LinearAuxConfig(c1=1.0), "weighted")

    def test_zero_g_amplitude_is_rejected(self):
        with pytest.raises(ValidationError):
            LinearAuxConfig(amp_b3=0.0)

    def test_unknown_reading(self, fig1_phys, linear_config):
        with pytest.raises(DomainError):
            LinearAuxFamily(fig1_phys, linear_config, "verbatim")


class TestQuadAux:
    @pytest.fixture
    def model(self, fig1_phys, quad_config):
        return QuadAuxFamily(fig1_phys, quad_config, "reconciled")

    def test_construction_residuals(self, model):
        residuals = model.construction_residuals()
        assert set(residuals) == {"first_integral", "antiderivative", "q_plus_s", "a0_ode", "a1_ode",
                                  "aux_t", "aux_v", "hopf_f", "hopf_g", "hopf_pde"}
        for name, value in residuals.items():
            assert value < 1e-6, name

    def test_intermediates(self, model, fig1_phys):
        cfg = model.config
        t, v = model.sample(n=8, seed=3)
        pieces = model.rational_form(t, v)
        h = model.h(v)
        weight = fig1_phys.eta * v / fig1_phys.big_b
        np.testing.assert_allclose(pieces.b1, cfg.s1 * h * (cfg.c1 - cfg.k0) / 2.0 - cfg.s0 * cfg.c2 * h
                                   - weight * cfg.s1, rtol=1e-12)
        np.testing.assert_allclose(pieces.d0, cfg.mu * (cfg.c0 * cfg.s1 - cfg.s0 * (cfg.c1 + cfg.k0) / 2.0),
                                   rtol=1e-12)
        np.testing.assert_allclose(pieces.a1 / pieces.a0, 2.0 * cfg.c2 / (cfg.c1 - cfg.k0), rtol=1e-14)

    def test_coefficients(self, model):
        cfg = model.config
        assert cfg.k0 == pytest.approx(10 * 1.7 / -0.5)
        assert cfg.c0 == pytest.approx((cfg.c1 ** 2 - cfg.k0 ** 2) / (4.0 * cfg.c2))

    def test_long_time_limit(self, model, fig1_phys):
        v = np.linspace(-2.0 * fig1_phys.sigma, 2.0 * fig1_phys.sigma, 9)
        v = v[~model.ingredient.pole_mask(v, rtol=0.1)]
        late = model.g(50.0 / model.rate, v)
        expected = (-10 * 1.7 - model.config.c1 * -0.5) / (2.0 * model.config.c2 * -0.5)
        assert model.g_limit() == pytest.approx(expected, rel=1e-14)
        np.testing.assert_allclose(late, model.g_limit(), rtol=1e-10)

    def test_solves_the_equation(self, model, fig1_phys):
        assert pde_residual(model, fig1_phys) < 1e-4

    def test_printed_first_integral_diverges(self, fig1_phys, quad_config):
        model = QuadAuxFamily(fig1_phys, quad_config, "printed")
        assert model.divergences()["printed_first_integral"] > 1e-6

    def test_auto_reading(self, fig1_phys, quad_config):
        handle = build_solution("quad_aux", fig1_phys, quad_config)
        assert handle.reading == "reconciled"
        assert set(handle.reading_scores) == {"printed", "reconciled"}

    def test_degenerate_c1(self, fig1_phys):
        with pytest.raises(DomainError):
            QuadAuxFamily(fig1_phys, QuadAuxConfig(c1=10 * 1.7 / -0.5), "reconciled")


def initial_mixture(model):
    """(weights, means, variance) of the t = 0 profile written as three Gaussians in v."""
    cfg, phys = model.config, model.phys
    a = phys.eta / (4.0 * phys.big_b * cfg.b0_const)
    amplitude = 0.5 * cfg.s1 * cfg.b2
    terms = [(model.kappa, amplitude * np.exp(model.kappa * cfg.a1_const)),
             (-model.kappa, amplitude * np.exp(-model.kappa * cfg.a1_const)),
             (-0.5 * cfg.p1, cfg.s0)]
    weights, means = [], []
    for rate, weight in terms:
        b = rate / cfg.b0_const
        weights.append(weight * np.exp(b ** 2 / (4.0 * a)) * np.sqrt(np.pi / a) / (cfg.b1 + cfg.b2 * cfg.b3))
        means.append(b / (2.0 * a))
    return weights, means, 1.0 / (2.0 * a)


class TestSelfSimilar:
    @pytest.fixture
    def model(self, fig1_phys, selfsim_config):
        return SelfSimFamily(fig1_phys, selfsim_config, "reconciled")

    @pytest.fixture
    def printed(self, fig1_phys, selfsim_config):
        return SelfSimFamily(fig1_phys, selfsim_config, "printed")

    def test_construction_residuals(self, model):
        residuals = model.construction_residuals()
        assert set(residuals) == {"omega_ode", "alpha_ode", "gamma_ode", "riccati", "antiderivative",
                                  "aux_t", "aux_z", "hopf_f", "hopf_g", "hopf_pde"}
        for name, value in residuals.items():
            assert value < 1e-6, name

    def test_omega_riccati(self, model):
        t = np.linspace(0.0, 3.0, 7)
        omega = model.omega_riccati(t)
        np.testing.assert_allclose(omega, 1.0 / (1.5 + 1.7 * t), rtol=1e-15)
        slope = central_diff(model.omega_riccati, t, 1e-4)
        np.testing.assert_allclose(slope, -1.7 * omega ** 2, rtol=1e-8)
        with pytest.raises(DomainError):
            model.omega_riccati(-1.0)

    def test_reconciled_omega(self, model, printed):
        assert float(model.omega(0.0)) == pytest.approx(1.0 / 1.5, rel=1e-15)
        t = np.linspace(0.2, 3.0, 6)
        assert not np.allclose(model.omega(t), printed.omega(t), rtol=1e-3)
        assert float(model.alpha(0.0)) == pytest.approx(1.7 * 1.5 / (4.0 * 5.0), rel=1e-14)
        # alpha omega^2 = 1 / (2 var) with var relaxing to B/eta
        np.testing.assert_allclose(model.alpha(t) * model.omega(t) ** 2, 0.5 / model.variance(t), rtol=1e-12)
        assert float(model.variance(40.0)) == pytest.approx(5.0 / 1.7, rel=1e-12)

    def test_readings_agree_initially(self, model, printed):
        v = np.linspace(-3.0, 3.0, 7)
        np.testing.assert_allclose(model.f(0.0, v), printed.f(0.0, v), rtol=1e-10)

    def test_reconciled_solves_the_equation(self, model, fig1_phys):
        assert pde_residual(model, fig1_phys) < 1e-6

    @pytest.mark.parametrize("t", [0.0, 0.7, 2.0])
    def test_matches_the_propagated_initial_profile(self, model, fig1_phys, t):
        weights, means, var0 = initial_mixture(model)
        v = np.linspace(-6.0, 6.0, 25)
        expected = gaussian_mixture_density(fig1_phys, weights, means, var0, t, v)
        np.testing.assert_allclose(model.f(t, v), expected, rtol=1e-9)

    def test_mass_is_conserved(self, model):
        from scipy.integrate import quad

        weights, _, _ = initial_mixture(model)
        mass, _ = quad(lambda v: float(model.f(2.0, v)), -40.0, 40.0, limit=200)
        assert mass == pytest.approx(sum(weights), rel=1e-8)

    def test_hopf_fields_are_log_derivatives(self, model):
        t, z = model.sample(n=8, seed=4)
        big_f, big_g = model.hopf_fields(t, z)
        f = model.f_natural(t, z)
        f_z = central_diff(lambda x: model.f_natural(t, x), z, 1e-4)
        f_t = central_diff(lambda s: model.f_natural(s, z), t, 1e-4)
        np.testing.assert_allclose(big_f, f_z / f, rtol=1e-6, atol=1e-6 * np.max(np.abs(f_z / f)))
        np.testing.assert_allclose(big_g, f_t / f, rtol=1e-6, atol=1e-6 * np.max(np.abs(f_t / f)))

    def test_printed_omega_breaks_the_hopf_equation(self, printed):
        residuals = printed.construction_residuals()
        for name in ("omega_ode", "alpha_ode", "gamma_ode", "hopf_f", "hopf_g"):
            assert residuals[name] < 1e-6, name
        assert residuals["hopf_pde"] > 1e-3
        divergences = printed.divergences()
        assert divergences["printed_omega"] > 1e-6
        assert divergences["omega_consistency"] > 1e-3

    def test_singular_initial_profile(self, fig1_phys):
        with pytest.raises(DomainError):
            SelfSimFamily(fig1_phys, SelfSimConfig(b1=-0.7, b2=0.7, b3=1.0), "reconciled")

    def test_tanh_branch_needs_positive_discriminant(self, fig1_phys):
        with pytest.raises(DomainError):
            SelfSimFamily(fig1_phys, SelfSimConfig(p1=0.0, a0_const=-1.0), "reconciled")

    def test_auto_reading(self, fig1_phys, selfsim_config):
        handle = build_solution("self_similar", fig1_phys, selfsim_config)
        assert handle.reading == "reconciled"
        assert handle.reading_scores["reconciled"] < 1e-6 < handle.reading_scores["printed"]


@pytest.mark.parametrize("family, config_fixture", [
    ("linear_aux", "linear_config"),
    ("quad_aux", "quad_config"),
    ("self_similar", "selfsim_config"),
])
def test_rational_form_reproduces_the_solution(request, fig1_phys, family, config_fixture):
    handle = build_solution(family, fig1_phys, request.getfixturevalue(config_fixture))
    model = handle.model
    t, y = model.sample(n=10, seed=5)
    pieces = model.rational_form(t, y)
    g = model.g(t, y)
    assembled = (pieces.s1 * g + pieces.s0) / (pieces.a1 * g + pieces.a0)
    np.testing.assert_allclose(assembled, model.f_natural(t, y), rtol=1e-9)


@pytest.mark.parametrize("family, config_fixture", [
    ("linear_aux", "linear_config"),
    ("quad_aux", "quad_config"),
    ("self_similar", "selfsim_config"),
])
def test_auxiliary_equations_are_compatible(request, fig1_phys, family, config_fixture):
    handle = build_solution(family, fig1_phys, request.getfixturevalue(config_fixture))
    t, y = handle.model.sample()
    assert compatibility_residual(handle, t, y) < 1e-5
    assert max(construction_residuals(handle, (t, y)).values()) < 1e-6


class TestFractionalLift:
    @pytest.fixture
    def time_map(self):
        return TimeMap(FracParams.caputo(0.99, T0))

    def test_identity_map_is_the_classical_solution(self, fig3_phys, linear_config):
        handle = build_solution("linear_aux", fig3_phys, linear_config, TimeMap.identity(), "weighted")
        t = np.linspace(0.0, 1.0, 5)
        v = np.linspace(-4.0, 4.0, 5)
        assert not handle.lifted
        assert handle.p_of_t() is None
        np.testing.assert_array_equal(handle(t, v), handle.classical(t, v))
        np.testing.assert_array_equal(fractional_lift(handle, t, v), handle.classical(t, v))

    def test_lift_needs_a_time_map(self, fig3_phys, linear_config):
        handle = build_solution("linear_aux", fig3_phys, linear_config, reading="weighted")
        with pytest.raises(DomainError):
            fractional_lift(handle, 0.5, 0.0)

    def test_chain_rule(self, fig3_phys, linear_config, time_map, rng):
        handle = build_solution("linear_aux", fig3_phys, linear_config, time_map, "weighted")
        t = rng.uniform(0.1, 1.0, 20)
        v = rng.uniform(-2.0 * fig3_phys.sigma, 2.0 * fig3_phys.sigma, 20)
        lifted_slope = central_diff(lambda s: handle(s, v), t, 1e-4)
        tau = time_map.tau(t)
        classical_slope = central_diff(lambda s: handle.classical(s, v), tau, 1e-4)
        expected = classical_slope / time_map.p(t)
        np.testing.assert_allclose(lifted_slope, expected, rtol=1e-6, atol=1e-8 * np.max(np.abs(expected)))

    def test_lifted_residual_tracks_the_classical_one(self, fig3_phys, linear_config, time_map, rng):
        handle = build_solution("linear_aux", fig3_phys, linear_config, time_map, "weighted")
        t = rng.uniform(0.1, 1.0, 20)
        v = rng.uniform(-2.0 * fig3_phys.sigma, 2.0 * fig3_phys.sigma, 20)
        lifted = residual_fpe(handle, fig3_phys, handle.p_of_t(), t, v, t_horizon=T0)
        classical = residual_fpe(handle.classical, fig3_phys, None, time_map.tau(t), v)
        assert classical.rel_l_inf < 1e-6
        assert lifted.rel_l_inf <= 2.0 * classical.rel_l_inf + 1e-9

    def test_horizon_is_enforced(self, fig3_phys, linear_config, time_map):
        handle = build_solution("linear_aux", fig3_phys, linear_config, time_map, "weighted")
        with pytest.raises(DomainError):
            handle(T0, 0.0)

    def test_evaluation_is_deterministic(self, fig3_phys, linear_config, time_map):
        handle = build_solution("linear_aux", fig3_phys, linear_config, time_map, "weighted")
        t = np.linspace(0.0, 5.0, 13)
        v = np.linspace(-8.0, 8.0, 17)
        np.testing.assert_array_equal(handle.grid(t, v, parallel=True), handle.grid(t, v, parallel=False))

    def test_wrong_config_type(self, fig3_phys, quad_config):
        with pytest.raises(DomainError):
            build_solution("linear_aux", fig3_phys, quad_config)
