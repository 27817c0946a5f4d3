"""Exact solutions built on the Riccati auxiliary equation.

    g_t = mu (c2 g^2 + c1 g + c0),   g_v = h (c2 g^2 + c1 g + c0)

with c0 = (c1^2 - k0^2)/(4 c2) and k0 = n eta / mu. The roots of
c2 g^2 + c1 g + c0 are (-c1 +- k0)/(2 c2), which gives

    g = [k0 (e - 1) - c1 (e + 1)] / [2 c2 (e + 1)],   e = Q(v) e^{-n eta t}

with h = -(1/k0) Q'/Q and Q = n eta B (B0 H_n(x) + 1F1(-n/2; 1/2; x^2)).
The coefficients a0 = B1 e^{x^2}, a1 = 2 c2 a0 / (c1 - k0) make the cleared
denominator a1 * numer(g) + a0 * denom(g) equal to a0 times the constant
-4 c2 k0/(c1 - k0). The Hopf fields of f have

    b1 = s1 h (c1 - k0)/2 - s0 c2 h - (eta v/B) s1
    b0 = s1 c0 h - s0 h (c1 + k0)/2 - (eta v/B) s0
    d1 = mu (s1 (c1 - k0)/2 - c2 s0)
    d0 = mu (s1 c0 - s0 (c1 + k0)/2)

with a0' = (eta v/B) a0.
"""
import logging
from typing import Dict, Tuple

import numpy as np

from app.config import settings
from app.exceptions import DomainError
from app.schemas import QUAD_READINGS, PhysParams, QuadAuxConfig, SolutionFamily
from app.services.exact_solutions.base import (ExactFamily, RationalForm, RiccatiConstraint, assemble,
                                               check_exponent, near_zero, raise_on_poles, reconcile_ode,
                                               scale_free)
from app.services.specfun import hermite, kummer_1f1
from app.utils import central_diff

logger = logging.getLogger(__name__)


class QuadAuxFamily(ExactFamily):
    family = SolutionFamily.QUAD_AUX
    readings = QUAD_READINGS

    def __init__(self, phys: PhysParams, config: QuadAuxConfig, reading: str = "reconciled"):
        try:
            resolved = config.resolved(phys)
        except ValueError as e:
            raise DomainError(str(e))
        super().__init__(phys, resolved, reading)
        cfg = self.config
        self.rate = cfg.n * phys.eta
        self.k0 = cfg.k0
        # printed first integral carries eta where the construction has mu
        constant = phys.eta if reading == "printed" else cfg.mu
        self.constraint = RiccatiConstraint(phys.big_b, phys.eta, const=constant, k=self.k0)
        q = self.q_printed if reading == "printed" else self.q
        half = settings.RECONCILE_HALF_WIDTH * phys.sigma
        self.ingredient = reconcile_ode(
            self.constraint, q, lambda v: self.k0 * self.p(v), phys.sigma, (-half, half),
            np.linspace(-2.0 * phys.sigma, 2.0 * phys.sigma, 23), name="h_quadratic",
        )

    def x(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) * self.phys.x_scale

    def _hermite_part(self, v) -> np.ndarray:
        return self.config.b0_hermite * np.asarray(hermite(self.config.n, self.x(v)))

    def _kummer_part(self, v) -> np.ndarray:
        return np.asarray(kummer_1f1(-0.5 * self.config.n, 0.5, self.x(v) ** 2))

    def q(self, v) -> np.ndarray:
        return self.rate * self.phys.big_b * (self._hermite_part(v) + self._kummer_part(v))

    def q_printed(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.rate * self.phys.big_b * (self._hermite_part(v) - self.rate * v * self._kummer_part(v))

    def p(self, v) -> np.ndarray:
        phys, cfg = self.phys, self.config
        v = np.asarray(v, dtype=float)
        x = self.x(v)
        return cfg.mu * (np.sqrt(2.0 * phys.big_b * phys.eta) * cfg.n * cfg.b0_hermite
                         * np.asarray(hermite(cfg.n - 1, x))
                         - self.rate * v * np.asarray(kummer_1f1(1.0 - 0.5 * cfg.n, 1.5, x ** 2)))

    def s_aux(self, v) -> np.ndarray:
        """Companion S(v) with (Q + S)' = -P."""
        phys, cfg = self.phys, self.config
        return ((self.rate + cfg.mu) * phys.big_b
                * (1.0 - self._hermite_part(v) - self._kummer_part(v)))

    def h(self, v) -> np.ndarray:
        return self.ingredient.h(v)

    def int_h(self, v) -> np.ndarray:
        return self.ingredient.int_h(v)

    def poles(self, v_min: float = -5.0, v_max: float = 5.0):
        return self.ingredient.poles(v_min, v_max)

    def _e(self, t, v) -> np.ndarray:
        return self.ingredient.phi(v) * np.exp(-self.rate * t)

    def _g_parts(self, t, v) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        e = self._e(t, v)
        return self.k0 * (e - 1.0) - cfg.c1 * (e + 1.0), 2.0 * cfg.c2 * (e + 1.0)

    def g(self, t, v) -> np.ndarray:
        t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
        numer, denom = self._g_parts(t, v)
        raise_on_poles(near_zero(denom, np.abs(numer) + np.abs(denom)), [t, v], "g_quadratic")
        return numer / denom

    def g_limit(self) -> float:
        """Value of g once the exponential has decayed: (-n eta - c1 mu) / (2 c2 mu)."""
        cfg = self.config
        return (-self.k0 - cfg.c1) / (2.0 * cfg.c2)

    def a0(self, v) -> np.ndarray:
        x_sq = self.x(v) ** 2
        check_exponent(x_sq, "a0_quadratic")
        return self.config.b1_const * np.exp(x_sq)

    def a1(self, v) -> np.ndarray:
        cfg = self.config
        return 2.0 * cfg.c2 * self.a0(v) / (cfg.c1 - self.k0)

    def aux_rhs(self, t, v) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        g = self.g(t, v)
        quadratic = cfg.c2 * g ** 2 + cfg.c1 * g + cfg.c0
        return cfg.mu * quadratic, self.h(v) * quadratic

    def f(self, t, v) -> np.ndarray:
        cfg = self.config
        t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
        numer, denom = self._g_parts(t, v)
        # a1 numer + a0 denom = a0 (2 c2 numer/(c1 - k0) + denom) = -4 c2 k0 a0/(c1 - k0)
        return assemble(cfg.s1, cfg.s0, numer, denom, -4.0 * cfg.c2 * self.k0 * self.a0(v) / (cfg.c1 - self.k0))

    def rational_form(self, t, v) -> RationalForm:
        cfg, phys = self.config, self.phys
        t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
        s1, s0 = np.full(v.shape, cfg.s1), np.full(v.shape, cfg.s0)
        h = self.h(v)
        weight = phys.eta * v / phys.big_b
        upper = s1 * (cfg.c1 - self.k0) / 2.0 - cfg.c2 * s0
        lower = cfg.c0 * s1 - s0 * (cfg.c1 + self.k0) / 2.0
        return RationalForm(s1=s1, s0=s0, a1=self.a1(v), a0=self.a0(v),
                            b1=h * upper - weight * s1, b0=h * lower - weight * s0,
                            d1=cfg.mu * upper, d0=cfg.mu * lower)

    def reject(self, t, v) -> np.ndarray:
        cfg = self.config
        numer, denom = self._g_parts(t, v)
        left, right = cfg.s1 * numer, cfg.s0 * denom
        return (self.ingredient.pole_mask(v, rtol=0.1)
                | near_zero(denom, np.abs(numer) + np.abs(denom), 0.1)
                | near_zero(left + right, np.abs(left) + np.abs(right), 0.1))

    @property
    def sample_region(self):
        two_sigma = 2.0 * self.phys.sigma
        return (0.0, 1.0), (-two_sigma, two_sigma)

    @property
    def steps(self) -> Tuple[float, float]:
        return 1e-3 / self.rate, 1e-3 * self.phys.sigma

    def constraint_residuals(self, t: np.ndarray, v: np.ndarray) -> Dict[str, float]:
        cfg = self.config
        h_v = self.steps[1]
        d_int = central_diff(self.int_h, v, h_v)
        h = self.h(v)
        d_q_plus_s = central_diff(lambda y: self.q(y) + self.s_aux(y), v, h_v)
        minus_p = -self.p(v)
        pieces = self.rational_form(t, v)
        s1, s0, a1, a0 = pieces.s1, pieces.s0, pieces.a1, pieces.a0
        a0_lhs = s0 * central_diff(self.a0, v, h_v)
        a0_rhs = (-a0 * pieces.b0, -cfg.c0 * s0 * a1 * h, cfg.c0 * s1 * a0 * h)
        a1_lhs = s1 * central_diff(self.a1, v, h_v)
        a1_rhs = (-a1 * pieces.b1, -cfg.c2 * s0 * a1 * h, cfg.c2 * s1 * a0 * h)
        return {
            "first_integral": self.constraint.scale_free_residual(self.h, v, h_v),
            "antiderivative": scale_free(d_int - h, d_int, h),
            "q_plus_s": scale_free(d_q_plus_s - minus_p, d_q_plus_s, minus_p),
            "a0_ode": scale_free(a0_lhs - sum(a0_rhs), a0_lhs, *a0_rhs),
            "a1_ode": scale_free(a1_lhs - sum(a1_rhs), a1_lhs, *a1_rhs),
        }

    def divergences(self) -> Dict[str, float]:
        if self.ingredient.reconciled:
            return {"printed_first_integral": self.ingredient.closed_form_residual}
        return {}
