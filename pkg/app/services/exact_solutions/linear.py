"""Exact solutions built on the linear auxiliary equation g_t = mu (c1 g + c0), g_v = h (c1 g + c0).

With x = v sqrt(eta/2B) the pieces are

    s1(v)  = A2 e^{-xi^2} + A1 sqrt(2B/eta) e^{-F0^2/(2 B m^2 eta)} D(xi)
    Q1(v)  = B (B0 H_n(x) + 1F1(-n/2; 1/2; x^2))
    P1(v)  = -mu sqrt(2B/eta) B0 H_{n-1}(x) + mu v 1F1(1 - n/2; 3/2; x^2)
    h      = P1 / Q1 = -(1/c1) Q1'/Q1,   c1 = n eta / mu
    g      = -c0/c1 + B3 e^{n eta t} / Q1

where xi is x shifted by the drift F0/(m eta) and D is Dawson's function.
The assembled f = (s1 g + s0)/(a1 g + a0) with a1 = c1/c0, a0 = 1 is
evaluated with its denominator cleared: (c1/c0) B3 is constant, so f has no
poles even where Q1 vanishes. Its Hopf fields have

    b1 = s1',  b0 = s0' + h (c0 s1 - c1 s0),  d1 = 0,  d0 = mu (c0 s1 - c1 s0)

and b1, b0 obey

    B b1' = -(eta v - F0/m) b1 - eta s1
    B b0' = d0 - eta s0 - (eta v - F0/m) b0 - B c0 h b1 + B c1 h b0
"""
import logging
from typing import Dict, Tuple

import numpy as np
from scipy import special

from app.config import settings
from app.exceptions import DomainError
from app.schemas import LINEAR_READINGS, LinearAuxConfig, PhysParams, SolutionFamily
from app.services.exact_solutions.base import (ExactFamily, RationalForm, RiccatiConstraint, assemble,
                                               check_exponent, near_zero, raise_on_poles, reconcile_ode,
                                               scale_free)
from app.services.specfun import hermite, kummer_1f1
from app.utils import central_diff

logger = logging.getLogger(__name__)


class LinearAuxFamily(ExactFamily):
    family = SolutionFamily.LINEAR_AUX
    readings = LINEAR_READINGS

    def __init__(self, phys: PhysParams, config: LinearAuxConfig, reading: str = "weighted"):
        try:
            resolved = config.resolved(phys)
        except ValueError as e:
            raise DomainError(str(e))
        super().__init__(phys, resolved, reading)
        cfg = self.config
        self.rate = cfg.n * phys.eta
        self.b3 = cfg.g_amplitude
        self.constraint = RiccatiConstraint(phys.big_b, phys.eta, const=cfg.mu, k=cfg.c1)
        half = settings.RECONCILE_HALF_WIDTH * phys.sigma
        q = self.q1_printed if reading == "printed" else self.q1
        self.ingredient = reconcile_ode(
            self.constraint, q, lambda v: -cfg.c1 * self.p1(v), phys.sigma, (-half, half),
            np.linspace(-2.0 * phys.sigma, 2.0 * phys.sigma, 23), name="h_linear",
        )
        if self.ingredient.reconciled:
            logger.info(f"linear_aux/{reading}: h taken from the integrated Riccati linearization")

    def x(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) * self.phys.x_scale

    def s1(self, v) -> np.ndarray:
        """Stationary profile: Gaussian plus Dawson term about the drift velocity F0/(m eta)."""
        phys, cfg = self.phys, self.config
        shift = cfg.f0 / (phys.mass * phys.eta)
        xi = (np.asarray(v, dtype=float) - shift) * phys.x_scale
        damping = np.exp(-cfg.f0 ** 2 / (2.0 * phys.big_b * phys.mass ** 2 * phys.eta))
        return (cfg.amp_a2 * np.exp(-xi ** 2)
                + cfg.amp_a1 * np.sqrt(2.0 * phys.big_b / phys.eta) * damping * special.dawsn(xi))

    def s1_prime(self, v) -> np.ndarray:
        phys, cfg = self.phys, self.config
        shift = cfg.f0 / (phys.mass * phys.eta)
        xi = (np.asarray(v, dtype=float) - shift) * phys.x_scale
        damping = np.exp(-cfg.f0 ** 2 / (2.0 * phys.big_b * phys.mass ** 2 * phys.eta))
        # D'(xi) = 1 - 2 xi D(xi)
        return phys.x_scale * (-2.0 * xi * cfg.amp_a2 * np.exp(-xi ** 2)
                               + cfg.amp_a1 * np.sqrt(2.0 * phys.big_b / phys.eta) * damping
                               * (1.0 - 2.0 * xi * special.dawsn(xi)))

    def _hermite_part(self, v) -> np.ndarray:
        return self.config.amp_b0 * np.asarray(hermite(self.config.n, self.x(v)))

    def _kummer_part(self, v) -> np.ndarray:
        return np.asarray(kummer_1f1(-0.5 * self.config.n, 0.5, self.x(v) ** 2))

    def q1(self, v) -> np.ndarray:
        return self.phys.big_b * (self._hermite_part(v) + self._kummer_part(v))

    def q1_printed(self, v) -> np.ndarray:
        return self.phys.big_b * self._hermite_part(v) + self._kummer_part(v)

    def p1(self, v) -> np.ndarray:
        phys, cfg = self.phys, self.config
        v = np.asarray(v, dtype=float)
        x = self.x(v)
        return (-cfg.mu * np.sqrt(2.0 * phys.big_b / phys.eta) * cfg.amp_b0 * np.asarray(hermite(cfg.n - 1, x))
                + cfg.mu * v * np.asarray(kummer_1f1(1.0 - 0.5 * cfg.n, 1.5, x ** 2)))

    def s_aux(self, v) -> np.ndarray:
        """Companion s(v) with (Q1 + s)' = P1."""
        phys, cfg = self.phys, self.config
        factor = (self.rate + cfg.mu) / self.rate
        return factor * phys.big_b * (1.0 - self._hermite_part(v) - self._kummer_part(v))

    def h(self, v) -> np.ndarray:
        return self.ingredient.h(v)

    def int_h(self, v) -> np.ndarray:
        return self.ingredient.int_h(v)

    def poles(self, v_min: float = -5.0, v_max: float = 5.0):
        return self.ingredient.poles(v_min, v_max)

    def s0_profile(self, v) -> np.ndarray:
        cfg = self.config
        v = np.asarray(v, dtype=float)
        if self.reading == "weighted":
            return cfg.s0 + (cfg.c0 / cfg.c1) * self.s1(v) + cfg.amp_b1 * np.exp(-self.x(v) ** 2)
        return np.full(v.shape, cfg.s0)

    def s0_prime(self, v) -> np.ndarray:
        cfg = self.config
        v = np.asarray(v, dtype=float)
        if self.reading == "weighted":
            x = self.x(v)
            return ((cfg.c0 / cfg.c1) * self.s1_prime(v)
                    - 2.0 * x * self.phys.x_scale * cfg.amp_b1 * np.exp(-x ** 2))
        return np.zeros(v.shape)

    @property
    def a1(self) -> float:
        return self.config.c1 / self.config.c0

    @property
    def a0(self) -> float:
        return 1.0

    def _g_parts(self, t, v) -> Tuple[np.ndarray, np.ndarray]:
        """g = numer/denom with denom = Q1 e^{-n eta t}, finite across the zeros of Q1."""
        cfg = self.config
        decaying = self.ingredient.phi(v) * np.exp(-self.rate * t)
        return -(cfg.c0 / cfg.c1) * decaying + self.b3, decaying

    def g(self, t, v) -> np.ndarray:
        cfg = self.config
        t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
        check_exponent(self.rate * t, "g_linear")
        phi = self.ingredient.phi(v)
        raise_on_poles(self.ingredient.pole_mask(v), [t, v], "g_linear")
        return -cfg.c0 / cfg.c1 + self.b3 * np.exp(self.rate * t) / phi

    def aux_rhs(self, t, v) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        linear = cfg.c1 * self.g(t, v) + cfg.c0
        return cfg.mu * linear, self.h(v) * linear

    def f(self, t, v) -> np.ndarray:
        t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
        numer, denom = self._g_parts(t, v)
        # a1 numer + a0 denom = a1 B3 since a0 = a1 c0/c1
        return assemble(self.s1(v), self.s0_profile(v), numer, denom, self.a1 * self.b3)

    def rational_form(self, t, v) -> RationalForm:
        cfg = self.config
        t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
        s1, s0 = self.s1(v), self.s0_profile(v)
        mixed = cfg.c0 * s1 - cfg.c1 * s0
        return RationalForm(s1=s1, s0=s0, a1=np.full(v.shape, self.a1), a0=np.full(v.shape, self.a0),
                            b1=self.s1_prime(v), b0=self.s0_prime(v) + self.h(v) * mixed,
                            d1=np.zeros(v.shape), d0=cfg.mu * mixed)

    def hopf_coefficients(self, t, v) -> Tuple[np.ndarray, np.ndarray]:
        drift, diffusion = super().hopf_coefficients(t, v)
        return drift - self.config.f0 / self.phys.mass, diffusion

    def reject(self, t, v) -> np.ndarray:
        t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
        numer, denom = self._g_parts(t, v)
        left, right = self.s1(v) * numer, self.s0_profile(v) * denom
        return (self.ingredient.pole_mask(v, rtol=0.1)
                | near_zero(left + right, np.abs(left) + np.abs(right), 0.1))

    @property
    def sample_region(self):
        two_sigma = 2.0 * self.phys.sigma
        return (0.0, 1.0), (-two_sigma, two_sigma)

    @property
    def steps(self) -> Tuple[float, float]:
        return 1e-3 / self.rate, 1e-3 * self.phys.sigma

    def constraint_residuals(self, t: np.ndarray, v: np.ndarray) -> Dict[str, float]:
        phys, cfg = self.phys, self.config
        big_b, h_v = phys.big_b, self.steps[1]
        drift = phys.eta * v - cfg.f0 / phys.mass
        s1_terms = (big_b * central_diff(self.s1, v, h_v, order=2),
                    drift * central_diff(self.s1, v, h_v), phys.eta * self.s1(v))
        d_int = central_diff(self.int_h, v, h_v)
        h = self.h(v)
        d_q_plus_s = central_diff(lambda y: self.q1(y) + self.s_aux(y), v, h_v)
        p1 = self.p1(v)

        pieces = self.rational_form(t, v)
        s1, s0, b1, b0 = pieces.s1, pieces.s0, pieces.b1, pieces.b0
        b1_lhs = big_b * central_diff(self.s1_prime, v, h_v)
        b1_rhs = (-drift * b1, -phys.eta * s1)
        d_b0 = central_diff(lambda y: self.rational_form(t, y).b0, v, h_v)
        b0_rhs = (pieces.d0, -phys.eta * s0, -drift * b0, -big_b * cfg.c0 * h * b1, big_b * cfg.c1 * h * b0)
        # a0 is constant, so its equation reduces to an identity among the b0 pieces
        a0_rhs = (-cfg.c0 * self.a1 * h * s0, -b0, cfg.c0 * h * s1, self.s0_prime(v))
        return {
            "s1_ode": scale_free(sum(s1_terms), *s1_terms),
            "riccati": self.constraint.scale_free_residual(self.h, v, h_v),
            "antiderivative": scale_free(d_int - h, d_int, h),
            "q_plus_s": scale_free(d_q_plus_s - p1, d_q_plus_s, p1),
            "b1_ode": scale_free(b1_lhs - sum(b1_rhs), b1_lhs, *b1_rhs),
            "b0_ode": scale_free(big_b * d_b0 - sum(b0_rhs), big_b * d_b0, *b0_rhs),
            "a0_ode": scale_free(sum(a0_rhs), *a0_rhs),
        }

    def divergences(self) -> Dict[str, float]:
        if self.ingredient.reconciled:
            return {"printed_riccati": self.ingredient.closed_form_residual}
        return {}
