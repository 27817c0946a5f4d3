"""Self-similar solutions in z = v omega(t).

The auxiliary equation has c0 = c2 = 0, so g_t = mu(t) c1 g and
g_z = h(z) c1 g with mu(t) = A0 omega^2 and

    h(z) = (p1 sqrt(B) + r tanh(kappa (z + A1))) / (2 c1 sqrt(B)),
    kappa = r / (2 sqrt(B)),   r = sqrt(B p1^2 + 4 A0 c1),

a solution of h' = A0/B + p1 h - c1 h^2. Hence
g = B2 exp(c1 M(t) + c1 H(z)) with M' = mu and
c1 H(z) = p1 z / 2 + log cosh(kappa (z + A1)).

In z the equation reads

    f_t = eta f + z (eta - omega'/omega) f_z + B omega^2 f_zz

and the assembly f = (s1 g + s0) / a0 uses a0 = K e^{E}, E = alpha z^2 + p1 z/2 + gamma.
Its Hopf fields have b1 = s1 (c1 h - E_z), b0 = -s0 E_z, d1 = s1 (c1 mu - E_t)
and d0 = -s0 E_t. The z^2, z and constant parts of the equation fix

    alpha' = 4 B alpha^2 omega^2
    gamma' = -eta - B p1^2 omega^2 / 4 + 2 B alpha omega^2
    omega' = omega (eta - 4 B alpha omega^2)

``reconciled`` integrates these from omega(0) = 1/B0, alpha(0) = eta B0/(4B),
gamma(0) = 0 in closed form. With var(t) = B/eta + (V0 - B/eta) e^{-2 eta t} and
V0 = 2 B B0/eta, alpha omega^2 = 1/(2 var). ``printed`` keeps
omega = 1/(B0 + eta t), with which the alpha and gamma equations hold but the
omega equation does not, and lets B3 carry e^{c1 M} into the denominator.
Both readings agree at t = 0.
"""
import logging
import math
from typing import Dict, Tuple

import numpy as np

from app.exceptions import DomainError
from app.schemas import SELFSIM_READINGS, PhysParams, SelfSimConfig, SolutionFamily
from app.services.exact_solutions.base import (ExactFamily, RationalForm, check_exponent, log_cosh,
                                               near_zero, raise_on_poles, scale_free)
from app.utils import central_diff

logger = logging.getLogger(__name__)


class SelfSimFamily(ExactFamily):
    family = SolutionFamily.SELF_SIMILAR
    readings = SELFSIM_READINGS
    aux_variable = "z"

    def __init__(self, phys: PhysParams, config: SelfSimConfig, reading: str = "reconciled"):
        try:
            resolved = config.resolved(phys)
        except ValueError as e:
            raise DomainError(str(e))
        super().__init__(phys, resolved, reading)
        self.kappa = resolved.r / (2.0 * math.sqrt(phys.big_b))
        self.var0 = 2.0 * phys.big_b * resolved.b0_const / phys.eta
        self.big_k = resolved.b1 + resolved.b2 * resolved.b3
        if near_zero(np.asarray(self.big_k), np.asarray(abs(resolved.b1) + abs(resolved.b2 * resolved.b3))):
            raise DomainError("B1 + B2 B3 = 0 makes the initial profile singular")

    # time dependence
    def omega_riccati(self, t) -> np.ndarray:
        """omega = 1/(B0 + eta t), the solution of omega' = -eta omega^2."""
        t = np.asarray(t, dtype=float)
        denom = self.config.b0_const + self.phys.eta * t
        if np.any(denom <= 0):
            raise DomainError("B0 + eta t must stay positive")
        return 1.0 / denom

    def variance(self, t) -> np.ndarray:
        """Variance of the Gaussian factor e^{-E} in v."""
        eta = self.phys.eta
        t = np.asarray(t, dtype=float)
        check_exponent(-2.0 * eta * t, "self-similar variance")
        stationary = self.phys.big_b / eta
        var = stationary + (self.var0 - stationary) * np.exp(-2.0 * eta * t)
        if np.any(var <= 0):
            raise DomainError("the self-similar variance must stay positive")
        return var

    def omega(self, t) -> np.ndarray:
        if self.reading == "printed":
            return self.omega_riccati(t)
        t = np.asarray(t, dtype=float)
        var = self.variance(t)
        return (self.var0 / self.config.b0_const) * np.exp(-self.phys.eta * t) / var

    def omega_printed(self, t, v) -> np.ndarray:
        return np.asarray(v, dtype=float) / np.sqrt(self.config.b0_const + self.phys.eta * np.asarray(t, dtype=float))

    def omega_rate(self, t) -> np.ndarray:
        """omega' as the reading defines it."""
        omega = self.omega(t)
        if self.reading == "printed":
            return -self.phys.eta * omega ** 2
        return omega * (self.phys.eta - 4.0 * self.phys.big_b * self.alpha_omega_sq(t))

    def alpha_omega_sq(self, t) -> np.ndarray:
        if self.reading == "printed":
            return self.phys.eta * self.omega_riccati(t) / (4.0 * self.phys.big_b)
        return 0.5 / self.variance(t)

    def alpha(self, t) -> np.ndarray:
        """z^2 coefficient of E."""
        return self.alpha_omega_sq(t) / self.omega(t) ** 2

    def _omega_sq_integral(self, t) -> np.ndarray:
        cfg, phys = self.config, self.phys
        t = np.asarray(t, dtype=float)
        if self.reading == "printed":
            return (1.0 / cfg.b0_const - self.omega_riccati(t)) / phys.eta
        tail = np.exp(-2.0 * phys.eta * t) / self.variance(t)
        return (self.var0 / cfg.b0_const) ** 2 * (1.0 / self.var0 - tail) / (2.0 * phys.big_b)

    def gamma(self, t) -> np.ndarray:
        """Constant part of E, zero at t = 0."""
        cfg, phys = self.config, self.phys
        t = np.asarray(t, dtype=float)
        spread = phys.big_b * cfg.p1 ** 2 * self._omega_sq_integral(t) / 4.0
        if self.reading == "printed":
            return -phys.eta * t + 0.5 * np.log((cfg.b0_const + phys.eta * t) / cfg.b0_const) - spread
        return 0.5 * np.log(self.variance(t) / self.var0) - spread

    def mu(self, t) -> np.ndarray:
        return self.config.a0_const * self.omega(t) ** 2

    def big_m(self, t) -> np.ndarray:
        """Integral of mu from 0 to t."""
        return self.config.a0_const * self._omega_sq_integral(t)

    # z dependence
    def h(self, z) -> np.ndarray:
        cfg = self.config
        root_b = math.sqrt(self.phys.big_b)
        z = np.asarray(z, dtype=float)
        return (cfg.p1 * root_b + cfg.r * np.tanh(self.kappa * (z + cfg.a1_const))) / (2.0 * cfg.c1 * root_b)

    def c1_int_h(self, z) -> np.ndarray:
        cfg = self.config
        z = np.asarray(z, dtype=float)
        return 0.5 * cfg.p1 * z + log_cosh(self.kappa * (z + cfg.a1_const))

    def int_h(self, z) -> np.ndarray:
        return self.c1_int_h(z) / self.config.c1

    def g(self, t, z) -> np.ndarray:
        cfg = self.config
        exponent = cfg.c1 * self.big_m(t) + self.c1_int_h(z)
        check_exponent(exponent, "g_selfsim")
        return cfg.b2 * np.exp(exponent)

    def aux_rhs(self, t, z) -> Tuple[np.ndarray, np.ndarray]:
        c1g = self.config.c1 * self.g(t, z)
        return self.mu(t) * c1g, self.h(z) * c1g

    # assembly
    def exponent(self, t, z) -> np.ndarray:
        """E(t, z) = alpha z^2 + p1 z / 2 + gamma."""
        z = np.asarray(z, dtype=float)
        return self.alpha(t) * z ** 2 + 0.5 * self.config.p1 * z + self.gamma(t)

    def exponent_slopes(self, t, z) -> Tuple[np.ndarray, np.ndarray]:
        """(E_z, E_t)."""
        big_b, p1 = self.phys.big_b, self.config.p1
        z = np.asarray(z, dtype=float)
        alpha, omega_sq = self.alpha(t), self.omega(t) ** 2
        alpha_rate = 4.0 * big_b * alpha ** 2 * omega_sq
        gamma_rate = -self.phys.eta - 0.25 * big_b * p1 ** 2 * omega_sq + 2.0 * big_b * alpha * omega_sq
        return 2.0 * alpha * z + 0.5 * p1, alpha_rate * z ** 2 + gamma_rate

    def denominator(self, t) -> np.ndarray:
        """a1 g + a0 divided by e^{E}."""
        cfg = self.config
        t = np.asarray(t, dtype=float)
        if self.reading == "printed":
            growth = cfg.b2 * cfg.b3 * np.exp(cfg.c1 * self.big_m(t))
            raise_on_poles(near_zero(cfg.b1 + growth, np.abs(cfg.b1) + np.abs(growth)), [t], "f_selfsim")
            return cfg.b1 + growth
        return np.full(t.shape, self.big_k)

    def f_natural(self, t, z) -> np.ndarray:
        cfg = self.config
        t, z = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(z, dtype=float))
        e = self.exponent(t, z)
        growth = cfg.c1 * self.big_m(t) + self.c1_int_h(z) - e
        check_exponent(np.maximum(growth, -e), "f_selfsim")
        return (cfg.s1 * cfg.b2 * np.exp(growth) + cfg.s0 * np.exp(-e)) / self.denominator(t)

    def f(self, t, v) -> np.ndarray:
        t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
        return self.f_natural(t, v * self.omega(t))

    def rational_form(self, t, z) -> RationalForm:
        cfg = self.config
        t, z = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(z, dtype=float))
        s1, s0 = np.full(z.shape, cfg.s1), np.full(z.shape, cfg.s0)
        scale = np.exp(self.exponent(t, z))
        e_z, e_t = self.exponent_slopes(t, z)
        if self.reading == "printed":
            a1 = cfg.b3 * scale * np.exp(-self.c1_int_h(z))
            a0 = cfg.b1 * scale
            # the time-dependent denominator adds to E_t
            share = (self.denominator(t) - cfg.b1) / self.denominator(t)
            e_t = e_t + cfg.c1 * self.mu(t) * share
        else:
            a1, a0 = np.zeros(z.shape), self.big_k * scale
        c1h, c1mu = cfg.c1 * self.h(z), cfg.c1 * self.mu(t)
        return RationalForm(s1=s1, s0=s0, a1=a1, a0=a0,
                            b1=s1 * (c1h - e_z), b0=-s0 * e_z,
                            d1=s1 * (c1mu - e_t), d0=-s0 * e_t)

    def hopf_coefficients(self, t, z) -> Tuple[np.ndarray, np.ndarray]:
        t, z = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(z, dtype=float))
        omega = self.omega(t)
        return z * (self.phys.eta - self.omega_rate(t) / omega), self.phys.big_b * omega ** 2

    def reject(self, t, z) -> np.ndarray:
        cfg = self.config
        left = cfg.s1 * self.g(t, z)
        right = np.full(np.shape(left), cfg.s0)
        return near_zero(left + right, np.abs(left) + np.abs(right), 0.1)

    @property
    def sample_region(self):
        return (0.0, 1.0), (-2.0, 2.0)

    @property
    def steps(self) -> Tuple[float, float]:
        return 1e-3 * self.config.b0_const / self.phys.eta, 1e-3 * min(1.0, 1.0 / self.kappa)

    def constraint_residuals(self, t: np.ndarray, z: np.ndarray) -> Dict[str, float]:
        cfg, phys = self.config, self.phys
        big_b = phys.big_b
        h_t, h_z = self.steps
        d_omega = central_diff(self.omega, t, h_t)
        omega_rate = self.omega_rate(t)
        omega_sq, alpha = self.omega(t) ** 2, self.alpha(t)
        d_alpha = central_diff(self.alpha, t, h_t)
        alpha_rate = 4.0 * big_b * alpha ** 2 * omega_sq
        d_gamma = central_diff(self.gamma, t, h_t)
        gamma_rhs = (np.full_like(t, -phys.eta), -0.25 * big_b * cfg.p1 ** 2 * omega_sq,
                     2.0 * big_b * alpha * omega_sq)
        h = self.h(z)
        d_h = central_diff(self.h, z, h_z)
        rhs = (np.full_like(z, cfg.a0_const / big_b), cfg.p1 * h, cfg.p2 * h ** 2)
        d_int = central_diff(self.int_h, z, h_z)
        return {
            "omega_ode": scale_free(d_omega - omega_rate, d_omega, omega_rate),
            "alpha_ode": scale_free(d_alpha - alpha_rate, d_alpha, alpha_rate),
            "gamma_ode": scale_free(d_gamma - sum(gamma_rhs), d_gamma, *gamma_rhs),
            "riccati": scale_free(d_h - sum(rhs), d_h, *rhs),
            "antiderivative": scale_free(d_int - h, d_int, h),
        }

    def divergences(self) -> Dict[str, float]:
        """The printed omega(t, v) and 1/(B0 + eta t) measured against the omega equation."""
        t, z = self.sample()
        h_t = self.steps[0]
        v = z * self.config.b0_const
        d_omega = central_diff(lambda s: self.omega_printed(s, v), t, h_t)
        omega_sq = self.phys.eta * self.omega_printed(t, v) ** 2
        riccati = self.omega_riccati(t)
        d_riccati = -self.phys.eta * riccati ** 2
        needed = riccati * (self.phys.eta - self.phys.eta * riccati)
        return {
            "printed_omega": scale_free(d_omega + omega_sq, d_omega, omega_sq),
            "omega_consistency": scale_free(d_riccati - needed, d_riccati, needed),
        }
