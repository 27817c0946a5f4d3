"""Fractional derivatives and their reduction to a non-autonomous ordinary derivative.

Each supported derivative D acts, in reduced form, as D f(t) = p(t) f'(t)
on [0, T0). The rescaled time tau(t) with tau' = 1/p turns the reduced
equation p(t) df/dt = ... into the classical one in tau.
"""
import functools
import logging
import math
from typing import Callable, Optional

import numpy as np
from scipy import special
from scipy.optimize import brentq

from app.config import settings
from app.exceptions import DomainError
from app.schemas import AlgebraReport, DerivativeKind, EvalOptions, FracParams
from app.services.specfun import lower_gamma, mittag_leffler, ml_general
from app.utils import as_array, as_output, central_diff, integrate

logger = logging.getLogger(__name__)

ScalarFunction = Callable[[float], float]

# Gauss-Legendre order used between tau knots
_GL_ORDER = 32
_GL_NODES, _GL_WEIGHTS = special.roots_legendre(_GL_ORDER)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"order alpha must lie in (0, 1), got {alpha}")


def _check_time(t: float) -> float:
    t = float(t)
    if not math.isfinite(t) or t <= 0.0:
        raise DomainError(f"fractional derivatives need t > 0, got {t}")
    return t


def _derivative(f: ScalarFunction, df: Optional[ScalarFunction]) -> ScalarFunction:
    if df is not None:
        return df

    def numeric(s: float) -> float:
        h = 1e-3 * max(1.0, abs(s))
        return float(central_diff(lambda x: np.vectorize(f)(x), s, h))

    return numeric


def caputo_deriv(f: ScalarFunction, alpha: float, t: float,
                 df: Optional[ScalarFunction] = None,
                 options: Optional[EvalOptions] = None) -> float:
    """Caputo derivative (1/Gamma(1-a)) int_0^t (t-s)^{-a} f'(s) ds.

    The substitution u = (t-s)^{1-a} removes the endpoint singularity:
    the integral becomes (1/Gamma(2-a)) int_0^{t^{1-a}} f'(t - u^{1/(1-a)}) du.

    Args:
        f: The function; only used when ``df`` is missing.
        alpha: Order in (0, 1).
        t: Evaluation time, t > 0.
        df: Optional exact derivative of f.
        options: Quadrature tolerances.
    """
    _check_alpha(alpha)
    t = _check_time(t)
    fprime = _derivative(f, df)
    q = 1.0 - alpha
    value = integrate(lambda u: fprime(t - u ** (1.0 / q)), 0.0, t ** q, options,
                      what="Caputo derivative")
    return value / math.gamma(2.0 - alpha)


def cf_deriv(f: ScalarFunction, alpha: float, t: float,
             df: Optional[ScalarFunction] = None,
             options: Optional[EvalOptions] = None) -> float:
    """Caputo-Fabrizio derivative with the exponential kernel e^{-a(t-s)/(1-a)}."""
    _check_alpha(alpha)
    t = _check_time(t)
    fprime = _derivative(f, df)
    k = alpha / (1.0 - alpha)
    prefactor = 2.0 * alpha / ((1.0 - alpha) * (2.0 - alpha))
    value = integrate(lambda s: math.exp(-k * (t - s)) * fprime(s), 0.0, t, options,
                      what="Caputo-Fabrizio derivative")
    return prefactor * value


def ab_deriv(f: ScalarFunction, alpha: float, t: float, ab_norm: float = 1.0,
             df: Optional[ScalarFunction] = None,
             options: Optional[EvalOptions] = None) -> float:
    """Atangana-Baleanu derivative (Caputo sense) with the Mittag-Leffler kernel."""
    _check_alpha(alpha)
    t = _check_time(t)
    if ab_norm <= 0:
        raise DomainError("ab_norm must be positive")
    fprime = _derivative(f, df)
    k = alpha / (1.0 - alpha)

    def integrand(s: float) -> float:
        return mittag_leffler(alpha, -k * (t - s) ** alpha, options) * fprime(s)

    value = integrate(integrand, 0.0, t, options, what="Atangana-Baleanu derivative")
    return ab_norm / (1.0 - alpha) * value


def gawad_deriv(f: ScalarFunction, beta: float, lam: float, t: float,
                gawad_norm: float = 1.0, df: Optional[ScalarFunction] = None,
                options: Optional[EvalOptions] = None) -> float:
    """Stretched-exponential kernel derivative 2 lam^{1/b}/(lam+2) int e^{-lam (t-s)^b} f'(s) ds."""
    if beta <= 0 or lam <= 0:
        raise DomainError("gawad derivative needs beta > 0 and lambda > 0")
    t = _check_time(t)
    fprime = _derivative(f, df)
    prefactor = gawad_norm * 2.0 * lam ** (1.0 / beta) / (lam + 2.0)
    value = integrate(lambda s: math.exp(-lam * (t - s) ** beta) * fprime(s), 0.0, t, options,
                      what="Gawad derivative")
    return prefactor * value


def fractional_deriv(f: ScalarFunction, params: FracParams, t: float,
                     df: Optional[ScalarFunction] = None,
                     options: Optional[EvalOptions] = None) -> float:
    """Integral-form derivative selected by ``params.kind``."""
    kind = params.kind
    if kind == DerivativeKind.CAPUTO:
        return caputo_deriv(f, params.alpha, t, df, options)
    if kind == DerivativeKind.CAPUTO_FABRIZIO:
        return cf_deriv(f, params.alpha, t, df, options)
    if kind == DerivativeKind.ATANGANA_BALEANU:
        return ab_deriv(f, params.alpha, t, params.ab_norm, df, options)
    if kind == DerivativeKind.GAWAD:
        return gawad_deriv(f, params.beta, params.lam, t, params.gawad_norm, df, options)
    if kind == DerivativeKind.CLASSICAL:
        return float(_derivative(f, df)(float(t)))
    raise DomainError(f"{kind.value} has no integral form")


def _check_reduction_time(params: FracParams, t) -> np.ndarray:
    arr = as_array(t, "t")
    if np.any(arr < 0):
        raise DomainError("reduction requires t >= 0")
    if params.has_horizon and np.any(arr >= params.t_horizon):
        raise DomainError(
            f"reduction requires t < T0 = {params.t_horizon} (p vanishes at the horizon)"
        )
    return arr


def _log_expm1(a: np.ndarray) -> np.ndarray:
    """log(e^a - 1) without overflow for large a."""
    a = np.asarray(a, dtype=float)
    big = a > 30.0
    safe = np.where(big, 1.0, a)
    return np.where(big, a + np.log1p(-np.exp(-np.where(big, a, 30.0))), np.log(np.expm1(safe)))


def _p_values(params: FracParams, t: np.ndarray, options: Optional[EvalOptions] = None) -> np.ndarray:
    kind = params.kind
    if kind == DerivativeKind.CLASSICAL:
        return np.ones_like(t)
    if kind == DerivativeKind.POWER_LAW:
        return t ** (1.0 - params.beta) / params.beta
    remaining = params.t_horizon - t
    if kind == DerivativeKind.CAPUTO:
        return remaining ** (1.0 - params.alpha) / math.gamma(2.0 - params.alpha)
    if kind == DerivativeKind.CAPUTO_FABRIZIO:
        k = params.alpha / (1.0 - params.alpha)
        return 2.0 / (2.0 - params.alpha) * (-np.expm1(-k * remaining))
    if kind == DerivativeKind.ATANGANA_BALEANU:
        k = params.alpha / (1.0 - params.alpha)
        e_ab = np.asarray(ml_general(params.alpha, 2.0, -k, remaining, options))
        return params.ab_norm / (1.0 - params.alpha) * remaining * e_ab
    if kind == DerivativeKind.GAWAD:
        gam = np.asarray(lower_gamma(1.0 / params.beta, params.lam * remaining ** params.beta))
        return params.gawad_norm * 2.0 / (params.lam + 2.0) * gam
    raise DomainError(f"unsupported kind {kind}")


def reduction_p(params: FracParams, t, options: Optional[EvalOptions] = None):
    """Multiplier p(t) of the reduced form D f = p(t) f'(t)."""
    arr = _check_reduction_time(params, t)
    return as_output(_p_values(params, arr, options), t)


class TimeMap:
    """Rescaled time tau(t) and multiplier p(t) of one reduction.

    Caputo, Caputo-Fabrizio, classical and power-law maps use closed forms.
    Atangana-Baleanu and Gawad integrate 1/p: a table of cumulative
    integrals on a mesh graded towards T0 is built at construction, and
    queries add the integral from the nearest lower knot.
    """

    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"

    def __init__(self, params: FracParams, options: Optional[EvalOptions] = None,
                 n_knots: Optional[int] = None):
        self.params = params
        self.options = options or EvalOptions()
        self.strategy = (
            self.QUADRATURE
            if params.kind in (DerivativeKind.ATANGANA_BALEANU, DerivativeKind.GAWAD)
            else self.CLOSED_FORM
        )
        self.cached_knots = None
        if self.strategy == self.QUADRATURE:
            self._build_knots(n_knots or settings.TAU_KNOTS)

    def __repr__(self) -> str:
        return f"TimeMap(kind={self.params.kind.value}, strategy={self.strategy})"

    @classmethod
    def identity(cls) -> "TimeMap":
        return cls(FracParams.classical())

    @property
    def t_horizon(self) -> float:
        return self.params.t_horizon if self.params.has_horizon else math.inf

    @property
    def is_identity(self) -> bool:
        return self.params.kind == DerivativeKind.CLASSICAL

    def _inverse_p(self, t: np.ndarray) -> np.ndarray:
        return 1.0 / _p_values(self.params, t, self.options)

    def _gauss_legendre(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        values = self._inverse_p(nodes)
        return half * (values @ _GL_WEIGHTS)

    def _build_knots(self, n_knots: int) -> None:
        t0 = self.params.t_horizon
        k = np.arange(n_knots, dtype=float)
        knots = t0 * (1.0 - (1.0 - k / n_knots) ** 2)
        increments = self._gauss_legendre(knots[:-1], knots[1:])
        tau_knots = np.concatenate([[0.0], np.cumsum(increments)])
        if not np.all(np.diff(tau_knots) > 0):
            raise DomainError(f"1/p is not positive on [0, {t0}) for {self.params.kind.value}")
        self.cached_knots = (knots, tau_knots)
        logger.debug(f"Built {n_knots} tau knots for {self.params.kind.value}; tau(last)={tau_knots[-1]:.6g}")

    def _quadrature_tau(self, t: np.ndarray) -> np.ndarray:
        knots, tau_knots = self.cached_knots
        flat = t.ravel()
        idx = np.searchsorted(knots, flat, side="right") - 1
        result = tau_knots[idx].copy()
        inner = idx < len(knots) - 1
        if np.any(inner):
            result[inner] += self._gauss_legendre(knots[idx[inner]], flat[inner])
        for j in np.flatnonzero(~inner):
            # between the last knot and T0 the integrand is close to its singularity
            result[j] += integrate(lambda s: 1.0 / float(_p_values(self.params, np.asarray(s), self.options)),
                                   knots[-1], flat[j], self.options, what="tau tail")
        return result.reshape(t.shape)

    def _closed_tau(self, t: np.ndarray) -> np.ndarray:
        params = self.params
        kind = params.kind
        if kind == DerivativeKind.CLASSICAL:
            return t.copy()
        if kind == DerivativeKind.POWER_LAW:
            return t ** params.beta
        t0, alpha = params.t_horizon, params.alpha
        if kind == DerivativeKind.CAPUTO:
            return math.gamma(2.0 - alpha) / alpha * (t0 ** alpha - (t0 - t) ** alpha)
        # Caputo-Fabrizio; sign chosen so that tau(0) = 0 and tau' = 1/p > 0
        k = alpha / (1.0 - alpha)
        scale = (2.0 - alpha) * (1.0 - alpha) / (2.0 * alpha)
        return scale * (_log_expm1(k * t0) - _log_expm1(k * (t0 - t)))

    def tau(self, t):
        arr = _check_reduction_time(self.params, t)
        if self.strategy == self.QUADRATURE:
            return as_output(self._quadrature_tau(arr), t)
        return as_output(self._closed_tau(arr), t)

    def p(self, t):
        return reduction_p(self.params, t, self.options)

    def dtau_dt(self, t):
        arr = _check_reduction_time(self.params, t)
        return as_output(1.0 / _p_values(self.params, arr, self.options), t)

    def inverse(self, tau):
        """Physical time whose rescaled time equals ``tau``."""
        arr = as_array(tau, "tau")
        if np.any(arr < 0):
            raise DomainError("tau must be nonnegative")
        params = self.params
        if params.kind == DerivativeKind.CLASSICAL:
            return as_output(arr.copy(), tau)
        if params.kind == DerivativeKind.POWER_LAW:
            return as_output(arr ** (1.0 / params.beta), tau)
        t0 = params.t_horizon
        if params.kind == DerivativeKind.CAPUTO:
            alpha = params.alpha
            inner = t0 ** alpha - alpha * arr / math.gamma(2.0 - alpha)
            if np.any(inner <= 0):
                raise DomainError(f"tau beyond the range reached before T0 = {t0}")
            return as_output(t0 - inner ** (1.0 / alpha), tau)
        t_hi = t0 * (1.0 - 1e-12)
        tau_hi = float(self.tau(t_hi))
        if np.any(arr >= tau_hi):
            raise DomainError(f"tau beyond the range reached before T0 = {t0}")
        result = np.array([
            brentq(lambda s, target=target: float(self.tau(s)) - target, 0.0, t_hi, xtol=1e-14, rtol=1e-14)
            if target > 0 else 0.0
            for target in arr.ravel()
        ]).reshape(arr.shape)
        return as_output(result, tau)


@functools.lru_cache(maxsize=32)
def time_map_for(params: FracParams) -> TimeMap:
    """Shared TimeMap per parameter set; TimeMaps are immutable after construction."""
    return TimeMap(params)


def reduction_tau(params: FracParams, t):
    return time_map_for(params).tau(t)


def gfd_invariant(beta: float, lam: float, t_horizon: float, t, gawad_norm: float = 1.0):
    """exp(tau_G(t)), the function reproduced by the reduced Gawad derivative."""
    params = FracParams.gawad(beta=beta, lam=lam, t_horizon=t_horizon, gawad_norm=gawad_norm)
    tau = time_map_for(params).tau(t)
    return as_output(np.exp(np.asarray(tau)), t)


def _reduced(func: ScalarFunction, params: FracParams, t: float) -> float:
    h = 1e-4 * max(1.0, abs(t))
    derivative = float(central_diff(lambda x: np.vectorize(func)(x), t, h))
    return float(reduction_p(params, t)) * derivative


def reduced_algebra_check(f: ScalarFunction, g: ScalarFunction, params: FracParams,
                          t: float, with_integral_form: bool = True) -> AlgebraReport:
    """Residuals of linearity, product and quotient rules for D f = p f'.

    With ``with_integral_form`` the product rule is also evaluated with the
    integral-form derivative; that residual is generally nonzero and only
    reported.
    """
    t = float(t)
    f_t, g_t = f(t), g(t)
    if g_t == 0.0:
        raise DomainError(f"quotient rule needs g(t) != 0 at t={t}")
    d_f = _reduced(f, params, t)
    d_g = _reduced(g, params, t)

    linearity = _reduced(lambda s: f(s) + g(s), params, t) - d_f - d_g
    product = _reduced(lambda s: f(s) * g(s), params, t) - (f_t * d_g + g_t * d_f)
    quotient = _reduced(lambda s: f(s) / g(s), params, t) - (g_t * d_f - f_t * d_g) / g_t ** 2

    integral_product = None
    if with_integral_form and params.derivative_backed and params.has_horizon:
        fg = fractional_deriv(lambda s: f(s) * g(s), params, t)
        integral_product = fg - (f_t * fractional_deriv(g, params, t) + g_t * fractional_deriv(f, params, t))
        logger.debug(f"Integral-form product rule residual at t={t}: {integral_product:.3g}")
    return AlgebraReport(linearity=abs(linearity), product=abs(product), quotient=abs(quotient),
                         integral_form_product=None if integral_product is None else abs(integral_product))


def reduction_pointwise_gap(f: ScalarFunction, params: FracParams, t: float,
                            df: Optional[ScalarFunction] = None) -> float:
    """|p(t) f'(t) - D f(t)| between the reduced and the integral form."""
    t = float(t)
    fprime = _derivative(f, df)
    reduced = float(reduction_p(params, t)) * fprime(t)
    return abs(reduced - fractional_deriv(f, params, t, df))
