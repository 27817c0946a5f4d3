"""Special functions used by the reductions and the exact-solution families.

Every function broadcasts over numpy arrays and returns a plain float for
scalar input.
"""
import logging
from typing import Optional

import numpy as np
from scipy import special

from app.exceptions import AccuracyError, DomainError
from app.schemas import EvalOptions
from app.utils import as_array, as_output

logger = logging.getLogger(__name__)

# Largest relative round-off accepted from cancelling Mittag-Leffler terms
_MAX_CANCELLATION = 1e-6


def dawson_erfi(x):
    """Dawson's function e^{-x^2} * integral_0^x e^{y^2} dy."""
    arr = as_array(x)
    return as_output(special.dawsn(arr), x)


def hermite(n: int, x):
    """Physicists' Hermite polynomial H_n(x) by the three-term recurrence."""
    if n < 0 or int(n) != n:
        raise DomainError(f"Hermite degree must be a nonnegative integer, got {n}")
    arr = as_array(x)
    h_prev = np.ones_like(arr)
    if n == 0:
        return as_output(h_prev, x)
    h_curr = 2.0 * arr
    for k in range(1, int(n)):
        h_prev, h_curr = h_curr, 2.0 * arr * h_curr - 2.0 * k * h_prev
    return as_output(h_curr, x)


def hermite_function(n: int, x):
    """e^{-x^2} H_n(x); an eigenfunction of the Ornstein-Uhlenbeck operator in x."""
    arr = as_array(x)
    return as_output(np.exp(-arr ** 2) * np.asarray(hermite(n, arr)), x)


def _is_nonpositive_int(a: float) -> bool:
    return a <= 0 and float(a).is_integer()


def kummer_1f1(a: float, b: float, x, options: Optional[EvalOptions] = None):
    """Confluent hypergeometric function 1F1(a; b; x).

    Terminating series (a a non-positive integer) are summed in full, or with
    ``options`` until every remaining term is below rel_tol relative to the sum.
    Otherwise negative x goes through Kummer's transformation
    e^x 1F1(b-a; b; -x) and nonnegative x through scipy's hyp1f1.
    """
    arr = as_array(x)
    a, b = float(a), float(b)
    if _is_nonpositive_int(b) and not (_is_nonpositive_int(a) and -a < -b + 1):
        raise DomainError(f"1F1 has a pole at b={b} for a={a}")

    if _is_nonpositive_int(a):
        degree = int(-a)
        max_terms = options.max_terms if options is not None else degree
        if degree > max_terms:
            raise AccuracyError(f"1F1({a}; {b}; x) needs {degree} terms, more than max_terms={max_terms}")
        term = np.ones_like(arr)
        total = np.ones_like(arr)
        for k in range(degree):
            term = term * (a + k) / (b + k) * arr / (k + 1)
            total = total + term
            # past the largest term the magnitudes only shrink
            if options is not None and np.all(np.abs(term) <= options.rel_tol * np.abs(total)):
                logger.debug(f"1F1({a}; {b}; x) series stopped after {k + 1} of {degree} terms")
                break
        return as_output(total, x)

    result = np.empty_like(arr)
    neg = arr < 0
    if np.any(neg):
        result[neg] = np.exp(arr[neg]) * special.hyp1f1(b - a, b, -arr[neg])
    if np.any(~neg):
        result[~neg] = special.hyp1f1(a, b, arr[~neg])
    if not np.all(np.isfinite(result)):
        raise AccuracyError(f"1F1({a}; {b}; x) is not finite on the requested points")
    return as_output(result, x)


def hypergeom_pfq_special(n: int, x, options: Optional[EvalOptions] = None):
    """The single-parameter instance 1F1(-n/2; 1/2; x)."""
    if n < 0 or int(n) != n:
        raise DomainError(f"n must be a nonnegative integer, got {n}")
    return kummer_1f1(-0.5 * n, 0.5, x, options)


def _check_gamma_args(a: float, x) -> np.ndarray:
    if not a > 0:
        raise DomainError(f"incomplete gamma requires a > 0, got {a}")
    arr = as_array(x)
    if np.any(arr < 0):
        raise DomainError("incomplete gamma requires x >= 0")
    return arr


def lower_gamma(a: float, x):
    """Lower incomplete gamma integral_0^x e^{-y} y^{a-1} dy (not regularized)."""
    arr = _check_gamma_args(a, x)
    return as_output(special.gamma(a) * special.gammainc(a, arr), x)


def upper_gamma(a: float, x):
    """Upper incomplete gamma integral_x^inf e^{-y} y^{a-1} dy (not regularized)."""
    arr = _check_gamma_args(a, x)
    return as_output(special.gamma(a) * special.gammaincc(a, arr), x)


def _ml_series(alpha: float, beta: float, z: np.ndarray, options: EvalOptions) -> np.ndarray:
    """Sum z^k / Gamma(alpha k + beta) until the terms fall below rel_tol.

    Terms are formed in log space so large |z| does not overflow before the
    gamma function catches up.
    """
    z = np.asarray(z, dtype=float)
    total = np.zeros_like(z)
    done = np.zeros(z.shape, dtype=bool)
    log_abs_z = np.log(np.abs(np.where(z == 0, 1.0, z)))
    sign = np.sign(z)
    prev_mag = np.full(z.shape, np.inf)
    peak = np.zeros(z.shape)
    # two consecutive small, decreasing terms are required before stopping
    small_run = np.zeros(z.shape, dtype=int)

    for k in range(options.max_terms):
        if k == 0:
            term = np.full(z.shape, 1.0 / special.gamma(beta))
        else:
            log_mag = k * log_abs_z - special.gammaln(alpha * k + beta)
            term = np.where(z == 0, 0.0, sign ** k * np.exp(log_mag))
        total = np.where(done, total, total + term)
        mag = np.abs(term)
        peak = np.maximum(peak, mag)
        below = (mag <= options.rel_tol * np.abs(total)) & (mag <= prev_mag)
        small_run = np.where(below, small_run + 1, 0)
        done |= (small_run >= 2) | ((z == 0) & (k >= 1))
        prev_mag = mag
        if np.all(done):
            logger.debug(f"Mittag-Leffler series converged after {k + 1} terms")
            round_off = peak * np.finfo(float).eps
            relative = round_off / np.maximum(np.abs(total), 1e-300)
            if np.any(relative > options.rel_tol):
                logger.debug(f"Mittag-Leffler series lost digits to cancellation "
                             f"(worst relative round-off {float(np.max(relative)):.3g})")
            lost = relative > _MAX_CANCELLATION
            if np.any(lost) or not np.all(np.isfinite(total)):
                raise AccuracyError(
                    f"Mittag-Leffler series (alpha={alpha}, beta={beta}) lost its accuracy to "
                    f"cancellation (largest |z| = {float(np.max(np.abs(z))):.3g})"
                )
            return total
    raise AccuracyError(
        f"Mittag-Leffler series (alpha={alpha}, beta={beta}) did not converge in "
        f"{options.max_terms} terms"
    )


def mittag_leffler(alpha: float, t, options: Optional[EvalOptions] = None):
    """One-parameter Mittag-Leffler function E_alpha(t) = sum t^k / Gamma(alpha k + 1)."""
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    arr = as_array(t)
    return as_output(_ml_series(alpha, 1.0, arr, options or EvalOptions()), t)


def ml_general(alpha: float, beta: float, lam: float, t, options: Optional[EvalOptions] = None):
    """Stretched Mittag-Leffler e_{alpha,beta}(lam, t) = sum lam^k t^{alpha k} / Gamma(alpha k + beta).

    This is the same series as :func:`mittag_leffler` evaluated at
    z = lam * t^alpha; with lam = 1, beta = 1 it equals mittag_leffler(alpha, t^alpha).
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if not beta > 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    arr = as_array(t)
    if np.any(arr < 0):
        raise DomainError("ml_general requires t >= 0")
    z = lam * arr ** alpha
    return as_output(_ml_series(alpha, beta, z, options or EvalOptions()), t)

