import logging
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import quad

from app.config import settings
from app.exceptions import AccuracyError, DomainError
from app.schemas import EvalOptions

logger = logging.getLogger(__name__)

# quad may flag round-off even when the estimate is fine; only errors larger
# than this multiple of the requested tolerance are rejected
_QUAD_ACCEPT_FACTOR = 1e3


def as_array(x, name: str = "x") -> np.ndarray:
    """Convert to a float array and reject non-finite entries."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def as_output(result: np.ndarray, like):
    """Return a Python float for scalar inputs and the array otherwise."""
    if np.ndim(like) == 0:
        return float(np.asarray(result).reshape(()))
    return result


def integrate(func: Callable[[float], float], a: float, b: float,
              options: Optional[EvalOptions] = None, what: str = "integral") -> float:
    """Adaptive quadrature that raises AccuracyError instead of warning.

    Args:
        func: Scalar integrand.
        a, b: Finite integration bounds.
        options: Tolerance and subdivision limit.
        what: Name used in error messages.

    Returns:
        The integral value.
    """
    options = options or EvalOptions()
    if a == b:
        return 0.0
    result = quad(func, a, b, epsabs=0.0, epsrel=options.rel_tol,
                  limit=options.max_quad_depth, full_output=1)
    value, abserr = result[0], result[1]
    if not np.isfinite(value):
        raise AccuracyError(f"{what} on [{a}, {b}] is not finite")
    if len(result) > 3:
        # quad appends a message when it could not certify the tolerance
        if abserr > _QUAD_ACCEPT_FACTOR * options.rel_tol * max(abs(value), 1.0):
            raise AccuracyError(
                f"{what} on [{a}, {b}] did not converge: {result[3]} (error estimate {abserr:.3g})"
            )
        logger.debug(f"{what} on [{a}, {b}] accepted with error estimate {abserr:.3g}")
    return float(value)


def central_diff(func: Callable[[np.ndarray], np.ndarray], x, h: float,
                 order: int = 1) -> np.ndarray:
    """Richardson-extrapolated central difference (fourth order).

    Combines step h and h/2: D = (4 D(h/2) - D(h)) / 3.
    """
    x = np.asarray(x, dtype=float)

    def first(step):
        return (func(x + step) - func(x - step)) / (2.0 * step)

    def second(step):
        return (func(x + step) - 2.0 * func(x) + func(x - step)) / step ** 2

    stencil = {1: first, 2: second}.get(order)
    if stencil is None:
        raise DomainError(f"unsupported derivative order {order}")
    return (4.0 * stencil(h / 2.0) - stencil(h)) / 3.0


def forward_diff(func: Callable[[np.ndarray], np.ndarray], x, h: float) -> np.ndarray:
    """One-sided Richardson-extrapolated first derivative for points near a boundary."""
    x = np.asarray(x, dtype=float)

    def one_sided(step):
        return (-3.0 * func(x) + 4.0 * func(x + step) - func(x + 2.0 * step)) / (2.0 * step)

    return (4.0 * one_sided(h / 2.0) - one_sided(h)) / 3.0


def chunked(values: Sequence, n_chunks: int) -> List[Sequence]:
    n_chunks = max(1, min(n_chunks, len(values)))
    bounds = np.linspace(0, len(values), n_chunks + 1).astype(int)
    return [values[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def parallel_map(func: Callable, items: Iterable, n_jobs: Optional[int] = None) -> list:
    """Map func over items on a thread pool; results keep input order."""
    items = list(items)
    n_jobs = n_jobs or settings.THREADS
    if n_jobs == 1 or len(items) <= 1:
        return [func(item) for item in items]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(func)(item) for item in items)


def parallel_eval(func: Callable[[np.ndarray, np.ndarray], np.ndarray],
                  t: np.ndarray, v: np.ndarray, n_jobs: Optional[int] = None) -> np.ndarray:
    """Evaluate a vectorized f(t, v) over flattened points in partitions.

    The output is identical to a single call because every point is
    evaluated independently.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    t_b, v_b = np.broadcast_arrays(t, v)
    flat_t, flat_v = t_b.ravel(), v_b.ravel()
    n_jobs = n_jobs or settings.THREADS
    index_chunks = chunked(np.arange(flat_t.size), n_jobs)
    parts = parallel_map(lambda idx: np.asarray(func(flat_t[idx], flat_v[idx]), dtype=float),
                         index_chunks, n_jobs=n_jobs)
    return np.concatenate(parts).reshape(t_b.shape) if parts else np.empty(t_b.shape)
