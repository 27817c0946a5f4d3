"""Ground truth for the Fokker-Planck equation p(t) f_t = eta (v f)_v + B f_vv.

Analytic Ornstein-Uhlenbeck densities and moments, and a conservative
Crank-Nicolson finite-volume solver with zero-flux boundaries.
"""
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from app.exceptions import DomainError, NumericError
from app.schemas import DensityField, Grid1D, PhysParams
from app.utils import as_array, as_output

logger = logging.getLogger(__name__)

TimeMultiplier = Callable[[float], float]


def classical_multiplier(t) -> float:
    return 1.0


def _gaussian(v: np.ndarray, mean, var) -> np.ndarray:
    return np.exp(-((v - mean) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


def stationary_density(phys: PhysParams, v):
    """Centered Gaussian with variance B/eta; the unit-mass steady state."""
    arr = as_array(v, "v")
    return as_output(_gaussian(arr, 0.0, phys.big_b / phys.eta), v)


def gaussian_evolve(phys: PhysParams, mean0, var0, t) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and variance at time t of a Gaussian started from (mean0, var0)."""
    t = np.asarray(t, dtype=float)
    decay = np.exp(-phys.eta * t)
    stationary_var = phys.big_b / phys.eta
    return mean0 * decay, stationary_var + (var0 - stationary_var) * decay ** 2


def ou_transition_density(phys: PhysParams, v0: float, t, v):
    """Density at time t of a particle started at velocity v0 at t = 0."""
    t_arr = as_array(t, "t")
    if np.any(t_arr <= 0):
        raise DomainError("transition density requires t > 0")
    v_arr = as_array(v, "v")
    mean, var = gaussian_evolve(phys, v0, 0.0, t_arr)
    result = _gaussian(v_arr, mean, var)
    return as_output(result, result)


def gaussian_mixture_density(phys: PhysParams, weights: Sequence[float], means0: Sequence[float],
                             var0: float, t, v):
    """Exact evolution of a mixture of Gaussians sharing the initial variance var0.

    Args:
        weights: Mass of each component.
        means0: Initial component means.
        var0: Common initial variance.
        t, v: Evaluation points (broadcast).
    """
    t_arr = np.asarray(t, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    total = np.zeros(np.broadcast(t_arr, v_arr).shape)
    for weight, mean0 in zip(weights, means0):
        mean, var = gaussian_evolve(phys, mean0, var0, t_arr)
        total = total + weight * _gaussian(v_arr, mean, var)
    return as_output(total, total)


def ou_moments(phys: PhysParams, v0_mean: float, v0_sq: float, t):
    """Closed-form mean and mean square for p = 1."""
    t_arr = as_array(t, "t")
    decay = np.exp(-phys.eta * t_arr)
    stationary_sq = phys.big_b / phys.eta
    mean = v0_mean * decay
    mean_sq = stationary_sq + (v0_sq - stationary_sq) * decay ** 2
    return as_output(mean, t), as_output(mean_sq, t)


def initial_gaussian(grid: Grid1D, mean: float, std: float, t: float = 0.0) -> DensityField:
    """Gaussian sampled on the grid and rescaled to unit trapezoid mass."""
    values = _gaussian(grid.nodes(), mean, std ** 2)
    field = DensityField(grid=grid, t=t, values=values)
    return DensityField(grid=grid, t=t, values=values / field.mass())


def _flux_operator(phys: PhysParams, grid: Grid1D) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonals of the finite-volume operator (J_{i+1/2} - J_{i-1/2}) / cell_i.

    J_{i+1/2} = eta v_{i+1/2} (f_i + f_{i+1}) / 2 + B (f_{i+1} - f_i) / dv, and
    J vanishes outside the grid. Boundary cells have half width, so the
    trapezoid mass is conserved exactly.
    """
    v = grid.nodes()
    dv = grid.spacing
    v_mid = 0.5 * (v[:-1] + v[1:])
    a = 0.5 * phys.eta * v_mid - phys.big_b / dv
    b = 0.5 * phys.eta * v_mid + phys.big_b / dv

    cell = np.full(grid.nv, dv)
    cell[0] = cell[-1] = 0.5 * dv

    main = np.zeros(grid.nv)
    main[:-1] += a
    main[1:] -= b
    main /= cell
    upper = b / cell[:-1]
    lower = -a / cell[1:]
    return lower, main, upper


def _apply(lower: np.ndarray, main: np.ndarray, upper: np.ndarray, f: np.ndarray) -> np.ndarray:
    out = main * f
    out[:-1] += upper * f[1:]
    out[1:] += lower * f[:-1]
    return out


def solve_fd(phys: PhysParams, p_of_t: Optional[TimeMultiplier], init: DensityField,
             t_end: float, dt: float, n_snapshots: Optional[int] = None) -> List[DensityField]:
    """Crank-Nicolson integration of p(t) f_t = (eta v f + B f_v)_v.

    The non-autonomous factor enters through the effective step
    dt / p(t_mid). Returns the initial field followed by snapshots; by
    default every step is returned, otherwise ``n_snapshots`` evenly
    spaced ones ending at ``t_end``.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    if not t_end > init.t:
        raise DomainError("t_end must exceed the initial time")
    p_of_t = p_of_t or classical_multiplier
    grid = init.grid
    n_steps = max(1, int(math.ceil((t_end - init.t) / dt - 1e-9)))
    step = (t_end - init.t) / n_steps
    if n_snapshots is None:
        keep = set(range(1, n_steps + 1))
    else:
        keep = {int(round(k * n_steps / n_snapshots)) for k in range(1, n_snapshots + 1)}

    lower, main, upper = _flux_operator(phys, grid)
    banded = np.zeros((3, grid.nv))
    f = init.values.copy()
    t = init.t
    snapshots = [init]
    mass0 = init.mass()
    logger.debug(f"solve_fd: {n_steps} steps of {step:.3g} on {grid.nv} nodes")

    for k in range(1, n_steps + 1):
        t_mid = t + 0.5 * step
        p_mid = float(p_of_t(t_mid))
        if not p_mid > 0:
            raise DomainError(f"p(t) must be positive, got {p_mid} at t={t_mid}")
        half = 0.5 * step / p_mid
        banded[0, 1:] = -half * upper
        banded[1, :] = 1.0 - half * main
        banded[2, :-1] = -half * lower
        rhs = f + half * _apply(lower, main, upper, f)
        try:
            f = solve_banded((1, 1), banded, rhs, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericError(f"tridiagonal solve failed at t={t_mid}: {e}")
        if not np.all(np.isfinite(f)):
            raise NumericError(f"non-finite density after step {k} (t={t_mid})")
        t = init.t + k * step
        if k in keep:
            snapshots.append(DensityField(grid=grid, t=t, values=f.copy()))

    drift = abs(snapshots[-1].mass() - mass0)
    if drift > 1e-10 * max(abs(mass0), 1.0):
        logger.warning(f"solve_fd mass drift {drift:.3g} exceeds round-off expectations")
    return snapshots


def moment_ode(phys: PhysParams, p_of_t: Optional[TimeMultiplier], v0_mean: float,
               v0_sq: float, t) -> Tuple[np.ndarray, np.ndarray]:
    """Integrate d<v>/dt = -eta <v>/p and d<v^2>/dt = (2B - 2 eta <v^2>)/p from t = 0."""
    p_of_t = p_of_t or classical_multiplier
    t_arr = np.atleast_1d(as_array(t, "t"))
    if np.any(t_arr < 0):
        raise DomainError("moment_ode integrates forward from t = 0")
    order = np.argsort(t_arr)
    t_sorted = t_arr[order]
    t_final = float(t_sorted[-1])

    def rhs(s, y):
        p = float(p_of_t(s))
        if not p > 0:
            raise DomainError(f"p(t) must be positive, got {p} at t={s}")
        return [-phys.eta * y[0] / p, (2.0 * phys.big_b - 2.0 * phys.eta * y[1]) / p]

    if t_final == 0.0:
        mean = np.full(t_arr.shape, v0_mean)
        mean_sq = np.full(t_arr.shape, v0_sq)
    else:
        sol = solve_ivp(rhs, (0.0, t_final), [v0_mean, v0_sq], method="RK45",
                        t_eval=t_sorted, rtol=1e-10, atol=1e-12)
        if not sol.success:
            raise NumericError(f"moment ODE failed: {sol.message}")
        mean = np.empty_like(t_arr)
        mean_sq = np.empty_like(t_arr)
        mean[order], mean_sq[order] = sol.y[0], sol.y[1]
    return as_output(mean, t), as_output(mean_sq, t)
