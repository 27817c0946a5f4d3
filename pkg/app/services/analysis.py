"""Verification layer: PDE residuals, moments and field norms."""
import logging
import math
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import simpson, trapezoid

from app.exceptions import AccuracyError, DomainError, EmptyReportError, PoleError
from app.schemas import DensityField, Grid1D, PhysParams, ResidualReport
from app.utils import central_diff, forward_diff

logger = logging.getLogger(__name__)

Candidate = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Relative tail mass tolerated beyond the grid ends
_TAIL_TOL = 1e-8


def safe_eval(f: Candidate, t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Evaluate f, turning poles and failures into NaN point by point."""
    t_b, v_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
    try:
        with np.errstate(all="ignore"):
            return np.asarray(f(t_b, v_b), dtype=float) * np.ones(t_b.shape)
    except (PoleError, DomainError, OverflowError, ZeroDivisionError):
        out = np.empty(t_b.shape)
        for idx in np.ndindex(t_b.shape):
            try:
                out[idx] = float(f(t_b[idx], v_b[idx]))
            except (PoleError, DomainError, OverflowError, ZeroDivisionError):
                out[idx] = np.nan
        return out


def grid_points(t_values, v_values) -> Tuple[np.ndarray, np.ndarray]:
    """Flattened (t, v) pairs of the tensor grid, t varying slowest."""
    tt, vv = np.meshgrid(np.asarray(t_values, dtype=float), np.asarray(v_values, dtype=float),
                         indexing="ij")
    return tt.ravel(), vv.ravel()


def residual_fpe(f: Candidate, phys: PhysParams, p_of_t: Optional[Callable] = None,
                 t=None, v=None, h_v: Optional[float] = None, h_t: Optional[float] = None,
                 t_horizon: Optional[float] = None, t_floor: float = 0.0) -> ResidualReport:
    """Residual p(t) f_t - eta f - eta v f_v - B f_vv of a candidate solution.

    Derivatives are Richardson-extrapolated central differences (one
    halving of the base step). Points closer than h_t to ``t_floor`` use a
    one-sided time difference. Points whose stencil meets a pole or a
    non-finite value are excluded and listed.

    Args:
        f: Vectorized candidate f(t, v).
        phys: Friction and diffusion coefficients.
        p_of_t: Time multiplier; None means p = 1.
        t, v: Evaluation points, broadcast against each other.
        h_v, h_t: Base steps; default 1e-3 sqrt(B/eta) and 1e-3 min(1/eta, T0).
        t_horizon: T0 of a lifted candidate, used for the default h_t.
        t_floor: Earliest time at which f may be evaluated.
    """
    t_arr, v_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
    t_arr, v_arr = t_arr.ravel(), v_arr.ravel()
    if t_arr.size == 0:
        raise EmptyReportError("no residual points given")
    h_v = h_v or 1e-3 * phys.sigma
    if h_t is None:
        h_t = 1e-3 * min(1.0 / phys.eta, t_horizon if t_horizon else math.inf)

    f0 = safe_eval(f, t_arr, v_arr)
    f_v = central_diff(lambda x: safe_eval(f, t_arr, x), v_arr, h_v, order=1)
    f_vv = central_diff(lambda x: safe_eval(f, t_arr, x), v_arr, h_v, order=2)

    f_t = np.empty_like(t_arr)
    one_sided = t_arr - h_t < t_floor
    if np.any(~one_sided):
        tc, vc = t_arr[~one_sided], v_arr[~one_sided]
        f_t[~one_sided] = central_diff(lambda x: safe_eval(f, x, vc), tc, h_t, order=1)
    if np.any(one_sided):
        tf, vf = t_arr[one_sided], v_arr[one_sided]
        f_t[one_sided] = forward_diff(lambda x: safe_eval(f, x, vf), tf, h_t)

    if p_of_t is None:
        p = np.ones_like(t_arr)
    else:
        p = np.broadcast_to(np.asarray(p_of_t(t_arr), dtype=float), t_arr.shape)

    terms = np.vstack([p * f_t, phys.eta * f0, phys.eta * v_arr * f_v, phys.big_b * f_vv])
    residual = terms[0] - terms[1] - terms[2] - terms[3]
    good = np.isfinite(residual)
    excluded = [(float(a), float(b)) for a, b in zip(t_arr[~good], v_arr[~good])]
    if not np.any(good):
        raise EmptyReportError(f"all {t_arr.size} residual points were excluded")
    if excluded:
        logger.warning(f"Excluded {len(excluded)} pole-adjacent residual points out of {t_arr.size}")

    res = residual[good]
    term_scale = float(np.max(np.abs(terms[:, good])))
    l_inf = float(np.max(np.abs(res)))
    rel = l_inf / term_scale if term_scale > 0 else 0.0
    return ResidualReport(
        t=t_arr[good], v=v_arr[good], residual=res,
        l_inf=l_inf, l2=float(np.sqrt(np.mean(res ** 2))),
        rel_l_inf=rel, term_scale=term_scale, excluded_points=excluded,
    )


def richardson_order(f: Candidate, exact_residual: Candidate, phys: PhysParams,
                     t: float, v: float, h_v: float, h_t: float,
                     p_of_t: Optional[Callable] = None) -> float:
    """Error ratio err(h) / err(h/2) of the residual at one point (about 16 for fourth order)."""
    exact = float(exact_residual(np.asarray(t), np.asarray(v)))
    coarse = residual_fpe(f, phys, p_of_t, t, v, h_v=h_v, h_t=h_t)
    fine = residual_fpe(f, phys, p_of_t, t, v, h_v=0.5 * h_v, h_t=0.5 * h_t)
    err_coarse = abs(float(coarse.residual[0]) - exact)
    err_fine = abs(float(fine.residual[0]) - exact)
    if err_fine == 0.0:
        raise AccuracyError("residual error vanished at the finer step; ratio undefined")
    return err_coarse / err_fine


def residual_report_rows(report: ResidualReport) -> List[Tuple[float, float, float]]:
    return [(float(a), float(b), float(c)) for a, b, c in zip(report.t, report.v, report.residual)]


def _sample(field_or_function, grid: Grid1D, t: Optional[float]) -> np.ndarray:
    if isinstance(field_or_function, DensityField):
        if field_or_function.grid != grid:
            raise DomainError("field grid does not match the requested grid")
        return field_or_function.values
    nodes = grid.nodes()
    if t is None:
        return np.asarray(field_or_function(nodes), dtype=float)
    return np.asarray(field_or_function(np.full_like(nodes, t), nodes), dtype=float)


def moments(field_or_function: Union[DensityField, Callable], grid: Grid1D, k: int,
            t: Optional[float] = None) -> float:
    """Normalized moment int v^k f dv / int f dv by Simpson's rule.

    Callables are sampled on the grid nodes, as f(v) or, when ``t`` is
    given, as f(t, v).
    """
    values = _sample(field_or_function, grid, t)
    nodes = grid.nodes()
    mass = float(simpson(values, x=nodes))
    if not mass > 0:
        raise DomainError(f"total mass must be positive, got {mass}")
    tail = (abs(values[0]) + abs(values[-1])) * (grid.v_max - grid.v_min)
    if tail > _TAIL_TOL * mass:
        raise AccuracyError(f"density does not decay within the grid (tail estimate {tail:.3g})")
    return float(simpson(nodes ** k * values, x=nodes)) / mass


def normalize(field: DensityField) -> DensityField:
    mass = field.mass()
    if not mass > 0:
        raise DomainError(f"cannot normalize a field with mass {mass}")
    return DensityField(grid=field.grid, t=field.t, values=field.values / mass)


def compare_fields(f1: DensityField, f2: DensityField) -> Tuple[float, float, float]:
    """(L_inf, L2, L_inf relative to max|f2|) of f1 - f2."""
    if f1.grid != f2.grid:
        raise DomainError("compare_fields requires identical grids")
    diff = f1.values - f2.values
    l_inf = float(np.max(np.abs(diff)))
    l2 = float(np.sqrt(trapezoid(diff ** 2, dx=f1.grid.spacing)))
    scale = float(np.max(np.abs(f2.values)))
    return l_inf, l2, l_inf / scale if scale > 0 else (0.0 if l_inf == 0 else math.inf)
