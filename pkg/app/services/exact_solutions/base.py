"""Shared machinery of the exact-solution families."""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from app.config import settings
from app.exceptions import DomainError, NumericError, PoleError, RangeError
from app.schemas import PhysParams, SolutionFamily
from app.utils import central_diff

logger = logging.getLogger(__name__)

ArrayFunction = Callable[[np.ndarray], np.ndarray]


def scale_free(residual: np.ndarray, *terms: np.ndarray) -> float:
    """Largest pointwise |residual| / sum(|terms|)."""
    residual = np.abs(np.asarray(residual, dtype=float))
    scale = sum(np.abs(np.asarray(term, dtype=float)) for term in terms)
    ratio = np.where(scale > 0, residual / np.where(scale > 0, scale, 1.0),
                     np.where(residual > 0, np.inf, 0.0))
    return float(np.max(ratio)) if ratio.size else 0.0


def near_zero(values: np.ndarray, scale: np.ndarray, rtol: Optional[float] = None) -> np.ndarray:
    rtol = settings.POLE_RTOL if rtol is None else rtol
    return np.abs(values) <= rtol * np.abs(scale)


def check_exponent(exponent, what: str) -> None:
    if np.any(np.asarray(exponent) > settings.EXP_CUTOFF):
        raise RangeError(f"{what}: exponent exceeds {settings.EXP_CUTOFF}")


def raise_on_poles(mask: np.ndarray, where: Sequence[np.ndarray], what: str) -> None:
    if np.any(mask):
        coords = [np.broadcast_to(np.asarray(w, dtype=float), mask.shape)[mask] for w in where]
        locations = list(zip(*(c.tolist() for c in coords)))
        raise PoleError(f"{what} has a pole at {len(locations)} point(s), first at {locations[0]}",
                        locations)


def log_cosh(y: np.ndarray) -> np.ndarray:
    y = np.abs(np.asarray(y, dtype=float))
    return y + np.log1p(np.exp(-2.0 * y)) - np.log(2.0)


def find_sign_changes(func: ArrayFunction, lo: float, hi: float, n: int = 2001) -> List[float]:
    """Roots of a continuous function located by sign changes on a uniform scan."""
    x = np.linspace(lo, hi, n)
    y = np.asarray(func(x), dtype=float)
    roots = [float(x[i]) for i in np.flatnonzero(y == 0.0)]
    for i in np.flatnonzero(np.sign(y[:-1]) * np.sign(y[1:]) < 0):
        roots.append(brentq(lambda s: float(func(np.asarray([s]))[0]), x[i], x[i + 1], xtol=1e-14))
    return sorted(roots)


@dataclass(frozen=True)
class RiccatiConstraint:
    """B h' = const + eta v h + B k h^2.

    With h = -(1/k) phi'/phi this linearizes to
    B phi'' - eta v phi' + k const phi = 0.
    """

    big_b: float
    eta: float
    const: float
    k: float

    def terms(self, h: ArrayFunction, v: np.ndarray, step: float) -> Tuple[np.ndarray, ...]:
        values = h(v)
        return (self.big_b * central_diff(h, v, step), np.full_like(v, self.const),
                self.eta * v * values, self.big_b * self.k * values ** 2)

    def scale_free_residual(self, h: ArrayFunction, v: np.ndarray, step: float) -> float:
        lhs, *rhs = self.terms(h, v, step)
        return scale_free(lhs - sum(rhs), lhs, *rhs)

    def linear_rhs(self, v: float, y: np.ndarray) -> List[float]:
        phi, dphi = y
        return [dphi, (self.eta * v * dphi - self.k * self.const * phi) / self.big_b]


class RiccatiIngredient:
    """phi(v) together with h = -(1/k) phi'/phi and int h dv = -(1/k) log|phi|.

    Closeness to a zero of phi is measured against |phi| + length * |phi'|,
    which vanishes nowhere for a nontrivial solution.
    """

    def __init__(self, constraint: RiccatiConstraint, phi: ArrayFunction, dphi: ArrayFunction,
                 length: float, reconciled: bool = False, closed_form_residual: float = 0.0,
                 domain: Optional[Tuple[float, float]] = None):
        self.constraint = constraint
        self._phi = phi
        self._dphi = dphi
        self.length = length
        self.reconciled = reconciled
        self.closed_form_residual = closed_form_residual
        self.domain = domain

    def _check_domain(self, v: np.ndarray) -> None:
        if self.domain is not None:
            lo, hi = self.domain
            if np.any((v < lo) | (v > hi)):
                raise DomainError(f"reconciled ingredient is only defined on [{lo:.6g}, {hi:.6g}]")

    def phi(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        self._check_domain(v)
        return self._phi(v)

    def dphi(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        self._check_domain(v)
        return self._dphi(v)

    def pole_mask(self, v, rtol: Optional[float] = None) -> np.ndarray:
        phi, dphi = self.phi(v), self.dphi(v)
        return near_zero(phi, np.abs(phi) + self.length * np.abs(dphi), rtol)

    def h(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        raise_on_poles(self.pole_mask(v), [v], "h")
        return -self.dphi(v) / (self.constraint.k * self.phi(v))

    def int_h(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        raise_on_poles(self.pole_mask(v), [v], "log of the antiderivative")
        return -np.log(np.abs(self.phi(v))) / self.constraint.k

    def poles(self, lo: float, hi: float, n: int = 2001) -> List[float]:
        return find_sign_changes(self.phi, lo, hi, n)


def _regular(phi: np.ndarray, dphi: np.ndarray, length: float) -> np.ndarray:
    return np.abs(phi) / np.maximum(np.abs(phi) + length * np.abs(dphi), 1e-300)


def reconcile_ode(constraint: RiccatiConstraint, phi_closed: ArrayFunction, dphi_closed: ArrayFunction,
                  length: float, domain: Tuple[float, float], sample_points: np.ndarray,
                  tol: float = 1e-6, name: str = "h") -> RiccatiIngredient:
    """Check a closed-form Riccati solution and replace it by an integrated one if it fails.

    The closed form is given as phi together with the derivative its h
    implies, dphi = -k h phi. It is accepted when the scale-free Riccati
    residual of h = -dphi/(k phi) at the sample points (those further than
    about length/10 from a zero of phi) is below ``tol``. Otherwise the
    linearized equation is integrated with DOP853 from an anchor point where
    phi and dphi match the closed form.
    """
    def h_closed(v):
        return -dphi_closed(v) / (constraint.k * phi_closed(v))

    step = 1e-3 * length
    usable = sample_points[_regular(phi_closed(sample_points), dphi_closed(sample_points), length) > 0.1]
    residual = constraint.scale_free_residual(h_closed, usable, step) if usable.size else np.inf

    if residual < tol:
        return RiccatiIngredient(constraint, phi_closed, dphi_closed, length,
                                 reconciled=False, closed_form_residual=residual)

    candidates = np.concatenate([[0.0], np.linspace(-2.0 * length, 2.0 * length, 41)])
    ratio = _regular(phi_closed(candidates), dphi_closed(candidates), length)
    anchor = float(candidates[0] if ratio[0] > 0.1 else candidates[int(np.argmax(ratio))])
    y0 = np.array([float(phi_closed(np.asarray([anchor]))[0]),
                   float(dphi_closed(np.asarray([anchor]))[0])])
    atol = 1e-14 * max(abs(y0[0]), length * abs(y0[1]), 1e-300)
    pieces = []
    for end in domain:
        if end == anchor:
            continue
        sol = solve_ivp(constraint.linear_rhs, (anchor, end), y0, method="DOP853",
                        rtol=1e-12, atol=atol, dense_output=True)
        if not sol.success:
            raise NumericError(f"integration of the linearized equation for {name} failed: {sol.message}")
        pieces.append((min(anchor, end), max(anchor, end), sol.sol))

    def evaluate(v, component):
        v = np.asarray(v, dtype=float)
        flat = v.ravel()
        out = np.empty(flat.shape)
        for lo, hi, dense in pieces:
            mask = (flat >= lo) & (flat <= hi)
            if np.any(mask):
                out[mask] = dense(flat[mask])[component]
        return out.reshape(v.shape)

    logger.warning(
        f"Closed form of {name} fails its defining equation (scale-free residual {residual:.3g}); "
        f"using the integrated solution anchored at v={anchor:.6g}"
    )
    return RiccatiIngredient(constraint, lambda v: evaluate(v, 0), lambda v: evaluate(v, 1), length,
                             reconciled=True, closed_form_residual=residual, domain=domain)


def sample_points(rng: np.random.Generator, n: int, t_range: Tuple[float, float],
                  v_range: Tuple[float, float], reject: Callable[[np.ndarray, np.ndarray], np.ndarray],
                  max_rounds: int = 50) -> Tuple[np.ndarray, np.ndarray]:
    """n random (t, v) points, redrawing those for which ``reject`` is true."""
    t_out: List[float] = []
    v_out: List[float] = []
    for _ in range(max_rounds):
        t = rng.uniform(*t_range, size=2 * n)
        v = rng.uniform(*v_range, size=2 * n)
        keep = ~reject(t, v)
        t_out.extend(t[keep].tolist())
        v_out.extend(v[keep].tolist())
        if len(t_out) >= n:
            return np.asarray(t_out[:n]), np.asarray(v_out[:n])
    raise NumericError("could not draw enough pole-free sample points")


def aux_residuals(g: Callable, rhs_t: Callable, rhs_v: Callable, t: np.ndarray, v: np.ndarray,
                  h_t: float, h_v: float) -> Dict[str, float]:
    """Scale-free residuals of g_t = rhs_t and g_v = rhs_v."""
    g_t = central_diff(lambda x: g(x, v), t, h_t)
    g_v = central_diff(lambda x: g(t, x), v, h_v)
    r_t, r_v = rhs_t(t, v), rhs_v(t, v)
    return {"aux_t": scale_free(g_t - r_t, g_t, r_t), "aux_v": scale_free(g_v - r_v, g_v, r_v)}


@dataclass(frozen=True)
class RationalForm:
    """Pieces of f = (s1 g + s0)/(a1 g + a0) and of its logarithmic derivatives.

    With N = s1 g + s0 the Hopf fields are F = (b1 g + b0)/N = f_y/f and
    G = (d1 g + d0)/N = f_t/f in the family's natural variables.
    """

    s1: np.ndarray
    s0: np.ndarray
    a1: np.ndarray
    a0: np.ndarray
    b1: np.ndarray
    b0: np.ndarray
    d1: np.ndarray
    d0: np.ndarray


def assemble(s1, s0, g_num, g_den, cleared) -> np.ndarray:
    """(s1 g + s0)/(a1 g + a0) for g = g_num/g_den.

    ``cleared`` is a1 g_num + a0 g_den, simplified by the family so the
    zeros of g_den do not show up as cancellation.
    """
    cleared = np.asarray(cleared, dtype=float)
    if np.any(cleared == 0):
        raise PoleError("assembled solution has a vanishing denominator")
    return (s1 * g_num + s0 * g_den) / cleared


def compatibility(rhs_t: Callable, rhs_v: Callable, t: np.ndarray, v: np.ndarray,
                  h_t: float, h_v: float) -> float:
    """Scale-free |d/dv rhs_t - d/dt rhs_v|, i.e. g_tv - g_vt from the auxiliary equations."""
    tv = central_diff(lambda x: rhs_t(t, x), v, h_v)
    vt = central_diff(lambda x: rhs_v(x, v), t, h_t)
    return scale_free(tv - vt, tv, vt)


class ExactFamily(ABC):
    """One exact solution family of the classical equation f_t = eta (v f)_v + B f_vv.

    Subclasses expose their construction pieces and the auxiliary function
    g, which satisfies g_t = rhs_t and g_y = rhs_y in the family's natural
    variables (t, y), with y = v or y = z.
    """

    family: SolutionFamily
    readings: Tuple[str, ...] = ()
    aux_variable = "v"

    def __init__(self, phys: PhysParams, config, reading: str):
        if reading not in self.readings:
            raise DomainError(f"unknown reading '{reading}' for {self.family.value}; "
                              f"expected one of {', '.join(self.readings)}")
        self.phys = phys
        self.config = config
        self.reading = reading

    def __repr__(self) -> str:
        return f"{type(self).__name__}(reading={self.reading})"

    @abstractmethod
    def f(self, t, v) -> np.ndarray:
        """Assembled solution at physical (t, v)."""

    @abstractmethod
    def g(self, t, y) -> np.ndarray:
        """Auxiliary function in natural variables."""

    @abstractmethod
    def aux_rhs(self, t, y) -> Tuple[np.ndarray, np.ndarray]:
        """Right-hand sides (g_t, g_y) of the auxiliary equations."""

    @abstractmethod
    def constraint_residuals(self, t: np.ndarray, y: np.ndarray) -> Dict[str, float]:
        """Scale-free residuals of the family-specific defining equations."""

    @abstractmethod
    def reject(self, t: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Points too close to a pole of any construction piece."""

    @property
    @abstractmethod
    def sample_region(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """(t range, y range) of the construction checks."""

    @property
    @abstractmethod
    def steps(self) -> Tuple[float, float]:
        """Finite-difference steps (h_t, h_y) of the construction checks."""

    @abstractmethod
    def rational_form(self, t, y) -> RationalForm:
        """s_i, a_i, b_i, d_i at natural (t, y)."""

    def f_natural(self, t, y) -> np.ndarray:
        """The solution in natural variables."""
        return self.f(t, y)

    def hopf_coefficients(self, t, y) -> Tuple[np.ndarray, np.ndarray]:
        """(drift, diffusion) of f_t = f + drift f_y + diffusion f_yy in natural variables."""
        y = np.asarray(y, dtype=float)
        return self.phys.eta * y, np.full(np.broadcast(np.asarray(t), y).shape, self.phys.big_b)

    def hopf_fields(self, t, y) -> Tuple[np.ndarray, np.ndarray]:
        """F = f_y/f and G = f_t/f built from b_i, d_i and g."""
        pieces = self.rational_form(t, y)
        g = self.g(t, y)
        n = pieces.s1 * g + pieces.s0
        return (pieces.b1 * g + pieces.b0) / n, (pieces.d1 * g + pieces.d0) / n

    def hopf_residuals(self, t: np.ndarray, y: np.ndarray) -> Dict[str, float]:
        """F and G against finite differences of f, and G = eta + drift F + diffusion (F_y + F^2)."""
        h_t, h_y = self.steps
        big_f, big_g = self.hopf_fields(t, y)
        f = self.f_natural(t, y)
        f_y = central_diff(lambda x: self.f_natural(t, x), y, h_y)
        f_t = central_diff(lambda s: self.f_natural(s, y), t, h_t)
        # 1000 steps is the natural length and time scale of the family
        length_ref, time_ref = f / (1e3 * h_y), f / (1e3 * h_t)
        d_big_f = central_diff(lambda x: self.hopf_fields(t, x)[0], y, h_y)
        drift, diffusion = self.hopf_coefficients(t, y)
        terms = (np.full_like(big_g, self.phys.eta), drift * big_f,
                 diffusion * d_big_f, diffusion * big_f ** 2)
        return {
            "hopf_f": scale_free(big_f * f - f_y, big_f * f, f_y, length_ref),
            "hopf_g": scale_free(big_g * f - f_t, big_g * f, f_t, time_ref),
            "hopf_pde": scale_free(big_g - sum(terms), big_g, *terms),
        }

    def divergences(self) -> Dict[str, float]:
        """Residuals of printed forms that were replaced; empty when nothing was."""
        return {}

    def sample(self, n: int = 20, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        t_range, y_range = self.sample_region
        return sample_points(np.random.default_rng(seed), n, t_range, y_range, self.reject)

    def construction_residuals(self, points: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                               n: int = 20, seed: int = 0) -> Dict[str, float]:
        t, y = points if points is not None else self.sample(n, seed)
        t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
        h_t, h_y = self.steps
        out = self.constraint_residuals(t, y)
        aux = aux_residuals(self.g, lambda a, b: self.aux_rhs(a, b)[0],
                            lambda a, b: self.aux_rhs(a, b)[1], t, y, h_t, h_y)
        out["aux_t"] = aux["aux_t"]
        out[f"aux_{self.aux_variable}"] = aux["aux_v"]
        out.update(self.hopf_residuals(t, y))
        return out

    def compatibility_residual(self, t, y) -> float:
        h_t, h_y = self.steps
        return compatibility(lambda a, b: self.aux_rhs(a, b)[0], lambda a, b: self.aux_rhs(a, b)[1],
                             np.asarray(t, dtype=float), np.asarray(y, dtype=float), h_t, h_y)
