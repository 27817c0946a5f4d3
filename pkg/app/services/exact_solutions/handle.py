"""Solution handles: one family, one reading, optionally lifted to fractional time."""
import logging
from typing import Dict, Optional, Tuple, Type, Union

import numpy as np

from app.exceptions import DomainError, EmptyReportError, FracFPEError
from app.schemas import FAMILY_CONFIGS, READINGS, PhysParams, SolutionFamily
from app.services.analysis import residual_fpe
from app.services.exact_solutions.base import ExactFamily
from app.services.exact_solutions.linear import LinearAuxFamily
from app.services.exact_solutions.quadratic import QuadAuxFamily
from app.services.exact_solutions.selfsim import SelfSimFamily
from app.services.frac_ops import TimeMap
from app.utils import parallel_eval

logger = logging.getLogger(__name__)

FAMILY_MODELS: Dict[SolutionFamily, Type[ExactFamily]] = {
    SolutionFamily.LINEAR_AUX: LinearAuxFamily,
    SolutionFamily.QUAD_AUX: QuadAuxFamily,
    SolutionFamily.SELF_SIMILAR: SelfSimFamily,
}


class SolutionHandle:
    """A family evaluated in classical time, and in fractional time when a TimeMap is attached.

    Immutable after construction; evaluations are pure.
    """

    def __init__(self, model: ExactFamily, time_map: Optional[TimeMap] = None,
                 reading_scores: Optional[Dict[str, float]] = None):
        self.model = model
        self.time_map = time_map
        self.reading_scores = dict(reading_scores or {})

    def __repr__(self) -> str:
        lift = self.time_map.params.kind.value if self.lifted else "none"
        return f"SolutionHandle(family={self.family.value}, reading={self.reading}, lift={lift})"

    @property
    def family(self) -> SolutionFamily:
        return self.model.family

    @property
    def phys(self) -> PhysParams:
        return self.model.phys

    @property
    def config(self):
        return self.model.config

    @property
    def reading(self) -> str:
        return self.model.reading

    @property
    def lifted(self) -> bool:
        return self.time_map is not None and not self.time_map.is_identity

    def classical(self, t, v) -> np.ndarray:
        return self.model.f(t, v)

    def __call__(self, t, v) -> np.ndarray:
        return fractional_lift(self, t, v) if self.lifted else self.classical(t, v)

    def p_of_t(self):
        """Time multiplier of the equation the handle solves; None in classical time."""
        return self.time_map.p if self.lifted else None

    def grid(self, t_values, v_values, parallel: bool = True) -> np.ndarray:
        """Values on the tensor grid t_values x v_values."""
        tt, vv = np.meshgrid(np.asarray(t_values, dtype=float), np.asarray(v_values, dtype=float),
                             indexing="ij")
        if parallel:
            return parallel_eval(self, tt, vv)
        return np.asarray(self(tt, vv), dtype=float)


def fractional_lift(handle: SolutionHandle, t, v) -> np.ndarray:
    """f(t, v) = f~(tau(t), v), with f~ the classical evaluation of the handle's family."""
    if handle.time_map is None:
        raise DomainError("fractional_lift needs a handle with a time map")
    if handle.time_map.is_identity:
        return handle.classical(t, v)
    tau = np.asarray(handle.time_map.tau(t), dtype=float)
    return handle.classical(tau, v)


def select_reading(family: Union[SolutionFamily, str], phys: PhysParams, config=None,
                   t=None, v=None) -> Tuple[str, Dict[str, float]]:
    """Pick the assembly reading with the smallest relative PDE residual.

    Readings whose construction or evaluation fails score infinity.
    """
    family = SolutionFamily(family)
    config = config or FAMILY_CONFIGS[family]()
    t = np.linspace(0.1, 1.0, 5) if t is None else np.asarray(t, dtype=float)
    v = np.linspace(-2.0 * phys.sigma, 2.0 * phys.sigma, 9) if v is None else np.asarray(v, dtype=float)
    tt, vv = np.meshgrid(t, v, indexing="ij")
    scores: Dict[str, float] = {}
    for reading in READINGS[family]:
        try:
            model = FAMILY_MODELS[family](phys, config, reading)
            scores[reading] = residual_fpe(model.f, phys, t=tt, v=vv).rel_l_inf
        except (FracFPEError, ArithmeticError) as e:
            logger.warning(f"{family.value}/{reading} could not be scored: {e}")
            scores[reading] = float("inf")
    best = min(scores, key=scores.get)
    if not np.isfinite(scores[best]):
        raise EmptyReportError(f"no reading of {family.value} could be evaluated")
    summary = ", ".join(f"{name}={score:.3g}" for name, score in scores.items())
    logger.info(f"{family.value}: selected reading '{best}' (relative residuals: {summary})")
    return best, scores


def build_solution(family: Union[SolutionFamily, str], phys: PhysParams, config=None,
                   time_map: Optional[TimeMap] = None, reading: Optional[str] = None) -> SolutionHandle:
    """Construct a SolutionHandle, resolving reading "auto" by residual minimization."""
    family = SolutionFamily(family)
    config_cls = FAMILY_CONFIGS[family]
    config = config or config_cls()
    if not isinstance(config, config_cls):
        raise DomainError(f"{family.value} needs a {config_cls.__name__}, got {type(config).__name__}")
    reading = reading or config.reading
    scores: Dict[str, float] = {}
    if reading == "auto":
        reading, scores = select_reading(family, phys, config)
    try:
        model = FAMILY_MODELS[family](phys, config, reading)
    except ValueError as e:
        if isinstance(e, FracFPEError):
            raise
        raise DomainError(str(e))
    return SolutionHandle(model, time_map, scores)


def compatibility_residual(handle: SolutionHandle, t, y) -> float:
    """Scale-free g_tv - g_vt from the auxiliary equations at (t, y), y in the family's own variable."""
    return handle.model.compatibility_residual(t, y)


def construction_residuals(handle: SolutionHandle, points=None, n: int = 20,
                           seed: int = 0) -> Dict[str, float]:
    """Every defining-equation residual of the handle's family at pole-free sample points."""
    return handle.model.construction_residuals(points, n=n, seed=seed)
