import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.integrate import trapezoid

from app.config import settings


# Numerical options
class EvalOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    rel_tol: float = Field(default_factory=lambda: settings.REL_TOL, gt=0)
    max_terms: int = Field(default_factory=lambda: settings.MAX_TERMS, ge=1)
    max_quad_depth: int = Field(default_factory=lambda: settings.MAX_QUAD_DEPTH, ge=1)


# Fractional derivative parameters
class DerivativeKind(str, Enum):
    CAPUTO = "caputo"
    CAPUTO_FABRIZIO = "caputo_fabrizio"
    ATANGANA_BALEANU = "atangana_baleanu"
    GAWAD = "gawad"
    # Not backed by a fractional derivative: identity and tau = t**beta
    CLASSICAL = "classical"
    POWER_LAW = "power_law"


HORIZON_KINDS = (
    DerivativeKind.CAPUTO,
    DerivativeKind.CAPUTO_FABRIZIO,
    DerivativeKind.ATANGANA_BALEANU,
    DerivativeKind.GAWAD,
)


class FracParams(BaseModel):
    """Which fractional derivative is reduced, with its orders and horizon.

    ``alpha`` is used by Caputo, Caputo-Fabrizio and Atangana-Baleanu;
    ``beta``/``lam`` by Gawad (``beta`` also by the power-law map).
    ``gawad_norm`` multiplies both the Gawad kernel prefactor and its
    reduced multiplier.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    kind: DerivativeKind
    alpha: Optional[float] = None
    beta: Optional[float] = None
    lam: Optional[float] = Field(default=None, alias="lambda")
    t_horizon: Optional[float] = None
    ab_norm: float = Field(default=1.0, gt=0)
    gawad_norm: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def check_kind_requirements(self):
        problems = []
        if self.kind in (DerivativeKind.CAPUTO, DerivativeKind.CAPUTO_FABRIZIO,
                         DerivativeKind.ATANGANA_BALEANU):
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                problems.append(f"alpha must lie in (0, 1) for {self.kind.value}")
        if self.kind in (DerivativeKind.GAWAD, DerivativeKind.POWER_LAW):
            if self.beta is None or not self.beta > 0.0:
                problems.append(f"beta must be positive for {self.kind.value}")
        if self.kind == DerivativeKind.GAWAD:
            if self.lam is None or not self.lam > 0.0:
                problems.append("lambda must be positive for gawad")
        if self.kind in HORIZON_KINDS:
            if self.t_horizon is None or not self.t_horizon > 0.0:
                problems.append(f"t_horizon must be positive for {self.kind.value}")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def has_horizon(self) -> bool:
        return self.kind in HORIZON_KINDS

    @property
    def derivative_backed(self) -> bool:
        return self.kind != DerivativeKind.POWER_LAW

    @classmethod
    def caputo(cls, alpha: float, t_horizon: float) -> "FracParams":
        return cls(kind=DerivativeKind.CAPUTO, alpha=alpha, t_horizon=t_horizon)

    @classmethod
    def caputo_fabrizio(cls, alpha: float, t_horizon: float) -> "FracParams":
        return cls(kind=DerivativeKind.CAPUTO_FABRIZIO, alpha=alpha, t_horizon=t_horizon)

    @classmethod
    def atangana_baleanu(cls, alpha: float, t_horizon: float, ab_norm: float = 1.0) -> "FracParams":
        return cls(kind=DerivativeKind.ATANGANA_BALEANU, alpha=alpha,
                   t_horizon=t_horizon, ab_norm=ab_norm)

    @classmethod
    def gawad(cls, beta: float, lam: float, t_horizon: float, gawad_norm: float = 1.0) -> "FracParams":
        return cls(kind=DerivativeKind.GAWAD, beta=beta, lam=lam,
                   t_horizon=t_horizon, gawad_norm=gawad_norm)

    @classmethod
    def gawad_from_caputo_fabrizio(cls, alpha: float, t_horizon: float) -> "FracParams":
        """Gawad parameters that collapse exactly onto Caputo-Fabrizio of order alpha."""
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        return cls.gawad(beta=1.0, lam=alpha / (1.0 - alpha), t_horizon=t_horizon,
                         gawad_norm=1.0 / (1.0 - alpha))

    @classmethod
    def classical(cls) -> "FracParams":
        return cls(kind=DerivativeKind.CLASSICAL)

    @classmethod
    def power_law(cls, beta: float) -> "FracParams":
        return cls(kind=DerivativeKind.POWER_LAW, beta=beta)


# Physical parameters of the Fokker-Planck equation
class PhysParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: float = Field(gt=0)
    big_b: float = Field(gt=0)
    mass: float = Field(default=1.0, gt=0)

    @property
    def sigma(self) -> float:
        """Stationary standard deviation sqrt(B/eta)."""
        return math.sqrt(self.big_b / self.eta)

    @property
    def x_scale(self) -> float:
        """Factor turning a velocity into the Hermite argument x = v*sqrt(eta/2B)."""
        return math.sqrt(self.eta / (2.0 * self.big_b))


# Exact-solution families
class SolutionFamily(str, Enum):
    LINEAR_AUX = "linear_aux"
    QUAD_AUX = "quad_aux"
    SELF_SIMILAR = "self_similar"


LINEAR_READINGS = ("printed", "normalized", "weighted")
QUAD_READINGS = ("printed", "reconciled")
SELFSIM_READINGS = ("printed", "reconciled")

READINGS: Dict[SolutionFamily, Tuple[str, ...]] = {
    SolutionFamily.LINEAR_AUX: LINEAR_READINGS,
    SolutionFamily.QUAD_AUX: QUAD_READINGS,
    SolutionFamily.SELF_SIMILAR: SELFSIM_READINGS,
}


def _relative_mismatch(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


class LinearAuxConfig(BaseModel):
    """Free constants of the linear auxiliary-equation family.

    ``c1`` is derived from n*eta/mu once the physical parameters are known
    (see :meth:`resolved`). The amplitude of the auxiliary function g is
    ``amp_b3``; when it is not given it falls back to ``a0_const``, the name
    the assembled solution uses for the same constant.
    """

    model_config = ConfigDict(frozen=True)

    n: int = Field(default=10, ge=1)
    mu: float = -0.5
    c0: float = 2.0
    c1: Optional[float] = None
    s0: float = 0.0
    f0: float = 0.0
    amp_a1: float = 2.3
    amp_a2: float = 3.0
    amp_b0: float = 1.5
    amp_b1: float = 1.9
    amp_b2: float = 0.7
    amp_b3: Optional[float] = None
    a0_const: float = 1.3
    reading: str = "auto"

    @field_validator("mu", "c0")
    def nonzero(cls, v, info):
        if v == 0.0:
            raise ValueError(f"{info.field_name} must be nonzero")
        return v

    @field_validator("reading")
    def known_reading(cls, v):
        if v != "auto" and v not in LINEAR_READINGS:
            raise ValueError(f"unknown reading '{v}' for linear_aux")
        return v

    @model_validator(mode="after")
    def nondegenerate_amplitude(self):
        if self.g_amplitude == 0.0:
            raise ValueError("g amplitude B3 = 0 degenerates the solution (zero denominator)")
        return self

    @property
    def g_amplitude(self) -> float:
        return self.a0_const if self.amp_b3 is None else self.amp_b3

    def resolved(self, phys: PhysParams) -> "LinearAuxConfig":
        c1 = self.n * phys.eta / self.mu
        if self.c1 is not None and _relative_mismatch(self.c1 * self.mu, self.n * phys.eta) > 1e-12:
            raise ValueError(f"c1*mu must equal n*eta (c1={self.c1}, expected {c1})")
        return self.model_copy(update={"c1": c1 if self.c1 is None else self.c1})


class QuadAuxConfig(BaseModel):
    """Free constants of the quadratic (Riccati) auxiliary-equation family."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(default=10, ge=1)
    mu: float = -0.5
    c1: float = 1.0
    c2: float = 0.5
    k0: Optional[float] = None
    c0: Optional[float] = None
    s0: float = 1.0
    s1: float = 3.0
    b1_const: float = 1.9
    b0_hermite: float = 1.5
    reading: str = "auto"

    @field_validator("mu", "c2", "b1_const")
    def nonzero(cls, v, info):
        if v == 0.0:
            raise ValueError(f"{info.field_name} must be nonzero")
        return v

    @field_validator("reading")
    def known_reading(cls, v):
        if v != "auto" and v not in QUAD_READINGS:
            raise ValueError(f"unknown reading '{v}' for quad_aux")
        return v

    def resolved(self, phys: PhysParams) -> "QuadAuxConfig":
        k0 = self.n * phys.eta / self.mu
        if self.k0 is not None:
            if _relative_mismatch(self.k0 * self.mu, self.n * phys.eta) > 1e-12:
                raise ValueError(f"k0*mu must equal n*eta (k0={self.k0}, expected {k0})")
            k0 = self.k0
        if _relative_mismatch(self.c1, k0) < 1e-12:
            raise ValueError("c1 = k0 makes a1 undefined (degenerate configuration)")
        c0 = (self.c1 ** 2 - k0 ** 2) / (4.0 * self.c2)
        if self.c0 is not None and _relative_mismatch(self.c0, c0) > 1e-12:
            raise ValueError(f"c0 must equal (c1^2 - k0^2)/(4 c2) = {c0}")
        return self.model_copy(update={"k0": k0, "c0": c0})


class SelfSimConfig(BaseModel):
    """Free constants of the self-similar family.

    The Riccati coefficients are tied by the construction: p2 = -c1 and
    p3 = c1, with c0 = c2 = 0. ``r`` is derived from B*p1^2 + 4*A0*c1.
    """

    model_config = ConfigDict(frozen=True)

    p1: float = 0.5
    p2: Optional[float] = None
    p3: Optional[float] = None
    a0_const: float = 1.3
    a1_const: float = 2.3
    b0_const: float = Field(default=1.5, gt=0)
    b1: float = 1.9
    b2: float = 0.7
    b3: float = 0.0
    c1: float = 1.0
    s0: float = 1.0
    s1: float = 3.0
    r: Optional[float] = None
    reading: str = "auto"

    @field_validator("c1", "b1")
    def nonzero(cls, v, info):
        if v == 0.0:
            raise ValueError(f"{info.field_name} must be nonzero")
        return v

    @field_validator("reading")
    def known_reading(cls, v):
        if v != "auto" and v not in SELFSIM_READINGS:
            raise ValueError(f"unknown reading '{v}' for self_similar")
        return v

    @property
    def c0(self) -> float:
        return 0.0

    @property
    def c2(self) -> float:
        return 0.0

    def resolved(self, phys: PhysParams) -> "SelfSimConfig":
        r_sq = phys.big_b * self.p1 ** 2 + 4.0 * self.a0_const * self.c1
        if r_sq <= 0.0:
            raise ValueError("B*p1^2 + 4*A0*c1 must be positive for the tanh branch")
        r = math.sqrt(r_sq)
        if self.r is not None and _relative_mismatch(self.r, r) > 1e-12:
            raise ValueError(f"r must equal sqrt(B p1^2 + 4 A0 c1) = {r}")
        p2 = -self.c1 if self.p2 is None else self.p2
        p3 = self.c1 if self.p3 is None else self.p3
        if _relative_mismatch(p2, -self.c1) > 1e-12 or _relative_mismatch(p3, self.c1) > 1e-12:
            raise ValueError("the construction requires p2 = -c1 and p3 = c1")
        return self.model_copy(update={"r": r, "p2": p2, "p3": p3})


FAMILY_CONFIGS = {
    SolutionFamily.LINEAR_AUX: LinearAuxConfig,
    SolutionFamily.QUAD_AUX: QuadAuxConfig,
    SolutionFamily.SELF_SIMILAR: SelfSimConfig,
}


# Grids and sampled fields
class Grid1D(BaseModel):
    model_config = ConfigDict(frozen=True)

    v_min: float
    v_max: float
    nv: int = Field(ge=3)

    @model_validator(mode="after")
    def ordered(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be smaller than v_max")
        return self

    @property
    def spacing(self) -> float:
        return (self.v_max - self.v_min) / (self.nv - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.nv)

    @classmethod
    def symmetric(cls, half_width: float, nv: int) -> "Grid1D":
        return cls(v_min=-half_width, v_max=half_width, nv=nv)


class DensityField(BaseModel):
    """A density sampled on a velocity grid at one time."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid1D
    t: float
    values: np.ndarray

    @field_validator("values", mode="before")
    def as_array(cls, v):
        return np.array(v, dtype=float)

    @model_validator(mode="after")
    def consistent(self):
        if self.values.shape != (self.grid.nv,):
            raise ValueError(f"expected {self.grid.nv} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        return self

    def mass(self) -> float:
        return float(trapezoid(self.values, dx=self.grid.spacing))


# Verification reports
class ResidualReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    t: np.ndarray
    v: np.ndarray
    residual: np.ndarray
    l_inf: float
    l2: float
    rel_l_inf: float = Field(ge=0)
    term_scale: float
    excluded_points: List[Tuple[float, float]] = []

    @property
    def n_evaluated(self) -> int:
        return int(self.residual.size)

    @property
    def excluded_fraction(self) -> float:
        total = self.n_evaluated + len(self.excluded_points)
        return len(self.excluded_points) / total if total else 0.0


class AlgebraReport(BaseModel):
    """Residuals of linearity, product and quotient rules under the reduced form."""

    model_config = ConfigDict(frozen=True)

    linearity: float
    product: float
    quotient: float
    integral_form_product: Optional[float] = None


# CLI run configuration
class Command(str, Enum):
    TAU = "tau"
    DERIV = "deriv"
    EXACT = "exact"
    SOLVE = "solve"
    RESIDUAL = "residual"
    MOMENTS = "moments"


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    command: Command
    preset: Optional[str] = None
    frac: Optional[FracParams] = None
    phys: Optional[PhysParams] = None
    family: Optional[SolutionFamily] = None
    family_config: Optional[Dict[str, Any]] = None
    lift: bool = False
    t_min: float = 0.0
    t_max: Optional[float] = None
    nt: int = Field(default=101, ge=2)
    v_min: Optional[float] = None
    v_max: Optional[float] = None
    nv: int = Field(default=101, ge=2)
    v0: float = 2.0
    v0_width: float = Field(default=0.5, gt=0)
    dt: float = Field(default=1e-3, gt=0)
    test_function: str = "quadratic"
    output_path: Optional[str] = None
    editorial_note: Optional[str] = None

    @model_validator(mode="after")
    def command_requirements(self):
        problems = []
        needs_frac = (Command.TAU, Command.DERIV)
        needs_phys = (Command.EXACT, Command.SOLVE, Command.RESIDUAL, Command.MOMENTS)
        needs_family = (Command.EXACT, Command.RESIDUAL)
        if self.command in needs_frac and self.frac is None:
            problems.append(f"command '{self.command.value}' requires kind and its orders")
        if self.command in needs_phys and self.phys is None:
            problems.append(f"command '{self.command.value}' requires eta and big_b")
        if self.command in needs_family and self.family is None:
            problems.append(f"command '{self.command.value}' requires family")
        if self.lift and self.frac is None:
            problems.append("lift=true requires a time map (kind and its orders)")
        if self.command == Command.DERIV and self.frac is not None and not self.frac.has_horizon:
            problems.append("command 'deriv' requires a fractional derivative kind")
        if self.t_max is not None and not self.t_max > self.t_min:
            problems.append("t_max must exceed t_min")
        if self.v_min is not None and self.v_max is not None and not self.v_min < self.v_max:
            problems.append("v_min must be smaller than v_max")
        if problems:
            raise ValueError("; ".join(problems))
        return self
