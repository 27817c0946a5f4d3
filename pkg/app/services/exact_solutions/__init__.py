from app.services.exact_solutions.base import (ExactFamily, RiccatiConstraint, RiccatiIngredient,
                                               reconcile_ode)
from app.services.exact_solutions.handle import (FAMILY_MODELS, SolutionHandle, build_solution,
                                                 compatibility_residual, construction_residuals,
                                                 fractional_lift, select_reading)
from app.services.exact_solutions.linear import LinearAuxFamily
from app.services.exact_solutions.quadratic import QuadAuxFamily
from app.services.exact_solutions.selfsim import SelfSimFamily
