"""Null controllability experiments for degenerate parabolic equations with memory."""

__version__ = "0.1.0"

from .coeffs import (DiffusionCoefficient, check_degeneracy_hypotheses, d_star,
                     hardy_poincare_ratio, prototype_coefficient, tabulated_coefficient)
from .control import (ControlProblem, PenaltyConfig, carleman_ratio_monitor, default_s,
                      epsilon_sweep, synthesize_control)
from .errors import (ConfigurationError, ConvergenceError, DivergentIntegralError,
                     GeometryError, InvalidDegeneracyError, KernelInadmissibleError,
                     RadiusError, WeightAdmissibilityError)
from .kernel import constant_kernel, decaying_kernel, zero_kernel
from .memory import FixedPointConfig, fixed_point_solve, kernel_admissible
from .pde import (default_bc, make_grid, solve_adjoint, solve_forward,
                  solve_forward_with_memory)
from .strategy import glue_double_degenerate, two_phase_control
from .weights import build_weights, verify_weight_inequalities
