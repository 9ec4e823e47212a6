"""Positivity-preserving MPRK integrators with tunable step-size control."""
from .control import Abort, ControllerParams, SolveReport, integrate_adaptive, integrate_fixed
from .cost import P1, STANDARD_CONTROLLERS, TOL, CostBreakdown, CostConfig, cost
from .metrics import WPPoint, err, l2err_rel, run_wp
from .pdrs import PDRSProblem
from .problems import make_problem, training_suite, validation_suite
from .reference import ReferenceSolution, generate_reference
from .schemes import DEFAULT_SCHEMES, MPRKScheme, parse_scheme

__version__ = "0.1.0"

__all__ = [
    "Abort",
    "ControllerParams",
    "SolveReport",
    "integrate_adaptive",
    "integrate_fixed",
    "P1",
    "STANDARD_CONTROLLERS",
    "TOL",
    "CostBreakdown",
    "CostConfig",
    "cost",
    "WPPoint",
    "err",
    "l2err_rel",
    "run_wp",
    "PDRSProblem",
    "make_problem",
    "training_suite",
    "validation_suite",
    "ReferenceSolution",
    "generate_reference",
    "DEFAULT_SCHEMES",
    "MPRKScheme",
    "parse_scheme",
]
