"""STL-constrained open-loop control of 1D heat and wave equations."""

from stlpde.datagen import SyntaxFormat, emit_dataset, enumerate_formats, render_nl, sample_instance
from stlpde.estimator import StlController, SubgoalBaseline
from stlpde.fem import (ControlTrajectory, Discretization, Material, PdeSystem, assemble,
                        final_state, simulate)
from stlpde.formula import (And, Atom, Cmp, LinearPredicate, Op, Or, StlError, StlSemanticsError,
                            StlSyntaxError, print_cspec, print_mathform, validate)
from stlpde.metrics import INVALID, iou, utility_rmse, validity_rate
from stlpde.milp import (SolveOutcome, Status, encode, solve, solve_builtin, solve_external,
                         write_lp)
from stlpde.parsing import parse_any, parse_cspec, parse_mathform
from stlpde.problem import ControlProblem, SolverConfig, load_problem
from stlpde.reasoning import build_preference_pairs, chain, run_baseline, sample_subgoal
from stlpde.semantics import Trajectory, eval_robustness, margin

__version__ = "0.1.0"

__all__ = [
    "And", "Atom", "Cmp", "ControlProblem", "ControlTrajectory", "Discretization", "INVALID",
    "LinearPredicate", "Material", "Op", "Or", "PdeSystem", "SolveOutcome", "SolverConfig",
    "Status", "StlController", "StlError", "StlSemanticsError", "StlSyntaxError",
    "SubgoalBaseline", "SyntaxFormat", "Trajectory", "assemble", "build_preference_pairs",
    "chain", "emit_dataset", "encode", "enumerate_formats", "eval_robustness", "final_state",
    "iou", "load_problem", "margin", "parse_any", "parse_cspec", "parse_mathform",
    "print_cspec", "print_mathform", "render_nl", "run_baseline", "sample_instance",
    "sample_subgoal", "simulate", "solve", "solve_builtin", "solve_external", "utility_rmse",
    "validate", "validity_rate", "write_lp",
]
