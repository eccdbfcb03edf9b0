"""MILP encoding of robustness maximization and its solvers."""

from stlpde.milp.lpfile import LpFormatError, read_lp, write_lp
from stlpde.milp.model import MilpModel, Row, atom_bound, encode
from stlpde.milp.simplex import LpNumericalFailure
from stlpde.milp.solve import (
    ANCHOR_BUDGET_S,
    DEFAULT_COMBO_LIMIT,
    SUBGOAL_BUDGET_S,
    ComboLimitExceeded,
    SolveOutcome,
    SolverFailed,
    Status,
    choice_groups,
    consistency_ok,
    count_combos,
    read_solution,
    solve,
    solve_builtin,
    solve_external,
)

__all__ = [
    "ANCHOR_BUDGET_S", "DEFAULT_COMBO_LIMIT", "SUBGOAL_BUDGET_S", "ComboLimitExceeded",
    "LpFormatError", "LpNumericalFailure", "MilpModel", "Row", "SolveOutcome", "SolverFailed",
    "Status", "atom_bound", "choice_groups", "consistency_ok", "count_combos", "encode",
    "read_lp", "read_solution", "solve", "solve_builtin", "solve_external", "write_lp",
]
