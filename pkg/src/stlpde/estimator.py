"""scikit-learn style wrappers around control synthesis and the subgoal baseline.

``fit`` takes a :class:`~stlpde.problem.ControlProblem` (or a path to a
problem file) in place of a feature matrix; fitted state lives in attributes
with a trailing underscore.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from stlpde.formula import Formula
from stlpde.milp import ANCHOR_BUDGET_S, DEFAULT_COMBO_LIMIT, SUBGOAL_BUDGET_S, Status
from stlpde.parsing import parse_any
from stlpde.problem import ControlProblem, SolverConfig, load_problem
from stlpde.reasoning import build_preference_pairs, run_baseline
from stlpde.semantics import eval_robustness


def _as_problem(problem, nx: Optional[int], nt: Optional[int]) -> ControlProblem:
    if isinstance(problem, (str, Path)):
        return load_problem(problem, nx, nt)
    if not isinstance(problem, ControlProblem):
        raise TypeError(f"expected a ControlProblem or a path, got {type(problem).__name__}")
    if nx is not None or nt is not None:
        return problem.with_grid(nx, nt)
    return problem


def _as_formula(f) -> Formula:
    return f if not isinstance(f, (str, dict)) else parse_any(f)


def _check_fitted(est, attr: str) -> None:
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class _SolverParams(BaseEstimator):
    def _config(self) -> SolverConfig:
        return SolverConfig(self.solver, self.solver_cmd, self.budget_s, self.subgoal_budget_s,
                            self.combo_limit)


class StlController(_SolverParams):
    """Open-loop controller maximizing the robustness of a problem's formula.

    After ``fit``: ``outcome_``, ``control_``, ``trajectory_``, ``robustness_``
    and ``problem_``.
    """

    def __init__(self, solver: str = "builtin", solver_cmd: Optional[str] = None,
                 budget_s: float = ANCHOR_BUDGET_S, subgoal_budget_s: float = SUBGOAL_BUDGET_S,
                 combo_limit: int = DEFAULT_COMBO_LIMIT, nx: Optional[int] = None,
                 nt: Optional[int] = None):
        self.solver = solver
        self.solver_cmd = solver_cmd
        self.budget_s = budget_s
        self.subgoal_budget_s = subgoal_budget_s
        self.combo_limit = combo_limit
        self.nx = nx
        self.nt = nt

    def fit(self, problem, y=None):
        problem = _as_problem(problem, self.nx, self.nt)
        outcome = problem.solve(self._config())
        self.problem_ = problem
        self.outcome_ = outcome
        if outcome.has_solution:
            self.control_ = outcome.control
            self.trajectory_ = outcome.trajectory
            self.robustness_ = outcome.robustness
        return self

    def predict(self, formulas) -> np.ndarray:
        """Robustness of each formula on the fitted trajectory."""
        _check_fitted(self, "trajectory_")
        if isinstance(formulas, (str, dict)) or not hasattr(formulas, "__iter__"):
            formulas = [formulas]
        return np.array([eval_robustness(_as_formula(f), self.trajectory_) for f in formulas])

    def transform(self, X=None) -> np.ndarray:
        """The fitted state field, shape ``(Nt + 1, Nx + 1)``."""
        _check_fitted(self, "trajectory_")
        return np.array(self.trajectory_.u)

    def score(self, X=None, y=None) -> float:
        """Robustness of the fitted problem's own formula."""
        _check_fitted(self, "outcome_")
        if self.outcome_.status not in (Status.OPTIMAL, Status.FEASIBLE):
            return float("-inf")
        return float(self.robustness_)


class SubgoalBaseline(_SolverParams):
    """Random-sampling subgoal baseline; ``stats_`` holds success rate and gain."""

    def __init__(self, n_samples: int = 20, seed: int = 0, mode: str = "restart", jobs: int = 1,
                 pair_cap: int = 10, solver: str = "builtin", solver_cmd: Optional[str] = None,
                 budget_s: float = ANCHOR_BUDGET_S, subgoal_budget_s: float = SUBGOAL_BUDGET_S,
                 combo_limit: int = DEFAULT_COMBO_LIMIT, nx: Optional[int] = None,
                 nt: Optional[int] = None):
        self.n_samples = n_samples
        self.seed = seed
        self.mode = mode
        self.jobs = jobs
        self.pair_cap = pair_cap
        self.solver = solver
        self.solver_cmd = solver_cmd
        self.budget_s = budget_s
        self.subgoal_budget_s = subgoal_budget_s
        self.combo_limit = combo_limit
        self.nx = nx
        self.nt = nt

    def fit(self, problem, y=None):
        problem = _as_problem(problem, self.nx, self.nt)
        self.problem_ = problem
        self.stats_ = run_baseline(problem, self.n_samples, self.seed, self._config(),
                                   mode=self.mode, jobs=self.jobs)
        return self

    def preference_pairs(self) -> list:
        _check_fitted(self, "stats_")
        return build_preference_pairs(self.stats_.records, cap=self.pair_cap)

    def score(self, X=None, y=None) -> float:
        """Success rate; NaN when no sample could be evaluated."""
        _check_fitted(self, "stats_")
        rate = self.stats_.success_rate
        return float("nan") if rate is None else float(rate)


__all__ = ["StlController", "SubgoalBaseline"]
