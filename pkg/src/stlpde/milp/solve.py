"""Solving encoded models: a built-in exact solver and an external LP-file adapter."""

from __future__ import annotations

import enum
import itertools
import math
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from stlpde.fem import ControlTrajectory, simulate
from stlpde.milp.lpfile import write_lp
from stlpde.milp.model import EQ, GE, LE, MilpModel
from stlpde.milp.simplex import LpNumericalFailure, polish, simplex
from stlpde.semantics import Trajectory, eval_robustness

DEFAULT_COMBO_LIMIT = 10_000
ANCHOR_BUDGET_S = 600.0
SUBGOAL_BUDGET_S = 120.0
SOLVER_ENV = "STLPDE_SOLVER"


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    TIMED_OUT = "TimedOut"
    SOLVER_FAILED = "SolverFailed"


class ComboLimitExceeded(RuntimeError):
    """Too many binary assignments for enumeration; use an external solver."""


class SolverFailed(RuntimeError):
    """The external solver crashed, was missing, or wrote unreadable output."""

    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message)
        self.stderr = stderr


@dataclass
class SolveOutcome:
    status: Status
    objective: float = math.nan
    control: Optional[ControlTrajectory] = None
    trajectory: Optional[Trajectory] = None
    gap: Optional[float] = None
    values: dict = field(default_factory=dict)
    robustness: Optional[float] = None
    n_lps: int = 0
    wall_time: float = 0.0
    message: str = ""

    @property
    def has_solution(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.FEASIBLE)

    @property
    def consistency_error(self) -> Optional[float]:
        """``|objective - r(simulate(control))|`` when both are known."""
        if self.robustness is None or not self.has_solution:
            return None
        return abs(self.objective - self.robustness)

    def to_json(self) -> dict:
        return {
            "status": self.status.value,
            "r": None if not self.has_solution else float(self.objective),
            "r_simulated": self.robustness,
            "gap": self.gap,
            "n_lps": self.n_lps,
            "wall_time_s": self.wall_time,
            "message": self.message,
        }


def consistency_ok(objective: float, robustness: float, rel: float = 1e-6) -> bool:
    return abs(objective - robustness) <= rel * max(1.0, abs(objective))


# -- reconstruction --------------------------------------------------------

def _finish(m: MilpModel, outcome: SolveOutcome, x: Optional[np.ndarray]) -> SolveOutcome:
    """Attach control, re-simulated trajectory and evaluated robustness."""
    if x is not None:
        outcome.values = {name: float(v) for name, v in zip(m.names, x)}
    if not outcome.has_solution or m.system is None or m.disc is None:
        return outcome
    nt = m.disc.nt
    try:
        q = np.array([outcome.values[f"q_{k}"] for k in range(nt)])
    except KeyError as exc:
        raise SolverFailed(f"solution lacks control variable {exc}") from exc
    outcome.control = ControlTrajectory(q, m.system.control_bound)
    outcome.trajectory = simulate(m.system, m.disc, outcome.control)
    if m.formula is not None:
        outcome.robustness = eval_robustness(m.formula, outcome.trajectory)
    return outcome


# -- built-in solver -------------------------------------------------------

def choice_groups(m: MilpModel) -> list[list[int]]:
    """Binary groups ``sum z = 1`` that partition the model's binaries."""
    groups, seen = [], set()
    for row in m.rows:
        if (row.sense == EQ and row.rhs == 1.0 and row.idx
                and all(m.binary[j] for j in row.idx) and all(c == 1.0 for c in row.coef)):
            groups.append(list(row.idx))
            seen.update(row.idx)
    for j, b in enumerate(m.binary):
        if b and j not in seen:
            groups.append([j, None])  # free binary: 0 or 1
    return groups


def count_combos(m: MilpModel) -> int:
    return math.prod(len(g) for g in choice_groups(m))


@dataclass
class _Reduced:
    """LP over the non-state variables after eliminating the dynamics."""

    keep: np.ndarray      # indices of remaining variables
    state: np.ndarray     # indices of eliminated variables
    s0: np.ndarray        # state = s0 + S @ x[keep]
    S: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray


def _is_state(name: str) -> bool:
    return name.startswith("u_") or name.startswith("v_")


def _reduce(m: MilpModel) -> _Reduced:
    n = m.n_vars
    lb, ub = np.asarray(m.lb, dtype=float), np.asarray(m.ub, dtype=float)
    state = np.array([j for j, name in enumerate(m.names) if _is_state(name)], dtype=int)
    is_state = np.zeros(n, dtype=bool)
    is_state[state] = True
    block = [r for r in m.rows if r.sense == EQ and any(is_state[j] for j in r.idx)]
    if state.size and len(block) != state.size:
        # not a square dynamics block; keep every variable in the LP
        state = np.zeros(0, dtype=int)
        is_state[:] = False
        block = []
    keep = np.flatnonzero(~is_state)
    pos_s = {int(j): p for p, j in enumerate(state)}
    pos_k = {int(j): p for p, j in enumerate(keep)}

    if state.size:
        rows, cols, vals = [], [], []
        E_o = np.zeros((len(block), keep.size))
        e = np.zeros(len(block))
        for r, row in enumerate(block):
            e[r] = row.rhs
            for j, c in zip(row.idx, row.coef):
                if is_state[j]:
                    rows.append(r)
                    cols.append(pos_s[j])
                    vals.append(c)
                else:
                    E_o[r, pos_k[j]] += c
        E_s = sp.csc_matrix((vals, (rows, cols)), shape=(state.size, state.size))
        try:
            lu = spla.splu(E_s)
        except RuntimeError as exc:
            raise LpNumericalFailure(f"dynamics block is singular: {exc}") from exc
        s0 = lu.solve(e)
        S = -lu.solve(E_o) if keep.size else np.zeros((state.size, 0))
        S = S.reshape(state.size, keep.size)
    else:
        s0 = np.zeros(0)
        S = np.zeros((0, keep.size))

    block_ids = {id(r) for r in block}
    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    for row in m.rows:
        if id(row) in block_ids:
            continue
        a = np.zeros(keep.size)
        rhs = row.rhs
        for j, c in zip(row.idx, row.coef):
            if is_state[j]:
                p = pos_s[j]
                a += c * S[p]
                rhs -= c * s0[p]
            else:
                a[pos_k[j]] += c
        if row.sense == LE:
            ub_rows.append(a), ub_rhs.append(rhs)
        elif row.sense == GE:
            ub_rows.append(-a), ub_rhs.append(-rhs)
        else:
            eq_rows.append(a), eq_rhs.append(rhs)
    # state bounds become rows
    for p, j in enumerate(state):
        if np.isfinite(ub[j]):
            ub_rows.append(S[p].copy()), ub_rhs.append(ub[j] - s0[p])
        if np.isfinite(lb[j]):
            ub_rows.append(-S[p]), ub_rhs.append(s0[p] - lb[j])
    k = keep.size
    c = m.objective_vector()[keep] * (1.0 if m.maximize else -1.0)
    return _Reduced(keep, state, s0, S,
                    np.array(ub_rows).reshape(-1, k), np.array(ub_rhs),
                    np.array(eq_rows).reshape(-1, k), np.array(eq_rhs),
                    lb[keep], ub[keep], c)


def _solve_lp(red: _Reduced, lb: np.ndarray, ub: np.ndarray) -> tuple[str, Optional[np.ndarray], float]:
    """Solve the reduced LP with the given variable bounds (all finite)."""
    if np.any(~np.isfinite(lb)) or np.any(~np.isfinite(ub)):
        raise LpNumericalFailure("built-in solver needs finite bounds on every variable")
    width = ub - lb
    if np.any(width < 0):
        return "infeasible", None, math.nan
    fixed = width == 0
    free = np.flatnonzero(~fixed)
    span = width[free]
    # x = lb + span * y, y in [0, 1]
    A_ub, b_ub = red.A_ub, red.b_ub - red.A_ub @ lb
    A_eq, b_eq = red.A_eq, red.b_eq - red.A_eq @ lb
    A_ub = A_ub[:, free] * span
    A_eq = A_eq[:, free] * span
    c = red.c[free] * span
    # drop rows that interval bounds already guarantee
    if A_ub.shape[0]:
        worst = np.clip(A_ub, 0, None).sum(axis=1)
        tight = worst > b_ub + 1e-12 * np.maximum(1.0, np.abs(b_ub))
        trivially_bad = np.clip(A_ub, None, 0).sum(axis=1) > b_ub + 1e-9 * np.maximum(1.0, np.abs(b_ub))
        if np.any(trivially_bad):
            return "infeasible", None, math.nan
        A_ub, b_ub = A_ub[tight], b_ub[tight]
    eq_nz = np.any(A_eq != 0, axis=1) if A_eq.shape[0] else np.zeros(0, dtype=bool)
    if np.any(np.abs(b_eq[~eq_nz]) > 1e-9 * np.maximum(1.0, np.abs(b_eq[~eq_nz]))):
        return "infeasible", None, math.nan
    A_eq, b_eq = A_eq[eq_nz], b_eq[eq_nz]
    # upper bounds y <= 1 as rows, then row normalization
    A_ub = np.vstack([A_ub, np.eye(free.size)])
    b_ub = np.concatenate([b_ub, np.ones(free.size)])
    s_ub = np.max(np.abs(A_ub), axis=1, initial=0.0)
    s_ub[s_ub == 0] = 1.0
    s_eq = np.max(np.abs(A_eq), axis=1, initial=0.0)
    s_eq[s_eq == 0] = 1.0
    A_ub, b_ub = A_ub / s_ub[:, None], b_ub / s_ub
    A_eq, b_eq = A_eq / s_eq[:, None], b_eq / s_eq
    res = simplex(c, A_ub, b_ub, A_eq, b_eq)
    if res.status != "optimal":
        return res.status, None, math.nan
    y = res.y
    better = polish(c, A_ub, b_ub, A_eq, b_eq, res.basis)
    if better is not None:
        viol = max(float(np.max(A_ub @ better - b_ub, initial=0.0)),
                   float(np.max(np.abs(A_eq @ better - b_eq), initial=0.0)),
                   float(np.max(-better, initial=0.0)))
        if viol <= 1e-9:
            y = better
    x = lb.copy()
    x[free] = lb[free] + span * np.clip(y, 0.0, 1.0)
    return "optimal", x, float(red.c @ x)


def solve_builtin(m: MilpModel, combo_limit: int = DEFAULT_COMBO_LIMIT,
                  time_budget: Optional[float] = None) -> SolveOutcome:
    """Enumerate binary assignments and solve each LP with the dense simplex.

    Raises :class:`ComboLimitExceeded` when the number of assignments is
    larger than ``combo_limit``.
    """
    start = time.perf_counter()
    groups = choice_groups(m)
    combos = math.prod(len(g) for g in groups)
    if combos > combo_limit:
        raise ComboLimitExceeded(f"{combos} binary assignments exceed the limit {combo_limit}")
    red = _reduce(m)
    pos = {int(j): p for p, j in enumerate(red.keep)}
    best_val, best_x, n_lps = -math.inf, None, 0
    timed_out = False
    for choice in itertools.product(*groups):
        if time_budget is not None and time.perf_counter() - start > time_budget:
            timed_out = True
            break
        lb, ub = red.lb.copy(), red.ub.copy()
        for g, pick in zip(groups, choice):
            for j in g:
                if j is None:
                    continue
                val = 1.0 if j == pick else 0.0
                lb[pos[j]] = ub[pos[j]] = val
        status, x, val = _solve_lp(red, lb, ub)
        n_lps += 1
        if status == "optimal" and val > best_val + 1e-12 * max(1.0, abs(val)):
            best_val, best_x = val, x
    wall = time.perf_counter() - start
    if best_x is None:
        status = Status.TIMED_OUT if timed_out else Status.INFEASIBLE
        return SolveOutcome(status, n_lps=n_lps, wall_time=wall)
    full = np.zeros(m.n_vars)
    full[red.keep] = best_x
    if red.state.size:
        full[red.state] = red.s0 + red.S @ best_x
    objective = best_val if m.maximize else -best_val
    outcome = SolveOutcome(Status.FEASIBLE if timed_out else Status.OPTIMAL, objective,
                           gap=None if not timed_out else math.inf, n_lps=n_lps, wall_time=wall)
    return _finish(m, outcome, full)


# -- external solver -------------------------------------------------------

_STATUS_WORDS = {
    "optimal": Status.OPTIMAL, "feasible": Status.FEASIBLE, "infeasible": Status.INFEASIBLE,
    "timelimit": Status.TIMED_OUT, "timedout": Status.TIMED_OUT, "time_limit": Status.TIMED_OUT,
}


def read_solution(text: str) -> tuple[Optional[Status], Optional[float], Optional[float], dict]:
    """Parse ``status``/``objective``/``gap`` header lines and ``name value`` pairs."""
    status = objective = gap = None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolverFailed(f"solution line {lineno} is not 'name value': {raw!r}")
        key, val = parts
        low = key.lower()
        if low == "status":
            word = val.lower()
            if word not in _STATUS_WORDS:
                raise SolverFailed(f"unknown solver status {val!r}")
            status = _STATUS_WORDS[word]
            continue
        try:
            num = float(val)
        except ValueError as exc:
            raise SolverFailed(f"solution line {lineno} has a non-numeric value: {raw!r}") from exc
        if low == "objective":
            objective = num
        elif low == "gap":
            gap = num
        else:
            values[key] = num
    return status, objective, gap, values


def default_solver_cmd() -> Optional[str]:
    return os.environ.get(SOLVER_ENV) or None


def solve_external(m: MilpModel, solver_cmd: Optional[str] = None,
                   time_budget: float = ANCHOR_BUDGET_S) -> SolveOutcome:
    """Write the model as an LP file, run ``solver_cmd`` and read its solution.

    ``solver_cmd`` is a template with ``{lp}`` and ``{sol}`` placeholders (and
    optionally ``{time}``); the ``STLPDE_SOLVER`` environment variable
    overrides it.
    """
    cmd = default_solver_cmd() or solver_cmd
    if not cmd:
        raise SolverFailed(f"no solver command configured (set {SOLVER_ENV} or pass solver_cmd)")
    start = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="stlpde_") as tmp:
        lp_path = Path(tmp) / "model.lp"
        sol_path = Path(tmp) / "model.sol"
        lp_path.write_text(write_lp(m))
        args = [a.format(lp=str(lp_path), sol=str(sol_path), time=time_budget)
                for a in shlex.split(cmd)]
        timed_out = False
        try:
            proc = subprocess.run(args, capture_output=True, text=True, timeout=time_budget)
        except FileNotFoundError as exc:
            raise SolverFailed(f"solver executable not found: {args[0]}", str(exc)) from exc
        except subprocess.TimeoutExpired as exc:
            timed_out = True
            proc = None
            stderr = exc.stderr.decode() if isinstance(exc.stderr, bytes) else (exc.stderr or "")
        if proc is not None and proc.returncode != 0:
            raise SolverFailed(f"solver exited with code {proc.returncode}", proc.stderr)
        stderr = proc.stderr if proc is not None else stderr
        if not sol_path.exists():
            if timed_out:
                return SolveOutcome(Status.TIMED_OUT, wall_time=time.perf_counter() - start,
                                    message="time budget exhausted without incumbent")
            raise SolverFailed("solver wrote no solution file", stderr)
        status, objective, gap, values = read_solution(sol_path.read_text())
    wall = time.perf_counter() - start
    if status in (Status.INFEASIBLE,):
        return SolveOutcome(status, wall_time=wall)
    if not values:
        if timed_out or status is Status.TIMED_OUT:
            return SolveOutcome(Status.TIMED_OUT, wall_time=wall)
        raise SolverFailed("solution file holds no variable values", stderr)
    if status is None:
        status = Status.FEASIBLE if timed_out else Status.OPTIMAL
    elif status is Status.TIMED_OUT:
        status = Status.FEASIBLE
    missing = [n for n in m.names if n not in values]
    if missing and any(not n.startswith(("u_", "v_")) for n in missing):
        raise SolverFailed(f"solution misses {len(missing)} variables, e.g. {missing[0]}", stderr)
    x = np.array([values.get(n, 0.0) for n in m.names])
    if objective is None:
        objective = m.evaluate_objective(x)
    outcome = SolveOutcome(status, float(objective), gap=gap, wall_time=wall)
    return _finish(m, outcome, x)


def solve(m: MilpModel, solver: str = "builtin", solver_cmd: Optional[str] = None,
          time_budget: float = ANCHOR_BUDGET_S, combo_limit: int = DEFAULT_COMBO_LIMIT) -> SolveOutcome:
    """Dispatch on ``solver``: ``"builtin"`` or ``"external"``."""
    if solver == "builtin":
        return solve_builtin(m, combo_limit=combo_limit, time_budget=time_budget)
    if solver == "external":
        return solve_external(m, solver_cmd, time_budget=time_budget)
    raise ValueError(f"unknown solver {solver!r}")
