"""Problem files: a PDE system, a grid and an STL formula in one JSON document."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from stlpde.fem import DEFAULT_NT, DEFAULT_NX, Discretization, Material, PdeSystem
from stlpde.formula import Formula, StlError, cspec_to_json, print_mathform, validate
from stlpde.milp import (ANCHOR_BUDGET_S, DEFAULT_COMBO_LIMIT, SUBGOAL_BUDGET_S, MilpModel,
                         SolveOutcome, encode, solve)
from stlpde.parsing import parse_cspec_json, parse_mathform


class ProblemError(ValueError):
    """A problem file is missing, malformed or inconsistent."""


@dataclass(frozen=True)
class SolverConfig:
    """Which solver to use and how long it may run."""

    solver: str = "builtin"
    solver_cmd: Optional[str] = None
    anchor_budget_s: float = ANCHOR_BUDGET_S
    subgoal_budget_s: float = SUBGOAL_BUDGET_S
    combo_limit: int = DEFAULT_COMBO_LIMIT

    def __post_init__(self):
        if self.solver not in ("builtin", "external"):
            raise ValueError(f"solver must be 'builtin' or 'external', got {self.solver!r}")

    def run(self, model: MilpModel, *, subgoal: bool = False) -> SolveOutcome:
        budget = self.subgoal_budget_s if subgoal else self.anchor_budget_s
        return solve(model, self.solver, self.solver_cmd, time_budget=budget,
                     combo_limit=self.combo_limit)


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Maximize the robustness of ``formula`` on ``system`` discretized by ``disc``."""

    system: PdeSystem
    formula: Formula
    disc: Discretization
    nl: str = ""

    def __post_init__(self):
        report = validate(self.formula, self.system)
        if not report.valid:
            raise ProblemError("; ".join(report.reasons))
        if not (np.isclose(self.disc.L, self.system.L) and np.isclose(self.disc.tmax, self.system.tmax)):
            raise ProblemError("grid does not match the system geometry")

    @classmethod
    def build(cls, system: PdeSystem, formula: Formula, nx: int = DEFAULT_NX,
              nt: int = DEFAULT_NT, nl: str = "") -> "ControlProblem":
        return cls(system, formula, Discretization.for_system(system, nx, nt), nl)

    def with_grid(self, nx: Optional[int] = None, nt: Optional[int] = None) -> "ControlProblem":
        disc = Discretization(nx or self.disc.nx, nt or self.disc.nt, self.system.L, self.system.tmax)
        return replace(self, disc=disc)

    def encode(self) -> MilpModel:
        return encode(self.system, self.disc, self.formula)

    def solve(self, config: SolverConfig = SolverConfig()) -> SolveOutcome:
        return config.run(self.encode())

    def to_json(self) -> dict:
        return problem_to_json(self)


def system_to_json(sys: PdeSystem) -> dict:
    out = {"kind": sys.kind, "L": sys.L, "tmax": sys.tmax, "g0": sys.g0,
           "materials": [m.to_json() for m in sys.materials]}
    if sys.u0 is not None:
        out["u0"] = {"const": float(sys.u0)} if np.ndim(sys.u0) == 0 else {"nodes": np.asarray(sys.u0).tolist()}
    if sys.v0 is not None:
        out["v0"] = {"nodes": np.asarray(sys.v0).tolist()}
    if sys.q_max is not None:
        out["q_max"] = sys.q_max
    if sys.u_bounds is not None:
        out["u_bounds"] = list(sys.u_bounds)
    if sys.lumped_mass:
        out["lumped_mass"] = True
    return out


def _profile(data, key: str):
    if data is None:
        return None
    if isinstance(data, (int, float)):
        return float(data)
    if isinstance(data, dict) and "const" in data:
        return float(data["const"])
    if isinstance(data, dict) and "nodes" in data:
        return np.asarray(data["nodes"], dtype=float)
    raise ProblemError(f"{key} must be a number, {{'const': v}} or {{'nodes': [...]}}")


def system_from_json(data: dict) -> PdeSystem:
    try:
        mats = tuple(Material(**m) for m in data["materials"])
        return PdeSystem(
            kind=data["kind"], L=float(data["L"]), tmax=float(data["tmax"]), g0=float(data["g0"]),
            materials=mats, u0=_profile(data.get("u0"), "u0"), v0=_profile(data.get("v0"), "v0"),
            q_max=data.get("q_max"), u_bounds=tuple(data["u_bounds"]) if data.get("u_bounds") else None,
            lumped_mass=bool(data.get("lumped_mass", False)),
        )
    except KeyError as exc:
        raise ProblemError(f"system is missing field {exc}") from None
    except TypeError as exc:
        raise ProblemError(f"bad system description: {exc}") from None


def formula_from_json(stl) -> Formula:
    if isinstance(stl, str):
        return parse_mathform(stl)
    if isinstance(stl, dict) and "math" in stl:
        return parse_mathform(stl["math"])
    return parse_cspec_json(stl)


def problem_to_json(p: ControlProblem) -> dict:
    out = system_to_json(p.system)
    out["grid"] = {"nx": p.disc.nx, "nt": p.disc.nt}
    out["stl"] = cspec_to_json(p.formula)
    out["stl_math"] = print_mathform(p.formula)
    if p.nl:
        out["nl"] = p.nl
    return out


def problem_from_json(data: dict, nx: Optional[int] = None, nt: Optional[int] = None) -> ControlProblem:
    if not isinstance(data, dict):
        raise ProblemError("problem file must hold a JSON object")
    try:
        system = system_from_json(data)
        if "stl" not in data:
            raise ProblemError("problem is missing 'stl'")
        formula = formula_from_json(data["stl"])
        grid = data.get("grid") or {}
        disc = Discretization(nx or grid.get("nx", DEFAULT_NX), nt or grid.get("nt", DEFAULT_NT),
                              system.L, system.tmax)
        return ControlProblem(system, formula, disc, data.get("nl", ""))
    except (StlError, ValueError) as exc:
        if isinstance(exc, ProblemError):
            raise
        raise ProblemError(str(exc)) from exc


def load_problem(path, nx: Optional[int] = None, nt: Optional[int] = None) -> ControlProblem:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ProblemError(f"problem file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ProblemError(f"cannot read {path}: {exc}") from None
    return problem_from_json(data, nx, nt)


def save_problem(p: ControlProblem, path) -> None:
    Path(path).write_text(json.dumps(problem_to_json(p), indent=2) + "\n")
