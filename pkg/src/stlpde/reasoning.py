"""Subgoal reasoning: solve a subgoal first, then the anchor from the state it leaves.

A subgoal ``phi'`` keeps the anchor's tree, operators, comparisons and spatial
ranges but moves every window before the anchor starts and perturbs the
profiles. Chaining solves ``phi'``, simulates its control up to the switch
time ``t_s`` (the latest subgoal window end) and re-solves the anchor from the
resulting state.

Two chaining modes exist. ``"restart"`` (default) takes the switched state as a
fresh initial condition and solves the anchor with its original windows over
the full horizon. ``"shift"`` keeps one timeline: the anchor is solved on the
remaining horizon ``tmax - t_s`` with windows moved by ``-t_s``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from stlpde.fem import Discretization, PdeSystem, final_state, final_velocity, nearest_step, simulate
from stlpde.formula import (Atom, Formula, LinearPredicate, atoms, map_atoms, normalize_num,
                            print_cspec, validate)
from stlpde.milp import ComboLimitExceeded, LpNumericalFailure, SolveOutcome, SolverFailed
from stlpde.problem import ControlProblem, SolverConfig

DIFFICULTY_CUTS = {"heat": (0.8, 0.5), "wave": (0.88, 0.55)}
EASY, MEDIUM, HARD = "Easy", "Medium", "Hard"
CHAIN_MODES = ("restart", "shift")
DEFAULT_PAIR_CAP = 10


class NoPreWindow(ValueError):
    """The anchor starts too early to leave room for a subgoal."""


class ScheduleConflict(ValueError):
    """The subgoal ends after the anchor begins."""


class ChainFailed(RuntimeError):
    """A subgoal or anchor solve returned no usable solution."""


class NoPairs(ValueError):
    """All samples fell on one side of the direct utility."""


@dataclass(frozen=True)
class ChainResult:
    r_direct: float
    r_chained: float
    subgoal: Formula
    switch_time: float
    r_subgoal: Optional[float] = None
    mode: str = "restart"

    @property
    def success(self) -> bool:
        return self.r_chained > self.r_direct

    @property
    def gain(self) -> float:
        return self.r_chained - self.r_direct


@dataclass
class SampleRecord:
    seed: int
    subgoal: Optional[Formula] = None
    result: Optional[ChainResult] = None
    error: str = ""


@dataclass
class ReasoningStats:
    success_rate: Optional[float]
    utility_gain: Optional[float]
    difficulty: Optional[str]
    r_direct: Optional[float]
    n_samples: int
    n_evaluated: int
    n_no_pre_window: int
    n_excluded: int
    records: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "success_rate": self.success_rate,
            "utility_gain": self.utility_gain,
            "difficulty": self.difficulty,
            "r_direct": self.r_direct,
            "n_samples": self.n_samples,
            "n_evaluated": self.n_evaluated,
            "n_no_pre_window": self.n_no_pre_window,
            "n_excluded": self.n_excluded,
        }


@dataclass(frozen=True)
class PreferencePair:
    winner: Formula
    loser: Formula
    r_winner: float
    r_loser: float
    r_direct: float
    seed: Optional[int] = None

    def to_json(self, anchor: Formula, nl: str = "") -> dict:
        def cs(f):
            regions, text = print_cspec(f)
            return {"regions": {k: v.to_json() for k, v in regions.items()}, "cspec": text}

        return {"nl": nl, "anchor_cspec": cs(anchor), "winner_cspec": cs(self.winner),
                "loser_cspec": cs(self.loser), "r_direct": self.r_direct,
                "r_winner": self.r_winner, "r_loser": self.r_loser, "seed": self.seed}


# -- difficulty ------------------------------------------------------------

def difficulty(success_rate: float, kind: str) -> str:
    """Bucket a random-sampling success rate: ``(hi, 1]`` Easy, ``(lo, hi]`` Medium, ``[0, lo]`` Hard."""
    if not 0.0 <= success_rate <= 1.0:
        raise ValueError(f"success rate must lie in [0, 1], got {success_rate}")
    hi, lo = DIFFICULTY_CUTS[kind]
    if success_rate > hi:
        return EASY
    if success_rate > lo:
        return MEDIUM
    return HARD


# -- subgoal sampling ------------------------------------------------------

def pre_window(anchor: Formula) -> float:
    return min(a.t_lo for a in atoms(anchor))


def sample_subgoal(anchor: Formula, sys: PdeSystem, rng_seed, dt: Optional[float] = None) -> Formula:
    """Random subgoal with every window inside ``[0, T_pre]``.

    ``T_pre`` is the earliest anchor window start. Slopes are scaled by
    ``U[0.5, 1.5]`` and intercepts shifted by ``U[-0.3, 0.3] * 0.1 * (u_hi - u_lo)``.
    """
    dt = sys.tmax / 100 if dt is None else dt
    t_pre = pre_window(anchor)
    if t_pre <= 2 * dt:
        raise NoPreWindow(f"anchor starts at t={t_pre:g}, leaving no room before it (dt={dt:g})")
    rng = np.random.default_rng(rng_seed)
    u_lo, u_hi = sys.state_bounds
    shift_scale = 0.1 * (u_hi - u_lo)

    def perturb(a: Atom) -> Atom:
        lo, hi = np.sort(rng.uniform(0.0, t_pre, size=2))
        lo, hi = normalize_num(lo), min(normalize_num(hi), t_pre)
        lo = min(lo, hi)
        p = a.pred
        slope = normalize_num(p.a * rng.uniform(0.5, 1.5))
        icpt = normalize_num(p.b + rng.uniform(-0.3, 0.3) * shift_scale)
        return Atom(a.op, lo, hi, LinearPredicate(p.x_lo, p.x_hi, p.cmp, slope, icpt))

    sub = map_atoms(anchor, perturb)
    assert validate(sub, sys).valid
    return sub


# -- chaining --------------------------------------------------------------

def switch_time(subgoal: Formula) -> float:
    return max(a.t_hi for a in atoms(subgoal))


def _require(outcome: SolveOutcome, what: str) -> SolveOutcome:
    if not outcome.has_solution:
        raise ChainFailed(f"{what} solve ended with status {outcome.status.value}")
    return outcome


def solve_direct(problem: ControlProblem, config: SolverConfig = SolverConfig()) -> float:
    return _require(problem.solve(config), "anchor").objective


def chain(problem: ControlProblem, subgoal: Formula, config: SolverConfig = SolverConfig(), *,
          mode: str = "restart", r_direct: Optional[float] = None) -> ChainResult:
    """Solve ``subgoal``, switch at ``t_s``, then solve the anchor from the new state.

    ``r_direct`` may be passed to reuse a direct anchor solve across subgoals.
    """
    if mode not in CHAIN_MODES:
        raise ValueError(f"mode must be one of {CHAIN_MODES}")
    sys, disc, anchor = problem.system, problem.disc, problem.formula
    t_s = switch_time(subgoal)
    t_pre = pre_window(anchor)
    if t_s > t_pre + 1e-12 * max(1.0, t_pre):
        raise ScheduleConflict(f"subgoal ends at {t_s:g} after the anchor starts at {t_pre:g}")
    report = validate(subgoal, sys)
    if not report.valid:
        raise ValueError("invalid subgoal: " + "; ".join(report.reasons))

    sub_problem = replace(problem, formula=subgoal)
    sub = _require(config.run(sub_problem.encode(), subgoal=True), "subgoal")
    traj = simulate(sys, disc, sub.control)
    u_s = final_state(traj, t_s)
    v_s = final_velocity(traj, t_s)

    if mode == "restart":
        new_sys = sys.with_initial_state(u_s, v_s)
        new_problem = ControlProblem(new_sys, anchor, disc, problem.nl)
    else:
        k_s = nearest_step(disc.ts, t_s)
        if k_s >= disc.nt:
            raise ScheduleConflict("switch time leaves no steps for the anchor")
        t_cut = float(disc.ts[k_s])
        horizon = sys.tmax - t_cut
        new_sys = sys.with_initial_state(u_s, v_s, tmax=horizon)
        new_disc = Discretization(disc.nx, disc.nt - k_s, sys.L, horizon)
        shifted = map_atoms(anchor, lambda a: replace(
            a, t_lo=max(0.0, a.t_lo - t_cut), t_hi=min(max(0.0, a.t_hi - t_cut), horizon)))
        new_problem = ControlProblem(new_sys, shifted, new_disc, problem.nl)
    r_chained = _require(new_problem.solve(config), "anchor").objective
    if r_direct is None:
        r_direct = solve_direct(problem, config)
    return ChainResult(float(r_direct), float(r_chained), subgoal, t_s, sub.objective, mode)


# -- random-sampling baseline ----------------------------------------------

_SOLVE_ERRORS = (ChainFailed, SolverFailed, ComboLimitExceeded, LpNumericalFailure)


def sample_seeds(rng_seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(rng_seed).integers(0, 2**31 - 1, size=n)]


def _evaluate(args) -> SampleRecord:
    problem, config, mode, seed, r_direct = args
    try:
        sub = sample_subgoal(problem.formula, problem.system, seed, problem.disc.dt)
    except NoPreWindow as exc:
        return SampleRecord(seed, error=f"NoPreWindow: {exc}")
    try:
        res = chain(problem, sub, config, mode=mode, r_direct=r_direct)
    except _SOLVE_ERRORS as exc:
        return SampleRecord(seed, sub, error=f"{type(exc).__name__}: {exc}")
    return SampleRecord(seed, sub, res)


def summarize(records: list, r_direct: Optional[float], kind: str) -> ReasoningStats:
    no_pre = sum(r.error.startswith("NoPreWindow") for r in records)
    evaluated = [r for r in records if r.result is not None]
    attempted = len(records) - no_pre
    excluded = attempted - len(evaluated)
    if attempted:
        success_rate = sum(r.result.success for r in evaluated) / attempted
        gain = float(np.mean([r.result.gain for r in evaluated])) if evaluated else None
        level = difficulty(success_rate, kind)
    else:
        success_rate = gain = level = None
    return ReasoningStats(success_rate, gain, level, r_direct, len(records), len(evaluated),
                          no_pre, excluded, records)


def run_baseline(problem: ControlProblem, n_samples: int, rng_seed: int,
                 config: SolverConfig = SolverConfig(), *, mode: str = "restart",
                 jobs: int = 1) -> ReasoningStats:
    """Random-sampling subgoal baseline.

    ``success_rate`` counts failed solves as non-success; ``utility_gain``
    averages only evaluated samples. Samples rejected with NoPreWindow are
    left out of both and counted separately.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    seeds = sample_seeds(rng_seed, n_samples)
    if pre_window(problem.formula) <= 2 * problem.disc.dt:
        records = [_evaluate((problem, config, mode, s, math.nan)) for s in seeds]
        return summarize(records, None, problem.system.kind)
    try:
        r_direct = solve_direct(problem, config)
    except _SOLVE_ERRORS as exc:
        records = [SampleRecord(s, error=f"direct solve failed: {exc}") for s in seeds]
        return summarize(records, None, problem.system.kind)
    tasks = [(problem, config, mode, s, r_direct) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_evaluate, tasks))
    else:
        records = [_evaluate(t) for t in tasks]
    return summarize(records, r_direct, problem.system.kind)


# -- preference pairs ------------------------------------------------------

def build_preference_pairs(samples: Iterable, cap: int = DEFAULT_PAIR_CAP) -> list[PreferencePair]:
    """Cartesian winner x loser pairs, in sample order, truncated to ``cap``.

    ``samples`` holds :class:`SampleRecord` or :class:`ChainResult` items;
    records without a result are skipped.
    """
    results = []
    for s in samples:
        if isinstance(s, SampleRecord):
            if s.result is not None:
                results.append((s.result, s.seed))
        else:
            results.append((s, None))
    winners = [(r, seed) for r, seed in results if r.r_chained > r.r_direct]
    losers = [(r, seed) for r, seed in results if r.r_chained <= r.r_direct]
    if not winners or not losers:
        raise NoPairs(f"{len(winners)} winners and {len(losers)} losers; need both")
    pairs = []
    for (w, seed), (lo, _) in ((a, b) for a in winners for b in losers):
        if len(pairs) >= cap:
            break
        pairs.append(PreferencePair(w.subgoal, lo.subgoal, w.r_chained, lo.r_chained, w.r_direct, seed))
    return pairs


def pairs_to_jsonl(pairs: list, anchor: Formula, nl: str = "") -> str:
    return "".join(json.dumps(p.to_json(anchor, nl), sort_keys=True) + "\n" for p in pairs)


__all__ = [
    "CHAIN_MODES", "DIFFICULTY_CUTS", "ChainFailed", "ChainResult", "NoPairs", "NoPreWindow",
    "PreferencePair", "ReasoningStats", "SampleRecord", "ScheduleConflict", "build_preference_pairs",
    "chain", "difficulty", "pairs_to_jsonl", "pre_window", "run_baseline", "sample_subgoal",
    "sample_seeds", "solve_direct", "summarize", "switch_time",
]
