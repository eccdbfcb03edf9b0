"""Command-line entry point ``stlpde``.

Exit codes: 0 success, 2 input or validation error, 3 solver or runtime error.
CSV files use fixed column orders and ``%.9g`` floats:

``trajectory.csv``  t, x, u (plus v for wave problems), one row per (step, node)
``control.csv``     t, q, one row per step; ``q`` acts on ``[t, t + dt]``
``constraints.csv`` atom, op, t_lo, t_hi, x_lo, x_hi, cmp, a, b
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from stlpde.datagen import emit_dataset, enumerate_formats
from stlpde.fem import ControlTrajectory, simulate
from stlpde.formula import StlError, atoms, cspec_to_json
from stlpde.metrics import EmptyInput, evaluate_records, iou, parse_candidate
from stlpde.milp import ComboLimitExceeded, LpNumericalFailure, SolverFailed
from stlpde.milp.solve import SOLVER_ENV, SolveOutcome
from stlpde.parsing import parse_any
from stlpde.problem import ControlProblem, ProblemError, SolverConfig, load_problem, system_from_json
from stlpde.reasoning import (ChainFailed, NoPairs, build_preference_pairs, pairs_to_jsonl,
                              run_baseline)
from stlpde.semantics import DomainMismatch, EmptyWindow, eval_robustness

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3

INPUT_ERRORS = (ProblemError, StlError, DomainMismatch, EmptyWindow, EmptyInput, FileNotFoundError,
                json.JSONDecodeError, KeyError)
SOLVER_ERRORS = (SolverFailed, ComboLimitExceeded, LpNumericalFailure, ChainFailed)

DEFAULTS = {
    "solver": "builtin", "solver_cmd": None, "budget_s": 600.0, "subgoal_budget_s": 120.0,
    "combo_limit": 10_000, "nx": None, "nt": None, "seed": None, "jobs": 1, "out": ".",
}


class UsageError(ValueError):
    pass


def fmt(value: float) -> str:
    return "%.9g" % value


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- configuration ---------------------------------------------------------

def resolve(args) -> dict:
    """Defaults, then the ``--config`` file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if os.environ.get(SOLVER_ENV):
        cfg["solver_cmd"] = os.environ[SOLVER_ENV]
    if cfg["solver"] == "external" and not cfg["solver_cmd"]:
        raise UsageError(f"--solver external needs --solver-cmd or {SOLVER_ENV}")
    return cfg


def solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(cfg["solver"], cfg["solver_cmd"], float(cfg["budget_s"]),
                        float(cfg["subgoal_budget_s"]), int(cfg["combo_limit"]))


def _need_seed(cfg: dict) -> int:
    if cfg["seed"] is None:
        raise UsageError("this command samples randomly; pass --seed")
    return int(cfg["seed"])


def _load(path, cfg) -> ControlProblem:
    return load_problem(path, cfg["nx"], cfg["nt"])


# -- CSV writers -----------------------------------------------------------

def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def trajectory_csv(traj) -> str:
    header = ["t", "x", "u"] + (["v"] if traj.v is not None else [])
    rows = []
    for k, t in enumerate(traj.ts):
        for i, x in enumerate(traj.xs):
            row = [float(t), float(x), float(traj.u[k, i])]
            if traj.v is not None:
                row.append(float(traj.v[k, i]))
            rows.append(row)
    return _csv(rows, header)


def control_csv(ctrl: ControlTrajectory, ts) -> str:
    return _csv(([float(t), float(q)] for t, q in zip(ts[:-1], ctrl.values)), ["t", "q"])


def constraints_csv(formula) -> str:
    rows = [[i, a.op.value, a.t_lo, a.t_hi, a.pred.x_lo, a.pred.x_hi, a.pred.cmp.value, a.pred.a, a.pred.b]
            for i, a in enumerate(atoms(formula))]
    return _csv(rows, ["atom", "op", "t_lo", "t_hi", "x_lo", "x_hi", "cmp", "a", "b"])


def write_outcome(out: Path, problem: ControlProblem, outcome: SolveOutcome) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    result = outcome.to_json()
    _dump_json(out / "result.json", result)
    if outcome.has_solution:
        (out / "trajectory.csv").write_text(trajectory_csv(outcome.trajectory))
        (out / "control.csv").write_text(control_csv(outcome.control, problem.disc.ts))
    return result


# -- commands --------------------------------------------------------------

def _solve_one(task):
    path, out, cfg = task
    problem = _load(path, cfg)
    outcome = problem.solve(solver_config(cfg))
    return write_outcome(Path(out), problem, outcome)


def cmd_solve(args, cfg) -> int:
    paths = args.problem
    out = Path(cfg["out"])
    if len(paths) == 1:
        tasks = [(paths[0], out, cfg)]
    else:
        tasks = [(p, out / Path(p).stem, cfg) for p in paths]
    for p, _, _ in tasks:
        _load(p, cfg)  # validate every input before solving any
    if cfg["jobs"] > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(_solve_one, tasks))
    else:
        results = [_solve_one(t) for t in tasks]
    if len(tasks) > 1:
        _dump_json(out / "report.json", {Path(p).stem: r for (p, _, _), r in zip(tasks, results)})
    print(json.dumps(results[0] if len(results) == 1 else results, sort_keys=True))
    return EXIT_OK if all(r["r"] is not None for r in results) else EXIT_SOLVER


def _read_control(path, problem: ControlProblem) -> ControlTrajectory:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "q" not in rows[0]:
        raise ProblemError(f"{path} must be a CSV with a 'q' column")
    return ControlTrajectory([float(r["q"]) for r in rows], problem.system.control_bound)


def cmd_simulate(args, cfg) -> int:
    problem = _load(args.problem, cfg)
    if args.control:
        try:
            ctrl = _read_control(args.control, problem)
        except ValueError as exc:
            raise ProblemError(str(exc)) from exc
    else:
        ctrl = ControlTrajectory.zeros(problem.disc.nt, problem.system.control_bound)
    traj = simulate(problem.system, problem.disc, ctrl)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(trajectory_csv(traj))
    r = eval_robustness(problem.formula, traj)
    _dump_json(out / "simulate.json", {"r": r})
    print(json.dumps({"r": r}))
    return EXIT_OK


def _records_jsonl(stats) -> str:
    lines = []
    for rec in stats.records:
        item = {"seed": rec.seed, "error": rec.error or None,
                "subgoal": cspec_to_json(rec.subgoal) if rec.subgoal is not None else None}
        if rec.result is not None:
            item.update(r_direct=rec.result.r_direct, r_chained=rec.result.r_chained,
                        r_subgoal=rec.result.r_subgoal, switch_time=rec.result.switch_time,
                        success=rec.result.success)
        lines.append(json.dumps(item, sort_keys=True) + "\n")
    return "".join(lines)


def _baseline(args, cfg, write_pairs: bool) -> int:
    seed = _need_seed(cfg)
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    problem = _load(args.problem, cfg)
    stats = run_baseline(problem, args.samples, seed, solver_config(cfg), mode=args.mode, jobs=cfg["jobs"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    report = stats.to_json()
    report["seed"] = seed
    report["mode"] = args.mode
    _dump_json(out / "stats.json", report)
    (out / "samples.jsonl").write_text(_records_jsonl(stats))
    if write_pairs:
        try:
            pairs = build_preference_pairs(stats.records, cap=args.cap)
        except NoPairs:
            pairs = []
        (out / "pairs.jsonl").write_text(pairs_to_jsonl(pairs, problem.formula, problem.nl))
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_reason(args, cfg) -> int:
    return _baseline(args, cfg, write_pairs=True)


def cmd_baseline(args, cfg) -> int:
    return _baseline(args, cfg, write_pairs=False)


def cmd_prefdata(args, cfg) -> int:
    seed = _need_seed(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    chunks, counts = [], {}
    for i, path in enumerate(args.problem):
        problem = _load(path, cfg)
        stats = run_baseline(problem, args.samples, seed + i, solver_config(cfg), mode=args.mode,
                             jobs=cfg["jobs"])
        try:
            pairs = build_preference_pairs(stats.records, cap=args.cap)
        except NoPairs:
            pairs = []
        counts[Path(path).stem] = len(pairs)
        chunks.append(pairs_to_jsonl(pairs, problem.formula, problem.nl))
    (out / "pairs.jsonl").write_text("".join(chunks))
    print(json.dumps({"pairs": counts}, sort_keys=True))
    return EXIT_OK


def cmd_datagen(args, cfg) -> int:
    seed = _need_seed(cfg)
    if args.per_format < 1:
        raise UsageError("--per-format must be at least 1")
    formats = enumerate_formats()
    if args.atoms:
        formats = [f for f in formats if f.n_atoms in args.atoms]
    kinds = ["heat", "wave"] if args.kind == "both" else [args.kind]
    written = {}
    for kind in kinds:
        paths = emit_dataset(formats, args.per_format, kind, args.split, cfg["out"], seed=seed)
        merged = paths[-1]
        written[kind] = {"merged": str(merged), "records": sum(1 for _ in open(merged)),
                         "files": len(paths) - 1}
    print(json.dumps(written, sort_keys=True))
    return EXIT_OK


def _formula_file(path):
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict) and "stl" in data:
        return data["stl"], data
    return data, data


def _system_for(args, data):
    if args.problem:
        return _load(args.problem, DEFAULTS).system
    if isinstance(data, dict) and "kind" in data:
        return system_from_json(data)
    if isinstance(data, dict) and "system" in data:
        return system_from_json(data["system"])
    raise UsageError("no system found: pass --problem or use a problem file as --truth")


def cmd_iou(args, cfg) -> int:
    truth_data, truth_doc = _formula_file(args.truth)
    truth = parse_any(truth_data)
    sys_ = _system_for(args, truth_doc)
    cand_data, _ = _formula_file(args.cand)
    cand = parse_candidate(cand_data, sys_)
    score = iou(truth, cand, sys_)
    print(json.dumps({"iou": score}))
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    lines = Path(args.input).read_text().splitlines()
    records = [json.loads(line) for line in lines if line.strip()]
    sys_ = _system_for(args, records[0] if records else {})
    report = evaluate_records(records, sys_)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "eval.json", report)
    print(json.dumps(report["aggregate"], sort_keys=True))
    return EXIT_OK


def cmd_export_plot(args, cfg) -> int:
    problem = _load(args.problem, cfg)
    outcome = problem.solve(solver_config(cfg))
    out = Path(cfg["out"])
    write_outcome(out, problem, outcome)
    (out / "constraints.csv").write_text(constraints_csv(problem.formula))
    print(json.dumps(outcome.to_json(), sort_keys=True))
    return EXIT_OK if outcome.has_solution else EXIT_SOLVER


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="JSON file with default option values")
    g.add_argument("--solver", choices=["builtin", "external"])
    g.add_argument("--solver-cmd", dest="solver_cmd", help="command template with {lp} and {sol}")
    g.add_argument("--budget-s", dest="budget_s", type=float, help="anchor solve time budget")
    g.add_argument("--subgoal-budget-s", dest="subgoal_budget_s", type=float)
    g.add_argument("--combo-limit", dest="combo_limit", type=int)
    g.add_argument("--nx", type=int)
    g.add_argument("--nt", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int)
    g.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="stlpde", description="STL-constrained PDE control toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="maximize robustness of a problem")
    s.add_argument("problem", nargs="+")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("simulate", parents=[common], help="simulate a control sequence")
    s.add_argument("problem")
    s.add_argument("--control", help="control.csv (zero control when omitted)")
    s.set_defaults(func=cmd_simulate)

    helps = {"reason": "random-sampling subgoal reasoning with preference pairs",
             "baseline": "random-sampling subgoal statistics only"}
    for name, func in (("reason", cmd_reason), ("baseline", cmd_baseline)):
        s = sub.add_parser(name, parents=[common], help=helps[name])
        s.add_argument("problem")
        s.add_argument("--samples", type=int, default=20)
        s.add_argument("--mode", choices=["restart", "shift"], default="restart")
        s.add_argument("--cap", type=int, default=10, help="maximum preference pairs")
        s.set_defaults(func=func)

    s = sub.add_parser("prefdata", parents=[common], help="preference pairs for many problems")
    s.add_argument("problem", nargs="+")
    s.add_argument("--samples", type=int, default=20)
    s.add_argument("--mode", choices=["restart", "shift"], default="restart")
    s.add_argument("--cap", type=int, default=10)
    s.set_defaults(func=cmd_prefdata)

    s = sub.add_parser("datagen", parents=[common], help="synthesize NL/STL records")
    s.add_argument("--kind", choices=["heat", "wave", "both"], default="heat")
    s.add_argument("--per-format", dest="per_format", type=int, default=1)
    s.add_argument("--split", choices=["train", "test"], default="train")
    s.add_argument("--atoms", type=int, nargs="*", choices=[1, 2, 3])
    s.set_defaults(func=cmd_datagen)

    s = sub.add_parser("iou", parents=[common], help="IoU of two formulas")
    s.add_argument("--truth", required=True)
    s.add_argument("--cand", required=True)
    s.add_argument("--problem", help="problem file supplying the system")
    s.set_defaults(func=cmd_iou)

    s = sub.add_parser("eval", parents=[common], help="score an eval JSONL batch")
    s.add_argument("input")
    s.add_argument("--problem", help="problem file supplying the system")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("export-plot", parents=[common], help="solve and export plot data")
    s.add_argument("problem")
    s.set_defaults(func=cmd_export_plot)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = resolve(args)
        code = args.func(args, cfg)
    except (UsageError, *INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return code


if __name__ == "__main__":
    sys.exit(main())
