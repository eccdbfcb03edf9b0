"""MILP encoding, LP files, the built-in solver and the external adapter."""

import itertools
import sys

import numpy as np
import pytest

from conftest import DATA, heat_system, random_problem
from stlpde.fem import simulate
from stlpde.formula import And, Atom, Cmp, LinearPredicate, Op, Or
from stlpde.milp import (ComboLimitExceeded, LpFormatError, SolverFailed, Status, count_combos,
                         read_lp, read_solution, solve_builtin, solve_external, write_lp)
from stlpde.milp.highs_runner import RUNNER_CMD
from stlpde.milp.simplex import simplex
from stlpde.problem import ControlProblem, load_problem
from stlpde.semantics import eval_robustness, window_steps


def atom(op, t0, t1, cmp=Cmp.GT, b=300.0, x=(0.0, 100.0), a=0.0):
    return Atom(op, t0, t1, LinearPredicate(x[0], x[1], cmp, a, b))


def build(f, nx=4, nt=5, **kw):
    return ControlProblem.build(heat_system(**kw), f, nx, nt)


# -- encoding ---------------------------------------------------------------

def test_g_atom_has_no_binaries():
    m = build(atom(Op.G, 1, 5)).encode()
    assert m.n_binaries == 0


def test_f_atom_has_one_binary_per_step():
    p = build(atom(Op.F, 1, 3))
    w = len(window_steps(p.disc.ts, 1, 3))
    assert p.encode().n_binaries == w == 3


def test_or_of_and_binary_count():
    p = build(Or(And(atom(Op.G, 0, 1), atom(Op.G, 2, 3)), atom(Op.F, 1, 3)))
    w = len(window_steps(p.disc.ts, 1, 3))
    assert p.encode().n_binaries == w + 2


def test_dynamics_rows_reproduce_simulate():
    p = load_problem(DATA / "heat_22.json")
    m = p.encode()
    rng = np.random.default_rng(0)
    q = rng.uniform(-1e6, 1e6, p.disc.nt)
    traj = simulate(p.system, p.disc, q)
    x = np.zeros(m.n_vars)
    for k in range(p.disc.nt + 1):
        for i in range(p.disc.nx + 1):
            x[m.var(f"u_{k}_{i}")] = traj.u[k, i]
    for k in range(p.disc.nt):
        x[m.var(f"q_{k}")] = q[k]
    dyn = [r for r in m.rows if r.name.startswith(("dyn_", "init_"))]
    worst = max(abs(np.dot(r.coef, x[list(r.idx)]) - r.rhs) for r in dyn)
    assert worst <= 1e-6


def test_encode_is_deterministic():
    p = load_problem(DATA / "heat_22.json")
    assert write_lp(p.encode()) == write_lp(p.encode())


# -- LP files ---------------------------------------------------------------

def test_golden_lp_file():
    p = load_problem(DATA / "heat_22.json", 4, 10)
    assert write_lp(p.encode()) == (DATA / "heat_22_nx4_nt10.lp").read_text()


def test_lp_without_binaries_has_no_section():
    text = write_lp(build(atom(Op.G, 1, 5)).encode())
    assert "Binaries" not in text
    assert text.rstrip().endswith("End")


def test_lp_with_one_binary():
    f = atom(Op.F, 2.5, 2.5)
    text = write_lp(build(f, nt=10).encode())
    assert "Binaries\n z_0_0\n" in text


def test_lp_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(20):
        m = random_problem(rng, kind="heat" if rng.random() < 0.7 else "wave").encode()
        assert read_lp(write_lp(m)).same_as(m, rel_tol=1e-15)


def test_lp_reader_rejects_general_integers():
    with pytest.raises(LpFormatError):
        read_lp("Maximize\n obj: + 1 x\nSubject To\n c: + 1 x <= 1\nGenerals\n x\nEnd\n")


# -- built-in solver ----------------------------------------------------------

def test_g_only_solves_one_lp():
    out = solve_builtin(build(atom(Op.G, 1, 5)).encode())
    assert out.n_lps == 1 and out.status is Status.OPTIMAL


def test_f_over_three_steps_or_g_solves_six_lps():
    f = Or(atom(Op.F, 1, 3), atom(Op.G, 4, 5, Cmp.LT, 320))
    m = build(f).encode()
    assert count_combos(m) == 6
    assert solve_builtin(m).n_lps == 6


def test_combo_limit():
    f = Or(atom(Op.F, 0, 5), atom(Op.F, 0, 5))
    m = build(f, nt=20).encode()
    with pytest.raises(ComboLimitExceeded):
        solve_builtin(m, combo_limit=100)


def test_window_at_zero_gives_initial_margin():
    f = atom(Op.G, 0, 0, Cmp.GT, 290.0)
    out = build(f).solve()
    assert out.objective == pytest.approx(10.0, abs=1e-9)


def test_consistency_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(40):
        out = random_problem(rng, kind="heat" if rng.random() < 0.7 else "wave").solve()
        assert out.status is Status.OPTIMAL
        assert abs(out.objective - out.robustness) <= 1e-6 * max(1.0, abs(out.objective))


def _grid_dominance(problem, out, levels=5):
    qmax = problem.system.control_bound
    grid = np.linspace(-qmax, qmax, levels)
    best = -np.inf
    for q in itertools.product(grid, repeat=problem.disc.nt):
        r = eval_robustness(problem.formula, simulate(problem.system, problem.disc, np.array(q)))
        assert out.objective >= r - 1e-6
        best = max(best, r)
    return best


def test_brute_force_control_grid_dominance():
    rng = np.random.default_rng(12)
    hits = 0
    for _ in range(10):
        p = random_problem(rng, nx=4, nt=3, n_atoms=int(rng.integers(1, 3)))
        out = p.solve()
        best = _grid_dominance(p, out)
        levels = np.linspace(-1, 1, 5) * p.system.control_bound
        on_grid = all(np.min(np.abs(levels - q)) <= 1e-9 * p.system.control_bound for q in out.control.values)
        if on_grid:
            hits += 1
            assert best == pytest.approx(out.objective, abs=1e-6)
    assert hits > 0


def test_dropping_min_rows_never_lowers_optimum():
    rng = np.random.default_rng(13)
    for _ in range(5):
        p = random_problem(rng, nx=3, nt=4, n_atoms=2)
        m = p.encode()
        base = solve_builtin(m).objective
        names = [r.name for r in m.rows if r.name.startswith(("atom_", "and_"))]
        for name in rng.choice(names, size=min(6, len(names)), replace=False):
            relaxed = solve_builtin(m.without_row(str(name)))
            assert relaxed.objective >= base - 1e-9 * max(1.0, abs(base))


def test_simplex_matches_scipy_on_random_lps():
    from scipy.optimize import linprog

    rng = np.random.default_rng(14)
    for t in range(200):
        m, n = rng.integers(1, 8, 2)
        A = np.vstack([rng.normal(size=(m, n)), np.eye(n)])
        b = np.concatenate([rng.normal(size=m), np.full(n, 5.0)])
        c = rng.normal(size=n)
        Ae = rng.normal(size=(1, n)) if t % 3 == 0 else None
        be = rng.normal(size=1) if t % 3 == 0 else None
        ref = linprog(-c, A_ub=A, b_ub=b, A_eq=Ae, b_eq=be, method="highs")
        res = simplex(c, A, b, Ae, be)
        if ref.status == 2:
            assert res.status == "infeasible"
        else:
            assert res.status == "optimal"
            assert res.objective == pytest.approx(-ref.fun, abs=1e-7)


# -- external solver ---------------------------------------------------------

def test_external_matches_builtin(monkeypatch):
    monkeypatch.delenv("STLPDE_SOLVER", raising=False)
    rng = np.random.default_rng(15)
    for _ in range(3):
        m = random_problem(rng, nx=4, nt=5).encode()
        a = solve_builtin(m)
        b = solve_external(m, RUNNER_CMD, time_budget=60)
        assert b.status is Status.OPTIMAL
        assert b.objective == pytest.approx(a.objective, abs=1e-6)
        assert abs(b.objective - b.robustness) <= 1e-6 * max(1.0, abs(b.objective))


def test_env_var_overrides_command(monkeypatch):
    monkeypatch.setenv("STLPDE_SOLVER", RUNNER_CMD)
    m = build(atom(Op.G, 1, 5)).encode()
    out = solve_external(m, "definitely-not-a-solver {lp} {sol}", time_budget=60)
    assert out.status is Status.OPTIMAL


def test_missing_solver_binary(monkeypatch):
    monkeypatch.delenv("STLPDE_SOLVER", raising=False)
    m = build(atom(Op.G, 1, 5)).encode()
    with pytest.raises(SolverFailed) as info:
        solve_external(m, "definitely-not-a-solver {lp} {sol}")
    assert info.value.stderr


def test_failing_solver_captures_stderr(monkeypatch):
    monkeypatch.delenv("STLPDE_SOLVER", raising=False)
    m = build(atom(Op.G, 1, 5)).encode()
    cmd = f"{sys.executable} -c \"import sys; sys.stderr.write('boom'); sys.exit(4)\""
    with pytest.raises(SolverFailed) as info:
        solve_external(m, cmd)
    assert "boom" in info.value.stderr


def test_read_solution_format():
    status, obj, gap, vals = read_solution("status optimal\nobjective 1.5\ngap 0\nq_0 2\n# comment\n")
    assert status is Status.OPTIMAL and obj == 1.5 and gap == 0 and vals == {"q_0": 2.0}
    with pytest.raises(SolverFailed):
        read_solution("q_0 abc\n")


def test_degenerate_lp_does_not_cycle():
    # with a loose control bound and wide state box the band example's LP has a degenerate
    # optimal face on which Bland's rule cycles in floating point
    from stlpde.fem import PdeSystem

    base = load_problem(DATA / "heat_22.json")
    loose = PdeSystem(**{**base.system.__dict__, "q_max": 1e7, "u_bounds": (0.0, 700.0)})
    m = ControlProblem(loose, base.formula, base.disc).encode()
    a = solve_builtin(m)
    b = solve_external(m, RUNNER_CMD, time_budget=60)
    assert a.status is Status.OPTIMAL
    assert a.objective == pytest.approx(b.objective, abs=1e-6)
