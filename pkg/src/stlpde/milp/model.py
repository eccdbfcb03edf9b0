"""MILP model container and the formula/dynamics encoder.

Variable names are stable and human readable:

``u_k_i``  state at step k, node i
``v_k_i``  nodal velocity (wave only)
``q_k``    boundary control applied on step k -> k+1
``r_n``    robustness of formula node n (pre-order numbering)
``r_n_k``  per-step candidate of an ``F`` atom n at grid step k
``z_n_j``  selection binary j of ``F`` atom or ``Or`` node n
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from stlpde.fem import HEAT, Discretization, PdeSystem, assemble
from stlpde.formula import And, Atom, Cmp, Formula, Op, iter_nodes, validate
from stlpde.semantics import DomainMismatch, range_nodes, window_steps

LE, EQ, GE = "<=", "=", ">="


@dataclass(frozen=True)
class Row:
    name: str
    idx: tuple
    coef: tuple
    sense: str
    rhs: float


@dataclass(eq=False)
class MilpModel:
    """Variables with finite bounds, linear rows, and a linear objective."""

    names: list = field(default_factory=list)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    binary: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    maximize: bool = True
    system: Optional[PdeSystem] = None
    disc: Optional[Discretization] = None
    formula: Optional[Formula] = None
    index: dict = field(default_factory=dict)

    # -- building --------------------------------------------------------
    def add_var(self, name: str, lb: float, ub: float, binary: bool = False) -> int:
        if name in self.index:
            raise ValueError(f"duplicate variable {name}")
        self.index[name] = len(self.names)
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        return self.index[name]

    def add_row(self, name: str, terms: Iterable, sense: str, rhs: float) -> None:
        merged: dict[int, float] = {}
        for j, c in terms:
            if c != 0:
                merged[j] = merged.get(j, 0.0) + float(c)
        idx = tuple(sorted(j for j, c in merged.items() if c != 0))
        self.rows.append(Row(name, idx, tuple(merged[j] for j in idx), sense, float(rhs)))

    def var(self, name: str) -> int:
        return self.index[name]

    # -- inspection ------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_binaries(self) -> int:
        return sum(self.binary)

    def binary_names(self) -> list[str]:
        return [n for n, b in zip(self.names, self.binary) if b]

    def without_row(self, name: str) -> "MilpModel":
        """Copy of the model with one row dropped (used by relaxation tests)."""
        other = copy.copy(self)
        other.rows = [r for r in self.rows if r.name != name]
        if len(other.rows) != len(self.rows) - 1:
            raise KeyError(name)
        return other

    def row_matrix(self, rows: Optional[list] = None) -> np.ndarray:
        rows = self.rows if rows is None else rows
        A = np.zeros((len(rows), self.n_vars))
        for r, row in enumerate(rows):
            A[r, list(row.idx)] = row.coef
        return A

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, v in self.objective.items():
            c[j] = v
        return c

    def evaluate_objective(self, x: np.ndarray) -> float:
        return float(self.objective_vector() @ x)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest bound or row violation of a candidate point (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        worst = max(0.0, float(np.max(np.asarray(self.lb) - x, initial=0.0)),
                    float(np.max(x - np.asarray(self.ub), initial=0.0)))
        for row in self.rows:
            lhs = float(np.dot(row.coef, x[list(row.idx)])) if row.idx else 0.0
            if row.sense == LE:
                worst = max(worst, lhs - row.rhs)
            elif row.sense == GE:
                worst = max(worst, row.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - row.rhs))
        return worst

    def same_as(self, other: "MilpModel", rel_tol: float = 0.0) -> bool:
        """Structural equality of variables, bounds, rows and objective."""
        if (self.names != other.names or self.binary != other.binary
                or self.maximize != other.maximize or len(self.rows) != len(other.rows)):
            return False

        def close(a, b):
            return np.allclose(a, b, rtol=rel_tol, atol=0.0) if rel_tol else list(a) == list(b)

        if not (close(self.lb, other.lb) and close(self.ub, other.ub)):
            return False
        if sorted(self.objective.items()) != sorted(other.objective.items()):
            oa, ob = self.objective_vector(), other.objective_vector()
            if not close(oa, ob):
                return False
        for r1, r2 in zip(self.rows, other.rows):
            if (r1.name, r1.idx, r1.sense) != (r2.name, r2.idx, r2.sense):
                return False
            if not close(r1.coef + (r1.rhs,), r2.coef + (r2.rhs,)):
                return False
        return True


def atom_bound(atom: Atom, xs: np.ndarray, u_lo: float, u_hi: float, L: float) -> float:
    """Finite bound on the atom's robustness over the admissible state box.

    At least ``(u_hi - u_lo) + |a| L + 1`` and never smaller than the largest
    attainable margin plus one, so off-centre profiles stay representable.
    """
    ii = range_nodes(xs, atom.pred.x_lo, atom.pred.x_hi)
    mu = atom.pred.a * xs[ii] + atom.pred.b
    reach = float(np.max(np.maximum(np.abs(u_hi - mu), np.abs(u_lo - mu))))
    return max((u_hi - u_lo) + abs(atom.pred.a) * L + 1.0, reach + 1.0)


def encode(sys: PdeSystem, disc: Discretization, f: Formula) -> MilpModel:
    """Encode ``max r(f)`` subject to the discretized dynamics as a MILP.

    Min-type nodes (``G``, ``And``, spatial forall, ``=``) use epigraph rows
    only; max-type nodes (``F``, ``Or``) get big-M selection binaries.
    """
    report = validate(f, sys)
    if not report.valid:
        raise DomainMismatch("; ".join(report.reasons))
    m = MilpModel(system=sys, disc=disc, formula=f)
    xs, ts = disc.xs, disc.ts
    nx, nt, dt = disc.nx, disc.nt, disc.dt
    u_lo, u_hi = sys.state_bounds
    qmax = sys.control_bound
    wave = sys.kind != HEAT

    U = [[m.add_var(f"u_{k}_{i}", u_lo, u_hi) for i in range(nx + 1)] for k in range(nt + 1)]
    V = None
    if wave:
        vmax = (u_hi - u_lo) / dt
        V = [[m.add_var(f"v_{k}_{i}", -vmax, vmax) for i in range(nx + 1)] for k in range(nt + 1)]
    Q = [m.add_var(f"q_{k}", -qmax, qmax) for k in range(nt)]

    u_init = sys.initial_profile(xs)
    if not np.isclose(u_init[0], sys.g0, rtol=1e-12, atol=1e-12):
        raise ValueError("initial profile must match g0 at x = 0")
    for i in range(nx + 1):
        m.add_row(f"init_{i}", [(U[0][i], 1.0)], EQ, sys.g0 if i == 0 else u_init[i])
    if wave:
        v_init = sys.initial_velocity(xs)
        for i in range(nx + 1):
            m.add_row(f"vinit_{i}", [(V[0][i], 1.0)], EQ, 0.0 if i == 0 else v_init[i])

    fem = assemble(sys, disc)
    M, K, load = fem.M, fem.K, fem.load
    for k in range(nt):
        m.add_row(f"dyn_{k + 1}_0", [(U[k + 1][0], 1.0)], EQ, sys.g0)
        if not wave:
            A = M + dt * K
            for i in range(1, nx + 1):
                js = range(max(0, i - 1), min(nx, i + 1) + 1)
                terms = [(U[k + 1][j], A[i, j]) for j in js]
                terms += [(U[k][j], -M[i, j]) for j in js]
                terms.append((Q[k], -dt * load[i]))
                m.add_row(f"dyn_{k + 1}_{i}", terms, EQ, 0.0)
        else:
            m.add_row(f"mom_{k + 1}_0", [(V[k + 1][0], 1.0)], EQ, 0.0)
            for i in range(1, nx + 1):
                m.add_row(f"kin_{k + 1}_{i}",
                          [(U[k + 1][i], 1.0), (U[k][i], -1.0), (V[k + 1][i], -dt)], EQ, 0.0)
            for i in range(1, nx + 1):
                js = range(max(0, i - 1), min(nx, i + 1) + 1)
                terms = [(V[k + 1][j], M[i, j]) for j in js]
                terms += [(V[k][j], -M[i, j]) for j in js]
                terms += [(U[k + 1][j], dt * K[i, j]) for j in js]
                terms.append((Q[k], -dt * load[i]))
                m.add_row(f"mom_{k + 1}_{i}", terms, EQ, 0.0)

    nodes = list(iter_nodes(f))
    number = {id(node): n for n, node in enumerate(nodes)}
    bounds: dict[int, float] = {}

    def bound_of(node) -> float:
        n = number[id(node)]
        if n not in bounds:
            if isinstance(node, Atom):
                bounds[n] = atom_bound(node, xs, u_lo, u_hi, sys.L)
            else:
                bounds[n] = max(bound_of(node.left), bound_of(node.right))
        return bounds[n]

    R = {}
    for node in nodes:
        n = number[id(node)]
        B = bound_of(node)
        R[n] = m.add_var(f"r_{n}", -B, B)

    def margin_rows(prefix: str, r_idx: int, atom: Atom, k: int, nodes_i: np.ndarray):
        p = atom.pred
        for i in nodes_i:
            mu = p.a * xs[i] + p.b
            if p.cmp in (Cmp.GT, Cmp.EQ):
                # r <= u - mu
                m.add_row(f"{prefix}_{k}_{i}_ge" if p.cmp is Cmp.EQ else f"{prefix}_{k}_{i}",
                          [(r_idx, 1.0), (U[k][i], -1.0)], LE, -mu)
            if p.cmp in (Cmp.LT, Cmp.EQ):
                # r <= mu - u
                m.add_row(f"{prefix}_{k}_{i}_le" if p.cmp is Cmp.EQ else f"{prefix}_{k}_{i}",
                          [(r_idx, 1.0), (U[k][i], 1.0)], LE, mu)

    for node in nodes:
        n = number[id(node)]
        B = bound_of(node)
        if isinstance(node, Atom):
            ks = window_steps(ts, node.t_lo, node.t_hi)
            ii = range_nodes(xs, node.pred.x_lo, node.pred.x_hi)
            if node.op is Op.G:
                for k in ks:
                    margin_rows(f"atom_{n}", R[n], node, int(k), ii)
            else:
                zs = []
                for j, k in enumerate(ks):
                    rk = m.add_var(f"r_{n}_{int(k)}", -B, B)
                    margin_rows(f"atom_{n}", rk, node, int(k), ii)
                    z = m.add_var(f"z_{n}_{j}", 0.0, 1.0, binary=True)
                    zs.append(z)
                    m.add_row(f"sel_{n}_{j}", [(R[n], 1.0), (rk, -1.0), (z, 2 * B)], LE, 2 * B)
                m.add_row(f"one_{n}", [(z, 1.0) for z in zs], EQ, 1.0)
        elif isinstance(node, And):
            for side, child in (("l", node.left), ("r", node.right)):
                m.add_row(f"and_{n}_{side}", [(R[n], 1.0), (R[number[id(child)]], -1.0)], LE, 0.0)
        else:
            z0 = m.add_var(f"z_{n}_0", 0.0, 1.0, binary=True)
            z1 = m.add_var(f"z_{n}_1", 0.0, 1.0, binary=True)
            for z, child in ((z0, node.left), (z1, node.right)):
                m.add_row(f"or_{n}_{m.names[z][-1]}",
                          [(R[n], 1.0), (R[number[id(child)]], -1.0), (z, 2 * B)], LE, 2 * B)
            m.add_row(f"one_{n}", [(z0, 1.0), (z1, 1.0)], EQ, 1.0)

    m.objective = {R[0]: 1.0}
    return m
