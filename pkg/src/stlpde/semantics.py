"""Quantitative robustness of formulas over gridded state trajectories.

Continuous windows and ranges are mapped to grid indices by
:func:`window_steps` and :func:`range_nodes`; the MILP encoder uses the same
two functions so solver and evaluator see identical index sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from stlpde.formula import And, Atom, Cmp, Formula, LinearPredicate, Op, validate


class EmptyWindow(ValueError):
    """No grid step can represent an atom's time window."""


class DomainMismatch(ValueError):
    """Formula references times or positions outside the trajectory."""


@dataclass(frozen=True, eq=False)
class Trajectory:
    """State field ``u[k, i]`` at time ``ts[k]`` and node ``xs[i]``.

    ``v`` holds nodal velocities for wave trajectories and is ``None`` for heat.
    """

    xs: np.ndarray
    ts: np.ndarray
    u: np.ndarray
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ts = np.asarray(self.ts, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if xs.ndim != 1 or ts.ndim != 1 or u.shape != (ts.size, xs.size):
            raise ValueError(f"u must have shape (len(ts), len(xs)) = ({ts.size}, {xs.size}), got {u.shape}")
        if xs.size < 2 or np.any(np.diff(xs) <= 0) or xs[0] != 0:
            raise ValueError("xs must start at 0 and be strictly increasing")
        if np.any(np.diff(ts) <= 0) or ts[0] != 0:
            raise ValueError("ts must start at 0 and be strictly increasing")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "u", u)
        if self.v is not None:
            object.__setattr__(self, "v", np.asarray(self.v, dtype=float))

    @property
    def L(self) -> float:
        return float(self.xs[-1])

    @property
    def tmax(self) -> float:
        return float(self.ts[-1])

    @property
    def dt(self) -> float:
        if self.ts.size < 2:
            return 0.0
        return float((self.ts[-1] - self.ts[0]) / (self.ts.size - 1))


def margin(pred: LinearPredicate, x, u_val):
    """Signed satisfaction margin of ``u_val`` against the profile at ``x``."""
    mu = pred.a * np.asarray(x, dtype=float) + pred.b
    if pred.cmp is Cmp.GT:
        out = u_val - mu
    elif pred.cmp is Cmp.LT:
        out = mu - u_val
    else:
        out = -np.abs(u_val - mu)
    return out if np.ndim(out) else float(out)


def window_steps(ts: np.ndarray, t_lo: float, t_hi: float) -> np.ndarray:
    """Indices ``k`` with ``ts[k]`` in ``[t_lo - dt/2, t_hi + dt/2]``.

    When nothing falls inside, the step nearest the window midpoint is used.
    Raises :class:`EmptyWindow` when the window lies past the end of ``ts``.
    """
    ts = np.asarray(ts, dtype=float)
    dt = (ts[-1] - ts[0]) / max(ts.size - 1, 1)
    half = 0.5 * dt
    if t_lo - half > ts[-1] or t_hi + half < ts[0]:
        raise EmptyWindow(f"window [{t_lo}, {t_hi}] lies outside [{ts[0]}, {ts[-1]}]")
    # tiny slack keeps ties at exactly dt/2 stable under rounding of ts
    eps = 1e-9 * max(dt, 1e-300)
    idx = np.flatnonzero((ts >= t_lo - half - eps) & (ts <= t_hi + half + eps))
    if idx.size == 0:
        mid = 0.5 * (t_lo + t_hi)
        idx = np.array([int(np.argmin(np.abs(ts - mid)))])
    return idx


def range_nodes(xs: np.ndarray, x_lo: float, x_hi: float) -> np.ndarray:
    """Indices ``i`` with ``x_lo <= xs[i] <= x_hi``; nearest node to the midpoint if none."""
    xs = np.asarray(xs, dtype=float)
    eps = 1e-9 * max(1.0, abs(xs[-1]))
    idx = np.flatnonzero((xs >= x_lo - eps) & (xs <= x_hi + eps))
    if idx.size == 0:
        mid = 0.5 * (x_lo + x_hi)
        idx = np.array([int(np.argmin(np.abs(xs - mid)))])
    return idx


def atom_margins(atom: Atom, traj: Trajectory) -> np.ndarray:
    """Per-step spatial minimum of the margin over the atom's window steps."""
    ks = window_steps(traj.ts, atom.t_lo, atom.t_hi)
    ii = range_nodes(traj.xs, atom.pred.x_lo, atom.pred.x_hi)
    block = margin(atom.pred, traj.xs[ii][None, :], traj.u[np.ix_(ks, ii)])
    return block.min(axis=1)


def _robustness(f: Formula, traj: Trajectory) -> float:
    if isinstance(f, Atom):
        per_step = atom_margins(f, traj)
        return float(per_step.min() if f.op is Op.G else per_step.max())
    left = _robustness(f.left, traj)
    right = _robustness(f.right, traj)
    return min(left, right) if isinstance(f, And) else max(left, right)


def eval_robustness(f: Formula, traj: Trajectory, *, check_domain: bool = True) -> float:
    """Robustness of ``f`` on ``traj``: min/max over ``And``/``Or``, inf/sup over windows."""
    if check_domain:
        report = validate(f, L=traj.L, tmax=traj.tmax)
        if not report.valid:
            raise DomainMismatch("; ".join(report.reasons))
    return _robustness(f, traj)


def atom_robustness(f: Formula, traj: Trajectory) -> list[float]:
    """Robustness of each atom separately, in left-to-right order."""
    out = []

    def walk(node):
        if isinstance(node, Atom):
            out.append(_robustness(node, traj))
        else:
            walk(node.left)
            walk(node.right)

    walk(f)
    return out
