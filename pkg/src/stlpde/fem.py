"""Linear finite elements for the 1D heat and wave equations.

Both PDEs share the same setup: Dirichlet value ``g0`` at ``x = 0`` and the
control (heat flux or force) entering as a Neumann load at ``x = L``.

Heat, implicit Euler::

    (M + dt K) u[k+1] = M u[k] + dt f q[k]

Wave, rewritten first order (``u' = v``) and stepped with implicit Euler::

    (M + dt^2 K) v[k+1] = M v[k] - dt K u[k] + dt f F[k]
    u[k+1] = u[k] + dt v[k+1]

Implicit Euler damps the wave energy; the loss per step equals
``0.5 * (|dv|_M^2 + |du|_K^2)`` exactly, which the tests check.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg

from stlpde.semantics import Trajectory

HEAT = "heat"
WAVE = "wave"

DEFAULT_Q_MAX = {HEAT: 1e6, WAVE: 50.0}
DEFAULT_STATE_HALF_RANGE = {HEAT: 200.0, WAVE: 10.0}
DEFAULT_NX = 20
DEFAULT_NT = 100


class SingularSystem(RuntimeError):
    """A time-step matrix could not be solved."""


@dataclass(frozen=True)
class Material:
    """Constants of one rod segment ending at ``end``.

    Heat segments need ``c`` and ``kappa``; wave segments need ``E``.
    """

    end: float
    rho: float
    c: Optional[float] = None
    kappa: Optional[float] = None
    E: Optional[float] = None

    def to_json(self) -> dict:
        return {k: v for k, v in (("end", self.end), ("rho", self.rho), ("c", self.c),
                                  ("kappa", self.kappa), ("E", self.E)) if v is not None}


@dataclass(frozen=True, eq=False)
class PdeSystem:
    kind: str
    L: float
    tmax: float
    g0: float
    materials: tuple
    u0: object = None
    v0: object = None
    q_max: Optional[float] = None
    u_bounds: Optional[tuple] = None
    lumped_mass: bool = False

    def __post_init__(self):
        if self.kind not in (HEAT, WAVE):
            raise ValueError(f"kind must be 'heat' or 'wave', got {self.kind!r}")
        if not (self.L > 0 and self.tmax > 0):
            raise ValueError("L and tmax must be positive")
        mats = tuple(m if isinstance(m, Material) else Material(**m) for m in self.materials)
        if not mats:
            raise ValueError("at least one material segment is required")
        ends = [m.end for m in mats]
        if any(b <= a for a, b in zip(ends, ends[1:])) or ends[0] <= 0:
            raise ValueError("segment ends must be strictly increasing and positive")
        if not np.isclose(ends[-1], self.L, rtol=1e-12, atol=0):
            raise ValueError(f"last segment must end at L={self.L}, got {ends[-1]}")
        for m in mats:
            needed = (m.rho, m.c, m.kappa) if self.kind == HEAT else (m.rho, m.E)
            if any(v is None or not v > 0 for v in needed):
                raise ValueError(f"material constants must be positive for {self.kind}: {m}")
        object.__setattr__(self, "materials", mats)
        if self.u_bounds is not None:
            lo, hi = self.u_bounds
            if not lo < hi:
                raise ValueError("u_bounds must satisfy lo < hi")
            object.__setattr__(self, "u_bounds", (float(lo), float(hi)))

    def initial_profile(self, xs: np.ndarray) -> np.ndarray:
        if self.u0 is None:
            value = self.g0 if self.kind == HEAT else 0.0
            u = np.full(xs.shape, float(value))
        elif np.ndim(self.u0) == 0:
            u = np.full(xs.shape, float(self.u0))
        else:
            u = np.asarray(self.u0, dtype=float).copy()
            if u.shape != xs.shape:
                raise ValueError(f"u0 has {u.size} nodes, grid has {xs.size}")
        return u

    def initial_velocity(self, xs: np.ndarray) -> np.ndarray:
        if self.v0 is None:
            return np.zeros(xs.shape)
        v = np.asarray(self.v0, dtype=float)
        if v.shape != xs.shape:
            raise ValueError(f"v0 has {v.size} nodes, grid has {xs.size}")
        return v.copy()

    @property
    def control_bound(self) -> float:
        return float(self.q_max if self.q_max is not None else DEFAULT_Q_MAX[self.kind])

    @property
    def state_bounds(self) -> tuple[float, float]:
        if self.u_bounds is not None:
            return self.u_bounds
        half = DEFAULT_STATE_HALF_RANGE[self.kind]
        return (self.g0 - half, self.g0 + half)

    def with_initial_state(self, u0, v0=None, tmax: Optional[float] = None) -> "PdeSystem":
        return replace(self, u0=np.asarray(u0, dtype=float),
                       v0=None if v0 is None else np.asarray(v0, dtype=float),
                       tmax=self.tmax if tmax is None else tmax)

    def element_constants(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(capacity, stiffness) per element: (rho*c, kappa) for heat, (rho, E) for wave."""
        mids = 0.5 * (xs[:-1] + xs[1:])
        ends = np.array([m.end for m in self.materials])
        seg = np.minimum(np.searchsorted(ends, mids), len(self.materials) - 1)
        mats = [self.materials[s] for s in seg]
        if self.kind == HEAT:
            cap = np.array([m.rho * m.c for m in mats])
            stiff = np.array([m.kappa for m in mats])
        else:
            cap = np.array([m.rho for m in mats])
            stiff = np.array([m.E for m in mats])
        return cap, stiff


@dataclass(frozen=True)
class Discretization:
    nx: int
    nt: int
    L: float
    tmax: float

    def __post_init__(self):
        if int(self.nx) < 2 or int(self.nt) < 1:
            raise ValueError("need nx >= 2 and nt >= 1")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nt", int(self.nt))

    @classmethod
    def for_system(cls, sys: PdeSystem, nx: int = DEFAULT_NX, nt: int = DEFAULT_NT) -> "Discretization":
        return cls(nx, nt, sys.L, sys.tmax)

    @property
    def dx(self) -> float:
        return self.L / self.nx

    @property
    def dt(self) -> float:
        return self.tmax / self.nt

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.nx + 1)

    @property
    def ts(self) -> np.ndarray:
        return np.linspace(0.0, self.tmax, self.nt + 1)


@dataclass(frozen=True, eq=False)
class ControlTrajectory:
    """Boundary input per step; ``values[k]`` drives the step ``k -> k+1``."""

    values: np.ndarray
    q_max: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        slack = 1e-9 * max(1.0, abs(self.q_max))
        if np.any(np.abs(vals) > self.q_max + slack):
            raise ValueError(f"control exceeds bound {self.q_max}")
        object.__setattr__(self, "values", np.clip(vals, -self.q_max, self.q_max))

    @classmethod
    def zeros(cls, nt: int, q_max: float) -> "ControlTrajectory":
        return cls(np.zeros(nt), q_max)


@dataclass(frozen=True, eq=False)
class FemMatrices:
    """Symmetric tridiagonal mass/stiffness matrices and the control load vector."""

    M: np.ndarray
    K: np.ndarray
    load: np.ndarray

    def step_matrix(self, dt: float, kind: str) -> np.ndarray:
        """Implicit-Euler system matrix with node 0 replaced by an identity row."""
        A = self.M + (dt if kind == HEAT else dt * dt) * self.K
        A[0, :] = 0.0
        A[0, 0] = 1.0
        return A


def assemble(sys: PdeSystem, disc: Discretization) -> FemMatrices:
    """Assemble linear-element mass and stiffness matrices.

    Heat uses ``rho*c`` (mass) and ``kappa`` (stiffness) per element; wave
    uses ``rho`` and ``E``.  The mass matrix is consistent unless the system
    asks for lumping.
    """
    xs = disc.xs
    n = xs.size
    h = np.diff(xs)
    cap, stiff = sys.element_constants(xs)
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    for e in range(n - 1):
        m = cap[e] * h[e] / 6.0
        k = stiff[e] / h[e]
        M[e:e + 2, e:e + 2] += m * np.array([[2.0, 1.0], [1.0, 2.0]])
        K[e:e + 2, e:e + 2] += k * np.array([[1.0, -1.0], [-1.0, 1.0]])
    if sys.lumped_mass:
        M = np.diag(M.sum(axis=1))
    load = np.zeros(n)
    load[-1] = 1.0
    return FemMatrices(M, K, load)


def _banded(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = np.diag(A, 1)
    ab[1, :] = np.diag(A)
    ab[2, :-1] = np.diag(A, -1)
    return ab


def _solve(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        out = scipy.linalg.solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise SingularSystem("non-finite state after step solve")
    return out


def _control_values(ctrl, nt: int) -> np.ndarray:
    vals = ctrl.values if isinstance(ctrl, ControlTrajectory) else np.asarray(ctrl, dtype=float)
    vals = np.asarray(vals, dtype=float).ravel()
    if vals.size != nt:
        raise ValueError(f"control has {vals.size} values, expected {nt}")
    return vals


def simulate(sys: PdeSystem, disc: Discretization, ctrl, u_init=None, v_init=None) -> Trajectory:
    """Run the implicit-Euler scheme for ``disc.nt`` steps under ``ctrl``."""
    xs, ts = disc.xs, disc.ts
    q = _control_values(ctrl, disc.nt)
    u = sys.initial_profile(xs) if u_init is None else np.asarray(u_init, dtype=float).copy()
    if u.shape != xs.shape:
        raise ValueError(f"u_init must have {xs.size} nodes")
    if not np.isclose(u[0], sys.g0, rtol=1e-12, atol=1e-12):
        raise ValueError(f"u_init[0]={u[0]} must equal g0={sys.g0}")
    u[0] = sys.g0
    fem = assemble(sys, disc)
    dt = disc.dt
    ab = _banded(fem.step_matrix(dt, sys.kind))
    out = np.empty((disc.nt + 1, xs.size))
    out[0] = u
    # step the deviation from g0; constants lie in the kernel of K, so this
    # is the same scheme but keeps the equilibrium free of round-off
    w = u - sys.g0
    if sys.kind == HEAT:
        for k in range(disc.nt):
            rhs = fem.M @ w + dt * q[k] * fem.load
            rhs[0] = 0.0
            w = _solve(ab, rhs)
            out[k + 1] = sys.g0 + w
        return Trajectory(xs, ts, out)

    v = sys.initial_velocity(xs) if v_init is None else np.asarray(v_init, dtype=float).copy()
    v[0] = 0.0
    vel = np.empty_like(out)
    vel[0] = v
    for k in range(disc.nt):
        rhs = fem.M @ v - dt * (fem.K @ w) + dt * q[k] * fem.load
        rhs[0] = 0.0
        v = _solve(ab, rhs)
        w = w + dt * v
        w[0] = 0.0
        out[k + 1] = sys.g0 + w
        vel[k + 1] = v
    return Trajectory(xs, ts, out, vel)


def nearest_step(ts: np.ndarray, t_s: float) -> int:
    """Grid step closest to ``t_s``; exact ties go to the later step."""
    ts = np.asarray(ts, dtype=float)
    if t_s < ts[0] - 1e-12 or t_s > ts[-1] * (1 + 1e-12) + 1e-12:
        raise ValueError(f"t_s={t_s} outside [{ts[0]}, {ts[-1]}]")
    d = np.abs(ts - t_s)
    best = d.min()
    scale = 1e-9 * ((ts[-1] - ts[0]) / max(ts.size - 1, 1))
    return int(np.flatnonzero(d <= best + scale)[-1])


def final_state(traj: Trajectory, t_s: float) -> np.ndarray:
    """State row at the step nearest ``t_s``."""
    return traj.u[nearest_step(traj.ts, t_s)].copy()


def final_velocity(traj: Trajectory, t_s: float) -> Optional[np.ndarray]:
    if traj.v is None:
        return None
    return traj.v[nearest_step(traj.ts, t_s)].copy()


def wave_energy(sys: PdeSystem, disc: Discretization, traj: Trajectory) -> np.ndarray:
    """Discrete energy ``0.5 v'Mv + 0.5 (u-g0)'K(u-g0)`` per step."""
    fem = assemble(sys, disc)
    w = traj.u - sys.g0
    kin = 0.5 * np.einsum("ki,ij,kj->k", traj.v, fem.M, traj.v)
    pot = 0.5 * np.einsum("ki,ij,kj->k", w, fem.K, w)
    return kin + pot
