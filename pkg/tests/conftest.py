"""Shared fixtures and random generators for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from stlpde.fem import Material, PdeSystem
from stlpde.formula import And, Atom, Cmp, LinearPredicate, Op, Or
from stlpde.problem import load_problem
from stlpde.semantics import Trajectory

DATA = Path(__file__).parent / "data"


def random_atom(rng, L=100.0, tmax=5.0, decimals=None):
    def r(v):
        return round(float(v), decimals) if decimals is not None else float(v)

    t = np.sort(rng.uniform(0, tmax, 2))
    x = np.sort(rng.uniform(0, L, 2))
    pred = LinearPredicate(r(x[0]), r(x[1]), list(Cmp)[int(rng.integers(3))], r(rng.uniform(-1, 1)),
                           r(rng.uniform(250, 350)))
    return Atom(list(Op)[int(rng.integers(2))], r(t[0]), r(t[1]), pred)


def random_formula(rng, n_atoms=None, **kw):
    n = n_atoms if n_atoms is not None else int(rng.integers(1, 4))
    nodes = [random_atom(rng, **kw) for _ in range(n)]
    while len(nodes) > 1:
        i = int(rng.integers(0, len(nodes) - 1))
        conn = And if rng.random() < 0.5 else Or
        nodes[i:i + 2] = [conn(nodes[i], nodes[i + 1])]
    return nodes[0]


def random_trajectory(rng, L=100.0, tmax=5.0, nx=None, nt=None):
    nx = nx or int(rng.integers(2, 12))
    nt = nt or int(rng.integers(1, 25))
    xs = np.linspace(0, L, nx + 1)
    ts = np.linspace(0, tmax, nt + 1)
    return Trajectory(xs, ts, rng.uniform(250, 350, (nt + 1, nx + 1)))


def heat_system(**kw):
    base = dict(kind="heat", L=100.0, tmax=5.0, g0=300.0,
                materials=(Material(50.0, 3e-6, 3e8, 1.2e6), Material(100.0, 3e-6, 4.5e8, 1.2e6)))
    base.update(kw)
    return PdeSystem(**base)


@pytest.fixture
def heat22():
    """The two-sided band plus cap heat example at Nx=8, Nt=20."""
    return load_problem(DATA / "heat_22.json")


@pytest.fixture
def heat22_json():
    return json.loads((DATA / "heat_22.json").read_text())


def random_problem(rng, nx=None, nt=None, n_atoms=None, kind="heat"):
    """Tiny random control problem whose formula is reachable in scale."""
    from stlpde.problem import ControlProblem

    nx = nx or int(rng.integers(2, 9))
    nt = nt or int(rng.integers(2, 21))
    if kind == "heat":
        sys = heat_system()
        base, spread, slope = 300.0, 15.0, 0.2
    else:
        sys = PdeSystem("wave", 100.0, 1.0, 0.0,
                        (Material(50.0, 7.8e-6, E=2.2e8), Material(100.0, 8.6e-6, E=1.4e8)))
        base, spread, slope = 0.0, 2.0, 0.01
    n = n_atoms if n_atoms is not None else int(rng.integers(1, 4))
    nodes = []
    for _ in range(n):
        t = np.sort(np.round(rng.uniform(0, sys.tmax, 2), 3))
        x = np.sort(np.round(rng.uniform(0, sys.L, 2), 2))
        pred = LinearPredicate(x[0], x[1], list(Cmp)[int(rng.integers(3))],
                               round(float(rng.uniform(-slope, slope)), 4),
                               round(float(base + rng.uniform(-spread, spread)), 3))
        nodes.append(Atom(list(Op)[int(rng.integers(2))], t[0], t[1], pred))
    while len(nodes) > 1:
        i = int(rng.integers(0, len(nodes) - 1))
        conn = And if rng.random() < 0.5 else Or
        nodes[i:i + 2] = [conn(nodes[i], nodes[i + 1])]
    return ControlProblem.build(sys, nodes[0], nx, nt)
