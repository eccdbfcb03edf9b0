"""FEM assembly and time stepping for heat and wave rods."""

import numpy as np
import pytest

from conftest import heat_system
from stlpde.fem import (ControlTrajectory, Discretization, Material, PdeSystem, assemble,
                        final_state, nearest_step, simulate, wave_energy)


def wave_system(**kw):
    base = dict(kind="wave", L=100.0, tmax=1.0, g0=0.0,
                materials=(Material(50.0, 7.8e-6, E=2.2e8), Material(100.0, 8.6e-6, E=1.4e8)))
    base.update(kw)
    return PdeSystem(**base)


def test_two_element_uniform_stencil():
    sys = PdeSystem("heat", 2.0, 1.0, 0.0, (Material(2.0, 2.0, 3.0, 5.0),))
    fem = assemble(sys, Discretization(2, 1, 2.0, 1.0))
    assert np.allclose(fem.K[1], 5.0 * np.array([-1, 2, -1]))
    # consistent mass for rho*c = 6, h = 1: (6/6) * [[2,1],[1,2]] per element
    assert np.allclose(fem.M, [[2, 1, 0], [1, 4, 1], [0, 1, 2]])
    assert np.allclose(fem.M.sum(axis=1), [3, 6, 3])


def test_hand_assembled_two_material_three_nodes():
    # element 0 on [0,1]: rho*c = 1*6, kappa = 4; element 1 on [1,2]: rho*c = 2*6, kappa = 1
    sys = PdeSystem("heat", 2.0, 1.0, 0.0, (Material(1.0, 1.0, 6.0, 4.0), Material(2.0, 2.0, 6.0, 1.0)))
    fem = assemble(sys, Discretization(2, 1, 2.0, 1.0))
    K = np.array([[4, -4, 0], [-4, 5, -1], [0, -1, 1]], dtype=float)
    M = np.array([[2, 1, 0], [1, 2 + 4, 2], [0, 2, 4]], dtype=float)
    assert np.array_equal(fem.K, K)
    assert np.allclose(fem.M, M)
    assert np.array_equal(fem.load, [0, 0, 1])


def test_matrices_symmetric_tridiagonal():
    fem = assemble(heat_system(), Discretization(9, 4, 100.0, 5.0))
    for A in (fem.M, fem.K):
        assert np.array_equal(A, A.T)
        assert np.count_nonzero(np.triu(A, 2)) == 0


def test_lumped_mass_row_sums_match():
    sys = heat_system()
    disc = Discretization(6, 3, 100.0, 5.0)
    cons = assemble(sys, disc).M
    lump = assemble(PdeSystem(**{**sys.__dict__, "lumped_mass": True}), disc).M
    assert np.allclose(np.diag(lump), cons.sum(axis=1))


def test_heat_equilibrium_is_fixed_point():
    sys = heat_system()
    disc = Discretization(10, 50, 100.0, 5.0)
    traj = simulate(sys, disc, np.zeros(50))
    assert np.max(np.abs(traj.u - 300.0)) <= 1e-9


def test_heat_steady_state_with_constant_flux():
    kappa, rhoc, L = 1.2e6, 900.0, 100.0
    tau = L * L * rhoc / kappa
    q = 1e5
    sys = PdeSystem("heat", L, 10 * tau, 300.0, (Material(L, 3e-6, 3e8, kappa),))
    disc = Discretization(20, 2000, L, 10 * tau)
    traj = simulate(sys, disc, np.full(2000, q))
    rise = traj.u[-1] - 300.0
    expect = q / kappa * disc.xs
    assert np.max(np.abs(rise - expect)) <= 0.01 * np.max(expect)


def test_heat_step_residual():
    sys = heat_system()
    disc = Discretization(8, 20, 100.0, 5.0)
    rng = np.random.default_rng(0)
    q = rng.uniform(-1e6, 1e6, 20)
    traj = simulate(sys, disc, q)
    fem = assemble(sys, disc)
    A = fem.step_matrix(disc.dt, "heat")
    for k in range(20):
        rhs = fem.M @ traj.u[k] + disc.dt * q[k] * fem.load
        rhs[0] = sys.g0
        res = A @ traj.u[k + 1] - rhs
        assert np.max(np.abs(res)) <= 1e-8 * np.max(np.abs(traj.u[k]))


def test_heat_maximum_principle_without_input():
    sys = heat_system()
    disc = Discretization(12, 60, 100.0, 5.0)
    rng = np.random.default_rng(1)
    u0 = 300.0 + rng.uniform(0, 40, 13)
    u0[0] = 300.0
    traj = simulate(sys, disc, np.zeros(60), u_init=u0)
    assert traj.u.min() >= u0.min() - 1e-9
    assert traj.u.max() <= u0.max() + 1e-9


@pytest.mark.parametrize("system", [heat_system(), wave_system()])
def test_simulate_is_affine(system):
    disc = Discretization(8, 30, system.L, system.tmax)
    rng = np.random.default_rng(2)
    bound = system.control_bound
    qa, qb = rng.uniform(-bound, bound, 30), rng.uniform(-bound, bound, 30)
    ua = system.g0 + np.r_[0, rng.uniform(-5, 5, 8)]
    ub = system.g0 + np.r_[0, rng.uniform(-5, 5, 8)]
    alpha = 0.3
    ta, tb = simulate(system, disc, qa, u_init=ua), simulate(system, disc, qb, u_init=ub)
    tm = simulate(system, disc, alpha * qa + (1 - alpha) * qb, u_init=alpha * ua + (1 - alpha) * ub)
    scale = max(1.0, np.max(np.abs(tm.u)))
    assert np.max(np.abs(tm.u - (alpha * ta.u + (1 - alpha) * tb.u))) <= 1e-9 * scale


def test_wave_zero_stays_zero():
    sys = wave_system()
    disc = Discretization(10, 50, sys.L, sys.tmax)
    traj = simulate(sys, disc, np.zeros(50))
    assert np.max(np.abs(traj.u)) <= 1e-12
    assert np.max(np.abs(traj.v)) <= 1e-12


def test_wave_energy_dissipates_without_force():
    # implicit Euler damps: the discrete energy never increases
    sys = wave_system(L=1e5, tmax=2.0, materials=(Material(1e5, 7.8e-6, E=2.2e8),))
    disc = Discretization(20, 200, sys.L, sys.tmax)
    xs = disc.xs
    u0 = np.sin(np.pi * xs / (2 * sys.L))
    traj = simulate(sys, disc, np.zeros(200), u_init=u0)
    e = wave_energy(sys, disc, traj)
    assert np.all(np.diff(e) <= 1e-12 * e[0])
    assert e[-1] > 0


def test_wave_responds_to_force():
    sys = wave_system()
    disc = Discretization(10, 40, sys.L, sys.tmax)
    traj = simulate(sys, disc, np.full(40, 10.0))
    assert traj.u[-1, -1] > 0


def test_final_state_rounding():
    sys = heat_system()
    disc = Discretization(4, 10, 100.0, 5.0)
    traj = simulate(sys, disc, np.linspace(0, 1e5, 10))
    assert np.array_equal(final_state(traj, 0.0), traj.u[0])
    assert np.array_equal(final_state(traj, 5.0), traj.u[-1])
    assert nearest_step(traj.ts, 0.75) == 2  # tie between 0.5 and 1.0 goes later
    assert nearest_step(traj.ts, 0.7) == 1


def test_control_bound_enforced():
    with pytest.raises(ValueError):
        ControlTrajectory(np.array([2.0]), 1.0)


def test_bad_initial_profile():
    sys = heat_system()
    disc = Discretization(4, 2, 100.0, 5.0)
    with pytest.raises(ValueError):
        simulate(sys, disc, np.zeros(2), u_init=np.full(5, 290.0))


def test_system_rejects_bad_materials():
    with pytest.raises(ValueError):
        PdeSystem("heat", 100.0, 1.0, 300.0, (Material(100.0, -1.0, 1.0, 1.0),))
    with pytest.raises(ValueError):
        PdeSystem("heat", 100.0, 1.0, 300.0, (Material(60.0, 1.0, 1.0, 1.0),))
