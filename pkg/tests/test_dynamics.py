import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state, toy_system
from ferroneedle.dynamics import (NumericalError, check_stability, constant_field,
                                  default_dtau, derivatives, hamiltonian_energy, integrate,
                                  lattice_force, spin_torque, step, time_reversed)
from ferroneedle.model import DimensionlessSystem, SystemState, aligned_state, equilibrium_chain


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def fd_spin_gradient(state, system, h=1e-6):
    grad = np.zeros_like(state.spins)
    for i in range(state.n_atoms):
        for k in range(3):
            plus, minus = state.copy(), state.copy()
            plus.spins[i, k] += h
            minus.spins[i, k] -= h
            grad[i, k] = (hamiltonian_energy(plus, system).total
                          - hamiltonian_energy(minus, system).total) / (2 * h)
    return grad


def position_energy(state, system):
    e = hamiltonian_energy(state, system)
    return e.pseudo_dipolar + e.harmonic


def fd_position_gradient(state, system, h=1e-6):
    grad = np.zeros_like(state.positions)
    for i in range(state.n_atoms):
        for k in range(3):
            plus, minus = state.copy(), state.copy()
            plus.positions[i, k] += h
            minus.positions[i, k] -= h
            grad[i, k] = (position_energy(plus, system)
                          - position_energy(minus, system)) / (2 * h)
    return grad


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# -- torques and forces -----------------------------------------------------------

def test_single_spin_larmor_torque():
    system = DimensionlessSystem(0.0, 0.0, 1.0, 1.0, (0, 0, 1), 2)
    state = SystemState(np.array([[1.0, 0, 0], [1.0, 0, 0]]), equilibrium_chain(2),
                        np.zeros((2, 3)))
    np.testing.assert_allclose(spin_torque(state, system), [[0, -1, 0], [0, -1, 0]], atol=1e-15)


def test_parallel_spins_no_field_no_torque():
    system = toy_system(b_hat=(0, 0, 0), eps_c=0.0)
    state = aligned_state(system, (0.2, 0.5, -0.4))
    np.testing.assert_allclose(spin_torque(state, system), 0, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_spin_torque_fd_toy(seed):
    system = toy_system()
    state = random_state(system, seed)
    fd = np.cross(state.spins, -fd_spin_gradient(state, system))
    assert rel_err(spin_torque(state, system), fd) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_lattice_force_fd_toy(seed):
    system = toy_system()
    state = random_state(system, seed)
    fd = -system.kappa * fd_position_gradient(state, system)
    assert rel_err(lattice_force(state, system), fd) < 1e-6


def test_equilibrium_no_force_without_coupling():
    system = toy_system(eps_c=0.0)
    state = aligned_state(system)
    np.testing.assert_allclose(lattice_force(state, system), 0, atol=1e-14)


def test_stretched_bond_force():
    system = toy_system(n=4, eps_c=0.0)
    state = aligned_state(system)
    delta = 1e-3
    state.positions[2:, 0] += delta  # bond 1-2 stretched along its axis
    f = lattice_force(state, system)
    expected = system.omega_ph**2 * delta
    np.testing.assert_allclose(f[1], [expected, 0, 0], rtol=1e-9)
    np.testing.assert_allclose(f[2], [-expected, 0, 0], rtol=1e-9)
    np.testing.assert_allclose(f[[0, 3]], 0, atol=1e-12)


def test_coincident_atoms_rejected():
    system = toy_system(n=3)
    state = aligned_state(system)
    state.positions[1] = state.positions[0]
    for fn in (spin_torque, lattice_force, hamiltonian_energy):
        with pytest.raises(NumericalError, match="coincide"):
            fn(state, system)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**9), angle=st.floats(-np.pi, np.pi))
def test_conservation_properties(seed, angle):
    system = toy_system(b_hat=(0, 0, 1))
    state = random_state(system, seed)
    d = derivatives(state, system)
    # torque perpendicular to spin, Newton's third law
    assert np.abs(np.einsum("ik,ik->i", d.spin_rates, state.spins)).max() < 1e-12
    assert np.abs(d.momentum_rates.sum(axis=0)).max() < 1e-12
    # common rotation about the field axis leaves the energy unchanged
    r = rot_z(angle)
    turned = SystemState(state.spins @ r.T, state.positions @ r.T, state.momenta @ r.T)
    e0, e1 = hamiltonian_energy(state, system).total, hamiltonian_energy(turned, system).total
    assert abs(e1 - e0) <= 1e-12 * max(1.0, abs(e0))
    # dJz/dtau from the equations of motion
    r_cm = state.positions - state.positions.mean(axis=0)
    v_cm = d.position_rates - d.position_rates.mean(axis=0)
    dl = np.sum(v_cm[:, 0] * state.momenta[:, 1] - v_cm[:, 1] * state.momenta[:, 0]
                + r_cm[:, 0] * d.momentum_rates[:, 1] - r_cm[:, 1] * d.momentum_rates[:, 0])
    djz = system.spin_ratio * d.spin_rates[:, 2].sum() + dl / system.lambda_spin
    assert abs(djz) < 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_fd_oracle_default_couplings(seed, cobalt_1nt):
    state = random_state(cobalt_1nt, seed, p_scale=0.0)
    fd_torque = np.cross(state.spins, -fd_spin_gradient(state, cobalt_1nt, h=1e-7))
    assert rel_err(spin_torque(state, cobalt_1nt), fd_torque) < 1e-6
    fd_force = -cobalt_1nt.kappa * fd_position_gradient(state, cobalt_1nt, h=1e-7)
    assert rel_err(lattice_force(state, cobalt_1nt), fd_force) < 1e-6


# -- energy -----------------------------------------------------------------------

def test_zeeman_single_spin():
    system = DimensionlessSystem(0.0, 0.0, 1.0, 1.0, (0, 0, 1), 2)
    state = SystemState(np.array([[0, 0, 1.0], [0, 0, 1.0]]), equilibrium_chain(2),
                        np.zeros((2, 3)))
    e = hamiltonian_energy(state, system)
    assert e.zeeman == -2.0 and e.exchange == 0 and e.kinetic == 0 and e.harmonic == 0


def test_aligned_ground_state_energy(cobalt_1nt):
    system = cobalt_1nt.replace(b_hat=(0, 0, 0))
    e = hamiltonian_energy(aligned_state(system), system)
    n = system.n_atoms
    assert e.exchange == pytest.approx(-system.eps_j * (n - 1), rel=1e-14)
    assert e.pseudo_dipolar == pytest.approx(-2 * system.c_spin * (n - 1), rel=1e-14)
    assert e.kinetic == 0 and e.harmonic == 0 and e.zeeman == 0


def test_energy_total_is_sum():
    system = toy_system()
    e = hamiltonian_energy(random_state(system, 4), system)
    parts = e.zeeman + e.exchange + e.pseudo_dipolar + e.kinetic + e.harmonic
    assert e.total == pytest.approx(parts, rel=1e-12)


# -- stepping ---------------------------------------------------------------------

def test_stability_guard_names_frequency(cobalt_1nt):
    with pytest.raises(NumericalError, match="exchange"):
        check_stability(cobalt_1nt, 1e-4)
    check_stability(cobalt_1nt, 0.5 / cobalt_1nt.eps_j)
    with pytest.raises(ValueError):
        check_stability(cobalt_1nt, 0.0)


def test_default_dtau(cobalt_1nt):
    assert default_dtau(cobalt_1nt) == pytest.approx(0.1 / cobalt_1nt.eps_j)


def test_pure_larmor_rotation_exact():
    system = DimensionlessSystem(0.0, 0.0, 1.0, 1.0, (0, 0, 1), 5)
    state = random_state(system, 1, jitter=0.0, p_scale=0.0)
    traj = integrate(state, system, 2 * np.pi, record_every=100, dtau=2 * np.pi / 1000)
    np.testing.assert_allclose(traj.final_state.spins, state.spins, atol=1e-12)
    quarter = integrate(state, system, np.pi / 2, record_every=10, dtau=np.pi / 200)
    az0 = np.arctan2(state.spins[:, 1], state.spins[:, 0])
    az1 = np.arctan2(quarter.final_state.spins[:, 1], quarter.final_state.spins[:, 0])
    np.testing.assert_allclose(np.angle(np.exp(1j * (az1 - az0))), -np.pi / 2, atol=1e-12)


def test_step_matches_integrate():
    system = toy_system()
    state = random_state(system, 2)
    dt = 1e-3
    a = state
    for _ in range(5):
        a = step(a, system, dt)
    b = integrate(state, system, 5 * dt, record_every=5, dtau=dt).final_state
    np.testing.assert_allclose(a.spins, b.spins, atol=1e-14)
    np.testing.assert_allclose(a.positions, b.positions, atol=1e-14)
    assert a.time == pytest.approx(5 * dt)


def test_step_does_not_mutate_input():
    system = toy_system()
    state = random_state(system, 3)
    before = state.copy()
    step(state, system, 1e-3)
    np.testing.assert_array_equal(state.spins, before.spins)
    np.testing.assert_array_equal(state.momenta, before.momenta)


def test_default_schedule_equals_constant():
    system = toy_system()
    state = random_state(system, 5)
    a = integrate(state, system, 0.1, record_every=7, dtau=1e-3)
    b = integrate(state, system, 0.1, record_every=7, dtau=1e-3,
                  field_schedule=constant_field(system))
    np.testing.assert_array_equal(a.spins, b.spins)
    np.testing.assert_array_equal(a.momenta, b.momenta)


def test_record_layout():
    system = toy_system()
    traj = integrate(random_state(system, 6), system, 0.1, record_every=10, dtau=1e-3)
    assert len(traj) == 11
    np.testing.assert_allclose(np.diff(traj.times), traj.sample_interval)
    assert traj.final_state.time == pytest.approx(0.1)
    with pytest.raises(ValueError):
        integrate(random_state(system, 6), system, 0.0)
    with pytest.raises(ValueError):
        integrate(random_state(system, 6), system, 1.0, record_every=0)


def test_integrate_rejects_unstable_step(cobalt_1nt):
    with pytest.raises(NumericalError):
        integrate(aligned_state(cobalt_1nt), cobalt_1nt, 1.0, dtau=1e-3)


def test_norm_preserved_many_steps():
    system = toy_system(n=6)
    traj = integrate(random_state(system, 8), system, 100.0, record_every=2000, dtau=1e-3)
    err = np.abs(np.linalg.norm(traj.spins, axis=2) - 1).max()
    assert err <= 1e-12


def test_time_reversal_toy():
    system = toy_system()
    state = random_state(system, 11)
    dt = 2e-3
    fwd = integrate(state, system, 1000 * dt, record_every=1000, dtau=dt).final_state
    back_sys = system.replace(b_hat=tuple(-np.asarray(system.b_hat)))
    back = integrate(time_reversed(fwd), back_sys, 1000 * dt, record_every=1000,
                     dtau=dt).final_state
    np.testing.assert_allclose(-back.spins, state.spins, atol=1e-8)
    np.testing.assert_allclose(back.positions, state.positions, atol=1e-8)
    np.testing.assert_allclose(-back.momenta, state.momenta, atol=1e-8)


def test_energy_second_order_toy():
    system = toy_system()
    state = random_state(system, 12)
    e0 = hamiltonian_energy(state, system).total
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        traj = integrate(state, system, 2.0, record_every=1, dtau=dt)
        e = [hamiltonian_energy(traj.state(k), system).total for k in range(len(traj))]
        errs.append(np.max(np.abs(np.array(e) - e0)))
    for a, b in zip(errs, errs[1:]):
        assert 3.0 < a / b < 5.0
