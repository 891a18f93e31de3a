"""Torques, forces, energies and time stepping for the spin-lattice chain."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .model import DimensionlessSystem, SystemState


@dataclass(frozen=True)
class Derivatives:
    spin_rates: np.ndarray
    position_rates: np.ndarray
    momentum_rates: np.ndarray


@dataclass(frozen=True)
class EnergyBreakdown:
    zeeman: float
    exchange: float
    pseudo_dipolar: float
    kinetic: float
    harmonic: float

    @property
    def total(self) -> float:
        return self.zeeman + self.exchange + self.pseudo_dipolar + self.kinetic + self.harmonic


class NumericalError(RuntimeError):
    """Raised when a step cannot be taken or the state became invalid."""


def _bonds(positions):
    d = np.diff(positions, axis=0)
    length = np.linalg.norm(d, axis=1)
    if np.any(length == 0):
        k = int(np.argmin(length))
        raise NumericalError(f"atoms {k} and {k + 1} coincide")
    return d, length, d / length[:, None]


def _field(system, field_vec):
    return system.field if field_vec is None else np.asarray(field_vec, dtype=float)


def effective_field(state: SystemState, system: DimensionlessSystem, field_vec=None) -> np.ndarray:
    """``-dh/ds_i`` for every spin (Zeeman units)."""
    s = state.spins
    _, _, u = _bonds(state.positions)
    heff = np.tile(_field(system, field_vec), (state.n_atoms, 1))
    heff[:-1] += system.eps_j * s[1:]
    heff[1:] += system.eps_j * s[:-1]
    # both orderings of each bond contribute, hence the 2
    proj_next = np.einsum("bk,bk->b", u, s[1:])
    proj_prev = np.einsum("bk,bk->b", u, s[:-1])
    heff[:-1] += 2 * system.c_spin * u * proj_next[:, None]
    heff[1:] += 2 * system.c_spin * u * proj_prev[:, None]
    return heff


def spin_torque(state: SystemState, system: DimensionlessSystem, field_vec=None) -> np.ndarray:
    """``ds_i/dtau = s_i x (b + eps_J (s_{i-1}+s_{i+1}) + 2 c sum_j u_ij (u_ij.s_j))``."""
    return np.cross(state.spins, effective_field(state, system, field_vec))


def lattice_force(state: SystemState, system: DimensionlessSystem) -> np.ndarray:
    """``dp_i/dtau``: bond springs plus the pseudo-dipolar bending force.

    Returned in units of ``m omega_L**2 r0``, i.e. ``-kappa dh/dr_i``.
    """
    s = state.spins
    d, length, u = _bonds(state.positions)
    a_i = np.einsum("bk,bk->b", u, s[:-1])
    a_j = np.einsum("bk,bk->b", u, s[1:])
    g = a_j[:, None] * s[:-1] + a_i[:, None] * s[1:]
    g_perp = g - np.einsum("bk,bk->b", g, u)[:, None] * u
    f_bond = 2 * system.eps_c * g_perp / length[:, None]
    f_bond -= system.omega_ph**2 * (length - 1.0)[:, None] * u
    force = np.zeros_like(state.positions)
    force[1:] += f_bond
    force[:-1] -= f_bond
    return force


def derivatives(state: SystemState, system: DimensionlessSystem, field_vec=None) -> Derivatives:
    return Derivatives(spin_torque(state, system, field_vec), state.momenta.copy(),
                       lattice_force(state, system))


def hamiltonian_energy(state: SystemState, system: DimensionlessSystem,
                       field_vec=None) -> EnergyBreakdown:
    """Energy terms in units of ``S0 omega_L``.

    Pair conventions: exchange and bond springs once per bond, the
    pseudo-dipolar term over both orderings of each nearest-neighbour pair.
    """
    s = state.spins
    _, length, u = _bonds(state.positions)
    kappa = system.kappa
    a_i = np.einsum("bk,bk->b", u, s[:-1])
    a_j = np.einsum("bk,bk->b", u, s[1:])
    return EnergyBreakdown(
        zeeman=float(-np.sum(s @ _field(system, field_vec))),
        exchange=float(-system.eps_j * np.sum(s[:-1] * s[1:])),
        pseudo_dipolar=float(-2 * system.c_spin * np.sum(a_i * a_j)),
        kinetic=float(np.sum(state.momenta**2) / (2 * kappa)),
        harmonic=float(system.omega_ph**2 * np.sum((length - 1.0) ** 2) / (2 * kappa)),
    )


def fastest_rate(system: DimensionlessSystem) -> float:
    """Largest characteristic frequency of the chain (units of omega_L)."""
    bending = np.sqrt(16.0 * abs(system.eps_c))  # zig-zag bending mode
    return float(max(1.0, system.eps_j, 2 * abs(system.c_spin), 2 * system.omega_ph, bending))


def default_dtau(system: DimensionlessSystem) -> float:
    return 0.1 / fastest_rate(system)


def check_stability(system: DimensionlessSystem, dtau: float) -> None:
    if not dtau > 0:
        raise ValueError(f"dtau must be positive, got {dtau!r}")
    rates = {"Larmor": 1.0, "exchange": system.eps_j, "spin pseudo-dipolar": 2 * abs(system.c_spin),
             "phonon": 2 * system.omega_ph, "lattice bending": np.sqrt(16.0 * abs(system.eps_c))}
    name = max(rates, key=rates.get)
    if dtau * rates[name] > 0.5 * (1 + 1e-9):
        raise NumericalError(
            f"dtau={dtau:.3g} too large for the {name} frequency {rates[name]:.3g} "
            f"(need dtau*rate <= 0.5)")


_MAX_CHUNK = 1 << 16

FieldSchedule = Callable[[np.ndarray], np.ndarray]
"""Maps an array of times (n,) to dimensionless field vectors (n, 3)."""


def constant_field(system: DimensionlessSystem, amplitude: float = 1.0) -> FieldSchedule:
    b = amplitude * system.field

    def schedule(tau):
        return np.tile(b, (np.size(tau), 1))
    return schedule


def _run_steps(state, system, fields, dtau):
    spins, pos, mom = state.spins, state.positions, state.momenta
    _kernels.advance(spins, pos, mom, np.ascontiguousarray(fields, dtype=float), dtau,
                     float(system.eps_j), float(system.c_spin), float(system.eps_c),
                     float(system.omega_ph**2))


def step(state: SystemState, system: DimensionlessSystem, dtau: float,
         field_vec=None, check: bool = True) -> SystemState:
    """One palindromic splitting step; returns a new state."""
    if check:
        check_stability(system, dtau)
    new = state.copy()
    fields = np.asarray(_field(system, field_vec), dtype=float).reshape(1, 3)
    _run_steps(new, system, fields, dtau)
    new.time = state.time + dtau
    return new


def time_reversed(state: SystemState) -> SystemState:
    """Spins and momenta flipped.  Integrating this with the field negated
    retraces the trajectory."""
    return SystemState(-state.spins, state.positions.copy(), -state.momenta, state.time)


@dataclass
class Trajectory:
    """Snapshots every ``record_every`` steps of size ``dtau``."""

    times: np.ndarray
    spins: np.ndarray
    positions: np.ndarray
    momenta: np.ndarray
    fields: np.ndarray
    dtau: float
    record_every: int
    system: DimensionlessSystem
    final_state: SystemState = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def sample_interval(self) -> float:
        return self.dtau * self.record_every

    def state(self, k: int) -> SystemState:
        return SystemState(self.spins[k], self.positions[k], self.momenta[k], self.times[k])


def integrate(state: SystemState, system: DimensionlessSystem, t_end: float,
              record_every: int = 100, field_schedule: Optional[FieldSchedule] = None,
              dtau: Optional[float] = None, check: bool = True) -> Trajectory:
    """Advance ``state`` by ``t_end`` and record snapshots.

    ``dtau`` defaults to :func:`default_dtau` and is shrunk slightly so that
    ``t_end`` is an integer number of steps.  The schedule is evaluated at the
    midpoint of every step; ``None`` means the constant field ``b_hat``.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    dtau = default_dtau(system) if dtau is None else float(dtau)
    n_steps = max(1, int(np.ceil(t_end / dtau - 1e-9)))
    dtau = t_end / n_steps
    if check:
        check_stability(system, dtau)
    if field_schedule is None:
        field_schedule = constant_field(system)

    cur = state.copy()
    t0 = state.time
    n_rec = n_steps // record_every + 1
    n = state.n_atoms
    times = np.empty(n_rec)
    spins = np.empty((n_rec, n, 3))
    pos = np.empty((n_rec, n, 3))
    mom = np.empty((n_rec, n, 3))
    fields_rec = np.empty((n_rec, 3))

    def record(k, step_idx):
        tau = t0 + step_idx * dtau
        times[k] = tau
        spins[k], pos[k], mom[k] = cur.spins, cur.positions, cur.momenta
        fields_rec[k] = np.asarray(field_schedule(np.array([tau])), dtype=float).reshape(3)

    record(0, 0)
    done = 0
    k = 1
    while done < n_steps:
        # stop at the next record point, and never build huge field arrays
        chunk = min(record_every - done % record_every, n_steps - done, _MAX_CHUNK)
        mids = t0 + (done + np.arange(chunk) + 0.5) * dtau
        fields = np.asarray(field_schedule(mids), dtype=float).reshape(chunk, 3)
        _run_steps(cur, system, fields, dtau)
        done += chunk
        if not (np.all(np.isfinite(cur.positions)) and np.all(np.isfinite(cur.momenta))):
            raise NumericalError(f"non-finite lattice state at tau={t0 + done * dtau:.6g}")
        if done % record_every == 0:
            record(k, done)
            k += 1
    cur.time = t0 + n_steps * dtau
    return Trajectory(times, spins, pos, mom, fields_rec, dtau, record_every, system,
                      final_state=cur)
