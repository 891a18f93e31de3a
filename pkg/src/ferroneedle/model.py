"""Physical parameters, nondimensionalization and initial states.

Units used throughout the package once a system is built:

* time in 1/omega_L, with omega_L = gamma |B|
* lengths in the lattice constant r0, momenta in m omega_L r0
* spins as unit vectors s_i = S_i / S0
* energies (``hamiltonian_energy``) in S0 omega_L

The lattice equations carry the ratio ``kappa = S0 / (m omega_L r0**2)``
between the spin and mechanical angular-momentum units, which is what makes
``S_z + L_z`` an exact invariant of the dimensionless equations.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

HBAR = 1.054571817e-34  # J s
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
ELECTRON_GAMMA = 1.76e11  # rad s^-1 T^-1

COBALT_MASS = 58.933 * ATOMIC_MASS_UNIT
COBALT_LATTICE_CONST = 250.71e-12

DEFAULT_EPS_J = 1.0e4
DEFAULT_EPS_C = 1.2e5
DEFAULT_OMEGA_PH = 100.0


@dataclass(frozen=True)
class PhysicalParams:
    """SI description of a needle of ``n_atoms`` atoms in a uniform field.

    ``exchange_j`` and ``pseudo_dipolar_c`` are energies per bond for unit
    spin vectors (J); ``lattice_v`` is the bond stiffness in
    ``V (|r_ij| - r0)**2`` (J m^-2).
    """

    gamma: float
    b_field: tuple
    exchange_j: float
    pseudo_dipolar_c: float
    lattice_v: float
    atom_mass: float
    lattice_const_r0: float
    n_atoms: int
    spin_s0: float = HBAR / 2

    def __post_init__(self):
        object.__setattr__(self, "b_field", tuple(float(b) for b in self.b_field))
        if len(self.b_field) != 3:
            raise ValueError("b_field must be a 3-vector")
        for name in ("gamma", "atom_mass", "lattice_const_r0", "spin_s0", "lattice_v"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 2:
            raise ValueError(f"n_atoms must be an integer >= 2, got {self.n_atoms!r}")
        if self.exchange_j < 0:
            raise ValueError("exchange_j must be >= 0 (ferromagnetic)")
        if not np.isfinite(self.pseudo_dipolar_c):
            raise ValueError("pseudo_dipolar_c must be finite")

    @property
    def field_magnitude(self) -> float:
        return float(np.linalg.norm(self.b_field))


@dataclass(frozen=True)
class Scales:
    """Conversion factors back to SI."""

    omega_l: float  # rad/s
    r0: float  # m
    s0: float  # J s
    energy: float  # J, equals s0 * omega_l
    gamma: float


@dataclass(frozen=True)
class DimensionlessSystem:
    """Couplings of the rescaled Hamiltonian.

    Attributes
    ----------
    eps_j : exchange energy per bond over the Zeeman energy ``S0 omega_L``.
    eps_c : pseudo-dipolar coupling in lattice energy units
        ``m omega_L**2 r0**2``; this is the ``C0`` that appears in the lattice
        equations of motion.  The spins feel it divided by ``kappa``.
    lambda_spin : ``hbar / (m omega_L r0**2)``.
    omega_ph : ``sqrt(2 V / m) / omega_L``, bond-stretch frequency ratio.
    b_hat : unit field direction.
    spin_ratio : ``S0 / hbar`` (0.5 for spin-1/2).
    """

    eps_j: float
    eps_c: float
    lambda_spin: float
    omega_ph: float
    b_hat: tuple
    n_atoms: int
    scales: Optional[Scales] = None
    spin_ratio: float = 0.5

    def __post_init__(self):
        b = np.asarray(self.b_hat, dtype=float)
        object.__setattr__(self, "b_hat", tuple(float(x) for x in b))
        if self.eps_j < 0:
            raise ValueError("eps_j must be >= 0")
        if self.omega_ph <= 0:
            raise ValueError("omega_ph must be > 0")
        if self.lambda_spin <= 0 or self.spin_ratio <= 0:
            raise ValueError("lambda_spin and spin_ratio must be > 0")
        if self.n_atoms < 2:
            raise ValueError("n_atoms must be >= 2")
        norm = np.linalg.norm(b)
        if norm > 0 and abs(norm - 1.0) > 1e-12:
            raise ValueError(f"b_hat must be a unit vector, |b_hat| = {norm!r}")

    @property
    def kappa(self) -> float:
        """Spin-to-lattice angular momentum unit ratio ``S0 / (m omega_L r0**2)``."""
        return self.spin_ratio * self.lambda_spin

    @property
    def c_spin(self) -> float:
        """Pseudo-dipolar coupling as seen by the spins (Zeeman units)."""
        return self.eps_c / self.kappa

    @property
    def field(self) -> np.ndarray:
        return np.array(self.b_hat)

    def replace(self, **changes) -> "DimensionlessSystem":
        return replace(self, **changes)


@dataclass
class SystemState:
    """Spins, positions (units r0), momenta (units m omega_L r0) and time."""

    spins: np.ndarray
    positions: np.ndarray
    momenta: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.spins = np.ascontiguousarray(self.spins, dtype=float)
        self.positions = np.ascontiguousarray(self.positions, dtype=float)
        self.momenta = np.ascontiguousarray(self.momenta, dtype=float)
        n = self.spins.shape[0]
        for name in ("spins", "positions", "momenta"):
            if getattr(self, name).shape != (n, 3):
                raise ValueError(f"{name} must have shape ({n}, 3)")

    @property
    def n_atoms(self) -> int:
        return self.spins.shape[0]

    def copy(self) -> "SystemState":
        return SystemState(self.spins.copy(), self.positions.copy(),
                           self.momenta.copy(), self.time)

    def validate(self, norm_tol: float = 1e-12) -> None:
        err = np.max(np.abs(np.linalg.norm(self.spins, axis=1) - 1.0))
        if err > norm_tol:
            raise ValueError(f"spins are not unit vectors (max error {err:.3e})")
        if not np.all(np.isfinite(self.positions)) or not np.all(np.isfinite(self.momenta)):
            raise ValueError("non-finite lattice coordinates")
        bonds = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        if np.any(bonds <= 0):
            raise ValueError("coincident neighbouring atoms")


def cobalt(b_field=(0.0, 0.0, 1e-9), n_atoms: int = 50,
           eps_j: float = DEFAULT_EPS_J, eps_c: float = DEFAULT_EPS_C,
           omega_ph: float = DEFAULT_OMEGA_PH) -> PhysicalParams:
    """Cobalt needle whose SI couplings reproduce the given dimensionless ones
    at this particular field strength."""
    omega_l = ELECTRON_GAMMA * float(np.linalg.norm(b_field))
    if omega_l <= 0:
        raise ValueError("the cobalt preset needs a nonzero field to fix its couplings")
    s0 = HBAR / 2
    m, r0 = COBALT_MASS, COBALT_LATTICE_CONST
    return PhysicalParams(
        gamma=ELECTRON_GAMMA,
        b_field=tuple(b_field),
        exchange_j=eps_j * s0 * omega_l,
        pseudo_dipolar_c=eps_c * m * omega_l**2 * r0**2,
        lattice_v=0.5 * omega_ph**2 * m * omega_l**2,
        atom_mass=m,
        lattice_const_r0=r0,
        n_atoms=n_atoms,
        spin_s0=s0,
    )


MATERIALS = {"cobalt": cobalt}


def build_system(params: PhysicalParams,
                 reference_omega: Optional[float] = None) -> DimensionlessSystem:
    """Rescale ``params`` by the Larmor frequency ``gamma |B|``.

    For field-free runs pass ``reference_omega`` (rad/s) to set the time unit;
    ``b_hat`` is then the zero vector.
    """
    b = np.asarray(params.b_field, dtype=float)
    bmag = float(np.linalg.norm(b))
    if reference_omega is None:
        if bmag == 0:
            raise ValueError(
                "zero magnetic field: pass reference_omega to build_system to "
                "fix the time unit for a field-free run")
        omega_l = params.gamma * bmag
    else:
        if reference_omega <= 0:
            raise ValueError("reference_omega must be positive")
        omega_l = float(reference_omega)
    b_hat = b / bmag if bmag > 0 else np.zeros(3)
    m, r0, s0 = params.atom_mass, params.lattice_const_r0, params.spin_s0
    energy = s0 * omega_l
    return DimensionlessSystem(
        eps_j=params.exchange_j / energy,
        eps_c=params.pseudo_dipolar_c / (m * omega_l**2 * r0**2),
        lambda_spin=HBAR / (m * omega_l * r0**2),
        omega_ph=np.sqrt(2.0 * params.lattice_v / m) / omega_l,
        b_hat=tuple(b_hat),
        n_atoms=int(params.n_atoms),
        scales=Scales(omega_l=omega_l, r0=r0, s0=s0, energy=energy, gamma=params.gamma),
        spin_ratio=s0 / HBAR,
    )


def to_physical(system: DimensionlessSystem) -> PhysicalParams:
    """Inverse of :func:`build_system` (needs the recorded scales)."""
    sc = system.scales
    if sc is None:
        raise ValueError("system carries no scales; cannot convert back to SI")
    m = HBAR / (system.lambda_spin * sc.omega_l * sc.r0**2)
    bmag = sc.omega_l / sc.gamma if np.linalg.norm(system.b_hat) > 0 else 0.0
    return PhysicalParams(
        gamma=sc.gamma,
        b_field=tuple(bmag * np.asarray(system.b_hat)),
        exchange_j=system.eps_j * sc.energy,
        pseudo_dipolar_c=system.eps_c * m * sc.omega_l**2 * sc.r0**2,
        lattice_v=0.5 * system.omega_ph**2 * m * sc.omega_l**2,
        atom_mass=m,
        lattice_const_r0=sc.r0,
        n_atoms=system.n_atoms,
        spin_s0=system.spin_ratio * HBAR,
    )


def critical_field(params: PhysicalParams) -> float:
    """Field below which the needle precesses rigidly, ``6 hbar / (gamma m r0^2 N^2)``."""
    return 6.0 * HBAR / (params.gamma * params.atom_mass
                         * params.lattice_const_r0**2 * params.n_atoms**2)


def moment_of_inertia(params: PhysicalParams) -> float:
    """Thin-rod estimate ``m r0^2 N^3 / 12`` (kg m^2)."""
    return params.atom_mass * params.lattice_const_r0**2 * params.n_atoms**3 / 12.0


def rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``.

    Philox streams with different keys are independent, so an ensemble member
    gets the same numbers whether it runs alone, in order, or in a pool.
    """
    key = np.array([int(seed) % 2**64, int(stream) % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def equilibrium_chain(n_atoms: int) -> np.ndarray:
    pos = np.zeros((n_atoms, 3))
    pos[:, 0] = np.arange(n_atoms) - 0.5 * (n_atoms - 1)
    return pos


def aligned_state(system: DimensionlessSystem, direction=(1.0, 0.0, 0.0)) -> SystemState:
    """Equilibrium chain along x at rest, every spin along ``direction``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    n = system.n_atoms
    return SystemState(np.tile(d, (n, 1)), equilibrium_chain(n), np.zeros((n, 3)), 0.0)


def sample_initial_state(system: DimensionlessSystem, lattice_temp: float,
                         rng_seed: int) -> SystemState:
    """Spins along +x on a Boltzmann-sampled harmonic chain.

    ``lattice_temp`` is ``k_B T / (m omega_L^2 r0^2)``.  Bond stretches are
    drawn from the bond-length spring, bond tilts from the pseudo-dipolar
    bending energy with all spins along the chain (quadratic order), and
    momenta from the Maxwell distribution.  Centre of mass and total momentum
    are removed; the momentum variance is rescaled by ``N/(N-1)`` so that the
    mean kinetic energy per degree of freedom stays ``lattice_temp / 2``.
    """
    if not lattice_temp >= 0:
        raise ValueError(f"lattice_temp must be >= 0, got {lattice_temp!r}")
    n = system.n_atoms
    state = aligned_state(system)
    if lattice_temp == 0:
        return state
    gen = rng(rng_seed, 0)
    stretch = gen.normal(0.0, np.sqrt(lattice_temp) / system.omega_ph, size=n - 1)
    # quadratic bending energy per bond is 2 eps_c alpha^2 per tilt axis
    if system.eps_c > 0:
        tilt = gen.normal(0.0, np.sqrt(lattice_temp / (4.0 * system.eps_c)), size=(n - 1, 2))
    else:
        tilt = np.zeros((n - 1, 2))
    bonds = np.empty((n - 1, 3))
    bonds[:, 0] = 1.0 + stretch
    bonds[:, 1:] = (1.0 + stretch)[:, None] * tilt
    pos = np.zeros((n, 3))
    pos[1:] = np.cumsum(bonds, axis=0)
    pos -= pos.mean(axis=0)

    mom = gen.normal(0.0, np.sqrt(lattice_temp), size=(n, 3))
    mom -= mom.mean(axis=0)
    mom *= np.sqrt(n / (n - 1.0))
    return SystemState(state.spins, pos, mom, 0.0)
