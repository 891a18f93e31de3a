"""Microscopic spin-lattice dynamics of a levitated ferromagnetic needle."""

__version__ = "0.1.0"

from .dynamics import (Derivatives, EnergyBreakdown, NumericalError, Trajectory,  # noqa: E402
                       default_dtau, derivatives, hamiltonian_energy, integrate,
                       lattice_force, spin_torque, step)
from .model import (DimensionlessSystem, PhysicalParams, SystemState, aligned_state,  # noqa: E402
                    build_system, cobalt, critical_field, moment_of_inertia,
                    sample_initial_state, to_physical)
from .observables import (AngularMomenta, NeedleFrame, angular_momenta,  # noqa: E402
                          magnetization, needle_frame, per_spin_azimuths, unwrap_angles)
