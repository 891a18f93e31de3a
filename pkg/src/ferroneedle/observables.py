"""Magnetization, angular momenta and needle orientation readouts."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import DimensionlessSystem, SystemState


@dataclass(frozen=True)
class AngularMomenta:
    """z-components in units of hbar."""

    s_z: float
    l_z: float

    @property
    def j_z(self) -> float:
        return self.s_z + self.l_z


@dataclass(frozen=True)
class NeedleFrame:
    axis: np.ndarray
    azimuth: float
    polar: float


def magnetization(state: SystemState) -> np.ndarray:
    return state.spins.mean(axis=0)


def angular_momenta(state: SystemState, system: DimensionlessSystem) -> AngularMomenta:
    r = state.positions - state.positions.mean(axis=0)
    l_z = np.sum(r[:, 0] * state.momenta[:, 1] - r[:, 1] * state.momenta[:, 0])
    return AngularMomenta(s_z=float(system.spin_ratio * state.spins[:, 2].sum()),
                          l_z=float(l_z / system.lambda_spin))


def _principal_axes(positions):
    """Dominant gyration-tensor eigenvector(s); positions (..., N, 3)."""
    r = positions - positions.mean(axis=-2, keepdims=True)
    gyr = np.einsum("...ni,...nj->...ij", r, r)
    w, v = np.linalg.eigh(gyr)
    if np.any(w[..., -1] <= 0):
        raise ValueError("degenerate gyration tensor: all atoms coincide")
    return v[..., :, -1]


def _hemisphere_sign(axis):
    # first nonzero of x, y, z decides
    for k in range(3):
        if abs(axis[k]) > 1e-12:
            return 1.0 if axis[k] > 0 else -1.0
    return 1.0


def needle_frame(state: SystemState, previous: Optional[NeedleFrame] = None) -> NeedleFrame:
    """Needle orientation from the gyration tensor of the atom positions.

    The axis is a line, so its sign is chosen to continue ``previous`` when
    given, otherwise to point into the +x hemisphere.
    """
    if state.n_atoms < 2:
        raise ValueError("needle frame needs at least two atoms")
    axis = _principal_axes(state.positions)
    ref = previous.axis if previous is not None else None
    sign = (1.0 if axis @ ref >= 0 else -1.0) if ref is not None else _hemisphere_sign(axis)
    axis = sign * axis
    return NeedleFrame(axis=axis, azimuth=float(np.arctan2(axis[1], axis[0])),
                       polar=float(np.arccos(np.clip(axis[2], -1.0, 1.0))))


def needle_axes(positions: np.ndarray, reference=None) -> np.ndarray:
    """Sign-continuous needle axes for a stack of snapshots (T, N, 3).

    The first axis is aligned with ``reference`` (default: +x hemisphere).
    """
    axes = _principal_axes(positions)
    first = axes[0]
    if reference is None:
        sign = _hemisphere_sign(first)
    else:
        sign = 1.0 if first @ np.asarray(reference) >= 0 else -1.0
    axes[0] *= sign
    for k in range(1, len(axes)):
        if axes[k] @ axes[k - 1] < 0:
            axes[k] *= -1.0
    return axes


def unwrap_angles(angles, max_jump: float = 0.9 * np.pi) -> np.ndarray:
    """Remove 2 pi jumps along the first axis.

    Raises when a raw step (after unwrapping) comes within ``pi - max_jump``
    of the ambiguous half-turn, which means the series was sampled too coarsely.
    """
    a = np.asarray(angles, dtype=float)
    out = np.unwrap(a, axis=0)
    if a.shape[0] > 1:
        steps = np.abs(np.diff(out, axis=0))
        if np.any(steps > max_jump):
            raise ValueError(
                f"angle series jumps by {steps.max():.3f} rad between samples; "
                "record more often (smaller record_every)")
    return out


def per_spin_azimuths(state_or_spins) -> np.ndarray:
    """``atan2(s_y, s_x)`` for every spin; accepts a state or a spin array (..., N, 3)."""
    s = state_or_spins.spins if isinstance(state_or_spins, SystemState) else np.asarray(state_or_spins)
    rho = np.hypot(s[..., 0], s[..., 1])
    if np.any(rho < 1e-12):
        raise ValueError("a spin is parallel to z; its azimuth is undefined")
    return np.arctan2(s[..., 1], s[..., 0])


def trajectory_observables(traj) -> dict:
    """Per-sample columns used by the CSV writer and the protocols."""
    from .dynamics import hamiltonian_energy

    system = traj.system
    m = traj.spins.mean(axis=1)
    r = traj.positions - traj.positions.mean(axis=1, keepdims=True)
    l_z = np.sum(r[..., 0] * traj.momenta[..., 1] - r[..., 1] * traj.momenta[..., 0],
                 axis=1) / system.lambda_spin
    s_z = system.spin_ratio * traj.spins[..., 2].sum(axis=1)
    axes = needle_axes(traj.positions)
    azimuth = unwrap_angles(np.arctan2(axes[:, 1], axes[:, 0]))
    polar = np.arccos(np.clip(axes[:, 2], -1.0, 1.0))
    energy = np.array([hamiltonian_energy(traj.state(k), system, traj.fields[k]).total
                       for k in range(len(traj))])
    return {
        "tau": traj.times, "Mx": m[:, 0], "My": m[:, 1], "Mz": m[:, 2],
        "Sz": s_z, "Lz": l_z, "Jz": s_z + l_z,
        "needle_azimuth": azimuth, "needle_polar": polar,
        "energy_total": energy, "energy_err": energy - energy[0],
    }
