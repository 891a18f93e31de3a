"""Weak-field precession and angular-momentum exchange of a 50-atom needle.

At 1 nT the needle precesses as one macrospin at the Larmor rate.  A warm
lattice at 50 uT shows the spin and mechanical angular momenta trading
places while their sum stays put.

    python3 demos/precession.py
"""

import numpy as np

from ferroneedle.dynamics import integrate
from ferroneedle.model import build_system, cobalt, critical_field, sample_initial_state
from ferroneedle.observables import trajectory_observables
from ferroneedle.protocols import SimSettings, precession_experiment

params = cobalt((0, 0, 1e-9))
system = build_system(params)
print(f"omega_L = {system.scales.omega_l:.1f} rad/s, B_c = {critical_field(params) * 1e6:.0f} uT")

summary = precession_experiment(system, SimSettings(dtau=5e-5))
print(f"fitted precession: {summary.frequency:.5f} omega_L = {summary.frequency_hz:.2f} Hz")
print(f"J_z drift {summary.jz_drift:.1e}, Bloch-sphere error {summary.bloch_norm_error:.1e}")

# angular momentum exchange is easier to see at a stronger field
warm = build_system(cobalt((0, 0, 50e-6)))
traj = integrate(sample_initial_state(warm, 1e-2, 1), warm, 4 * np.pi, record_every=1000,
                 dtau=5e-5)
obs = trajectory_observables(traj)
scale = warm.n_atoms * warm.spin_ratio
for k in range(0, len(traj), len(traj) // 8):
    print(f"tau {obs['tau'][k]:6.2f}  Sz {obs['Sz'][k] / scale:+.3f}  "
          f"Lz {obs['Lz'][k] / scale:+.3f}  Jz {obs['Jz'][k] / scale:+.2e}")
