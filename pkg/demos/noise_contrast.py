"""Angle spread of independent spins versus the coupled needle.

Independent spins diffuse, so their spread grows as sqrt(t) and the azimuth
spectrum falls as 1/f^2.  The exchange-locked needle keeps its spins together.

    python3 demos/noise_contrast.py
"""

from ferroneedle.dynamics import integrate
from ferroneedle.model import aligned_state, build_system, cobalt
from ferroneedle.noise import independent_ensemble, needle_noise, sql_delta_omega

ind = independent_ensemble(50, 0.1, 100.0, 0.05, n_seeds=20, seed=0)
print(f"independent spins: spread slope {ind.delta_phi_slope.slope:.3f}, "
      f"PSD slope {ind.psd_slope.slope:.2f}")

system = build_system(cobalt((0, 0, 1e-9)))
traj = integrate(aligned_state(system), system, 100.0, record_every=1000, dtau=5e-5)
ndl = needle_noise(traj)
print(f"needle: spread slope {ndl.delta_phi_slope.slope:.3f}, "
      f"max spread {ndl.delta_phi.max():.2e} rad")
print(f"SQL for 1e6 spins, T2 = 60 s, t = 1 s: {sql_delta_omega(1e6, 60, 1):.3g} rad/s")
