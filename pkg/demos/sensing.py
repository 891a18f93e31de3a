"""Nutation sensing of a slow field modulation and the regime ladder.

    python3 demos/sensing.py
"""

from ferroneedle.model import build_system, cobalt
from ferroneedle.protocols import SimSettings, nutation_sensing, regime_scan

for r in regime_scan([1e-9, 50e-6, 5e-3], build_system(cobalt())):
    print(f"{r.field_magnitude:8.1e} T  {r.regime:10s}  <Mz> {r.mz_mean:+.3f}  "
          f"excursion {r.mz_excursion:.3f}")

system = build_system(cobalt((0, 0, 50e-6)))
reading = nutation_sensing(0.5, 0.2, system, SimSettings(dtau=5e-5))
print(f"drive 0.2 recovered as {reading.drive_freq_recovered:.4f}, "
      f"envelope correlation {reading.envelope_correlation:.4f}")
