"""Distance and attenuation sweeps on the simulated cable setup.

The distance sweep shows the corrected RTT growing by one cycle per
4.61 m of cable once the 2 m offset is removed. The attenuation sweep
shows the offset rising exponentially towards the sensitivity limit,
which is why a ranging system has to know its link attenuation.
"""

import numpy as np

from rttsim import parse_config
from rttsim.campaign import attenuation_sweep, distance_sweep, expected_rtt_offset

config = parse_config('seed = 7\nscenario = "DistanceSweep"\n')
d = distance_sweep(config)
print("distance_m  normalized_cycles")
for x, y in zip(d.distances, d.mean_cycles):
    print(f"{x:10.1f}  {y:10.3f}")
print(f"slope {d.slope:.4f} cycles/m, intercept {d.intercept:+.4f} cycles")
print(f"-> {1 / d.slope:.3f} m per cycle of round trip\n")

config = parse_config('seed = 7\nscenario = "AttenuationSweep"\n'
                      '[attenuation_sweep]\nstep_db = 3\n')
a = attenuation_sweep(config)
print("attenuation_db  offset_cycles  fit")
for x, y in zip(a.attenuation, a.offset_cycles):
    print(f"{x:14.0f}  {y:13.2f}  {float(a.fit(x)):7.2f}")
print("fit (a, b, k):", np.round(a.fit.params, 4))
print("model (a, b, k):", np.round(expected_rtt_offset(config, config.settings[0]), 4))
