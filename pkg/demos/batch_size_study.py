"""How many measurements does a ranging fix need?

Runs the batch-size study for the 250 kb/s FSK link on the 18 m cable and
puts the simulated spread of batch means next to the sigma_1 / sqrt(N) line
and the hardware values.
"""

import math

from rttsim import RfSettings, batch_size_study, parse_config, required_samples

HARDWARE = {1: 6.09, 20: 1.37, 50: 0.86, 100: 0.61, 200: 0.44, 500: 0.27,
            1000: 0.19, 2000: 0.13, 5000: 0.08}

config = parse_config("""
seed = 1
scenario = "BatchSizeStudy"

[[settings]]
frequency_mhz = 868
modulation = "FSK2"
data_rate_kbps = 250
""")

fsk = RfSettings()
study = batch_size_study(config)
grid = study.grid(fsk)
sigma_1 = grid[1]

print(f"{'N':>6} {'simulated':>10} {'sigma1/sqrtN':>13} {'hardware':>9} {'duration':>10}")
for row in study.rows:
    n = row.batch_size
    print(f"{n:>6} {row.sigma_means_m:>9.3f}m {sigma_1 / math.sqrt(n):>12.3f}m "
          f"{HARDWARE[n]:>8.2f}m {row.duration_ms:>8.1f}ms")

# the inverse question: samples for a target spread
for target in (1.0, 0.5, 0.2):
    n = required_samples(sigma_1, target)
    print(f"sigma <= {target} m needs N = {n} ({n * fsk.measurement_period * 1e3:.0f} ms per anchor)")
