"""Trace a transmitter over bare asphalt and compare with the textbook two-ray model.

    python demos/two_ray_check.py
"""

import cmath
import math

from multiverse import PropagationConfig, build_world, isotropic_pattern, received_power, trace_paths

spec = {"bounds": {"min": [-5, -5, 0], "max": [120, 5, 10]},
        "tx": {"x": 0.0, "y": 0.0, "height": 1.5}, "buildings": [], "obstacles": [],
        "road": "asphalt"}
world = build_world(spec)
cfg = PropagationConfig(max_reflections=1, max_diffractions=0)
lam = cfg.wavelength
gamma = world.material("asphalt").coefficient()

print("  d_m   traced_dBm  two_ray_dBm")
for d in (5, 10, 20, 40, 80, 110):
    p = received_power(trace_paths(world, isotropic_pattern(10.0), (d, 0.0, 1.5), cfg), None, cfg)
    direct = d
    bounce = math.hypot(d, 3.0)
    field = (cmath.exp(-2j * math.pi * direct / lam) / direct
             + gamma * cmath.exp(-2j * math.pi * bounce / lam) / bounce)
    friis = cfg.tx_power_w * (lam / (4 * math.pi)) ** 2
    two_ray = 10 * math.log10(friis * abs(field) ** 2) + 30
    print(f"{d:5d}  {p.dbm:11.3f}  {two_ray:11.3f}")
