"""
Ray geometry of a quasi-parabolic layer
=======================================

How far a one-hop HF ray lands, and how long its group path is, as a
function of the takeoff angle.  Only the low-angle branch (below the limit
angle) is used for localization; past it the range folds back.
"""
import math

import numpy as np

from qptdoa.geo import ground_distance
from qptdoa.ionosphere import profile_summary, solve_takeoff_angle, trace_ray
from qptdoa.scenarios import SENSOR_SITES, european_scenario

sc = european_scenario()
p = sc.profile

# the layer: base 6550 km, peak 6650 km, 11 MHz carrier, 10 MHz critical frequency
for key, val in profile_summary(p).items():
    print(f"{key:24s} {val:.4f}")

# %%
# Ground range and group path along the low-angle branch.  The range shrinks
# from the zero-angle distance down to the skip distance at the limit angle.
print("\n beta_deg  ground_km  group_km")
for deg in np.arange(0.0, 61.0, 5.0):
    ray = trace_ray(p, math.radians(deg))
    print(f"{deg:9.1f} {ray.ground_distance:10.2f} {ray.group_path:9.2f}")

# %%
# Inverting the range gives the takeoff angle towards each sensor.
print("\nsensor      ground_km  takeoff_deg")
for name, xi in zip(SENSOR_SITES, sc.sensors):
    d = ground_distance(xi, sc.true_source)
    beta = solve_takeoff_angle(p, d)
    print(f"{name:10s} {d:10.2f} {math.degrees(beta):12.2f}")
