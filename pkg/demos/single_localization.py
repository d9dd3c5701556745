"""
One localization, two solvers
=============================

Draw one noisy set of range differences and locate the source twice: with
gradient projection from a random feasible start (GPGD) and with the
particle-swarm coordinated variant (CGP).  A single GP run only finds a
critical point, so its answer depends on where it started.
"""
import numpy as np

from qptdoa.estimation import MlObjective, simulate_measurements
from qptdoa.geo import ecef_to_geodetic
from qptdoa.region import build_region
from qptdoa.solvers import PsoConfig, cgp_solve, gpgd_baseline
from qptdoa.scenarios import european_scenario

sc = european_scenario(noise_std_m=10.0)
region = build_region(sc)
rng = np.random.default_rng(7)
meas = simulate_measurements(sc, rng)
print("RDs (km):", np.round(meas.r, 4))
print("objective at the truth:", MlObjective(sc, meas)(sc.true_source))

# %%
# A handful of GPGD runs; some land far from the source.
for seed in range(5):
    res = gpgd_baseline(sc, meas, region, rng=np.random.default_rng(seed))
    err = np.linalg.norm(res.estimate - sc.true_source)
    print(f"gpgd seed {seed}: error {err:9.3f} km  objective {res.objective_value:.3e}"
          f"  iterations {res.gp_iterations}")

# %%
# CGP with two particles and five swarm iterations.
res = cgp_solve(sc, meas, region, PsoConfig(n_particles=2, max_iters=5, seed=1))
geo = ecef_to_geodetic(res.estimate)
print(f"\ncgp: lat {geo.lat_deg:.4f} lon {geo.lon_deg:.4f}"
      f"  error {np.linalg.norm(res.estimate - sc.true_source) * 1e3:.1f} m")
print("global-best objective per swarm iteration:", np.round(res.objective_trace, 4))
