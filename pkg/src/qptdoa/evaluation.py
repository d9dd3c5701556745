"""Accuracy metrics, the CRLB benchmark and experiment building blocks.

Sensors are numbered from 1 in this module (sensor 1 is the RD reference),
matching how RDs ``r_{i,1}`` are labelled.
"""
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import List

import numpy as np

from .errors import DomainError, ModelDomainError, UsageError
from .estimation import (TdoaMeasurements, build_covariance, differencing_matrix,
                         takeoff_angles)
from .geo import ground_distance
from .ionosphere import IonosphereProfile, ray_derivatives
from .region import build_region
from .solvers import GpConfig, PsoConfig, cgp_solve

#: Error threshold (km) of the thresholded GPGD protocol.
TA_THRESHOLD_KM = 20.0


@dataclass
class McReport:
    per_trial_error: List[float]
    rmse: float
    rge: float
    cdf: List[tuple]
    trial_seeds: List[int] = field(default_factory=list)
    config_snapshot: dict = field(default_factory=dict)


def rmse_rge(trials, scenario):
    """RMSE (km) of ``(estimate, truth)`` pairs and RMSE over the longest true ground range."""
    trials = list(trials)
    if not trials:
        raise UsageError("need at least one trial")
    sq = [float(np.sum((np.asarray(e) - np.asarray(t)) ** 2)) for e, t in trials]
    rmse = math.sqrt(sum(sq) / len(sq))
    return rmse, rmse / max_ground_distance(scenario)


def max_ground_distance(scenario):
    return max(ground_distance(s, scenario.true_source, scenario.earth)
               for s in scenario.sensors)


def rmse_of_errors(errors):
    e = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.mean(e ** 2)))


def empirical_cdf(errors):
    """Step CDF as ``(value, fraction <= value)`` pairs at the distinct sorted values."""
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        raise UsageError("need at least one error value")
    values, counts = np.unique(e, return_counts=True)
    frac = np.cumsum(counts) / e.size
    return [(float(v), float(f)) for v, f in zip(values, frac)]


def make_report(errors, scenario, seeds=(), config=None):
    rmse = rmse_of_errors(errors)
    return McReport(list(map(float, errors)), rmse, rmse / max_ground_distance(scenario),
                    empirical_cdf(errors), list(seeds), dict(config or {}))


def rd_jacobian(scenario, x=None):
    """``d(E P')/dx`` at ``x`` (default: the true source), shape ``(L-1, 3)``."""
    x = scenario.true_source if x is None else np.asarray(x, dtype=float)
    if x is None:
        raise UsageError("CRLB needs a scenario with a true source")
    r0 = scenario.earth.r0
    betas = takeoff_angles(scenario, x)
    rows = []
    for xi, beta in zip(scenario.sensors, betas):
        d = ground_distance(xi, x, scenario.earth)
        dd, dp = ray_derivatives(scenario.profile, beta, scenario.earth)
        rows.append(dp * (-xi / (r0 * math.sin(d / r0) * dd)))
    return differencing_matrix(scenario.n_sensors) @ np.array(rows)


def crlb(scenario):
    """Cramer-Rao bound on the source position, restricted to the Earth sphere.

    Uses the Fisher information ``J^T Sigma^-1 J`` of the RD model and the
    usual constrained bound ``U (U^T FIM U)^-1 U^T`` with ``U`` an orthonormal
    basis of the tangent plane at the source.  Returns the 3x3 bound (km^2)
    and ``sqrt(trace)`` (km).
    """
    if scenario.true_source is None:
        raise UsageError("CRLB needs a scenario with a true source")
    jac = rd_jacobian(scenario)
    sigma = build_covariance(scenario.noise_std)
    fim = jac.T @ np.linalg.solve(sigma, jac)
    u = scenario.true_source / np.linalg.norm(scenario.true_source)
    basis = np.linalg.svd(np.eye(3) - np.outer(u, u))[0][:, :2]
    reduced = basis.T @ fim @ basis
    if np.linalg.cond(reduced) > 1e12:
        raise ModelDomainError("source position is not identifiable from this geometry")
    bound = basis @ np.linalg.inv(reduced) @ basis.T
    bound = 0.5 * (bound + bound.T)
    return bound, float(math.sqrt(np.trace(bound)))


def crlb_rms(scenario, noise_levels):
    """Root-mean-square of the scalar bound over a list of per-sensor noise vectors (km)."""
    vals = [crlb(scenario.with_noise(s))[1] for s in noise_levels]
    return float(math.sqrt(np.mean(np.square(vals)))), vals


def inject_bias(meas, sensor, magnitude):
    """Add a constant ``magnitude`` (km) to the RD of sensor number ``sensor`` (>= 2)."""
    n = meas.r.size + 1
    if not 2 <= sensor <= n:
        raise UsageError(f"bias can only target a non-reference sensor 2..{n}, got {sensor}")
    r = meas.r.copy()
    r[sensor - 2] += magnitude
    return TdoaMeasurements(r, meas.sigma)


def restrict_measurements(meas, keep):
    """RDs and covariance for the sensors ``keep`` (zero-based, must start with 0)."""
    keep = list(keep)
    if keep[0] != 0:
        raise UsageError("the reference sensor must be kept")
    rows = [k - 1 for k in keep[1:]]
    return TdoaMeasurements(meas.r[rows], meas.sigma[np.ix_(rows, rows)])


def data_selective_cgp(scenario, meas, region=None, pso=PsoConfig(), gp=GpConfig(),
                       n_suspect=1, rng=None):
    """CGP over every subset that drops ``n_suspect`` non-reference sensors.

    Each subset is scored by its objective per RD, ``g / (L_subset - 1)``;
    the best one is returned with ``diagnostics["excluded"]`` listing the
    dropped sensor numbers.
    """
    n = scenario.n_sensors
    if n_suspect < 0 or n - n_suspect < 4:
        raise UsageError(f"dropping {n_suspect} of {n} sensors leaves fewer than 4")
    if n_suspect == 0:
        res = cgp_solve(scenario, meas, region if region is not None else build_region(scenario),
                        pso, gp, rng)
        res.diagnostics.update(excluded=[], subset_scores=[])
        return res
    seed = pso.seed if rng is None else int(rng.integers(2 ** 63))
    best = None
    scores = []
    for s, drop in enumerate(itertools.combinations(range(1, n), n_suspect)):
        keep = [i for i in range(n) if i not in drop]
        sub = scenario.subset(keep)
        sub_meas = restrict_measurements(meas, keep)
        sub_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(s,)))
        res = cgp_solve(sub, sub_meas, build_region(sub), pso, gp, sub_rng)
        score = res.objective_value / (len(keep) - 1)
        excluded = [i + 1 for i in drop]
        scores.append((excluded, score))
        if best is None or score < best[0]:
            best = (score, excluded, res)
    score, excluded, res = best
    res.diagnostics.update(excluded=excluded, subset_scores=scores, score=score)
    return res


def perturb_profile(p, which, delta):
    """Change one of ``f_c``, ``r_b`` (``y_m`` kept) or ``y_m`` by ``delta``."""
    if which == "f_c":
        return replace(p, f_c=p.f_c + delta)
    if which == "r_b":
        return replace(p, r_b=p.r_b + delta, r_m=p.r_m + delta)
    if which == "y_m":
        if p.y_m + delta <= 0:
            raise DomainError("semithickness must stay positive")
        return p.with_semithickness(p.y_m + delta)
    raise UsageError(f"unknown profile parameter {which!r}")


def mismatched_scenario(scenario, profile: IonosphereProfile):
    """Solving scenario that assumes ``profile`` while the data came from the nominal one."""
    return scenario.without_truth().with_profile(profile)
