"""Gradient projection and its particle-swarm coordinated variant.

``gp_solve`` walks to a critical point of the ML objective over the feasible
region.  ``cgp_solve`` runs several GP models whose starting points are moved
by a particle swarm; the swarm's global best is the estimate.  A random
re-initialisation of the first particle keeps the swarm from collapsing.
"""
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import _kernels as K
from .errors import (BoundarySingularityError, CoverageError, NumericalFailure,
                     QpTdoaError)
from .estimation import MlObjective
from .region import DUAL_TOL, FEAS_TOL, N_QUAD, project_omega, sample_feasible

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GpConfig:
    """Step control of the gradient-projection model.

    A step is tried at ``tau``; if it lowers the objective it is accepted and
    ``tau`` grows by ``grow`` (capped at ``tau_max``), otherwise ``tau`` is
    multiplied by ``shrink`` and the step retried, at most ``max_shrinks``
    times.  The run stops after ``max_iters`` iterations or when the
    objective improved by less than ``objective_rel_tol`` (relative) over the
    last ``stall_window`` iterations.
    """

    tau0: float = 1e-4
    grow: float = 1.2
    shrink: float = 0.5
    tau_max: float = 10.0
    max_shrinks: int = 60
    max_iters: int = 10_000
    objective_rel_tol: float = 1e-12
    stall_window: int = 50
    ap_passes: int = 1
    singular_retries: int = 10

    def __post_init__(self):
        if not self.tau0 > 0:
            raise ValueError("tau0 must be positive")
        if not (self.grow > 1.0 > self.shrink > 0.0):
            raise ValueError("need grow > 1 > shrink > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class PsoConfig:
    n_particles: int = 2
    max_iters: int = 5
    w_max: float = 0.6
    w_min: float = 0.15
    c1: float = 1.8
    c2: float = 1.0
    gamma_div: float = 200.0
    stall_iters: int = 2
    stall_rel_tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("need at least two particles")
        if not (self.w_max >= self.w_min > 0):
            raise ValueError("need w_max >= w_min > 0")
        if not self.gamma_div > 0:
            raise ValueError("gamma_div must be positive")

    def inertia(self, k):
        return self.w_max - (self.w_max - self.w_min) / self.max_iters * k


@dataclass
class LocalizationResult:
    estimate: np.ndarray
    objective_value: float
    gp_iterations: int
    pso_iterations: int = 0
    objective_trace: List[float] = field(default_factory=list)
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)


def _gp_run(obj, region, config, x0):
    rows_n, b_n = region.unit_rows
    return K.gp_loop(obj.prof, obj.beta_u, obj.d_skip, obj.d_zero, obj.sensors, obj.r,
                     obj.w, rows_n, b_n, region._A, region._braw,
                     np.ascontiguousarray(x0, dtype=float),
                     config.tau0, config.grow, config.shrink, config.tau_max,
                     config.max_shrinks, config.max_iters, config.objective_rel_tol,
                     config.stall_window, config.ap_passes, N_QUAD, DUAL_TOL, FEAS_TOL)


def _tangent_nudge(x, rng, metres=1.0):
    d = rng.normal(size=3)
    d -= (d @ x) / (x @ x) * x
    return x + (metres * 1e-3) * d / np.linalg.norm(d)


def gp_solve(scenario, meas, region, config=GpConfig(), x0=None, rng=None, objective=None):
    """Projected-gradient descent from a feasible start ``x0``.

    When the gradient is singular at the start (a sensor sits exactly at the
    skip distance) the start is nudged 1 m along a random tangent direction
    and re-projected, up to ``config.singular_retries`` times.
    """
    obj = objective if objective is not None else MlObjective(scenario, meas)
    if rng is None:
        rng = np.random.default_rng(0)
    x = np.asarray(x0, dtype=float)
    for attempt in range(config.singular_retries + 1):
        x_out, g, iters, status, trace, n_eval, tau = _gp_run(obj, region, config, x)
        if status == K.SINGULAR:
            if attempt == config.singular_retries:
                break
            x = project_omega(region, _tangent_nudge(x, rng))
            continue
        if status in (K.SKIP_ZONE, K.OUT_OF_COVERAGE):
            raise CoverageError("GP start point is outside low-angle coverage")
        if status not in (K.OK, K.MAX_ITERS, K.NO_DESCENT):
            raise NumericalFailure(f"GP failed with status {status}", best=x_out)
        return LocalizationResult(
            estimate=x_out, objective_value=float(g), gp_iterations=int(iters),
            objective_trace=trace.tolist(), converged=status != K.MAX_ITERS,
            diagnostics={"status": int(status), "evaluations": int(n_eval),
                         "final_step": float(tau), "singular_retries": attempt})
    raise BoundarySingularityError("gradient stayed singular after retries")


def gpgd_baseline(scenario, meas, region, config=GpConfig(), rng=None):
    """Single GP run from a random feasible start."""
    if rng is None:
        rng = np.random.default_rng(0)
    x0 = sample_feasible(region, rng)
    res = gp_solve(scenario, meas, region, config, x0, rng)
    res.diagnostics["start"] = x0
    return res


def diversity(particles, global_best):
    """Mean distance (km) of the particles from the global best."""
    p = np.atleast_2d(np.asarray(particles, dtype=float))
    return float(np.mean(np.linalg.norm(p - np.asarray(global_best), axis=1)))


def mutate(region, particle, rng):
    """Random mutation: a fresh uniform draw from the region, ignoring ``particle``."""
    return sample_feasible(region, rng)


def _particle_rng(seed, k, j):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, j)))


def cgp_solve(scenario, meas, region, pso=PsoConfig(), gp=GpConfig(), rng=None):
    """Collaborative gradient projection.

    Random numbers come from ``rng`` (default: seeded from ``pso.seed``) in a
    fixed order: initial particles, then per iteration one cognitive and one
    social draw per particle in particle order, then any mutation.  Each GP
    run gets its own stream keyed by (iteration, particle).
    """
    obj = MlObjective(scenario, meas)
    if rng is None:
        rng = np.random.default_rng(pso.seed)
    gp_seed = int(rng.integers(2 ** 63))
    n = pso.n_particles
    pos = np.array([sample_feasible(region, rng) for _ in range(n)])
    vel = np.zeros_like(pos)
    best = pos.copy()
    best_val = np.array([obj(p) for p in best])
    ig = int(np.argmin(best_val))
    g_best, g_val = best[ig].copy(), float(best_val[ig])
    trace = [g_val]
    gp_iters = 0
    failures = 0
    mutations = 0
    stall = 0
    k = 0
    for k in range(pso.max_iters):
        for j in range(n):
            try:
                res = gp_solve(scenario, meas, region, gp, pos[j],
                               _particle_rng(gp_seed, k, j), objective=obj)
            except QpTdoaError as exc:
                failures += 1
                log.debug("particle %d GP failed at iteration %d: %s", j, k, exc)
                continue
            gp_iters += res.gp_iterations
            if res.objective_value < best_val[j]:
                best[j] = res.estimate
                best_val[j] = res.objective_value
        ig = int(np.argmin(best_val))
        prev = g_val
        g_best, g_val = best[ig].copy(), float(best_val[ig])
        trace.append(g_val)
        w = pso.inertia(k)
        for j in range(n):
            r1 = rng.random()
            r2 = rng.random()
            vel[j] = (w * vel[j] + pso.c1 * r1 * (best[j] - pos[j])
                      + pso.c2 * r2 * (g_best - pos[j]))
            try:
                pos[j] = project_omega(region, pos[j] + vel[j])
            except NumericalFailure:
                pos[j] = sample_feasible(region, rng)
        if diversity(pos, g_best) < pso.gamma_div:
            pos[0] = mutate(region, pos[0], rng)
            mutations += 1
        if prev - g_val <= pso.stall_rel_tol * abs(prev):
            stall += 1
            if stall >= pso.stall_iters:
                break
        else:
            stall = 0
    return LocalizationResult(
        estimate=g_best, objective_value=g_val, gp_iterations=gp_iters,
        pso_iterations=k + 1, objective_trace=trace, converged=True,
        diagnostics={"personal_best_values": best_val.tolist(),
                     "gp_failures": failures, "mutations": mutations})
