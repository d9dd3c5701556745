"""Feasible source set: the Earth sphere intersected with a polytope.

Each sensor contributes a slab ``lo_i <= x_i . x <= hi_i``.  On the sphere
it keeps the ground distance between the skip distance and ``D(0)``,
which is the same as keeping the takeoff angle inside ``[0, beta_U]``.
The slabs are stacked as ``A x <= b`` with ``A = [-X; X]``.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import DomainError, EmptyRegionError, NumericalFailure
from .geo import SPHERE_TOL, EarthModel
from .ionosphere import branch_limits

#: Polytope-row tolerance (km^2) used by feasibility checks.
FEAS_TOL = 1e-6
N_QUAD = 500
DUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FeasibleRegion:
    earth: EarthModel
    A: np.ndarray
    b: np.ndarray
    beta_u: float
    skip_distance: np.ndarray
    zero_angle_distance: np.ndarray

    def __post_init__(self):
        norms = np.linalg.norm(self.A, axis=1)
        object.__setattr__(self, "_rows", np.ascontiguousarray(self.A / norms[:, None]))
        object.__setattr__(self, "_b", np.ascontiguousarray(self.b / norms))
        object.__setattr__(self, "_A", np.ascontiguousarray(self.A))
        object.__setattr__(self, "_braw", np.ascontiguousarray(self.b))

    @property
    def n_sensors(self):
        return self.A.shape[0] // 2

    @property
    def sensors(self):
        return self.A[self.n_sensors:]

    @property
    def unit_rows(self):
        """Rows scaled to unit norm with the matching right-hand side (km)."""
        return self._rows, self._b


def build_region(scenario):
    """Polytope rows and bounds for a scenario's sensors and profile."""
    r0 = scenario.earth.r0
    beta_u, d_skip, d_zero = branch_limits(scenario.profile, scenario.earth)
    n = scenario.n_sensors
    x = scenario.sensors
    lo = -r0 ** 2 + 2 * r0 ** 2 * np.sin(d_zero / (2 * r0)) ** 2
    hi = r0 ** 2 - 2 * r0 ** 2 * np.sin(d_skip / (2 * r0)) ** 2
    a = np.vstack([-x, x])
    b = np.concatenate([np.full(n, lo), np.full(n, hi)])
    return FeasibleRegion(scenario.earth, a, b, beta_u,
                          np.full(n, d_skip), np.full(n, d_zero))


def project_sphere(y, earth=EarthModel()):
    y = np.asarray(y, dtype=float)
    nrm = np.linalg.norm(y)
    if nrm == 0.0:
        raise DomainError("cannot project the origin onto the sphere")
    return earth.r0 * y / nrm


def project_polytope(region, x, max_sweeps=N_QUAD, tol=DUAL_TOL):
    """Euclidean projection onto ``{y : A y <= b}`` by Hildreth's method."""
    rows, b = region.unit_rows
    y, _lam, ok, _sweeps = K.hildreth(rows, b, np.asarray(x, dtype=float), max_sweeps, tol)
    if not ok:
        raise NumericalFailure(f"Hildreth did not converge in {max_sweeps} sweeps", best=y)
    return y


def hildreth_dual(region, x, max_sweeps=N_QUAD, tol=DUAL_TOL):
    """Projection together with the multipliers of the unit-row constraints."""
    rows, b = region.unit_rows
    y, lam, ok, sweeps = K.hildreth(rows, b, np.asarray(x, dtype=float), max_sweeps, tol)
    if not ok:
        raise NumericalFailure(f"Hildreth did not converge in {max_sweeps} sweeps", best=y)
    return y, lam, sweeps


def polytope_violation(region, x):
    """``max(A x - b)`` in km^2 (non-positive inside the polytope)."""
    return float(np.max(region.A @ np.asarray(x, dtype=float) - region.b))


def alternating_projection(region, x, passes=1, return_violation=False):
    """Polytope projection followed by sphere projection, ``passes`` times.

    The last step is always the sphere projection, so the result lies on S;
    its remaining polytope violation can be returned alongside.
    """
    if passes < 1:
        raise DomainError("passes must be at least 1")
    rows, b = region.unit_rows
    y, ok = K.ap_passes(rows, b, region.earth.r0, np.asarray(x, dtype=float),
                        passes, N_QUAD, DUAL_TOL)
    if not ok:
        raise NumericalFailure("alternating projection failed", best=y)
    if return_violation:
        return y, polytope_violation(region, y)
    return y


def project_omega(region, x, passes=1, tol=FEAS_TOL):
    """Map a point into S and T.

    Starts with ``passes`` rounds of alternating projection.  When those leave
    the point outside T (the slab normals are almost radial near the
    boundary, so AP creeps) the point is pulled in along the sphere by
    projecting onto the linearised cone ``a.y <= (b / r0) |y|``.
    """
    rows, b = region.unit_rows
    y, ok = K.project_omega(rows, b, region._A, region._braw, region.earth.r0,
                            np.asarray(x, dtype=float), passes, N_QUAD, DUAL_TOL, tol)
    if not ok:
        raise NumericalFailure("could not restore feasibility", best=y)
    return y


def is_feasible(region, x, tol=FEAS_TOL):
    x = np.asarray(x, dtype=float)
    if abs(np.linalg.norm(x) - region.earth.r0) > SPHERE_TOL:
        return False
    return polytope_violation(region, x) <= tol


def bounding_cap(region):
    """Centre (unit vector) and angular radius of a cap containing the region."""
    sensors = region.sensors
    centre = sensors.mean(axis=0)
    centre /= np.linalg.norm(centre)
    r0 = region.earth.r0
    offsets = np.arccos(np.clip(sensors @ centre / r0, -1.0, 1.0))
    radius = float(np.min(offsets + region.zero_angle_distance / r0))
    return centre, min(radius, math.pi)


def _uniform_in_cap(centre, radius, rng):
    cos_a = 1.0 - rng.random() * (1.0 - math.cos(radius))
    phi = 2.0 * math.pi * rng.random()
    sin_a = math.sqrt(max(0.0, 1.0 - cos_a * cos_a))
    helper = np.array([1.0, 0.0, 0.0]) if abs(centre[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(centre, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(centre, e1)
    return cos_a * centre + sin_a * (math.cos(phi) * e1 + math.sin(phi) * e2)


def sample_feasible(region, rng, passes=20, max_attempts=100):
    """Random feasible point.

    Draws uniformly on the sphere within a cap that contains the region,
    applies ``passes`` alternating projections and keeps the first
    candidate that is feasible.
    """
    centre, radius = bounding_cap(region)
    r0 = region.earth.r0
    for _ in range(max_attempts):
        u = _uniform_in_cap(centre, radius, rng)
        try:
            x = alternating_projection(region, r0 * u, passes)
        except NumericalFailure:
            continue
        if is_feasible(region, x):
            return x
    raise EmptyRegionError(f"no feasible point after {max_attempts} attempts")
