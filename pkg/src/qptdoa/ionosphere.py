"""Single-layer quasi-parabolic (QP) ionosphere ray model.

The layer is described by its geocentric base height ``r_b``, the height of
maximum electron density ``r_m`` and the ratio ``F = f / f_c`` of operating
to critical frequency.  For a takeoff angle ``beta`` the closed-form ray
integrals give the ground distance ``D(beta)`` and the group path
``P'(beta)``.  ``D`` falls from ``D(0)`` to the skip distance at the limit
angle and then grows without bound until the ray penetrates the layer.
Only the low-angle branch ``[0, beta_U]`` is used for localization.
"""
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels as K
from .errors import (ModelDomainError, OutOfCoverageError, RayPenetratesError,
                     SkipZoneError)
from .geo import EarthModel

ANGLE_TOL = 1e-10


@dataclass(frozen=True)
class IonosphereProfile:
    """QP layer: heights in km (geocentric), frequencies in MHz."""

    r_b: float = 6550.0
    r_m: float = 6650.0
    f: float = 11.0
    f_c: float = 10.0

    def __post_init__(self):
        if not self.r_m > self.r_b:
            raise ModelDomainError(f"r_m={self.r_m} must exceed r_b={self.r_b}")
        if not (self.f > 0 and self.f_c > 0):
            raise ModelDomainError("frequencies must be positive")
        if not self.f > self.f_c:
            raise ModelDomainError(f"F = f/f_c = {self.f / self.f_c:.4g} must exceed 1")

    @property
    def y_m(self):
        return self.r_m - self.r_b

    @property
    def F(self):
        return self.f / self.f_c

    def with_semithickness(self, y_m):
        """Same base height, new semithickness."""
        return replace(self, r_m=self.r_b + y_m)

    def packed(self, earth=EarthModel()):
        """Parameter vector consumed by the compiled kernels."""
        if not self.r_b > earth.r0:
            raise ModelDomainError(f"layer base r_b={self.r_b} must exceed r0={earth.r0}")
        c = qp_coefficients(self, 0.0, earth)
        k = (self.r_b * self.r_m / (self.F * self.y_m)) ** 2
        return np.array([earth.r0, self.r_b, self.r_m, c.A, c.B, k])


class QpCoefficients(NamedTuple):
    A: float
    B: float
    C: float


class RayPath(NamedTuple):
    beta: float
    gamma: float
    ground_distance: float
    group_path: float


def qp_coefficients(p, beta, earth=EarthModel()):
    F2 = p.F ** 2
    a = 1.0 - 1.0 / F2 + (p.r_b / (p.F * p.y_m)) ** 2
    b = -2.0 * p.r_m * p.r_b ** 2 / (F2 * p.y_m ** 2)
    c = (p.r_b * p.r_m / (p.F * p.y_m)) ** 2 - earth.r0 ** 2 * math.cos(beta) ** 2
    return QpCoefficients(a, b, c)


def snell_gamma(p, beta, earth=EarthModel()):
    """Ray angle at the layer base from ``r_b cos(gamma) = r0 cos(beta)``."""
    return math.acos(earth.r0 * math.cos(beta) / p.r_b)


def _check_beta(beta):
    if not 0.0 <= beta <= math.pi / 2:
        raise ModelDomainError(f"takeoff angle {beta} rad outside [0, pi/2]")


def _raise_status(st, beta):
    if st == K.PENETRATES:
        raise RayPenetratesError(f"ray at beta={beta:.6g} rad penetrates the layer")
    raise ModelDomainError(f"QP model not defined at beta={beta:.6g} rad")


def trace_ray(p, beta, earth=EarthModel()):
    """Ground distance and group path of the ray launched at ``beta``."""
    _check_beta(beta)
    d, gp, st = K.ray(p.packed(earth), float(beta))
    if st != K.OK:
        _raise_status(st, beta)
    return RayPath(float(beta), snell_gamma(p, beta, earth), d, gp)


def ray_derivatives(p, beta, earth=EarthModel()):
    """``(dD/dbeta, dP'/dbeta)`` in km/rad."""
    _check_beta(beta)
    _d, _p, dd, dp, st = K.ray_with_derivatives(p.packed(earth), float(beta))
    if st != K.OK:
        _raise_status(st, beta)
    return dd, dp


@lru_cache(maxsize=256)
def penetration_angle(p, earth=EarthModel()):
    """Smallest takeoff angle with ``B**2 = 4 A C(beta)``, or ``None``.

    ``B**2 - 4AC`` decreases monotonically in ``beta`` so plain bisection
    on [0, pi/2] finds the unique sign change.
    """
    prof = p.packed(earth)
    lo, hi = 0.0, math.pi / 2
    if K.discriminant(prof, hi) > 0.0:
        return None
    if K.discriminant(prof, lo) <= 0.0:
        raise ModelDomainError("every ray penetrates the layer")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if K.discriminant(prof, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi


@lru_cache(maxsize=256)
def limit_angle(p, earth=EarthModel()):
    """Takeoff angle of the skip distance (interior minimum of ``D``).

    Golden-section search narrows the bracket, bisection on the sign of
    ``dD/dbeta`` finishes to ``ANGLE_TOL``.
    """
    prof = p.packed(earth)
    pen = penetration_angle(p, earth)
    top = math.pi / 2 if pen is None else pen * (1.0 - 1e-12)

    def dist(b):
        d, _gp, st = K.ray(prof, b)
        return d if st == K.OK else math.inf

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, top
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = dist(c), dist(d)
    while b - a > 1e-4:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = dist(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = dist(d)

    def slope(x):
        _d, _gp, dd, _dp, st = K.ray_with_derivatives(prof, x)
        return dd if st == K.OK else math.nan

    lo, hi = a, min(b, top)
    if not (slope(lo) < 0.0 < slope(hi)):
        raise ModelDomainError("D(beta) has no interior minimum for this profile")
    while hi - lo > ANGLE_TOL:
        mid = 0.5 * (lo + hi)
        if slope(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def skip_distance(p, earth=EarthModel()):
    return trace_ray(p, limit_angle(p, earth), earth).ground_distance


def zero_angle_distance(p, earth=EarthModel()):
    """Longest ground range of the low-angle branch, ``D(0)``."""
    return trace_ray(p, 0.0, earth).ground_distance


@lru_cache(maxsize=256)
def branch_limits(p, earth=EarthModel()):
    """``(beta_U, skip distance, D(0))`` for a profile."""
    bu = limit_angle(p, earth)
    return bu, skip_distance(p, earth), zero_angle_distance(p, earth)


def solve_takeoff_angle(p, target_ground_distance, earth=EarthModel(), tol=0.0):
    """Low-angle takeoff angle whose ray lands ``target_ground_distance`` km away.

    Targets within ``tol`` km outside the branch snap to its end angles.
    """
    bu, dskip, dzero = branch_limits(p, earth)
    beta, st = K.solve_beta(p.packed(earth), float(target_ground_distance),
                            bu, dskip, dzero, tol)
    if st == K.SKIP_ZONE:
        raise SkipZoneError(f"ground distance {target_ground_distance:.6g} km is inside "
                            f"the skip distance {dskip:.6g} km")
    if st == K.OUT_OF_COVERAGE:
        raise OutOfCoverageError(f"ground distance {target_ground_distance:.6g} km exceeds "
                                 f"D(0) = {dzero:.6g} km")
    return beta


def group_path_chord_gap(p, beta, earth=EarthModel()):
    """``P' - chord``: negative values flag a non-physical ray (diagnostic only)."""
    ray = trace_ray(p, beta, earth)
    chord = 2.0 * earth.r0 * math.sin(ray.ground_distance / (2.0 * earth.r0))
    return ray.group_path - chord


def profile_summary(p: IonosphereProfile, earth: EarthModel = EarthModel()) -> dict:
    bu, dskip, dzero = branch_limits(p, earth)
    pen: Optional[float] = penetration_angle(p, earth)
    return {"beta_u_deg": math.degrees(bu), "skip_distance_km": dskip,
            "zero_angle_distance_km": dzero,
            "penetration_deg": None if pen is None else math.degrees(pen)}
