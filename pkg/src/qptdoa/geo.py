"""Spherical-Earth coordinates and distances.

Distances are kilometres, angles radians; degrees appear only in
:class:`GeodeticCoord`.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

#: Tolerance (km) for "on the sphere" checks.
SPHERE_TOL = 1e-6


@dataclass(frozen=True)
class EarthModel:
    """Spherical Earth of radius ``r0`` km."""

    r0: float = 6371.0

    def __post_init__(self):
        if not self.r0 > 0:
            raise DomainError(f"Earth radius must be positive, got {self.r0}")


@dataclass(frozen=True)
class GeodeticCoord:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise DomainError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise DomainError(f"longitude {self.lon_deg} outside [-180, 180]")


def geodetic_to_ecef(g, earth=EarthModel()):
    """Geocentric Cartesian position (km) of a ground point."""
    lat = np.radians(g.lat_deg)
    lon = np.radians(g.lon_deg)
    return earth.r0 * np.array([np.cos(lat) * np.cos(lon),
                                np.cos(lat) * np.sin(lon),
                                np.sin(lat)])


def ecef_to_geodetic(x):
    """Latitude/longitude of the radial direction of ``x``."""
    x = np.asarray(x, dtype=float)
    lat = np.degrees(np.arctan2(x[2], np.hypot(x[0], x[1])))
    lon = np.degrees(np.arctan2(x[1], x[0]))
    return GeodeticCoord(float(lat), float(lon))


def _check_on_sphere(x, earth, name):
    dev = abs(np.linalg.norm(x) - earth.r0)
    if dev > SPHERE_TOL:
        raise DomainError(f"{name} is {dev:.3g} km off the Earth sphere")


def ground_distance(a, b, earth=EarthModel()):
    """Great-circle distance (km) between two ground points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_on_sphere(a, earth, "first point")
    _check_on_sphere(b, earth, "second point")
    # same angle as arccos(a.b / r0^2) but keeps full precision when the
    # points nearly coincide or are nearly antipodal
    return float(earth.r0 * np.arctan2(np.linalg.norm(np.cross(a, b)), a @ b))


def chord_from_ground_distance(d, earth=EarthModel()):
    """Straight-line distance between two ground points ``d`` km apart."""
    if not 0.0 <= d <= np.pi * earth.r0:
        raise DomainError(f"ground distance {d} outside [0, pi*r0]")
    return float(2.0 * earth.r0 * np.sin(d / (2.0 * earth.r0)))
