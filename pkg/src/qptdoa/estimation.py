"""TDOA measurement model and the maximum-likelihood objective.

Range differences are taken against the first sensor::

    r_i1 = P'_i - P'_1 + n_i - n_1,   i = 2..L

with independent per-sensor noise ``n_i ~ N(0, sigma_i**2)``.  Differencing
against the shared reference correlates the RDs, so their covariance is
``E diag(sigma**2) E^T`` rather than diagonal.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels as K
from .errors import (BoundarySingularityError, CoverageError, DomainError,
                     ModelDomainError, OutOfCoverageError, SkipZoneError,
                     UsageError)
from .geo import SPHERE_TOL, EarthModel, ground_distance
from .ionosphere import (IonosphereProfile, branch_limits, solve_takeoff_angle,
                         trace_ray)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Sensors (first one is the reference), optional truth and noise levels.

    ``sensors`` is an ``(L, 3)`` array of geocentric positions in km and
    ``noise_std`` holds the per-sensor standard deviations in km.
    """

    sensors: np.ndarray
    noise_std: np.ndarray
    profile: IonosphereProfile = field(default_factory=IonosphereProfile)
    earth: EarthModel = field(default_factory=EarthModel)
    true_source: Optional[np.ndarray] = None

    def __post_init__(self):
        sensors = np.array(self.sensors, dtype=float)
        sigma = np.array(self.noise_std, dtype=float).reshape(-1)
        if sensors.ndim != 2 or sensors.shape[1] != 3:
            raise DomainError("sensors must be an (L, 3) array")
        if sensors.shape[0] < 4:
            raise DomainError(f"need at least 4 sensors, got {sensors.shape[0]}")
        if sigma.shape != (sensors.shape[0],):
            raise DomainError("noise_std needs one entry per sensor")
        if np.any(sigma <= 0):
            raise DomainError("noise standard deviations must be positive")
        dev = np.abs(np.linalg.norm(sensors, axis=1) - self.earth.r0)
        if np.any(dev > SPHERE_TOL):
            raise DomainError(f"sensor {int(np.argmax(dev))} is off the Earth sphere")
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "noise_std", sigma)
        if self.true_source is not None:
            x = np.array(self.true_source, dtype=float)
            if abs(np.linalg.norm(x) - self.earth.r0) > SPHERE_TOL:
                raise DomainError("true source is off the Earth sphere")
            object.__setattr__(self, "true_source", x)
            takeoff_angles(self, x)  # raises if out of coverage

    @property
    def n_sensors(self):
        return self.sensors.shape[0]

    def subset(self, indices):
        """Scenario restricted to ``indices`` (order kept; the first is the reference)."""
        idx = list(indices)
        return Scenario(self.sensors[idx], self.noise_std[idx], self.profile,
                        self.earth, self.true_source)

    def with_profile(self, profile):
        return Scenario(self.sensors, self.noise_std, profile, self.earth,
                        self.true_source)

    def without_truth(self):
        """Copy with no true source, e.g. to solve under a mismatched profile."""
        return Scenario(self.sensors, self.noise_std, self.profile, self.earth, None)

    def with_noise(self, noise_std):
        return Scenario(self.sensors, noise_std, self.profile, self.earth,
                        self.true_source)


@dataclass(frozen=True, eq=False)
class TdoaMeasurements:
    """RD vector ``r`` (km) and its covariance ``sigma`` (km^2)."""

    r: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float).reshape(-1)
        s = np.array(self.sigma, dtype=float)
        if s.shape != (r.size, r.size):
            raise DomainError("covariance shape does not match the RD vector")
        if not np.allclose(s, s.T, rtol=1e-12, atol=0.0):
            raise DomainError("covariance must be symmetric")
        try:
            cho = cho_factor(s)
        except np.linalg.LinAlgError as exc:
            raise DomainError("covariance must be positive definite") from exc
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "sigma", s)
        w = cho_solve(cho, np.eye(r.size))
        object.__setattr__(self, "_weight", 0.5 * (w + w.T))

    @property
    def weight(self):
        """Inverse covariance, computed once from the Cholesky factor."""
        return self._weight


def differencing_matrix(n_sensors):
    """``E = [-1, I]`` mapping per-sensor values to differences against sensor 1."""
    return np.hstack([-np.ones((n_sensors - 1, 1)), np.eye(n_sensors - 1)])


def build_covariance(noise_std):
    sigma = np.asarray(noise_std, dtype=float).reshape(-1)
    if np.any(sigma <= 0):
        raise DomainError("noise standard deviations must be positive")
    e = differencing_matrix(sigma.size)
    return e @ np.diag(sigma ** 2) @ e.T


def takeoff_angles(scenario, x):
    """Low-angle takeoff angle of every sensor's ray for a source at ``x``."""
    out = np.empty(scenario.n_sensors)
    for i, xi in enumerate(scenario.sensors):
        d = ground_distance(xi, x, scenario.earth)
        try:
            out[i] = solve_takeoff_angle(scenario.profile, d, scenario.earth)
        except CoverageError as exc:
            raise type(exc)(f"sensor {i + 1}: {exc}", sensor=i) from None
    return out


def predict_group_paths(scenario, x):
    """Group path from a source at ``x`` to each sensor (km)."""
    betas = takeoff_angles(scenario, x)
    return np.array([trace_ray(scenario.profile, b, scenario.earth).group_path
                     for b in betas])


def simulate_measurements(scenario, rng, zero_noise=False):
    """Draw one RD vector for the scenario's true source.

    Per-sensor noise is drawn in sensor order with a single ``rng.normal``
    call, so a given generator state always yields the same vector.
    """
    if scenario.true_source is None:
        raise UsageError("simulation needs a scenario with a true source")
    paths = predict_group_paths(scenario, scenario.true_source)
    noise = rng.normal(size=scenario.n_sensors) * scenario.noise_std
    if zero_noise:
        noise = np.zeros_like(noise)
    e = differencing_matrix(scenario.n_sensors)
    return TdoaMeasurements(e @ (paths + noise), build_covariance(scenario.noise_std))


_STATUS_ERRORS = {
    K.SKIP_ZONE: SkipZoneError,
    K.OUT_OF_COVERAGE: OutOfCoverageError,
}


class MlObjective:
    """``g(x) = (r - E P'(x))^T Sigma^-1 (r - E P'(x))`` and its gradient.

    Holds the packed arrays the compiled evaluator needs; build once per
    (scenario, measurements) pair and reuse across iterations.  Points may
    sit slightly off the sphere: ground distances are taken from the dot
    product ``x_i . x = r0**2 cos(D_i / r0)``.
    """

    def __init__(self, scenario, meas):
        if meas.r.size != scenario.n_sensors - 1:
            raise UsageError("measurement vector length must be L - 1")
        self.scenario = scenario
        self.meas = meas
        self.prof = scenario.profile.packed(scenario.earth)
        self.beta_u, self.d_skip, self.d_zero = branch_limits(scenario.profile,
                                                               scenario.earth)
        self.sensors = np.ascontiguousarray(scenario.sensors)
        self.r = np.ascontiguousarray(meas.r)
        self.w = np.ascontiguousarray(meas.weight)

    def _eval(self, x, want_grad):
        x = np.ascontiguousarray(x, dtype=float)
        g, grad, st, bad = K.objective_gradient(self.prof, self.beta_u, self.d_skip,
                                                self.d_zero, self.sensors, self.r,
                                                self.w, x, want_grad)
        if st == K.OK:
            return g, grad
        if st in _STATUS_ERRORS:
            raise _STATUS_ERRORS[st](f"sensor {bad + 1} out of low-angle coverage",
                                     sensor=bad)
        if st == K.SINGULAR:
            raise BoundarySingularityError(f"dD/dbeta vanishes for sensor {bad + 1}")
        raise ModelDomainError(f"QP model failed for sensor {bad + 1}")

    def __call__(self, x):
        return self._eval(x, False)[0]

    def value_and_gradient(self, x):
        g, grad = self._eval(x, True)
        return g, grad.copy()

    def gradient(self, x):
        return self.value_and_gradient(x)[1]


def objective(scenario, meas, x):
    return MlObjective(scenario, meas)(x)


def gradient(scenario, meas, x):
    """Ambient (unprojected) gradient of the ML objective."""
    return MlObjective(scenario, meas).gradient(x)
