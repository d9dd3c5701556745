"""Ready-made deployments."""
import numpy as np

from .estimation import Scenario
from .geo import EarthModel, GeodeticCoord, geodetic_to_ecef
from .ionosphere import IonosphereProfile

#: Source and sensor sites (lat, lon in degrees) of the European test layout.
FREIBURG = GeodeticCoord(48.00, 7.84)
SENSOR_SITES = {
    "Berlin": GeodeticCoord(52.52, 13.41),
    "Paris": GeodeticCoord(48.86, 2.35),
    "Cambridge": GeodeticCoord(52.20, 0.12),
    "Vienna": GeodeticCoord(48.21, 16.37),
    "Amsterdam": GeodeticCoord(52.37, 4.90),
}
#: Reference takeoff angles (degrees) of the sensor rays from the source.
REFERENCE_TAKEOFF_DEG = (33.77, 57.14, 29.09, 34.17, 42.57)
DEFAULT_PROFILE = IonosphereProfile(r_b=6550.0, r_m=6650.0, f=11.0, f_c=10.0)


def european_scenario(noise_std_m=10.0, n_sensors=5, profile=DEFAULT_PROFILE,
                      earth=EarthModel()):
    """Freiburg source observed from the first ``n_sensors`` sites.

    ``noise_std_m`` is a scalar or per-sensor sequence in metres.
    """
    sites = list(SENSOR_SITES.values())[:n_sensors]
    sensors = np.array([geodetic_to_ecef(s, earth) for s in sites])
    sigma = np.broadcast_to(np.asarray(noise_std_m, dtype=float), (n_sensors,)) * 1e-3
    return Scenario(sensors, sigma, profile, earth, geodetic_to_ecef(FREIBURG, earth))
