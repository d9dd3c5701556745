"""TOML scenario files.

Layout::

    [earth]
    r0 = 6371.0                 # km

    [ionosphere]
    r_b = 6550.0                # km
    r_m = 6650.0                # km
    f = 11.0                    # MHz
    f_c = 10.0                  # MHz

    [source]                    # optional, geodetic degrees
    lat = 48.00
    lon = 7.84

    [[sensors]]                 # first entry is the reference
    name = "Berlin"
    lat = 52.52
    lon = 13.41
    noise_std_m = 10.0          # metres

    [gp]                        # optional, GpConfig fields
    [pso]                       # optional, PsoConfig fields
    [campaign]                  # optional, CampaignSpec fields

Noise is given in metres and converted to km here, nowhere else.
"""
import re
import sys
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .campaign import CampaignSpec
from .errors import CoverageError, QpTdoaError, UsageError
from .estimation import Scenario
from .geo import EarthModel, GeodeticCoord, geodetic_to_ecef
from .ionosphere import IonosphereProfile
from .solvers import GpConfig, PsoConfig


class ScenarioFileError(UsageError):
    """Parse or validation problem, with the 1-based line number when known."""

    def __init__(self, msg, path=None, line=None):
        where = path or "<scenario>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {msg}")
        self.path = path
        self.line = line


@dataclass
class ScenarioFile:
    scenario: Scenario
    sensor_names: list
    gp: GpConfig
    pso: PsoConfig
    campaign: Optional[CampaignSpec]
    raw: dict


def _find_line(text, table=None, key=None, index=0):
    """Best-effort line of ``key`` inside the ``index``-th ``[table]``/``[[table]]``."""
    lines = text.splitlines()
    start = 0
    if table is not None:
        pat = re.compile(r"^\s*\[\[?\s*" + re.escape(table) + r"\s*\]\]?\s*(#.*)?$")
        hits = [i for i, ln in enumerate(lines) if pat.match(ln)]
        if len(hits) <= index:
            return None
        start = hits[index]
        if key is None:
            return start + 1
    if key is None:
        return None
    kpat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i in range(start + (table is not None), len(lines)):
        if table is not None and lines[i].lstrip().startswith("["):
            break
        if kpat.match(lines[i]):
            return i + 1
    return start + 1 if table is not None else None


def _config(cls, table, text, path, name):
    known = {f.name for f in fields(cls)}
    for k in table:
        if k not in known:
            raise ScenarioFileError(f"unknown key {k!r} in [{name}]", path,
                                    _find_line(text, name, k))
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        raise ScenarioFileError(f"[{name}]: {exc}", path, _find_line(text, name)) from None


def _geodetic(entry, text, path, table, index=0):
    try:
        return GeodeticCoord(float(entry["lat"]), float(entry["lon"]))
    except KeyError as exc:
        raise ScenarioFileError(f"missing {exc.args[0]!r} in [{table}]", path,
                                _find_line(text, table, index=index)) from None
    except (TypeError, ValueError) as exc:
        raise ScenarioFileError(str(exc), path, _find_line(text, table, "lat", index)) from None


def parse_scenario(text, path=None):
    """Parse scenario text into a :class:`ScenarioFile`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioFileError(str(exc), path, int(m.group(1)) if m else None) from None
    top = {"earth", "ionosphere", "source", "sensors", "gp", "pso", "campaign"}
    for k in raw:
        if k not in top:
            raise ScenarioFileError(f"unknown table {k!r}", path,
                                    _find_line(text, k) or _find_line(text, None, k))
    try:
        earth = EarthModel(**raw.get("earth", {}))
    except (TypeError, ValueError) as exc:
        raise ScenarioFileError(f"[earth]: {exc}", path, _find_line(text, "earth")) from None
    try:
        profile = IonosphereProfile(**raw.get("ionosphere", {}))
    except (TypeError, ValueError) as exc:
        raise ScenarioFileError(f"[ionosphere]: {exc}", path,
                                _find_line(text, "ionosphere")) from None

    sensors = raw.get("sensors", [])
    if len(sensors) < 4:
        raise ScenarioFileError(f"need at least 4 [[sensors]] entries, got {len(sensors)}",
                                path, _find_line(text, "sensors"))
    names, xs, sigma = [], [], []
    for i, s in enumerate(sensors):
        xs.append(geodetic_to_ecef(_geodetic(s, text, path, "sensors", i), earth))
        names.append(str(s.get("name", f"sensor{i + 1}")))
        noise = s.get("noise_std_m", 10.0)
        if not isinstance(noise, (int, float)) or noise <= 0:
            raise ScenarioFileError("noise_std_m must be a positive number", path,
                                    _find_line(text, "sensors", "noise_std_m", i))
        sigma.append(float(noise) * 1e-3)

    truth = None
    if "source" in raw:
        truth = geodetic_to_ecef(_geodetic(raw["source"], text, path, "source"), earth)
    try:
        scenario = Scenario(np.array(xs), np.array(sigma), profile, earth, truth)
    except CoverageError as exc:
        # keep the coverage class so callers can tell it from a malformed file
        line = _find_line(text, "source")
        raise type(exc)(f"{path or '<scenario>'}:{line}: {exc}", sensor=exc.sensor) from None
    except QpTdoaError as exc:
        raise ScenarioFileError(str(exc), path) from None

    gp = _config(GpConfig, raw.get("gp", {}), text, path, "gp")
    pso = _config(PsoConfig, raw.get("pso", {}), text, path, "pso")
    campaign = None
    if "campaign" in raw:
        campaign = _config(CampaignSpec, raw["campaign"], text, path, "campaign")
    return ScenarioFile(scenario, names, gp, pso, campaign, raw)


def load_scenario(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioFileError(exc.strerror or str(exc), str(path)) from None
    return parse_scenario(text, str(path))

