"""Monte Carlo campaigns: seeded trials over a swept parameter, CSV reports.

Seeding is counter based.  For master seed ``m``, sweep position ``k`` and
trial ``t`` the trial seed is::

    trial_seed = SeedSequence(m, spawn_key=(k, t)).generate_state(1)[0]

and every random stream of that trial is
``default_rng(SeedSequence(trial_seed, spawn_key=(solver_id,)))`` with
``solver_id`` taken from :data:`STREAM_IDS` (0 is the measurement noise).
A trial therefore depends only on ``(m, k, t)``: campaigns can be split
into trial ranges, run in any order or in parallel, and still produce the
same rows.
"""
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import QpTdoaError, UsageError
from .estimation import simulate_measurements
from .evaluation import (TA_THRESHOLD_KM, crlb, data_selective_cgp, empirical_cdf,
                         inject_bias, max_ground_distance, mismatched_scenario,
                         perturb_profile, rmse_of_errors)
from .region import build_region
from .solvers import GpConfig, PsoConfig, cgp_solve, gpgd_baseline

STREAM_IDS = {"noise": 0, "gpgd": 1, "cgp": 2, "ds-cgp": 3}
SOLVERS = ("gpgd", "cgp", "ds-cgp")
SWEEPS = ("sigma", "n_sensors", "n_particles", "n_max", "gamma_div", "bias",
          "f_c", "r_b", "y_m")

TRIAL_FIELDS = ("sweep_value", "trial", "seed", "solver", "error_km", "objective",
                "gp_iterations", "pso_iterations", "status", "excluded")
SUMMARY_FIELDS = ("sweep_value", "solver", "rmse_km", "rge", "n_trials", "n_failed")
CDF_FIELDS = ("sweep_value", "solver", "error_km", "fraction")


@dataclass(frozen=True)
class CampaignSpec:
    """What to sweep and how many trials to run per sweep value.

    ``values`` are in the sweep's natural unit: metres for ``sigma``, km for
    ``bias``, ``r_b`` and ``y_m``, MHz for ``f_c``, plain counts for the
    rest.  Profile sweeps (``f_c``, ``r_b``, ``y_m``) give offsets from the
    nominal profile.  ``noise_pattern`` multiplies the base noise per sensor, so
    ``(10, 10, 10, 1, 1)`` with ``sigma = 20`` gives 200 m on the first three
    sensors and 20 m on the others.
    """

    sweep: str = "sigma"
    values: Tuple[float, ...] = (10.0, 40.0, 70.0, 100.0)
    n_trials: int = 100
    first_trial: int = 0
    solvers: Tuple[str, ...] = ("gpgd", "cgp")
    noise_m: float = 10.0
    noise_pattern: Optional[Tuple[float, ...]] = None
    bias_sensor: Optional[int] = None
    n_suspect: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise UsageError(f"unknown sweep {self.sweep!r}; choose from {', '.join(SWEEPS)}")
        if not self.values:
            raise UsageError("campaign needs at least one sweep value")
        if self.n_trials < 1 or self.first_trial < 0:
            raise UsageError("need n_trials >= 1 and first_trial >= 0")
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad or not self.solvers:
            raise UsageError(f"unknown solver(s) {bad}; choose from {', '.join(SOLVERS)}")
        if self.workers < 1:
            raise UsageError("workers must be at least 1")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "solvers", tuple(self.solvers))
        if self.noise_pattern is not None:
            object.__setattr__(self, "noise_pattern", tuple(self.noise_pattern))


@dataclass
class CampaignResult:
    rows: list
    summary: list
    cdf: list
    config: dict = field(default_factory=dict)


def trial_seed(master_seed, sweep_index, trial):
    ss = np.random.SeedSequence(master_seed, spawn_key=(sweep_index, trial))
    return int(ss.generate_state(1)[0])


def stream(seed, name):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_IDS[name],)))


@dataclass(frozen=True, eq=False)
class _Setup:
    """Everything one sweep value needs; shared read-only by its trials."""

    truth_scenario: object
    solve_scenario: object
    pso: PsoConfig
    gp: GpConfig
    bias_sensor: int
    bias_km: float
    n_suspect: int
    solvers: Tuple[str, ...]


def _noise(spec, n, sigma_m):
    pattern = np.ones(n) if spec.noise_pattern is None else np.asarray(spec.noise_pattern[:n])
    if pattern.size != n:
        raise UsageError(f"noise_pattern needs at least {n} entries")
    return pattern * sigma_m * 1e-3


def build_setup(scenario, spec, value, pso=PsoConfig(), gp=GpConfig()):
    """Truth and solving scenarios plus solver configs for one sweep value."""
    if scenario.true_source is None:
        raise UsageError("campaigns need a scenario with a true source")
    sc = scenario
    sigma_m = spec.noise_m
    bias = 0.0
    profile = None
    if spec.sweep == "sigma":
        sigma_m = float(value)
    elif spec.sweep == "n_sensors":
        n = int(value)
        if not 4 <= n <= scenario.n_sensors:
            raise UsageError(f"n_sensors must be in 4..{scenario.n_sensors}")
        sc = scenario.subset(range(n))
    elif spec.sweep == "n_particles":
        pso = replace(pso, n_particles=int(value))
    elif spec.sweep == "n_max":
        pso = replace(pso, max_iters=int(value))
    elif spec.sweep == "gamma_div":
        pso = replace(pso, gamma_div=float(value))
    elif spec.sweep == "bias":
        bias = float(value)
    else:
        profile = perturb_profile(scenario.profile, spec.sweep, float(value))
    sc = sc.with_noise(_noise(spec, sc.n_sensors, sigma_m))
    solve = sc if profile is None else mismatched_scenario(sc, profile)
    sensor = spec.bias_sensor if spec.bias_sensor is not None else sc.n_sensors
    if bias and not 2 <= sensor <= sc.n_sensors:
        raise UsageError(f"bias sensor must be in 2..{sc.n_sensors}")
    return _Setup(sc, solve, pso, gp, sensor, bias, spec.n_suspect, spec.solvers)


def _run_solver(name, setup, meas, region, rng):
    sc = setup.solve_scenario
    if name == "gpgd":
        return gpgd_baseline(sc, meas, region, setup.gp, rng)
    if name == "cgp":
        return cgp_solve(sc, meas, region, setup.pso, setup.gp, rng)
    return data_selective_cgp(sc, meas, region, setup.pso, setup.gp, setup.n_suspect, rng)


def run_trial(setup, sweep_value, seed, trial):
    """Rows (one per solver) for a single trial; failures become tagged rows."""
    truth = setup.truth_scenario.true_source
    rows = []
    try:
        meas = simulate_measurements(setup.truth_scenario, stream(seed, "noise"))
        if setup.bias_km:
            meas = inject_bias(meas, setup.bias_sensor, setup.bias_km)
        region = build_region(setup.solve_scenario)
    except QpTdoaError as exc:
        tag = f"failed:{type(exc).__name__}"
        return [_row(sweep_value, trial, seed, s, status=tag) for s in setup.solvers]
    for name in setup.solvers:
        try:
            res = _run_solver(name, setup, meas, region, stream(seed, name))
        except QpTdoaError as exc:
            rows.append(_row(sweep_value, trial, seed, name,
                             status=f"failed:{type(exc).__name__}"))
            continue
        excluded = " ".join(map(str, res.diagnostics.get("excluded", [])))
        rows.append(_row(sweep_value, trial, seed, name,
                         float(np.linalg.norm(res.estimate - truth)), res.objective_value,
                         res.gp_iterations, res.pso_iterations, "ok", excluded))
    return rows


def _row(value, trial, seed, solver, error=math.nan, objective=math.nan, gp_iters=0,
         pso_iters=0, status="ok", excluded=""):
    return {"sweep_value": value, "trial": trial, "seed": seed, "solver": solver,
            "error_km": error, "objective": objective, "gp_iterations": gp_iters,
            "pso_iterations": pso_iters, "status": status, "excluded": excluded}


def _task(args):
    setup, value, seed, trial = args
    return run_trial(setup, value, seed, trial)


def threshold_filter(rows, solver="gpgd", threshold_km=TA_THRESHOLD_KM):
    """Successful ``solver`` rows with error at most ``threshold_km``."""
    return [r for r in rows if r["solver"] == solver and r["status"] == "ok"
            and r["error_km"] <= threshold_km]


def _summarise(rows, value, solver, scenario):
    ok = [r["error_km"] for r in rows if r["status"] == "ok"]
    failed = len(rows) - len(ok)
    rmse = rmse_of_errors(ok) if ok else math.nan
    return {"sweep_value": value, "solver": solver, "rmse_km": rmse,
            "rge": rmse / max_ground_distance(scenario), "n_trials": len(rows),
            "n_failed": failed}


def summarise(rows, setups, spec):
    """Per-value and pooled (``sweep_value == "all"``) summary and CDF rows.

    Adds ``gpgd-ta`` (GPGD rows kept by :func:`threshold_filter`) when GPGD
    ran, and a ``crlb`` row per value whose pooled entry is the RMS of the
    per-value bounds.
    """
    summary, cdf = [], []
    groups = list(spec.solvers)
    if "gpgd" in groups:
        groups.insert(groups.index("gpgd") + 1, "gpgd-ta")
    pooled = {g: [] for g in groups}
    bounds = []
    for value, setup in zip(spec.values, setups):
        vrows = [r for r in rows if r["sweep_value"] == value]
        for g in groups:
            grows = threshold_filter(vrows) if g == "gpgd-ta" else \
                [r for r in vrows if r["solver"] == g]
            pooled[g].extend(grows)
            if grows:
                summary.append(_summarise(grows, value, g, setup.truth_scenario))
                cdf.extend(_cdf_rows(grows, value, g))
        try:
            bound = crlb(setup.truth_scenario)[1]
        except QpTdoaError:
            bound = math.nan
        bounds.append(bound)
        summary.append({"sweep_value": value, "solver": "crlb", "rmse_km": bound,
                        "rge": bound / max_ground_distance(setup.truth_scenario),
                        "n_trials": 0, "n_failed": 0})
    ref = setups[0].truth_scenario
    for g in groups:
        if pooled[g]:
            summary.append(_summarise(pooled[g], "all", g, ref))
            cdf.extend(_cdf_rows(pooled[g], "all", g))
    agg = float(math.sqrt(np.mean(np.square(bounds))))
    summary.append({"sweep_value": "all", "solver": "crlb", "rmse_km": agg,
                    "rge": agg / max_ground_distance(ref), "n_trials": 0, "n_failed": 0})
    return summary, cdf


def _cdf_rows(rows, value, solver):
    ok = [r["error_km"] for r in rows if r["status"] == "ok"]
    if not ok:
        return []
    return [{"sweep_value": value, "solver": solver, "error_km": e, "fraction": f}
            for e, f in empirical_cdf(ok)]


def config_snapshot(scenario, spec, master_seed, pso, gp):
    return {
        "master_seed": master_seed,
        "campaign": asdict(spec),
        "pso": asdict(pso),
        "gp": asdict(gp),
        "scenario": scenario_snapshot(scenario),
    }


def scenario_snapshot(scenario):
    return {
        "earth": asdict(scenario.earth),
        "profile": asdict(scenario.profile),
        "sensors_km": scenario.sensors.tolist(),
        "noise_std_km": scenario.noise_std.tolist(),
        "true_source_km": None if scenario.true_source is None
        else scenario.true_source.tolist(),
    }


def run_campaign(scenario, spec: CampaignSpec, master_seed: int, pso=PsoConfig(),
                 gp=GpConfig()):
    """Run trials ``first_trial .. first_trial + n_trials - 1`` for every sweep value."""
    setups = [build_setup(scenario, spec, v, pso, gp) for v in spec.values]
    tasks = []
    for k, (value, setup) in enumerate(zip(spec.values, setups)):
        for t in range(spec.first_trial, spec.first_trial + spec.n_trials):
            tasks.append((setup, value, trial_seed(master_seed, k, t), t))
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]
    summary, cdf = summarise(rows, setups, spec)
    return CampaignResult(rows, summary, cdf,
                          config_snapshot(scenario, spec, master_seed, pso, gp))


def fmt(v):
    """CSV cell text; floats get 12 significant digits."""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def csv_text(rows, fields: Sequence[str], header: dict):
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([fmt(r[f]) for f in fields])
    return buf.getvalue()


def read_csv(path):
    """Rows of a CSV written here, skipping ``#`` header lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_campaign(result, out_dir):
    """Write ``trials.csv``, ``summary.csv`` and ``cdf.csv``; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, rows, fields in (("trials", result.rows, TRIAL_FIELDS),
                               ("summary", result.summary, SUMMARY_FIELDS),
                               ("cdf", result.cdf, CDF_FIELDS)):
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(csv_text(rows, fields, result.config))
        paths[name] = path
    return paths
