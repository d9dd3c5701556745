"""Command-line front end: ``simulate``, ``locate``, ``mc`` and ``crlb``.

Exit codes: 0 success, 2 invalid input, 3 coverage failure, 4 numerical
failure (including solver runs that did not converge).
"""
import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .campaign import (SOLVERS, SUMMARY_FIELDS, SWEEPS, CampaignSpec, csv_text,
                       fmt, read_csv, run_campaign, scenario_snapshot, write_campaign)
from .errors import (BoundarySingularityError, CoverageError, NumericalFailure,
                     QpTdoaError)
from .estimation import TdoaMeasurements, build_covariance, simulate_measurements
from .evaluation import crlb, data_selective_cgp
from .geo import GeodeticCoord, ecef_to_geodetic, geodetic_to_ecef
from .region import build_region, project_omega, sample_feasible
from .scenario_file import ScenarioFileError, load_scenario
from .solvers import cgp_solve, gp_solve, gpgd_baseline

EXIT_OK, EXIT_USAGE, EXIT_COVERAGE, EXIT_NUMERICAL = 0, 2, 3, 4
MEAS_FIELDS = ("sensor_index", "rd_km")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _names(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def sidecar_path(csv_path):
    return Path(csv_path).with_suffix(".json")


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args):
    sf = load_scenario(args.scenario)
    sc = sf.scenario
    if sc.true_source is None:
        raise ScenarioFileError("simulation needs a [source] table", args.scenario)
    rng = np.random.default_rng(args.seed)
    meas = simulate_measurements(sc, rng, zero_noise=args.zero_noise)
    header = {"command": "simulate", "seed": args.seed, "zero_noise": args.zero_noise,
              "scenario": scenario_snapshot(sc)}
    rows = [{"sensor_index": i + 2, "rd_km": r} for i, r in enumerate(meas.r)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text(rows, MEAS_FIELDS, header))
    side = {"seed": args.seed, "zero_noise": args.zero_noise,
            "sigma_km2": meas.sigma.tolist()}
    sidecar_path(out).write_text(json.dumps(side, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(rows)} RDs to {out} (covariance in {sidecar_path(out)})")
    return EXIT_OK


# -- locate -----------------------------------------------------------------

def read_measurements(path, scenario):
    """RDs from a ``simulate`` CSV; covariance from its sidecar, else from the scenario."""
    try:
        rows = read_csv(path)
        with open(path) as fh:
            n_comments = sum(ln.startswith("#") for ln in fh)
    except OSError as exc:
        raise ScenarioFileError(exc.strerror or str(exc), str(path)) from None
    n = scenario.n_sensors
    r = np.full(n - 1, np.nan)
    for line, row in enumerate(rows, start=n_comments + 2):
        try:
            idx = int(row["sensor_index"])
            val = float(row["rd_km"])
        except (KeyError, TypeError, ValueError):
            raise ScenarioFileError("expected columns sensor_index,rd_km", str(path), line) from None
        if not 2 <= idx <= n or not np.isnan(r[idx - 2]):
            raise ScenarioFileError(f"bad or repeated sensor_index {idx}", str(path), line)
        r[idx - 2] = val
    if np.any(np.isnan(r)):
        raise ScenarioFileError(f"need one RD for each sensor 2..{n}", str(path))
    side = sidecar_path(path)
    if side.exists():
        sigma = np.array(json.loads(side.read_text())["sigma_km2"], dtype=float)
    else:
        sigma = build_covariance(scenario.noise_std)
    return TdoaMeasurements(r, sigma)


def cmd_locate(args):
    sf = load_scenario(args.scenario)
    sc = sf.scenario.without_truth() if sf.scenario.true_source is not None else sf.scenario
    meas = read_measurements(args.measurements, sc)
    region = build_region(sc)
    rng = np.random.default_rng(args.seed)
    pso = replace(sf.pso, seed=args.seed)
    if args.solver == "gp":
        if args.start is not None:
            x0 = project_omega(region, geodetic_to_ecef(GeodeticCoord(*args.start), sc.earth))
        else:
            x0 = sample_feasible(region, rng)
        res = gp_solve(sc, meas, region, sf.gp, x0, rng)
    elif args.solver == "gpgd":
        res = gpgd_baseline(sc, meas, region, sf.gp, rng)
    elif args.solver == "cgp":
        res = cgp_solve(sc, meas, region, pso, sf.gp, rng)
    else:
        res = data_selective_cgp(sc, meas, region, pso, sf.gp, args.n_suspect, rng)
    geo = ecef_to_geodetic(res.estimate)
    print(f"solver           {args.solver}")
    print(f"latitude_deg     {fmt(geo.lat_deg)}")
    print(f"longitude_deg    {fmt(geo.lon_deg)}")
    print("ecef_km          " + " ".join(fmt(v) for v in res.estimate))
    print(f"objective        {fmt(res.objective_value)}")
    print(f"gp_iterations    {res.gp_iterations}")
    print(f"pso_iterations   {res.pso_iterations}")
    if "excluded" in res.diagnostics:
        print("excluded_sensors " + " ".join(map(str, res.diagnostics["excluded"])))
    truth = sf.scenario.true_source
    if truth is not None:
        print(f"error_km         {fmt(float(np.linalg.norm(res.estimate - truth)))}")
    if not res.converged:
        print("warning: iteration cap reached before convergence", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# -- mc ---------------------------------------------------------------------

def campaign_from_args(args, base):
    spec = base if base is not None else CampaignSpec()
    over = {}
    for name in ("sweep", "values", "n_trials", "first_trial", "solvers", "noise_m",
                 "noise_pattern", "bias_sensor", "n_suspect", "workers"):
        v = getattr(args, name)
        if v is not None:
            over[name] = v
    return replace(spec, **over)


def cmd_mc(args):
    sf = load_scenario(args.scenario)
    spec = campaign_from_args(args, sf.campaign)
    result = run_campaign(sf.scenario, spec, args.seed, sf.pso, sf.gp)
    paths = write_campaign(result, args.out_dir)
    print(" ".join(SUMMARY_FIELDS))
    for row in result.summary:
        print(" ".join(fmt(row[f]) for f in SUMMARY_FIELDS))
    failed = sum(r["status"] != "ok" for r in result.rows)
    if failed:
        print(f"{failed} trial rows failed (tagged in {paths['trials']})", file=sys.stderr)
    return EXIT_OK


# -- crlb -------------------------------------------------------------------

CRLB_FIELDS = ("sigma_m", "crlb_km", "status")


def cmd_crlb(args):
    sf = load_scenario(args.scenario)
    sc = sf.scenario
    if sc.true_source is None:
        raise ScenarioFileError("the bound needs a [source] table", args.scenario)
    if args.sensors is not None:
        sc = sc.subset([i - 1 for i in args.sensors])
    n = sc.n_sensors
    pattern = np.ones(n) if args.noise_pattern is None else np.asarray(args.noise_pattern[:n])
    if pattern.size != n:
        raise ScenarioFileError(f"noise pattern needs {n} entries", args.scenario)
    grid = [(fmt(s), pattern * s * 1e-3) for s in args.sigmas] if args.sigmas else \
        [("scenario", sc.noise_std)]
    rows, bounds = [], []
    for label, sigma in grid:
        try:
            bound = crlb(sc.with_noise(sigma))[1]
            status = "ok"
        except QpTdoaError as exc:
            bound, status = math.nan, f"failed:{type(exc).__name__}"
        bounds.append(bound)
        rows.append({"sigma_m": label, "crlb_km": bound, "status": status})
    good = [b for b in bounds if not math.isnan(b)]
    agg = math.sqrt(np.mean(np.square(good))) if good else math.nan
    rows.append({"sigma_m": "rms", "crlb_km": agg, "status": "ok" if good else "failed"})
    header = {"command": "crlb", "sigmas_m": list(args.sigmas or []),
              "noise_pattern": pattern.tolist(), "scenario": scenario_snapshot(sc)}
    text = csv_text(rows, CRLB_FIELDS, header)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="qptdoa",
                                description="HF TDOA source localization over a QP ionosphere.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw one seeded RD vector for the scenario's source")
    s.add_argument("scenario")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="CSV path; the covariance goes to <out>.json")
    s.add_argument("--zero-noise", action="store_true", help="emit noise-free RDs")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("locate", help="estimate the source from an RD file")
    s.add_argument("scenario")
    s.add_argument("measurements")
    s.add_argument("--solver", choices=("gp", "gpgd", "cgp", "ds-cgp"), default="cgp")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-suspect", type=int, default=1, help="sensors dropped by ds-cgp")
    s.add_argument("--start", type=_floats, default=None, metavar="LAT,LON",
                   help="starting point for --solver gp (default: random feasible)")
    s.set_defaults(func=cmd_locate)

    s = sub.add_parser("mc", help="Monte Carlo campaign; writes trials/summary/cdf CSVs")
    s.add_argument("scenario")
    s.add_argument("--seed", type=int, default=0, help="master seed")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--sweep", choices=SWEEPS)
    s.add_argument("--values", type=_floats)
    s.add_argument("--n-trials", type=int)
    s.add_argument("--first-trial", type=int)
    s.add_argument("--solvers", type=_names, help=f"subset of {','.join(SOLVERS)}")
    s.add_argument("--noise-m", type=float, help="base noise (m) when not sweeping sigma")
    s.add_argument("--noise-pattern", type=_floats, help="per-sensor noise multipliers")
    s.add_argument("--bias-sensor", type=int, help="sensor number receiving the bias")
    s.add_argument("--n-suspect", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("crlb", help="position bound per noise level and their RMS")
    s.add_argument("scenario")
    s.add_argument("--sigmas", type=_floats, help="noise levels in metres")
    s.add_argument("--noise-pattern", type=_floats)
    s.add_argument("--sensors", type=_ints, help="sensor numbers to keep, e.g. 1,2,3,4")
    s.add_argument("--out")
    s.set_defaults(func=cmd_crlb)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CoverageError as exc:
        print(f"coverage error: {exc}", file=sys.stderr)
        return EXIT_COVERAGE
    except (NumericalFailure, BoundarySingularityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (QpTdoaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
