import json
import math

import numpy as np
import pytest

from qptdoa import campaign as C
from qptdoa.campaign import (CampaignSpec, build_setup, csv_text, read_csv, run_campaign,
                             threshold_filter, trial_seed, write_campaign)
from qptdoa.errors import NumericalFailure, UsageError
from qptdoa.evaluation import crlb

SMALL = dict(values=(10.0, 40.0), solvers=("gpgd", "cgp"))


def test_spec_validation():
    with pytest.raises(UsageError):
        CampaignSpec(sweep="colour")
    with pytest.raises(UsageError):
        CampaignSpec(values=())
    with pytest.raises(UsageError):
        CampaignSpec(n_trials=0)
    with pytest.raises(UsageError):
        CampaignSpec(solvers=("newton",))


def test_trial_seed_is_counter_based():
    a = trial_seed(7, 0, 3)
    assert a == trial_seed(7, 0, 3)
    assert len({trial_seed(7, k, t) for k in range(3) for t in range(50)}) == 150
    assert trial_seed(8, 0, 3) != a


def test_split_run_matches_whole(scenario):
    whole = run_campaign(scenario, CampaignSpec(n_trials=6, **SMALL), 99)
    first = run_campaign(scenario, CampaignSpec(n_trials=3, **SMALL), 99)
    second = run_campaign(scenario, CampaignSpec(n_trials=3, first_trial=3, **SMALL), 99)
    key = lambda r: (r["sweep_value"], r["trial"], r["solver"])  # noqa: E731
    union = sorted(first.rows + second.rows, key=key)
    assert union == sorted(whole.rows, key=key)


def test_parallel_matches_serial(scenario):
    spec = CampaignSpec(n_trials=2, values=(10.0,), solvers=("gpgd",))
    serial = run_campaign(scenario, spec, 5)
    par = run_campaign(scenario, CampaignSpec(n_trials=2, values=(10.0,), solvers=("gpgd",),
                                              workers=2), 5)
    assert serial.rows == par.rows


def test_single_trial_summary(scenario):
    res = run_campaign(scenario, CampaignSpec(n_trials=1, values=(10.0,), solvers=("cgp",)), 1)
    (row,) = res.rows
    summ = {(s["sweep_value"], s["solver"]): s for s in res.summary}
    assert summ[(10.0, "cgp")]["rmse_km"] == pytest.approx(row["error_km"], rel=1e-15)
    assert summ[("all", "cgp")]["rmse_km"] == pytest.approx(row["error_km"], rel=1e-15)
    assert summ[(10.0, "crlb")]["rmse_km"] == crlb(scenario)[1]


def test_summary_groups(scenario):
    res = run_campaign(scenario, CampaignSpec(n_trials=4, **SMALL), 3)
    solvers = {(s["sweep_value"], s["solver"]) for s in res.summary}
    for v in (10.0, 40.0, "all"):
        for g in ("gpgd", "cgp", "crlb"):
            assert (v, g) in solvers
    ta = threshold_filter(res.rows)
    assert all(r["error_km"] <= 20.0 for r in ta)
    bounds = [s["rmse_km"] for s in res.summary if s["solver"] == "crlb"]
    assert bounds[-1] == pytest.approx(math.sqrt((bounds[0] ** 2 + bounds[1] ** 2) / 2))
    assert bounds[1] == pytest.approx(4 * bounds[0])
    fr = [c["fraction"] for c in res.cdf if c["sweep_value"] == "all" and c["solver"] == "cgp"]
    assert fr == sorted(fr) and fr[-1] == 1.0


def test_failures_are_tagged(scenario, monkeypatch):
    real = C._run_solver

    def flaky(name, setup, meas, region, rng):
        if name == "gpgd":
            raise NumericalFailure("forced")
        return real(name, setup, meas, region, rng)

    monkeypatch.setattr(C, "_run_solver", flaky)
    res = run_campaign(scenario, CampaignSpec(n_trials=2, values=(10.0,)), 0)
    assert len(res.rows) == 4
    tags = {r["status"] for r in res.rows if r["solver"] == "gpgd"}
    assert tags == {"failed:NumericalFailure"}
    summ = {(s["sweep_value"], s["solver"]): s for s in res.summary}
    assert summ[(10.0, "gpgd")]["n_failed"] == 2
    assert math.isnan(summ[(10.0, "gpgd")]["rmse_km"])


def test_csv_bytes_identical(scenario, tmp_path):
    spec = CampaignSpec(n_trials=2, values=(10.0,), solvers=("gpgd", "cgp"))
    a = write_campaign(run_campaign(scenario, spec, 42), tmp_path / "a")
    b = write_campaign(run_campaign(scenario, spec, 42), tmp_path / "b")
    for name in ("trials", "summary", "cdf"):
        assert open(a[name], "rb").read() == open(b[name], "rb").read()
    header = open(a["trials"]).readline()
    cfg = json.loads(header[2:])
    assert cfg["master_seed"] == 42 and cfg["campaign"]["n_trials"] == 2
    rows = read_csv(a["trials"])
    assert [r["solver"] for r in rows] == ["gpgd", "cgp", "gpgd", "cgp"]


def test_float_format():
    text = csv_text([{"x": 1 / 3, "n": 2}], ("x", "n"), {})
    assert text.splitlines()[2] == "0.333333333333,2"


def test_setups(scenario):
    spec = CampaignSpec(sweep="n_sensors", values=(4,))
    assert build_setup(scenario, spec, 4).truth_scenario.n_sensors == 4
    with pytest.raises(UsageError):
        build_setup(scenario, spec, 3)
    pat = CampaignSpec(noise_pattern=(10, 10, 10, 1, 1))
    s = build_setup(scenario, pat, 20.0)
    np.testing.assert_allclose(s.truth_scenario.noise_std, [0.2, 0.2, 0.2, 0.02, 0.02])
    fc = build_setup(scenario, CampaignSpec(sweep="f_c", values=(0.1,)), 0.1)
    assert fc.solve_scenario.profile.f_c == pytest.approx(scenario.profile.f_c + 0.1)
    assert fc.truth_scenario.profile == scenario.profile
    bias = build_setup(scenario, CampaignSpec(sweep="bias", values=(2.0,)), 2.0)
    assert bias.bias_sensor == 5 and bias.bias_km == 2.0
    with pytest.raises(UsageError):
        build_setup(scenario.without_truth(), CampaignSpec(), 10.0)
