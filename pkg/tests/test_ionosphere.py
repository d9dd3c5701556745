import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ray_by_quadrature
from qptdoa.errors import (ModelDomainError, OutOfCoverageError, RayPenetratesError,
                           SkipZoneError)
from qptdoa.geo import GeodeticCoord, geodetic_to_ecef, ground_distance
from qptdoa.ionosphere import (IonosphereProfile, branch_limits, group_path_chord_gap,
                               limit_angle, penetration_angle, profile_summary,
                               qp_coefficients, ray_derivatives, skip_distance,
                               snell_gamma, solve_takeoff_angle, trace_ray,
                               zero_angle_distance)
from qptdoa.scenarios import FREIBURG, REFERENCE_TAKEOFF_DEG, SENSOR_SITES

P = IonosphereProfile()
BETA_U = limit_angle(P)
branch = st.floats(0.01, BETA_U - 0.01)


def test_profile_validation():
    with pytest.raises(ModelDomainError):
        IonosphereProfile(r_b=6650, r_m=6550)
    with pytest.raises(ModelDomainError):
        IonosphereProfile(f=9.0)
    with pytest.raises(ModelDomainError):
        IonosphereProfile(r_b=6300, r_m=6400).packed()
    assert P.y_m == 100.0 and P.F == pytest.approx(1.1)


def test_coefficients_at_zero_angle():
    # 40-digit evaluation of the three closed forms
    c = qp_coefficients(P, 0.0)
    assert c.A == pytest.approx(3545.8347107438016529, rel=1e-14)
    assert c.B == pytest.approx(-47157293.388429752066, rel=1e-14)
    assert c.C == pytest.approx(156757410875.52892562, rel=1e-12)


def test_coefficients_vertical_and_invariance():
    c = qp_coefficients(P, math.pi / 2)
    assert c.C == pytest.approx((P.r_b * P.r_m / (P.F * P.y_m)) ** 2, rel=1e-15)
    c2 = qp_coefficients(P, 0.7)
    assert (c.A, c.B) == (c2.A, c2.B)


@given(st.floats(0, math.pi / 2), st.floats(0, math.pi / 2))
def test_c_increasing(b1, b2):
    if b1 < b2:
        assert qp_coefficients(P, b1).C <= qp_coefficients(P, b2).C


def test_snell_gamma():
    assert snell_gamma(P, math.pi / 2) == pytest.approx(math.pi / 2, abs=1e-7)
    assert snell_gamma(P, 0.0) == pytest.approx(math.acos(6371 / 6550), rel=1e-15)
    assert snell_gamma(P, math.radians(33.77)) == pytest.approx(0.62909844280777412028,
                                                               rel=1e-14)


def test_ray_at_03_matches_quadrature_oracle():
    # ray integrals by 40-digit adaptive quadrature (tests/oracles.py)
    ray = trace_ray(P, 0.3)
    assert ray.ground_distance == pytest.approx(1085.9503887645142, rel=1e-11)
    assert ray.group_path == pytest.approx(1170.3224288724662, rel=1e-11)


@pytest.mark.parametrize("beta", [0.0, 0.15, 0.6, 0.9, 1.05, 1.1])
def test_ray_matches_quadrature(beta):
    d, p = ray_by_quadrature(6550, 6650, 11, 10, beta)
    ray = trace_ray(P, beta)
    assert ray.ground_distance == pytest.approx(d, rel=1e-9)
    assert ray.group_path == pytest.approx(p, rel=1e-9)


def test_berlin_angle_gives_berlin_distance():
    target = ground_distance(geodetic_to_ecef(FREIBURG), geodetic_to_ecef(SENSOR_SITES["Berlin"]))
    d = trace_ray(P, math.radians(33.77)).ground_distance
    # 0.005 deg of takeoff angle is worth about 1 km of ground range here
    assert d == pytest.approx(target, abs=1.0)


def test_domain_errors():
    pen = penetration_angle(P)
    with pytest.raises(RayPenetratesError):
        trace_ray(P, pen + 1e-3)
    with pytest.raises(ModelDomainError):
        trace_ray(P, -0.1)


def test_limit_angle_and_skip():
    assert math.degrees(BETA_U) == pytest.approx(60.43, abs=0.01)
    dd, _ = ray_derivatives(P, BETA_U)
    assert abs(dd) < 1e-6
    bu, dskip, dzero = branch_limits(P)
    assert dskip == pytest.approx(406.763620882829, rel=1e-9)  # quadrature oracle at beta_U
    assert dzero == pytest.approx(3040.270938577417, rel=1e-12)  # quadrature oracle at 0
    assert skip_distance(P) == dskip and zero_angle_distance(P) == dzero
    grid = np.linspace(0, BETA_U, 2001)
    assert min(trace_ray(P, b).ground_distance for b in grid) >= dskip - 1e-9


def test_limit_angle_grid_oracle_f25():
    # argmin of D over 1e6 uniform samples of [0, beta_pen), step 2.98e-7 rad
    q = IonosphereProfile(f=25.0)
    assert limit_angle(q) == pytest.approx(0.2389686701561737, abs=3e-7)


def test_penetration_angle():
    pen = penetration_angle(P)
    # 200-step bisection on B^2 - 4AC at 40 digits
    # the float discriminant cancels to ~1e-12 rad near the root
    assert pen == pytest.approx(1.1209458680018500256, abs=1e-10)
    c = qp_coefficients(P, pen)
    assert abs(c.B ** 2 - 4 * c.A * c.C) / c.B ** 2 < 1e-12
    assert pen > BETA_U
    # D grows without bound (logarithmically) towards the penetration angle
    ds = [trace_ray(P, pen - e).ground_distance for e in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert all(np.diff(ds) > 100.0)


def test_profile_summary():
    s = profile_summary(P)
    assert s["beta_u_deg"] == pytest.approx(60.43, abs=0.01)


def _central(beta, h):
    up, dn = trace_ray(P, beta + h), trace_ray(P, beta - h)
    return ((up.ground_distance - dn.ground_distance) / (2 * h),
            (up.group_path - dn.group_path) / (2 * h))


def test_derivatives_finite_difference_at_04():
    dd, dp = ray_derivatives(P, 0.4)
    fd, fp = _central(0.4, 1e-6)
    assert dd == pytest.approx(fd, rel=1e-5)
    assert dp == pytest.approx(fp, rel=1e-5)


@pytest.mark.parametrize("beta", [0.05, 0.2, 0.7, 0.8, 0.95, 1.0])
def test_derivatives_finite_difference(beta):
    dd, dp = ray_derivatives(P, beta)
    fd, fp = _central(beta, 1e-5)
    # dP'/dbeta changes sign near 0.8 rad, hence the absolute floor
    assert dd == pytest.approx(fd, rel=1e-5, abs=1e-4)
    assert dp == pytest.approx(fp, rel=1e-5, abs=1e-4)


@given(branch)
def test_d_decreasing_on_branch(beta):
    assert ray_derivatives(P, beta)[0] < 0


@given(branch, branch)
def test_d_strictly_decreasing(b1, b2):
    if b1 < b2:
        assert trace_ray(P, b1).ground_distance > trace_ray(P, b2).ground_distance


@given(st.floats(0.01, BETA_U - 0.01))
def test_takeoff_roundtrip(beta):
    d = trace_ray(P, beta).ground_distance
    assert solve_takeoff_angle(P, d) == pytest.approx(beta, abs=1e-9)


@given(st.floats(0.0, math.pi / 2 * 0.7))
def test_group_path_not_shorter_than_chord(beta):
    if beta < penetration_angle(P):
        assert group_path_chord_gap(P, beta) > 0


def test_reference_takeoff_angles():
    src = geodetic_to_ecef(FREIBURG)
    for site, ref in zip(SENSOR_SITES.values(), REFERENCE_TAKEOFF_DEG):
        d = ground_distance(src, geodetic_to_ecef(site))
        assert math.degrees(solve_takeoff_angle(P, d)) == pytest.approx(ref, abs=0.01)


def test_takeoff_boundaries():
    bu, dskip, dzero = branch_limits(P)
    assert solve_takeoff_angle(P, dskip) == pytest.approx(bu, abs=1e-9)
    assert solve_takeoff_angle(P, dzero) == pytest.approx(0.0, abs=1e-9)
    d05 = trace_ray(P, 0.5).ground_distance
    assert solve_takeoff_angle(P, d05) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(SkipZoneError):
        solve_takeoff_angle(P, dskip - 1.0)
    with pytest.raises(OutOfCoverageError):
        solve_takeoff_angle(P, dzero + 1.0)
