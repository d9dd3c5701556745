import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import project_by_enumeration
from qptdoa.errors import DomainError, EmptyRegionError
from qptdoa.estimation import Scenario
from qptdoa.geo import EarthModel, GeodeticCoord, geodetic_to_ecef
from qptdoa.region import (FeasibleRegion, alternating_projection, build_region,
                           hildreth_dual, is_feasible, polytope_violation, project_omega,
                           project_polytope, project_sphere, sample_feasible)

R0 = 6371.0
# ray ranges of the default layer from the quadrature oracle
D_ZERO = 3040.270938577417
D_SKIP = 406.763620882829

vec3 = arrays(np.float64, 3, elements=st.floats(-2e4, 2e4))


def polytope(a, b):
    n = a.shape[0]
    return FeasibleRegion(EarthModel(), np.asarray(a, float), np.asarray(b, float), 0.0,
                          np.zeros(n), np.zeros(n))


def random_instance(rng):
    m = int(rng.integers(3, 11))
    a = rng.normal(size=(m, 3)) * rng.uniform(0.1, 10, size=(m, 1))
    z = rng.normal(size=3)
    b = a @ z + rng.uniform(0.0, 2.0, size=m)
    x = z + rng.normal(size=3) * rng.uniform(0.5, 10)
    return a, b, x


def test_bounds_match_direct_evaluation(scenario, region):
    n = scenario.n_sensors
    np.testing.assert_allclose(region.b[:n], -R0 ** 2 * math.cos(D_ZERO / R0), rtol=1e-11)
    np.testing.assert_allclose(region.b[n:], R0 ** 2 * math.cos(D_SKIP / R0), rtol=1e-11)
    np.testing.assert_array_equal(region.A[:n], -scenario.sensors)
    np.testing.assert_array_equal(region.A[n:], scenario.sensors)


def test_truth_inside(scenario, region):
    assert np.all(region.A @ scenario.true_source <= region.b)
    assert is_feasible(region, scenario.true_source)
    assert not is_feasible(region, np.zeros(3))


def test_skip_zone_point_violates_upper_row(scenario, region):
    s0 = scenario.sensors[0] / R0
    t = np.cross(s0, [0.0, 0.0, 1.0])
    t /= np.linalg.norm(t)
    x = R0 * (math.cos(300.0 / R0) * s0 + math.sin(300.0 / R0) * t)
    n = scenario.n_sensors
    assert (region.A @ x - region.b)[n] > 0


def test_boundary_point_feasible(scenario, region):
    # a point on the skip circle of sensor 1, placed towards the source
    s0 = scenario.sensors[0] / R0
    t = scenario.true_source - (scenario.true_source @ s0) * s0
    t /= np.linalg.norm(t)
    ang = region.skip_distance[0] / R0
    x = R0 * (math.cos(ang) * s0 + math.sin(ang) * t)
    assert is_feasible(region, x, tol=1e-6)


def test_project_sphere():
    y = np.array([2 * R0, 0.0, 0.0])
    np.testing.assert_allclose(project_sphere(y), y / 2)
    s = project_sphere(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(project_sphere(s), s, rtol=1e-15)
    with pytest.raises(DomainError):
        project_sphere(np.zeros(3))


def test_project_sphere_sampled_optimality(rng):
    y = rng.normal(size=3) * 5000
    p = project_sphere(y)
    s = rng.normal(size=(10_000, 3))
    s = R0 * s / np.linalg.norm(s, axis=1, keepdims=True)
    assert np.all(np.linalg.norm(p - y) <= np.linalg.norm(s - y, axis=1) + 1e-9)


def test_polytope_interior_and_single_halfspace():
    a = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [-1.0, -1.0, -1.0]])
    b = np.array([1.0, 1.0, 1.0, 10.0])
    reg = polytope(a, b)
    x = np.array([0.2, -0.3, 0.1])
    np.testing.assert_array_equal(project_polytope(reg, x), x)
    x = np.array([3.0, 0.0, 0.5])
    expect = x - ((a[0] @ x - b[0]) / (a[0] @ a[0])) * a[0]
    np.testing.assert_allclose(project_polytope(reg, x), expect, atol=1e-12)


def test_hildreth_matches_enumeration():
    rng = np.random.default_rng(2718)
    worst = 0.0
    for _ in range(500):
        a, b, x = random_instance(rng)
        y = project_polytope(polytope(a, b), x)
        ref = project_by_enumeration(a, b, x)
        worst = max(worst, np.linalg.norm(y - ref))
    assert worst < 1e-7


def test_hildreth_matches_enumeration_on_region(region):
    rng = np.random.default_rng(31)
    for _ in range(100):
        x = region.sensors.mean(axis=0) + rng.normal(size=3) * 2000
        y = project_polytope(region, x)
        ref = project_by_enumeration(region.A, region.b, x)
        assert np.linalg.norm(y - ref) < 1e-7


def test_kkt_residual(region):
    rng = np.random.default_rng(5)
    rows, b = region.unit_rows
    for _ in range(50):
        x = region.sensors.mean(axis=0) + rng.normal(size=3) * 3000
        y, lam, _ = hildreth_dual(region, x)
        assert np.all(lam >= 0)
        assert np.linalg.norm(y - x + rows.T @ lam) < 1e-8
        assert np.max(rows @ y - b) < 1e-8
        # complementarity: rows carrying a multiplier are tight
        assert np.all(np.abs((rows @ y - b)[lam > 0]) < 1e-8)


@given(vec3, vec3)
def test_polytope_projection_idempotent_nonexpansive(region, x, y):
    base = region.sensors.mean(axis=0)
    px = project_polytope(region, base + x)
    py = project_polytope(region, base + y)
    np.testing.assert_allclose(project_polytope(region, px), px, atol=1e-7)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-7


def test_alternating_projection(scenario, region, rng):
    x = scenario.true_source
    np.testing.assert_allclose(alternating_projection(region, x), x, atol=1e-9)
    for _ in range(20):
        y = x + rng.normal(size=3) * 300
        viols = []
        for n in (1, 2, 5, 20):
            out, v = alternating_projection(region, y, passes=n, return_violation=True)
            assert abs(np.linalg.norm(out) - R0) < 1e-9
            viols.append(v)
        assert all(b <= a + 1e-12 * abs(a) for a, b in zip(viols, viols[1:]))
    with pytest.raises(DomainError):
        alternating_projection(region, x, passes=0)


@pytest.mark.parametrize("passes", [1, 5, 20])
def test_alternating_projection_rate_at_skip_circle(scenario, region, passes):
    # Near the skip circle of a sensor at angle t, the slab normal makes an
    # angle t with the sphere normal, so each pass keeps cos(t)**2 of the gap.
    s0 = scenario.sensors[0] / R0
    t = scenario.true_source - (scenario.true_source @ s0) * s0
    t /= np.linalg.norm(t)
    ang_skip = D_SKIP / R0
    ang = ang_skip - 1e-3 / R0
    x = R0 * (math.cos(ang) * s0 + math.sin(ang) * t)
    out = alternating_projection(region, x, passes=passes)
    gap = ang_skip - math.acos(out @ s0 / R0)
    np.testing.assert_allclose(gap / (1e-3 / R0), math.cos(ang_skip) ** (2 * passes), rtol=1e-3)


def test_project_omega_always_feasible(region, rng):
    for _ in range(200):
        y = region.sensors.mean(axis=0) * 0.9 + rng.normal(size=3) * 1500
        assert is_feasible(region, project_omega(region, y))


def test_sample_feasible(region):
    a = sample_feasible(region, np.random.default_rng(1))
    b = sample_feasible(region, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)
    rng = np.random.default_rng(2)
    pts = np.array([sample_feasible(region, rng) for _ in range(1000)])
    assert all(is_feasible(region, p) for p in pts)
    assert len(np.unique(pts, axis=0)) == 1000
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    assert d.mean() > 100.0  # spread over hundreds of km, not a cluster


def test_empty_region():
    sites = [(0, 0), (0, 90), (0, 180), (0, -90)]
    sc = Scenario(np.array([geodetic_to_ecef(GeodeticCoord(*s)) for s in sites]),
                  np.full(4, 0.01))
    reg = build_region(sc)
    with pytest.raises(EmptyRegionError):
        sample_feasible(reg, np.random.default_rng(0))
    assert polytope_violation(reg, sc.sensors[0]) > 0
