import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalpos.bending import (
    BendingError,
    PreconditionError,
    build_bending_profile,
    integrate_profile,
    is_controlled,
    kappa_sigma,
    normal_split,
    predicted_vertical_sff,
    sigma0_search,
    terminal_error_fixed,
    tube_chart,
    vertical_sff,
)
from scalpos.jetcalc import Sampling, evaluate_jet2, sample_points
from scalpos.rk import dopri
from scalpos.spherical_deform import product_polar_scene, round_polar_scene

ROOT_HALF = np.sqrt(0.5)


@pytest.fixture(scope="module")
def ode_profile():
    return integrate_profile(4, 0.1, 0.0, ROOT_HALF, ROOT_HALF)


@pytest.fixture(scope="module")
def spliced_k3():
    return build_bending_profile(3, 4 * np.pi, 0.5, 0.3 / (4 * np.pi))


def test_ode_profile_terminates_vertically(ode_profile):
    p = ode_profile
    bound = -np.pi * 0.1 / (2 * p.lam * ROOT_HALF)
    assert bound < p.R < 0
    assert abs(p.state[0, 2]) <= 1e-6
    assert abs(p.state[0, 3] - 1) <= 1e-6


def test_ode_profile_conserves_z(ode_profile):
    assert ode_profile.ode_drift <= 1e-8


def test_ode_profile_is_controlled(ode_profile):
    ok, info = is_controlled(ode_profile)
    assert ok, info
    assert np.abs(ode_profile.kappa + ode_profile.lam * ode_profile.sigma).max() <= 1e-8


@given(
    st.integers(3, 8),
    st.floats(0.05, 1.0),
    st.floats(0.1, 1.4),
)
@settings(max_examples=15, deadline=None)
def test_ode_profile_bound_holds(k, x, angle):
    p = integrate_profile(k, x, 0.0, np.cos(angle), np.sin(angle), nodes=64)
    assert -np.pi * x / (2 * p.lam * np.sin(angle)) < p.R < 0
    assert p.ode_drift <= 1e-8


def test_interpolated_curvature_matches_finite_differences(ode_profile):
    p = ode_profile
    s = np.linspace(0.9 * p.R, 0.1 * p.R, 40)
    h = 1e-5
    (a, a1, a2), (b, b1, b2) = p.evaluate(s)
    (_, a1p, _), (_, b1p, _) = p.evaluate(s + h)
    (_, a1m, _), (_, b1m, _) = p.evaluate(s - h)
    assert np.allclose((a1p - a1m) / (2 * h), a2, atol=1e-6)
    assert np.allclose((b1p - b1m) / (2 * h), b2, atol=1e-6)
    kap, sig = kappa_sigma(a, a1, b1, a2, b2)
    assert np.allclose(kap, -p.lam * sig, atol=1e-6)


def test_fixed_step_order(ode_profile):
    s_end = 0.5 * ode_profile.R
    rhs_ref = dopri(
        lambda s, y: np.array([y[2], y[3], 0.5 * y[3] ** 2 / y[0], -0.5 * y[2] * y[3] / y[0]]),
        0.0, [0.1, 0.0, ROOT_HALF, ROOT_HALF], s_end, rtol=1e-13, atol=1e-15,
    ).y_end
    e1 = terminal_error_fixed(4, 0.1, 0.0, ROOT_HALF, ROOT_HALF, s_end, 8, rhs_ref)
    e2 = terminal_error_fixed(4, 0.1, 0.0, ROOT_HALF, ROOT_HALF, s_end, 16, rhs_ref)
    assert np.log2(e1 / e2) >= 3


def test_integrate_profile_preconditions():
    with pytest.raises(PreconditionError):
        integrate_profile(2, 0.1, 0.0, ROOT_HALF, ROOT_HALF)
    with pytest.raises(PreconditionError):
        integrate_profile(3, -0.1, 0.0, ROOT_HALF, ROOT_HALF)
    with pytest.raises(PreconditionError):
        integrate_profile(3, 0.1, 0.0, 0.6, 0.6)


def test_kappa_sigma_singular_at_axis():
    with pytest.raises(BendingError):
        kappa_sigma(np.array([0.0]), 1.0, 0.0, 0.0, 0.0)


def test_spliced_profile_shape(spliced_k3):
    p = spliced_k3
    tau, rho2 = 4 * np.pi, 0.3 / (4 * np.pi)
    ok, info = is_controlled(p)
    assert ok, info
    assert p.extent <= 2 * 0.5
    # circle of radius 1/tau near 0, continued analytically beyond it
    s = np.array([-1e-4, 0.0, 1e-3])
    (a, _, _), (b, _, _) = p.evaluate(s)
    th = tau * (rho2 + s)
    assert np.allclose(a, np.sin(th) / tau, atol=1e-13)
    assert np.allclose(b, (1 - np.cos(th)) / tau, atol=1e-13)
    # vertical line near and below R
    s_hi, a_r, b_r = p.vertical
    s = np.array([p.R - 0.01, p.R, 0.5 * (p.R + s_hi)])
    (a, a1, _), (b, b1, _) = p.evaluate(s)
    assert np.allclose(a, a_r) and np.allclose(a1, 0) and np.allclose(b1, 1)
    assert abs(p.meta["terminal_a_prime"]) <= 1e-9


def test_spliced_profile_preconditions():
    with pytest.raises(PreconditionError):
        build_bending_profile(3, 1.0, 0.5, 0.1)
    with pytest.raises(PreconditionError):
        build_bending_profile(3, 4 * np.pi, 0.5, 1.0)


def test_profile_csv_columns(spliced_k3, tmp_path):
    path = tmp_path / "profile.csv"
    spliced_k3.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["s", "a", "b", "a_prime", "b_prime", "kappa", "sigma", "piece"]
    assert len(rows) == len(spliced_k3.s) + 1
    assert {r[-1] for r in rows[1:]} == {"vertical", "splice", "ode", "circle"}


@pytest.mark.parametrize(
    "scene",
    [round_polar_scene(4, 1, 7), product_polar_scene(1, 3)],
    ids=["round", "product"],
)
def test_vertical_sff_and_normal_split(scene):
    prof = integrate_profile(3, 0.1, 0.0, np.cos(0.8), np.sin(0.8))
    chart = tube_chart(scene, prof)
    pts = sample_points(chart, Sampling(count=20, seed=2))
    jet = evaluate_jet2(chart, pts)
    for i, u in enumerate(pts):
        pred = predicted_vertical_sff(scene, prof, u)
        assert np.abs(vertical_sff(jet, i, scene.d) - pred).max() <= 1e-6
        top, perp = normal_split(scene, prof, u)
        assert abs(top**2 + perp**2 - 1) <= 1e-10
        assert perp >= 0.5


def test_sigma0_search_k3():
    res = sigma0_search(round_polar_scene(4, 1, 7), 3, samples=1500)
    assert res.sigma0 >= 1.0
    assert all(row[3] > 0 and row[4] >= 0.5 for row in res.table[-12:])
    assert res.fit[0] > 0


def test_sigma0_search_rejects_low_codimension():
    with pytest.raises(PreconditionError):
        sigma0_search(round_polar_scene(4, 2, 7), 2)
