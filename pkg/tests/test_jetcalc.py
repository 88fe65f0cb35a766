import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalpos.jetcalc import (
    DomainError,
    ImmersionChart,
    ImmersionFailure,
    NumericError,
    Sampling,
    clifford_torus_chart,
    curvature_at,
    dilated,
    evaluate_jet2,
    flat_plane_chart,
    frame_and_metric,
    intrinsic_scalar_oracle,
    moved,
    perturbed_sphere_chart,
    polynomial_chart,
    round_sphere_chart,
    sample_points,
    scan_scalar_positivity,
)


def _random_rotation(dim, rng):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("radius", [1.0, 2.5])
def test_round_sphere_scal(n, radius):
    chart = round_sphere_chart(n, radius)
    pts = sample_points(chart, Sampling(count=50, seed=n))
    _, _, cs = curvature_at(chart, pts)
    assert np.allclose(cs.scal, n * (n - 1) / radius**2, atol=1e-10)
    assert np.allclose(np.linalg.norm(cs.mean_curvature, axis=1), n / radius, atol=1e-10)


def test_flat_and_torus_are_flat():
    for chart in (flat_plane_chart(), clifford_torus_chart()):
        pts = sample_points(chart, Sampling(count=30, seed=1))
        _, _, cs = curvature_at(chart, pts)
        assert np.abs(cs.scal).max() < 1e-12


def test_flat_plane_has_no_mean_curvature_direction():
    chart = flat_plane_chart()
    _, _, cs = curvature_at(chart, np.array([[0.1, 0.2]]))
    assert not cs.xi_defined[0]


@pytest.mark.parametrize("seed", range(3))
def test_gauss_matches_intrinsic_oracle(seed):
    chart = perturbed_sphere_chart(2 + seed % 2, seed)
    pts = sample_points(chart, Sampling(count=4, seed=seed, margin=0.1))
    _, _, cs = curvature_at(chart, pts)
    ref = intrinsic_scalar_oracle(chart, pts)
    assert np.allclose(cs.scal, ref, rtol=1e-4, atol=1e-4)


def test_fd_scheme_agrees_with_dual():
    chart = polynomial_chart(3, 5, 3, seed=4)
    pts = sample_points(chart, Sampling(count=5, seed=2, margin=0.1))
    a = evaluate_jet2(chart, pts, "dual")
    b = evaluate_jet2(chart, pts, "fd")
    assert np.allclose(a.jacobian, b.jacobian, atol=1e-9)
    assert np.allclose(a.hessian, b.hessian, atol=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.3, 3.0))
def test_scal_invariant_under_motion_and_scales_under_dilation(seed, c):
    rng = np.random.default_rng(seed)
    chart = polynomial_chart(2, 4, 3, seed=seed % 7)
    pts = sample_points(chart, Sampling(count=3, seed=seed, margin=0.2))
    base = curvature_at(chart, pts)[2].scal
    mv = moved(chart, _random_rotation(4, rng), rng.normal(size=4))
    assert np.allclose(curvature_at(mv, pts)[2].scal, base, rtol=1e-8, atol=1e-8)
    assert np.allclose(curvature_at(dilated(chart, c), pts)[2].scal, base / c**2, rtol=1e-8, atol=1e-8)


def test_domain_error():
    with pytest.raises(DomainError):
        evaluate_jet2(round_sphere_chart(2), np.array([[10.0, 0.0]]))


def test_rank_loss_is_reported():
    chart = ImmersionChart(2, 3, (-1, -1), (1, 1), lambda u: [u[0] ** 3, u[1], 0.0])
    jet = evaluate_jet2(chart, np.array([[0.0, 0.3]]))
    with pytest.raises(ImmersionFailure) as err:
        frame_and_metric(jet)
    assert err.value.singular_value < 1e-10


def test_non_finite_values_raise():
    chart = ImmersionChart(2, 3, (-1, -1), (1, 1), lambda u: [u[0], u[1], np.log(u[0])])
    with pytest.raises(NumericError), np.errstate(invalid="ignore"):
        evaluate_jet2(chart, np.array([[-0.5, 0.1]]))


def test_scan_is_deterministic_and_merge_is_associative():
    chart = perturbed_sphere_chart(2, 0)
    a = scan_scalar_positivity(chart, Sampling(count=3000, seed=5), chunk=700)
    b = scan_scalar_positivity(chart, Sampling(count=3000, seed=5), chunk=3000, threads=2)
    assert a.as_dict() == b.as_dict()
    assert a.count == 3000
    assert scan_scalar_positivity(round_sphere_chart(3), Sampling(count=500, seed=1)).positive


def test_scan_flags_non_positive_and_margin():
    rep = scan_scalar_positivity(clifford_torus_chart(), Sampling(count=200, seed=0))
    assert not rep.positive
    assert abs(rep.min_scal) < 1e-10
    sq = ImmersionChart(2, 3, (-1, -1), (1, 1), lambda u: [u[0] ** 3, u[1], u[0] ** 2 + u[1] ** 2])
    rep = scan_scalar_positivity(sq, np.array([[0.0, 0.2], [0.5, 0.2]]))
    assert rep.margin_failures == 1
