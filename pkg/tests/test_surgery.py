import numpy as np
import pytest

from scalpos.jetcalc import curvature_at, evaluate_jet2
from scalpos.spherical_deform import _angle_box
from scalpos.surgery import (
    C0_TOL,
    C1_TOL,
    PreconditionError,
    ball_points,
    cap_map,
    disc_extension,
    disc_profile,
    outer_transition,
    round_sphere_scene,
    run_surgery,
)


@pytest.fixture(scope="module")
def flagship():
    return run_surgery(4, 1, 7, seed=0, samples=3000)


@pytest.mark.parametrize(
    "n,d,N,message",
    [
        (5, 3, 10, "codimension n - d >= 3 violated: n - d = 2"),
        (4, 1, 6, "N >= n + d + 2 violated: N = 6 < 7"),
    ],
)
def test_gating_names_the_inequality(n, d, N, message):
    with pytest.raises(PreconditionError, match=message.replace("+", r"\+")):
        round_sphere_scene(n, d, N)


def test_disc_profile_closes_onto_collar():
    disc = disc_profile()
    assert np.isclose(disc.r_turn, 0.5)
    assert np.isclose(disc.collar, 0.74)
    r = np.linspace(disc.collar, 1.2, 20)
    (p, p1, _), (h, h1, _) = disc.evaluate(r)
    assert np.allclose(p, 2 - r) and np.allclose(p1, -1)
    assert np.allclose(h, 0) and np.allclose(h1, 0)
    # C1 across the nodal part
    r = np.linspace(disc.r_turn - 0.01, disc.collar + 0.01, 400)
    (p, p1, _), (h, h1, _) = disc.evaluate(r)
    assert np.abs(np.diff(p)).max() < 0.02 and np.abs(np.diff(h)).max() < 0.02


def test_disc_extension_is_an_immersion():
    scene = round_sphere_scene(4, 1, 7)
    chart = disc_extension(scene)
    pts = ball_points(2, 0.9, 500, np.random.default_rng(0))
    jet = evaluate_jet2(chart, pts)
    sv = np.linalg.svd(jet.jacobian, compute_uv=False)
    assert sv[:, -1].min() > 1e-3


def test_cap_scal_on_flat_top():
    scene = round_sphere_scene(4, 1, 7)
    lam = 0.05
    chart = cap_map(scene, lam, 0.45)
    rng = np.random.default_rng(1)
    lo, hi = _angle_box(scene.k - 1)
    pts = np.hstack([ball_points(2, 0.4, 200, rng), np.array(lo) + (np.array(hi) - lo) * rng.random((200, 2))])
    _, _, cs = curvature_at(chart, pts)
    expected = (scene.k - 1) * (scene.k - 2) / lam**2
    assert np.allclose(cs.scal, expected, rtol=1e-3)


def test_outer_transition_lands_on_unit_circle():
    ot = outer_transition(4 * np.pi)
    assert ot.shoot_residual <= 1e-8
    s = np.linspace(ot.s_b, 1.4, 50)
    a, b = ot.ab(s)
    a0, b0 = np.asarray(a), np.asarray(b)
    assert np.allclose(a0**2 + (b0 - 1) ** 2, 1.0, atol=1e-9)


def test_flagship_passes(flagship):
    _, report = flagship
    rep = report.as_dict()
    assert rep["verdict"] == "pass", rep["reasons"]
    assert rep["global"]["min_scal"] > 0
    assert rep["global"]["min_mean_curvature"] > 0
    assert rep["unchanged_outside_residual"] == 0.0
    for seam in rep["seams"]:
        assert seam["c0_residual"] <= C0_TOL and seam["c1_residual"] <= C1_TOL
    assert set(rep["pieces"]) == {"outer", "tube", "handle", "far"}


def test_flagship_parameters(flagship):
    atlas, report = flagship
    p = atlas.params
    assert np.isclose(p.tau, 4 * np.pi)
    assert abs(p.b_R) < p.collar_eps
    assert p.lam == pytest.approx(atlas.profile.state[0, 0])


def test_sabotaged_scale_fails(flagship):
    atlas, _ = flagship
    _, report = run_surgery(4, 1, 7, samples=1000, sabotage_lambda=10 * atlas.params.lam)
    assert not report.verdict
    assert any("tube/handle" in r for r in report.reasons)


def test_points_in_s0_s5():
    _, report = run_surgery(3, 0, 5, samples=2000)
    assert report.verdict, report.reasons
    assert len(report.seams) == 4
