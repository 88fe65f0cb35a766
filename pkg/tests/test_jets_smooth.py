import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalpos.jets import apply_scalar, seed, value_of, where
from scalpos.smooth import even_cos, even_sinc, even_versin, smoothstep, smoothstep_derivs, sphere_point


def _fd(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h), (f(x + h) - 2 * f(x) + f(x - h)) / h**2


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(-1.5, 1.5))
def test_jet_chain_rule_matches_fd(x, y):
    def f(u, v):
        return np.sin(u * v) + np.exp(0.3 * u) / (1.5 + v * v) - u**3

    jx, jy = seed(np.array([[x, y]]))
    out = f(jx, jy)
    h = 1e-5
    gx = (f(x + h, y) - f(x - h, y)) / (2 * h)
    gy = (f(x, y + h) - f(x, y - h)) / (2 * h)
    hxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4 * h * h)
    assert np.allclose(out.grad[0], [gx, gy], atol=1e-7)
    assert np.isclose(out.hess[0, 0, 1], hxy, atol=1e-4)
    assert np.allclose(out.hess[0], out.hess[0].T)


def test_apply_scalar_and_where():
    (jx,) = seed(np.array([[0.5], [2.0]]))
    y = apply_scalar(jx, np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([5.0, 6.0]))
    assert np.allclose(y.grad[:, 0], [3.0, 4.0])
    w = where(np.array([True, False]), jx, 2 * jx)
    assert np.allclose(value_of(w), [0.5, 4.0])
    assert apply_scalar(0.3, 1.0, 2.0, 3.0) == 1.0


@pytest.mark.parametrize("r", [0.0, 1e-6, 0.3, 2.0, 8.9, 9.1, 40.0])
def test_even_functions_closed_forms(r):
    s = np.sqrt(r)
    assert np.isclose(value_of(even_cos(np.array([r])))[0], np.cos(s), atol=1e-14)
    assert np.isclose(value_of(even_sinc(np.array([r])))[0], np.sinc(s / np.pi), atol=1e-14)
    vers = (1 - np.cos(s)) / r if r > 0 else 0.5
    assert np.isclose(value_of(even_versin(np.array([r])))[0], vers, atol=1e-14)


@pytest.mark.parametrize("fn", [even_cos, even_sinc, even_versin])
@pytest.mark.parametrize("r", [0.01, 1.0, 8.99, 9.01, 20.0])
def test_even_function_derivatives(fn, r):
    (jr,) = seed(np.array([[r]]))
    out = fn(jr)
    d1, d2 = _fd(lambda x: value_of(fn(np.array([x])))[0], r, 1e-4)
    assert np.isclose(out.grad[0, 0], d1, rtol=1e-6, atol=1e-9)
    assert np.isclose(out.hess[0, 0, 0], d2, rtol=1e-4, atol=1e-6)


def test_smoothstep_flat_ends_and_symmetry():
    x = np.linspace(0, 1, 101)
    f0, f1, f2, f3 = smoothstep_derivs(x)
    assert f0[0] == 0 and f0[-1] == 1
    for g in (f1, f2, f3):
        assert abs(g[0]) < 1e-14 and abs(g[-1]) < 1e-12
    assert np.allclose(f0 + f0[::-1], 1.0, atol=1e-14)
    assert np.allclose(smoothstep(x), f0)
    assert np.all(np.diff(f0) >= 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=0, max_size=4))
def test_sphere_point_is_unit(angles):
    p = np.array(sphere_point([np.array([a]) for a in angles]), dtype=float).ravel()
    assert len(p) == len(angles) + 1
    assert np.isclose(np.linalg.norm(p), 1.0, atol=1e-14)
