import numpy as np
import pytest

from scalpos.rk import IntegrationError, dopri, dopri_fixed


def _osc(t, y):
    return np.array([y[1], -y[0]])


def test_harmonic_oscillator_end_and_dense_output():
    tr = dopri(_osc, 0.0, [1.0, 0.0], 10.0)
    assert np.allclose(tr.y_end, [np.cos(10), -np.sin(10)], atol=1e-10)
    for s in np.linspace(0.1, 9.9, 17):
        assert np.allclose(tr.at(s), [np.cos(s), -np.sin(s)], atol=1e-10)
        assert np.allclose(tr.hermite(s), [np.cos(s), -np.sin(s)], atol=1e-6)


def test_backward_integration():
    tr = dopri(_osc, 0.0, [1.0, 0.0], -3.0)
    assert np.allclose(tr.y_end, [np.cos(3.0), np.sin(3.0)], atol=1e-10)


def test_event_location():
    tr = dopri(_osc, 0.0, [1.0, 0.0], 5.0, event=lambda t, y: y[0])
    assert abs(tr.event_t - np.pi / 2) < 1e-12
    assert abs(tr.event_y[0]) < 1e-12


def test_fixed_step_fifth_order():
    ref = np.array([np.cos(2.0), -np.sin(2.0)])
    errs = [np.linalg.norm(dopri_fixed(_osc, 0.0, [1.0, 0.0], 2.0, n) - ref) for n in (8, 16, 32)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 4.5)


def test_blowup_raises():
    with pytest.raises(IntegrationError):
        dopri(lambda t, y: y**2, 0.0, [1.0], 2.0, max_steps=2000)
