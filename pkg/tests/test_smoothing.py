import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import make_smoothing_spline

from aerosurrogate.smoothing import select_penalty, smooth


def test_linear_series_reproduced():
    t = np.arange(50.0)
    y = 3.0 - 0.25 * t
    s = smooth(t, y)
    assert np.allclose(s(t), y, atol=1e-9)
    assert np.allclose(s.derivative(t + 0.3), -0.25, atol=1e-9)


def test_constant_series_zero_derivative():
    t = np.arange(30.0)
    s = smooth(t, np.full(30, 7.5))
    assert np.allclose(s.derivative(t), 0.0, atol=1e-12)


def test_noisy_sine_derivative():
    rng = np.random.default_rng(3)
    t = np.arange(0.0, 600.0)
    clean = np.sin(0.01 * t)
    truth = 0.01 * np.cos(0.01 * t)
    noisy = smooth(t, clean + rng.normal(0, 0.01, t.size))
    exact = smooth(t, clean, noisy.lam)
    err_noisy = np.sqrt(np.mean((noisy.derivative(t) - truth) ** 2))
    err_exact = np.sqrt(np.mean((exact.derivative(t) - truth) ** 2))
    assert err_noisy < 10 * max(err_exact, 1e-6)
    assert err_noisy < 1e-3


def test_agrees_with_scipy_fixed_penalty():
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 100, 80))
    y = np.sin(t / 10) + rng.normal(0, 0.1, t.size)
    ours = smooth(t, y, 5.0)
    ref = make_smoothing_spline(t, y, lam=5.0)
    assert np.allclose(ours(t), ref(t), atol=1e-8)
    assert np.allclose(ours.derivative(t), ref.derivative()(t), atol=1e-7)


def test_gcv_penalty_close_to_scipy():
    rng = np.random.default_rng(1)
    t = np.arange(200.0)
    y = np.cos(t / 20) + rng.normal(0, 0.05, t.size)
    ours = smooth(t, y)
    ref = make_smoothing_spline(t, y)
    assert np.sqrt(np.mean((ours(t) - ref(t)) ** 2)) < 0.01


def test_rms_cap():
    rng = np.random.default_rng(2)
    t = np.arange(100.0)
    y = rng.normal(0, 1, t.size)
    s = smooth(t, y, rms_cap=2.0)
    assert s.residual_rms <= 2.0
    with pytest.raises(ValueError, match="exceeds cap"):
        smooth(t, y, rms_cap=0.2)


def test_errors():
    with pytest.raises(ValueError):
        smooth(np.arange(3.0), np.zeros(3))
    with pytest.raises(ValueError):
        smooth(np.array([0.0, 1.0, 1.0, 2.0]), np.zeros(4))


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-1, 1), st.floats(-0.01, 0.01), st.floats(1e-3, 1e4))
def test_quadratic_derivative_consistent(a, b, c, lam):
    # any penalty: the derivative of the fit must match finite differences of the fit
    t = np.arange(40.0)
    s = smooth(t, a + b * t + c * t * t, lam)
    h = 1e-4
    fd = (s(t[1:-1] + h) - s(t[1:-1] - h)) / (2 * h)
    assert np.allclose(s.derivative(t[1:-1]), fd, atol=1e-6 * (1 + abs(b) + abs(c) * 80))


def test_penalty_selection_is_deterministic():
    rng = np.random.default_rng(4)
    t = np.arange(120.0)
    y = np.sin(t / 15) + rng.normal(0, 0.1, t.size)
    assert select_penalty(t, y) == select_penalty(t, y)
