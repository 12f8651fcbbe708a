"""Noise schedule and mixing weight tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tileshift.schedule import (
    NoiseSchedule,
    denoise_update,
    fixed_ratio_weights,
    mix,
    predict_clean,
    weights_at,
)


@pytest.mark.parametrize("kind", ["linear", "cosine"])
@pytest.mark.parametrize("steps", [15, 50, 1000])
def test_alpha_bar_monotone_and_spanning(kind, steps):
    s = NoiseSchedule.of_kind(kind, steps)
    ab = s.alpha_bar
    assert ab.shape == (steps,)
    assert np.all(np.diff(ab) < 0)  # strictly decreasing with t
    assert ab[0] > 0.99  # near-clean at t=0
    assert ab[-1] < 0.05  # near-pure-noise at the last step


def test_subsampling_agrees_with_base_schedule():
    full = NoiseSchedule.linear(1000)
    short = NoiseSchedule.linear(15)
    idx = (np.arange(15) * 1000) // 15
    assert np.array_equal(short.alpha_bar, full.alpha_bar[idx])


def test_betas_recover_alpha_bar():
    s = NoiseSchedule.linear(50)
    ab = np.cumprod(1.0 - s.betas)
    assert np.allclose(ab, s.alpha_bar, rtol=1e-12)


@pytest.mark.parametrize("kind", ["linear", "cosine"])
def test_weight_energy_preserved(kind):
    s = NoiseSchedule.of_kind(kind, 15)
    for t in range(15):
        w = weights_at(s, t)
        assert w.w_image**2 + w.w_noise**2 == pytest.approx(1.0, abs=1e-12)
        assert 0.0 <= w.w_image <= 1.0


def test_weights_step_bounds():
    s = NoiseSchedule.linear(10)
    with pytest.raises(IndexError):
        weights_at(s, 10)
    with pytest.raises(IndexError):
        weights_at(s, -1)


def test_fixed_ratio_weights_amplitude_ratio():
    s = NoiseSchedule.linear(50)
    for ratio in (0.01, 0.02, 0.04):
        w = fixed_ratio_weights(ratio, s)
        assert w.w_image / (w.w_image + w.w_noise) == pytest.approx(ratio, abs=1e-12)
    with pytest.raises(ValueError):
        fixed_ratio_weights(0.0, s)
    with pytest.raises(ValueError):
        fixed_ratio_weights(1.0, s)


def test_mix_blends_and_checks_shape():
    a = np.ones((4, 4, 1), np.float32)
    n = np.zeros((4, 4, 1), np.float32)
    s = NoiseSchedule.linear(10)
    w = weights_at(s, 0)
    out = mix(a, n, w)
    assert out.dtype == np.float32
    assert np.allclose(out, w.w_image, atol=1e-6)
    with pytest.raises(ValueError):
        mix(a, np.zeros((2, 2, 1), np.float32), w)


def test_predict_clean_inverts_noising():
    rng = np.random.default_rng(0)
    x0 = rng.random((6, 6, 3)).astype(np.float32)
    eps = rng.standard_normal((6, 6, 3)).astype(np.float32)
    ab = 0.37
    x_t = np.float32(np.sqrt(ab)) * x0 + np.float32(np.sqrt(1 - ab)) * eps
    back = predict_clean(x_t, eps, ab)
    assert np.allclose(back, x0, atol=1e-5)


def test_denoise_update_final_step_is_clean_estimate():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 5, 1)).astype(np.float32)
    eps = rng.standard_normal((5, 5, 1)).astype(np.float32)
    out = denoise_update(x, eps, 0.4, 1.0)
    assert np.allclose(out, predict_clean(x, eps, 0.4), atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.01, 0.99),
    st.floats(0.01, 0.99),
    st.randoms(use_true_random=False),
)
def test_denoise_update_consistency_property(ab_t, ab_prev, rnd):
    # the update re-noises the clean estimate to the previous level exactly
    rng = np.random.default_rng(rnd.getrandbits(32))
    x = rng.standard_normal((3, 3, 1)).astype(np.float32)
    eps = rng.standard_normal((3, 3, 1)).astype(np.float32)
    out = denoise_update(x, eps, ab_t, ab_prev)
    x0 = predict_clean(x, eps, ab_t)
    expect = np.sqrt(ab_prev, dtype=np.float32) * x0 + np.sqrt(
        1 - ab_prev, dtype=np.float32
    ) * eps
    assert np.allclose(out, expect, atol=1e-5)


def test_invalid_schedules_rejected():
    with pytest.raises(ValueError):
        NoiseSchedule.linear(0)
    with pytest.raises(ValueError):
        NoiseSchedule.linear(2000)
    with pytest.raises(ValueError):
        NoiseSchedule.of_kind("quadratic", 10)
