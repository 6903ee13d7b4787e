"""Mask baselines: target curves, perturbation signs, and the padding endpoint."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scdefense.baselines import (
    MaskKind,
    MaskParams,
    gauss_sine_mask_run,
    gauss_sine_target,
    gaussian_mask_run,
    gaussian_target,
    pad_to_constant_run,
)
from scdefense.traces import Channel, Signal


def _sig(vals):
    return Signal(np.asarray(vals, dtype=float), 0)


def test_mask_params_validation():
    with pytest.raises(ValueError):
        MaskParams(MaskKind.GAUSSIAN, sigma=-1.0)
    with pytest.raises(ValueError):
        MaskParams(MaskKind.GAUSS_SINE, period_lo=1)
    with pytest.raises(ValueError):
        MaskParams(MaskKind.GAUSS_SINE, period_lo=16, period_hi=8)
    with pytest.raises(ValueError):
        MaskParams(MaskKind.PAD_CONSTANT, constant_c=-5.0)


def test_gaussian_target_moments():
    params = MaskParams(MaskKind.GAUSSIAN, mean=120.0, sigma=10.0, seed=3)
    t = gaussian_target(params, 20000)
    assert abs(t.mean() - 120.0) < 0.5
    assert abs(t.std() - 10.0) < 0.5


def test_gaussian_target_seed_override():
    params = MaskParams(MaskKind.GAUSSIAN, mean=0.0, sigma=1.0, seed=3)
    assert (gaussian_target(params, 50) == gaussian_target(params, 50)).all()
    assert (gaussian_target(params, 50) != gaussian_target(params, 50, seed=4)).any()


def test_gauss_sine_target_stays_within_envelope():
    params = MaskParams(MaskKind.GAUSS_SINE, amp_mean=20.0, amp_sigma=0.0,
                        period_lo=8, period_hi=16, offset_mean=100.0, offset_sigma=0.0, seed=1)
    t = gauss_sine_target(params, 500)
    assert t.shape == (500,)
    assert (t >= 80.0 - 1e-9).all() and (t <= 120.0 + 1e-9).all()


def test_gauss_sine_redraws_per_period():
    # with a wide amplitude distribution, segment extrema should differ
    params = MaskParams(MaskKind.GAUSS_SINE, amp_mean=20.0, amp_sigma=10.0,
                        period_lo=8, period_hi=8, offset_mean=0.0, seed=2)
    t = gauss_sine_target(params, 64)
    seg_max = [np.abs(t[8 * j : 8 * (j + 1)]).max() for j in range(8)]
    assert len(set(np.round(seg_max, 6))) > 1


def test_memory_mask_is_nonnegative_integer():
    x = _sig([100, 150, 90, 200])
    params = MaskParams(MaskKind.GAUSSIAN, mean=120.0, sigma=30.0, seed=5)
    p = gaussian_mask_run(params, x, Channel.MEMORY)
    assert (p.values >= 0).all()
    assert (p.values == np.rint(p.values)).all()


def test_power_mask_is_signed():
    x = _sig([50.0, 10.0, 90.0])
    params = MaskParams(MaskKind.GAUSS_SINE, amp_mean=5.0, offset_mean=48.0, seed=7)
    p = gauss_sine_mask_run(params, x, Channel.POWER)
    t = gauss_sine_target(params, 3)
    assert np.allclose(p.values, t - x.samples)  # exact target tracking, both signs
    assert (p.values < 0).any()


def test_pad_to_constant_values():
    x = _sig([100, 150, 90, 200])
    p = pad_to_constant_run(120.0, x)
    assert p.values.tolist() == [20.0, 0.0, 30.0, 0.0]
    with pytest.raises(ValueError):
        pad_to_constant_run(-1.0, x)


@given(st.floats(min_value=0.0, max_value=500.0),
       st.lists(st.integers(0, 400), min_size=1, max_size=50))
@settings(max_examples=100, deadline=None)
def test_pad_to_constant_reaches_constant(c, vals):
    x = _sig(vals)
    out = x.samples + pad_to_constant_run(c, x).values
    assert (out >= np.floor(c) - 0.5).all()       # everything raised to ~C
    assert (out >= x.samples).all()               # never lowered
    untouched = x.samples >= c
    assert (out[untouched] == x.samples[untouched]).all()
