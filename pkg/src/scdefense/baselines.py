"""Non-ML obfuscators used as comparison points.

Gaussian and Gaussian-Sinusoid draw randomized target curves and only raise the
signal toward them (latencies cannot be reduced); Padding-to-Constant raises
every latency to at least a fixed constant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .defender import Perturbation
from .traces import Channel, Signal


class MaskKind(enum.Enum):
    GAUSSIAN = "gaussian"
    GAUSS_SINE = "gauss_sine"
    PAD_CONSTANT = "pad_constant"


@dataclass(frozen=True)
class MaskParams:
    kind: MaskKind
    mean: float = 0.0
    sigma: float = 0.0
    # GaussSine: amplitude ~ N(amp_mean, amp_sigma), period ~ U[period_lo, period_hi],
    # offset ~ N(offset_mean, offset_sigma), phase ~ U[0, 2pi); redrawn at each period boundary
    amp_mean: float = 0.0
    amp_sigma: float = 0.0
    period_lo: int = 8
    period_hi: int = 32
    offset_mean: float = 0.0
    offset_sigma: float = 0.0
    constant_c: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0 or self.amp_sigma < 0 or self.offset_sigma < 0:
            raise ValueError("distribution sigmas must be >= 0")
        if self.period_lo < 2 or self.period_hi < self.period_lo:
            raise ValueError("period range must satisfy 2 <= lo <= hi")
        if self.constant_c < 0:
            raise ValueError("constant_c must be >= 0")


def _target_to_perturbation(target: np.ndarray, x: Signal, channel: Channel) -> Perturbation:
    # latency can only be added; power can be pushed both ways
    if channel is Channel.MEMORY:
        return Perturbation(np.maximum(0.0, np.rint(target - x.samples)))
    return Perturbation(target - x.samples)


def gaussian_target(params: MaskParams, length: int, seed: int | None = None) -> np.ndarray:
    rng = np.random.default_rng(params.seed if seed is None else seed)
    return rng.normal(params.mean, params.sigma, size=length)


def gauss_sine_target(params: MaskParams, length: int, seed: int | None = None) -> np.ndarray:
    """Sinusoid target with amplitude/period/offset/phase redrawn at each period boundary."""
    rng = np.random.default_rng(params.seed if seed is None else seed)
    target = np.empty(length)
    t = 0
    while t < length:
        amp = rng.normal(params.amp_mean, params.amp_sigma)
        period = int(rng.integers(params.period_lo, params.period_hi + 1))
        offset = rng.normal(params.offset_mean, params.offset_sigma)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        n = min(period, length - t)
        ts = np.arange(t, t + n)
        target[t : t + n] = offset + amp * np.sin(2.0 * np.pi * ts / period + phase)
        t += n
    return target


def gaussian_mask_run(params: MaskParams, x: Signal, channel: Channel = Channel.MEMORY,
                      seed: int | None = None) -> Perturbation:
    return _target_to_perturbation(gaussian_target(params, len(x.samples), seed), x, channel)


def gauss_sine_mask_run(params: MaskParams, x: Signal, channel: Channel = Channel.MEMORY,
                        seed: int | None = None) -> Perturbation:
    return _target_to_perturbation(gauss_sine_target(params, len(x.samples), seed), x, channel)


def pad_to_constant_run(c: float, x: Signal) -> Perturbation:
    """p_t = max(0, C - x_t); memory channel only."""
    if c < 0:
        raise ValueError("constant must be >= 0")
    return Perturbation(np.maximum(0.0, np.rint(c - x.samples)))
