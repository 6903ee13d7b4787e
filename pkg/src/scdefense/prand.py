"""Counter-based randomness shared by the float and quantized defender paths.

Every random draw is a pure function of (seed, step, unit), so a stream can be
replayed from any point and a second engine (see the qinfer deployment engine)
can reproduce the exact same masks without sharing RNG state.
"""

from __future__ import annotations

import math

import numpy as np

_M64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(z: int) -> int:
    """One SplitMix64 scramble of a 64-bit integer."""
    z = (z + _GAMMA) & _M64
    z = ((z ^ (z >> 30)) * _MIX1) & _M64
    z = ((z ^ (z >> 27)) * _MIX2) & _M64
    return z ^ (z >> 31)


def counter_u64(seed: int, step: int, unit: int) -> int:
    """64-bit hash of the (seed, step, unit) counter triple."""
    h = splitmix64(seed & _M64)
    h = splitmix64(h ^ (step & _M64))
    return splitmix64(h ^ (unit & _M64))


def counter_uniform(seed: int, step: int, unit: int) -> float:
    """Uniform float64 in [0, 1) from the counter triple."""
    return (counter_u64(seed, step, unit) >> 11) * (1.0 / (1 << 53))


def _splitmix64_np(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def uniform_grid(seed: int, steps: int, units: int) -> np.ndarray:
    """Vectorized counter_uniform over a (steps, units) grid; bit-identical to the scalar path."""
    h0 = np.uint64(splitmix64(seed & _M64))
    step_ix = np.arange(steps, dtype=np.uint64)[:, None]
    unit_ix = np.arange(units, dtype=np.uint64)[None, :]
    h = _splitmix64_np(h0 ^ step_ix)
    h = _splitmix64_np(h ^ unit_ix)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def dropout_mask(seed: int, steps: int, units: int, rate: float) -> np.ndarray:
    """Inverted-dropout mask grid: 0 with probability `rate`, else 1/(1-rate)."""
    if rate <= 0.0:
        return np.ones((steps, units), dtype=np.float64)
    u = uniform_grid(seed, steps, units)
    return np.where(u >= rate, 1.0 / (1.0 - rate), 0.0)


def dropout_keep(seed: int, step: int, unit: int, rate: float) -> bool:
    """Scalar companion of dropout_mask (used by the quantized streaming path)."""
    return counter_uniform(seed, step, unit) >= rate


def gaussian_grid(seed: int, steps: int, units: int) -> np.ndarray:
    """Standard-normal grid via Box-Muller on counter uniforms."""
    u1 = uniform_grid(seed, steps, 2 * units)[:, 0::2]
    u2 = uniform_grid(seed, steps, 2 * units)[:, 1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    return r * np.cos(2.0 * math.pi * u2)


def derive_seed(base: int, *path: int) -> int:
    """Derive an independent child seed from a base seed and an index path."""
    h = base & _M64
    for p in path:
        h = splitmix64(h ^ (p & _M64))
    return h
