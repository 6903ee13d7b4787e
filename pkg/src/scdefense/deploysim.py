"""Deployment-side simulations and the weight-bundle interchange format.

The memory-controller simulation injects quantized-defender stalls with one
independent recurrent state per core. The power plant is a first-order
tracking model standing in for a robust power controller: it can raise power
toward a target but can never push below the application's own draw, which is
exactly the failure mode that leaks under long-range masks.

The weight bundle is a self-describing UTF-8 text document with a trailing
CRC32 so a second engine can audit and reproduce the model bit for bit.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import prand
from .baselines import MaskKind, MaskParams, gauss_sine_target, gaussian_target
from .compressor import (
    QuantizedDefender,
    QuantizedState,
    quantized_run,
    quantized_step,
)
from .defender import Defender, DefenderState, defender_step
from .traces import Channel, Signal

BUNDLE_VERSION = 1
GOLDEN_TRACES = 100
GOLDEN_TRACE_LEN = 50


@dataclass(frozen=True)
class McTransaction:
    core_id: int
    seq: int
    latency: int  # pre-defense cycles

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be >= 0")


@dataclass(frozen=True)
class PlantConfig:
    alpha: float = 0.5
    p_min: float = 0.0
    p_max: float = 250.0
    sample_period_ms: float = 20.0  # documentation constant; the sim is step-indexed

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")
        if self.p_min >= self.p_max:
            raise ValueError("p_min must be < p_max")


@dataclass
class McStats:
    mean_added_cycles: float
    per_core_mean: dict[int, float]


def mc_simulate(
    stream: list[McTransaction], qdef: QuantizedDefender, seed: int
) -> tuple[list[int], McStats]:
    """Observed (stalled) latency per transaction, in completion order.

    Each core gets its own defender state and its own stream seed (seed +
    core_id), so the interleaving of cores cannot change any output.
    """
    seen = set()
    for tx in stream:
        key = (tx.core_id, tx.seq)
        if key in seen:
            raise ValueError(f"duplicate transaction {key}")
        seen.add(key)
    states: dict[int, QuantizedState] = {}
    out: list[int] = []
    added: dict[int, list[int]] = {}
    for tx in stream:
        if tx.core_id not in states:
            states[tx.core_id] = QuantizedState.fresh(qdef, seed + tx.core_id)
            added[tx.core_id] = []
        p, states[tx.core_id] = quantized_step(qdef, states[tx.core_id], tx.latency)
        out.append(tx.latency + p)
        added[tx.core_id].append(p)
    all_added = [v for core in added.values() for v in core]
    stats = McStats(
        mean_added_cycles=float(np.mean(all_added)) if all_added else 0.0,
        per_core_mean={k: float(np.mean(v)) for k, v in added.items()},
    )
    return out, stats


def power_plant_sim(
    mask_or_defender, victim_power: Signal, cfg: PlantConfig, seed: int
) -> Signal:
    """First-order tracking of the (mask or defender) target, floored at the
    application's own power and clamped to [p_min, p_max]."""
    v = victim_power.samples
    if np.any(v < 0) or np.any(v > cfg.p_max):
        raise ValueError("victim power must lie within [0, p_max]")
    length = len(v)
    measured = np.empty(length)
    measured[0] = min(max(v[0], cfg.p_min), cfg.p_max)

    mask_curve = None
    def_state = None
    if mask_or_defender is None:
        pass
    elif isinstance(mask_or_defender, MaskParams):
        params = mask_or_defender
        gen = gaussian_target if params.kind is MaskKind.GAUSSIAN else gauss_sine_target
        mask_curve = gen(params, length, seed)
    elif isinstance(mask_or_defender, Defender):
        if mask_or_defender.cfg.channel is not Channel.POWER:
            raise ValueError("plant simulation needs a power-channel defender")
        def_state = DefenderState.fresh(mask_or_defender, seed)
    else:
        raise TypeError(f"unsupported mask/defender: {type(mask_or_defender)!r}")

    for t in range(length - 1):
        if mask_curve is not None:
            target = mask_curve[t]
        elif def_state is not None:
            p, def_state = defender_step(mask_or_defender, def_state, measured[t])
            target = measured[t] + p
        else:
            target = measured[t]
        m = measured[t] + cfg.alpha * (target - measured[t])
        m = max(m, v[t + 1])
        measured[t + 1] = min(max(m, cfg.p_min), cfg.p_max)
    return Signal(measured, victim_power.label)


# --- weight bundle -----------------------------------------------------------

def _f32_repr(v) -> str:
    # decimal of the exact float32 value; re-parsing and rounding to f32 recovers it
    return repr(float(np.float32(v)))


def _bundle_lines(qdef: QuantizedDefender) -> list[str]:
    lines = [
        f"format_version {BUNDLE_VERSION}",
        f"channel {qdef.channel.value}",
        f"history_len {qdef.history_len}",
        f"hidden {qdef.hidden}",
        f"dropout_rate {qdef.dropout_rate!r}",
        f"p_max {qdef.p_max}",
        f"input_scale {_f32_repr(qdef.input_scale)}",
        f"s_in {_f32_repr(qdef.s_in)}",
        f"s_a1 {_f32_repr(qdef.s_a1)}",
        f"s_h {_f32_repr(qdef.s_h)}",
        "lut_sigmoid " + " ".join(repr(float(v)) for v in qdef.lut_sigmoid),
        "lut_tanh " + " ".join(repr(float(v)) for v in qdef.lut_tanh),
    ]
    tensors = [
        ("w_in", qdef.w_in, qdef.s_w_in), ("b_in", qdef.b_in, None),
        ("w_ih", qdef.w_ih, qdef.s_w_ih), ("b_ih", qdef.b_ih, None),
        ("w_hh", qdef.w_hh, qdef.s_w_hh), ("b_hh", qdef.b_hh, None),
        ("w_out", qdef.w_out, qdef.s_w_out), ("b_out", qdef.b_out, None),
    ]
    for name, arr, scale in tensors:
        shape = " ".join(str(s) for s in arr.shape)
        dtype = "int8" if scale is not None else "int32"
        stail = _f32_repr(scale) if scale is not None else "-"
        lines.append(f"tensor {name} {dtype} {shape} {stail}")
        lines.append(" ".join(str(int(v)) for v in arr.reshape(-1)))
    return lines


def bundle_text(qdef: QuantizedDefender) -> str:
    lines = _bundle_lines(qdef)
    body = "".join(ln + "\n" for ln in lines)
    crc = zlib.crc32(body.encode("utf-8")) & 0xFFFFFFFF
    return body + f"checksum {crc:08x}\n"


def golden_input_trace(seed: int, trace_id: int, length: int = GOLDEN_TRACE_LEN) -> np.ndarray:
    """Deterministic latency-like integer trace for golden-vector generation."""
    u = prand.uniform_grid(prand.derive_seed(seed, 0x601D, trace_id), length, 2)
    base = np.floor(80.0 + 60.0 * u[:, 0])
    burst = np.where(u[:, 1] > 0.85, 120.0, 0.0)
    return (base + burst).astype(np.int64)


def export_weights(qdef: QuantizedDefender, path, seed: int = 0,
                   n_traces: int = GOLDEN_TRACES, trace_len: int = GOLDEN_TRACE_LEN) -> str:
    """Write the weight bundle plus its golden-vector companion `<path>.golden.csv`.

    Golden trace k runs with stream seed (seed + k), the same convention the
    deployment engine must apply.
    """
    path = str(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(bundle_text(qdef))
    golden_path = path + ".golden.csv"
    with open(golden_path, "w", encoding="utf-8") as fh:
        fh.write("trace_id,step,input,output\n")
        for k in range(n_traces):
            xs = golden_input_trace(seed, k, trace_len)
            ps = quantized_run(qdef, xs, seed + k)
            for t, (x_t, p_t) in enumerate(zip(xs, ps)):
                fh.write(f"{k},{t},{int(x_t)},{int(p_t)}\n")
    return golden_path


def load_weights(path) -> QuantizedDefender:
    """Parse and validate a weight bundle; rejects checksum or shape mismatches."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or not lines[-1].startswith("checksum "):
        raise ValueError("missing checksum line")
    body = "".join(ln + "\n" for ln in lines[:-1])
    expect = int(lines[-1].split()[1], 16)
    got = zlib.crc32(body.encode("utf-8")) & 0xFFFFFFFF
    if expect != got:
        raise ValueError(f"checksum mismatch: stated {expect:08x}, computed {got:08x}")

    header: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    scales: dict[str, np.float32] = {}
    luts: dict[str, np.ndarray] = {}
    i = 0
    while i < len(lines) - 1:
        key, _, rest = lines[i].partition(" ")
        if key in ("lut_sigmoid", "lut_tanh"):
            luts[key] = np.array([float(v) for v in rest.split()])
        elif key == "tensor":
            parts = rest.split()
            name, dtype = parts[0], parts[1]
            shape = tuple(int(s) for s in parts[2:-1])
            if parts[-1] != "-":
                scales[name] = np.float32(parts[-1])
            i += 1
            vals = np.array([int(v) for v in lines[i].split()])
            if vals.size != int(np.prod(shape)):
                raise ValueError(f"tensor {name}: {vals.size} values for shape {shape}")
            tensors[name] = vals.reshape(shape).astype(np.int8 if dtype == "int8" else np.int32)
        else:
            header[key] = rest
        i += 1

    if int(header["format_version"]) != BUNDLE_VERSION:
        raise ValueError(f"unsupported format_version {header['format_version']}")
    hidden = int(header["hidden"])
    hist = int(header["history_len"])
    expected_shapes = {
        "w_in": (hidden, hist), "b_in": (hidden,),
        "w_ih": (3 * hidden, hidden), "b_ih": (3 * hidden,),
        "w_hh": (3 * hidden, hidden), "b_hh": (3 * hidden,),
        "w_out": (1, hidden), "b_out": (1,),
    }
    for name, shape in expected_shapes.items():
        if name not in tensors:
            raise ValueError(f"missing tensor {name}")
        if tensors[name].shape != shape:
            raise ValueError(f"tensor {name}: shape {tensors[name].shape}, expected {shape}")
    for lut in ("lut_sigmoid", "lut_tanh"):
        if len(luts.get(lut, ())) != 256:
            raise ValueError(f"{lut} must have 256 entries")

    return QuantizedDefender(
        channel=Channel(header["channel"]),
        history_len=hist,
        hidden=hidden,
        dropout_rate=float(header["dropout_rate"]),
        p_max=int(header["p_max"]),
        input_scale=np.float32(header["input_scale"]),
        w_in=tensors["w_in"], b_in=tensors["b_in"],
        w_ih=tensors["w_ih"], b_ih=tensors["b_ih"],
        w_hh=tensors["w_hh"], b_hh=tensors["b_hh"],
        w_out=tensors["w_out"], b_out=tensors["b_out"],
        s_w_in=scales["w_in"], s_w_ih=scales["w_ih"],
        s_w_hh=scales["w_hh"], s_w_out=scales["w_out"],
        s_in=np.float32(header["s_in"]),
        s_a1=np.float32(header["s_a1"]),
        s_h=np.float32(header["s_h"]),
        lut_sigmoid=luts["lut_sigmoid"],
        lut_tanh=luts["lut_tanh"],
    )
