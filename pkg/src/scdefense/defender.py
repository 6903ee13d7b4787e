"""The causal noise-generator network.

A 3-layer model (dense over a 32-sample history, GRU, dense head) emits one
perturbation per sample. The memory-channel variant stalls the access it just
observed (same-step actuation, non-negative integer cycles); the power-channel
variant emits the signed watts perturbation for the *next* step, since power
can only be measured after the fact.

Runtime randomness is counter-based (see prand): dropout for the memory
defender and additive Gaussian input noise for the power defender, so a
deployment run is a pure function of (parameters, input stream, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import prand
from .traces import Channel, Signal


@dataclass(frozen=True)
class DefenderConfig:
    channel: Channel
    hidden: int
    history_len: int = 32
    dropout_rate: float = 0.0
    gauss_noise_sigma: float = 0.0
    p_max: float = 255.0
    input_scale: float = 1.0 / 256.0

    def __post_init__(self):
        if self.history_len < 1 or self.hidden < 1:
            raise ValueError("history_len and hidden must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.gauss_noise_sigma < 0:
            raise ValueError("gauss_noise_sigma must be >= 0")
        if self.channel is Channel.MEMORY and self.gauss_noise_sigma > 0:
            raise ValueError("memory defender randomness is dropout, not input noise")
        if self.channel is Channel.POWER and self.dropout_rate > 0:
            raise ValueError("power defender randomness is input noise, not dropout")


def memory_defender_config(hidden: int = 160, dropout_rate: float = 0.25) -> DefenderConfig:
    return DefenderConfig(channel=Channel.MEMORY, hidden=hidden, dropout_rate=dropout_rate)


def power_defender_config(hidden: int = 64, gauss_noise_sigma: float = 1.0) -> DefenderConfig:
    return DefenderConfig(
        channel=Channel.POWER,
        hidden=hidden,
        gauss_noise_sigma=gauss_noise_sigma,
        input_scale=1.0 / 64.0,
    )


@dataclass(frozen=True)
class Perturbation:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def l1(self) -> float:
        return float(np.abs(self.values).sum())


class Defender(nn.Module):
    """dense(history_len -> hidden) -> GRU(hidden) -> dense(hidden -> 1)."""

    def __init__(self, cfg: DefenderConfig):
        super().__init__()
        self.cfg = cfg
        self.fc_in = nn.Linear(cfg.history_len, cfg.hidden)
        self.cell = nn.GRUCell(cfg.hidden, cfg.hidden)
        self.fc_out = nn.Linear(cfg.hidden, 1)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def _input_windows(self, x: torch.Tensor) -> torch.Tensor:
        # (B, L) -> (B, L, history_len), window t = [x_{t-H+1} .. x_t], zero-padded history
        h = self.cfg.history_len
        padded = F.pad(x, (h - 1, 0))
        return padded.unfold(1, h, 1) * self.cfg.input_scale

    def raw_sequence(
        self,
        x: torch.Tensor,
        train_dropout: bool = False,
        seeds: np.ndarray | None = None,
        start_step: int = 0,
        rectify: bool = True,
    ) -> torch.Tensor:
        """Per-step raw outputs o_t for a (B, L) batch.

        train_dropout=True uses torch's RNG (training); passing per-signal
        `seeds` uses the counter-based masks instead (deployment semantics).
        rectify=False skips the memory-channel ReLU/clamp, exposing the signed
        pre-activation (used by imitation pretraining).
        """
        cfg = self.cfg
        b, length = x.shape
        if seeds is not None and cfg.gauss_noise_sigma > 0:
            g = np.stack(
                [prand.gaussian_grid(int(s) ^ 0x6E0153, length, 1)[:, 0] for s in seeds]
            )
            x = x + cfg.gauss_noise_sigma * torch.as_tensor(g, dtype=x.dtype)
        elif train_dropout and cfg.gauss_noise_sigma > 0:
            x = x + cfg.gauss_noise_sigma * torch.randn_like(x)
        u = self._input_windows(x)
        a1 = F.relu(self.fc_in(u))
        if cfg.dropout_rate > 0:
            if seeds is not None:
                m = np.stack(
                    [
                        prand.dropout_mask(int(s), start_step + length, cfg.hidden, cfg.dropout_rate)[
                            start_step:
                        ]
                        for s in seeds
                    ]
                )
                a1 = a1 * torch.as_tensor(m, dtype=a1.dtype)
            elif train_dropout:
                a1 = F.dropout(a1, cfg.dropout_rate, training=True)
        h = x.new_zeros(b, cfg.hidden)
        outs = []
        for t in range(length):
            h = self.cell(a1[:, t], h)
            outs.append(self.fc_out(h))
        o = torch.cat(outs, dim=1)
        if rectify and cfg.channel is Channel.MEMORY:
            o = torch.clamp(F.relu(o), max=cfg.p_max)
        return o

    def perturbation_sequence(self, o: torch.Tensor) -> torch.Tensor:
        """Map raw outputs to the differentiable per-step perturbation (power: next-step shift)."""
        if self.cfg.channel is Channel.POWER:
            return F.pad(o[:, :-1], (1, 0))
        return o


def monitor_init(defender: Defender, units: int = 8, ceiling: float = 200.0, gain: float = 1.0) -> Defender:
    """Wire the first `units` hidden units as same-step linear monitors.

    Each monitor computes h_i ~ 0.5 * gain * (ceiling - x_t) * input_scale
    (ReLU'd dense tap on the newest sample, GRU gates opened so the value
    passes straight through) and the output head sums them back to
    (ceiling - x_t). Random init leaves the current-sample pathway too weak
    for gradient descent to find: training then settles on a purely
    positional response. Seeding the pathway explicitly makes the same-step
    dependence trainable; everything outside these units keeps its random
    init and is free to learn the positional component.

    The monitor biases are staggered slightly so the units do not collapse
    onto identical values; after INT8/LUT quantization this doubles as
    dither, decorrelating the per-unit table-lookup errors.
    """
    cfg = defender.cfg
    if units < 1 or units > cfg.hidden:
        raise ValueError("units must be in [1, hidden]")
    if gain <= 0:
        raise ValueError("gain must be > 0")
    h = cfg.hidden
    s = cfg.input_scale
    with torch.no_grad():
        for i in range(units):
            stagger = 1.0 + 0.05 * i
            # dense tap: a1_i = relu(gain * (ceiling_i - x_t) * input_scale)
            defender.fc_in.weight[i].zero_()
            defender.fc_in.weight[i, -1] = -gain * stagger
            defender.fc_in.bias[i] = gain * stagger * ceiling * s
            # GRU unit i: reset gate inert, update gate ~0, candidate = tanh(a1_i / 2)
            defender.cell.weight_ih[i].zero_()
            defender.cell.bias_ih[i] = 0.0
            defender.cell.weight_hh[i].zero_()
            defender.cell.bias_hh[i] = 0.0
            defender.cell.weight_ih[h + i].zero_()
            defender.cell.bias_ih[h + i] = -6.0
            defender.cell.weight_hh[h + i].zero_()
            defender.cell.bias_hh[h + i] = 0.0
            defender.cell.weight_ih[2 * h + i].zero_()
            defender.cell.weight_ih[2 * h + i, i] = 0.5
            defender.cell.bias_ih[2 * h + i] = 0.0
            defender.cell.weight_hh[2 * h + i].zero_()
            defender.cell.bias_hh[2 * h + i] = 0.0
            # head: sum of monitors reconstructs (ceiling - x_t) in signal units
            defender.fc_out.weight[0, i] = 2.0 / (gain * stagger * s) / units
    return defender


def defender_init(cfg: DefenderConfig, seed: int) -> Defender:
    torch.manual_seed(prand.derive_seed(seed, 0xDEF) & 0x7FFFFFFF)
    d = Defender(cfg)
    if cfg.channel is Channel.MEMORY:
        # start the rectified output in its active region, else gradients are dead
        with torch.no_grad():
            d.fc_out.bias.fill_(5.0)
    return d


@dataclass
class DefenderState:
    """Per-stream recurrent state; never share one across concurrent streams."""

    buffer: np.ndarray
    hidden: torch.Tensor
    step: int
    seed: int

    @classmethod
    def fresh(cls, defender: Defender, seed: int) -> "DefenderState":
        cfg = defender.cfg
        return cls(
            buffer=np.zeros(cfg.history_len, dtype=np.float64),
            hidden=torch.zeros(cfg.hidden),
            step=0,
            seed=int(seed),
        )


def defender_step(defender: Defender, state: DefenderState, x_t: float) -> tuple[float, DefenderState]:
    """One streaming step. MEMORY: integer stall for this access; POWER: signed watts for the next step."""
    cfg = defender.cfg
    if state.hidden.shape[0] != cfg.hidden or len(state.buffer) != cfg.history_len:
        raise ValueError("state does not match defender configuration")
    x_in = float(x_t)
    if cfg.gauss_noise_sigma > 0:
        g = prand.gaussian_grid(state.seed ^ 0x6E0153, state.step + 1, 1)[state.step, 0]
        x_in = x_in + cfg.gauss_noise_sigma * float(g)
    buf = np.roll(state.buffer, -1)
    buf[-1] = x_in
    with torch.no_grad():
        u = torch.as_tensor(buf * cfg.input_scale, dtype=torch.float32)
        a1 = F.relu(defender.fc_in(u))
        if cfg.dropout_rate > 0:
            m = prand.dropout_mask(state.seed, state.step + 1, cfg.hidden, cfg.dropout_rate)[state.step]
            a1 = a1 * torch.as_tensor(m, dtype=a1.dtype)
        h = defender.cell(a1.unsqueeze(0), state.hidden.unsqueeze(0)).squeeze(0)
        o = float(defender.fc_out(h))
    if cfg.channel is Channel.MEMORY:
        p = float(np.clip(np.floor(max(o, 0.0) + 0.5), 0, cfg.p_max))
    else:
        p = o
    return p, DefenderState(buffer=buf, hidden=h, step=state.step + 1, seed=state.seed)


def batch_perturbations(defender: Defender, x: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Deployment-mode perturbations for a stack of signals, one seed per signal."""
    cfg = defender.cfg
    with torch.no_grad():
        o = defender.raw_sequence(torch.as_tensor(x, dtype=torch.float32), seeds=seeds)
        p = defender.perturbation_sequence(o).double().numpy()
    if cfg.channel is Channel.MEMORY:
        p = np.clip(np.floor(p + 0.5), 0, cfg.p_max)
    return p


def defender_run(defender: Defender, x: Signal, seed: int) -> Perturbation:
    """Causal perturbation for one signal; deterministic given seed."""
    if len(x.samples) == 0:
        raise ValueError("empty signal")
    p = batch_perturbations(defender, x.samples[None, :], np.array([seed]))[0]
    return Perturbation(p)


def perturb(x: Signal, p: Perturbation) -> Signal:
    """Elementwise x + p; memory-channel perturbations may only add integer latency."""
    if len(x.samples) != len(p.values):
        raise ValueError("signal/perturbation length mismatch")
    return Signal(x.samples + p.values, x.label)
