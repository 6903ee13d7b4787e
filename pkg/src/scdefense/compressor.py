"""Teacher-student compression and deterministic INT8/FP16 quantization.

The quantized model is the deployment reference: symmetric per-tensor INT8
weights (zero-point 0), INT32 biases at input-scale * weight-scale, an FP16
(binary16, round-to-nearest-even) GRU hidden state, and 256-entry sigmoid/tanh
lookup tables over [-8, 8]. All arithmetic is defined exactly (integer
accumulators in ascending index order, float64 elementwise math) so that an
independent engine can reproduce the outputs bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from . import prand
from .defender import Defender, DefenderConfig, defender_init, monitor_init
from .gan import Discriminator, GanConfig, train_defendergan
from .traces import Channel, Dataset

LUT_SIZE = 256
LUT_LO = -8.0
LUT_HI = 8.0
_LUT_STEP = (LUT_HI - LUT_LO) / (LUT_SIZE - 1)
_LUT_IDX_SCALE = (LUT_SIZE - 1) / (LUT_HI - LUT_LO)  # 15.9375


def distill_defender(
    teacher: Defender,
    student_cfg: DefenderConfig,
    train1: Dataset,
    classifier,
    discriminator: Discriminator,
    cfg: GanConfig,
    lambda_kd: float = 10.0,
):
    """Train a smaller student with the adversarial loss plus an imitation MSE term.

    With lambda_kd = 0 this is exactly train_defendergan on the student.

    For the memory channel the student starts from a monitor-wired init (a few
    hidden units acting as same-step linear monitors of the newest sample);
    from a purely random init, gradient descent settles into a positional-only
    response and the imitation loss plateaus far from the teacher.
    """
    if student_cfg.hidden > teacher.cfg.hidden:
        raise ValueError("student must not be larger than the teacher")
    student = defender_init(student_cfg, cfg.seed)
    if lambda_kd > 0 and student_cfg == teacher.cfg:
        # self-distillation: start at the teacher; training then verifies the
        # imitation term holds the student there against the adversarial loss
        student.load_state_dict(teacher.state_dict())
    elif lambda_kd > 0 and student_cfg.channel is Channel.MEMORY:
        x, _ = train1.as_arrays()
        ceiling = float(np.max(x)) + 25.0
        gain = 0.45 / max((ceiling - float(np.min(x))) * student_cfg.input_scale, 1e-6)
        monitor_init(student, min(8, student_cfg.hidden), ceiling, gain)
    student, classifier, log = train_defendergan(
        student, classifier, discriminator, train1, cfg,
        teacher=teacher if lambda_kd > 0 else None, lambda_kd=lambda_kd,
    )
    return student, log


def rhu(v: float) -> int:
    """Round half up (toward +inf), the quantization rounding rule."""
    return int(math.floor(v + 0.5))


def fp16(v: float) -> float:
    """Round a float64 to the nearest binary16 value (round-to-nearest-even)."""
    return float(np.float64(np.float16(v)))


def _quantize_tensor(w: np.ndarray) -> tuple[np.ndarray, np.float32]:
    amax = float(np.max(np.abs(w))) if w.size else 0.0
    scale = np.float32(1.0) if amax == 0.0 else np.float32(amax / 127.0)
    q = np.clip(np.floor(w / float(scale) + 0.5), -127, 127).astype(np.int8)
    return q, scale


def _quantize_bias(b: np.ndarray, scale: float) -> np.ndarray:
    return np.floor(b / scale + 0.5).astype(np.int32)


def build_luts() -> tuple[np.ndarray, np.ndarray]:
    grid = LUT_LO + np.arange(LUT_SIZE, dtype=np.float64) * _LUT_STEP
    return 1.0 / (1.0 + np.exp(-grid)), np.tanh(grid)


def lut_index(v: float) -> int:
    t = (v - LUT_LO) * _LUT_IDX_SCALE
    if t <= 0.0:
        return 0
    if t >= LUT_SIZE - 1:
        return LUT_SIZE - 1
    return int(math.floor(t + 0.5))


@dataclass
class QuantizedDefender:
    """INT8-weight / FP16-hidden-state defender with bit-deterministic arithmetic."""

    channel: Channel
    history_len: int
    hidden: int
    dropout_rate: float
    p_max: int
    input_scale: np.float32
    w_in: np.ndarray   # int8 (hidden, history_len)
    b_in: np.ndarray   # int32 (hidden,)
    w_ih: np.ndarray   # int8 (3*hidden, hidden), gate order r, z, n
    b_ih: np.ndarray
    w_hh: np.ndarray   # int8 (3*hidden, hidden)
    b_hh: np.ndarray
    w_out: np.ndarray  # int8 (1, hidden)
    b_out: np.ndarray  # int32 (1,)
    s_w_in: np.float32
    s_w_ih: np.float32
    s_w_hh: np.float32
    s_w_out: np.float32
    s_in: np.float32   # activation scales from calibration
    s_a1: np.float32
    s_h: np.float32
    lut_sigmoid: np.ndarray = field(default_factory=lambda: build_luts()[0])
    lut_tanh: np.ndarray = field(default_factory=lambda: build_luts()[1])

    def dequant(self, q: np.ndarray, scale: np.float32) -> np.ndarray:
        return q.astype(np.float64) * float(scale)


@dataclass
class QuantizedState:
    buffer: list[int]
    hidden: list[float]  # each value exactly representable in binary16
    step: int
    seed: int

    @classmethod
    def fresh(cls, qdef: QuantizedDefender, seed: int) -> "QuantizedState":
        return cls([0] * qdef.history_len, [0.0] * qdef.hidden, 0, int(seed))


def calibration_activations(defender: Defender, calibration: Dataset) -> dict[str, float]:
    """Max-abs of normalized input, post-ReLU dense activations, and hidden state."""
    x, _ = calibration.as_arrays()
    cfg = defender.cfg
    with torch.no_grad():
        xt = torch.as_tensor(x, dtype=torch.float32)
        u = defender._input_windows(xt)
        a1 = torch.relu(defender.fc_in(u))
        h = xt.new_zeros(len(xt), cfg.hidden)
        hmax = 0.0
        for t in range(x.shape[1]):
            h = defender.cell(a1[:, t], h)
            hmax = max(hmax, float(h.abs().max()))
    return {
        "in": float(u.abs().max()),
        "a1": float(a1.abs().max()),
        "h": hmax,
    }


def quantize_defender(defender: Defender, calibration: Dataset) -> QuantizedDefender:
    """Post-training symmetric quantization with max-abs calibration."""
    if defender.cfg.channel is not Channel.MEMORY:
        raise ValueError("only the memory defender is deployed quantized")
    if len(calibration) == 0:
        raise ValueError("calibration dataset must be nonempty")
    cfg = defender.cfg
    acts = calibration_activations(defender, calibration)

    def act_scale(amax: float) -> np.float32:
        return np.float32(1.0) if amax == 0.0 else np.float32(amax / 127.0)

    s_in, s_a1, s_h = (act_scale(acts[k]) for k in ("in", "a1", "h"))
    sd = {k: v.detach().double().numpy() for k, v in defender.state_dict().items()}
    w_in, s_w_in = _quantize_tensor(sd["fc_in.weight"])
    w_ih, s_w_ih = _quantize_tensor(sd["cell.weight_ih"])
    w_hh, s_w_hh = _quantize_tensor(sd["cell.weight_hh"])
    w_out, s_w_out = _quantize_tensor(sd["fc_out.weight"])
    lut_sig, lut_tanh = build_luts()
    return QuantizedDefender(
        channel=cfg.channel,
        history_len=cfg.history_len,
        hidden=cfg.hidden,
        dropout_rate=cfg.dropout_rate,
        p_max=int(cfg.p_max),
        input_scale=np.float32(cfg.input_scale),
        w_in=w_in,
        b_in=_quantize_bias(sd["fc_in.bias"], float(s_in) * float(s_w_in)),
        w_ih=w_ih,
        b_ih=_quantize_bias(sd["cell.bias_ih"], float(s_a1) * float(s_w_ih)),
        w_hh=w_hh,
        b_hh=_quantize_bias(sd["cell.bias_hh"], float(s_h) * float(s_w_hh)),
        w_out=w_out,
        b_out=_quantize_bias(sd["fc_out.bias"], float(s_h) * float(s_w_out)),
        s_w_in=s_w_in,
        s_w_ih=s_w_ih,
        s_w_hh=s_w_hh,
        s_w_out=s_w_out,
        s_in=s_in,
        s_a1=s_a1,
        s_h=s_h,
        lut_sigmoid=lut_sig,
        lut_tanh=lut_tanh,
    )


def _quant_act(values, scale: np.float32) -> list[int]:
    s = float(scale)
    return [max(-127, min(127, rhu(v / s))) for v in values]


def _matvec_i32(w: np.ndarray, q: list[int], b: np.ndarray) -> list[int]:
    # int32 accumulation in ascending index order; exact, order-independent
    out = []
    for i in range(w.shape[0]):
        acc = int(b[i])
        row = w[i]
        for j in range(w.shape[1]):
            acc += int(row[j]) * q[j]
        out.append(acc)
    return out


def quantized_step(qdef: QuantizedDefender, state: QuantizedState, x_t: int) -> tuple[int, QuantizedState]:
    """One bit-deterministic inference step; returns the integer stall in [0, p_max]."""
    if len(state.hidden) != qdef.hidden or len(state.buffer) != qdef.history_len:
        raise ValueError("state does not match quantized defender")
    h_n = qdef.hidden
    buf = state.buffer[1:] + [int(x_t)]
    in_scale = float(qdef.input_scale)

    xn = [v * in_scale for v in buf]
    q_x = _quant_act(xn, qdef.s_in)
    m1 = float(qdef.s_in) * float(qdef.s_w_in)
    acc1 = _matvec_i32(qdef.w_in, q_x, qdef.b_in)
    a1 = [max(a * m1, 0.0) for a in acc1]
    if qdef.dropout_rate > 0:
        inv = 1.0 / (1.0 - qdef.dropout_rate)
        a1 = [
            a * inv if prand.dropout_keep(state.seed, state.step, i, qdef.dropout_rate) else 0.0
            for i, a in enumerate(a1)
        ]

    q_a1 = _quant_act(a1, qdef.s_a1)
    q_h = _quant_act(state.hidden, qdef.s_h)
    m_ih = float(qdef.s_a1) * float(qdef.s_w_ih)
    m_hh = float(qdef.s_h) * float(qdef.s_w_hh)
    gi = [a * m_ih for a in _matvec_i32(qdef.w_ih, q_a1, qdef.b_ih)]
    gh = [a * m_hh for a in _matvec_i32(qdef.w_hh, q_h, qdef.b_hh)]

    sig, tanh = qdef.lut_sigmoid, qdef.lut_tanh
    h_new = []
    for i in range(h_n):
        r = sig[lut_index(gi[i] + gh[i])]
        z = sig[lut_index(gi[h_n + i] + gh[h_n + i])]
        n = tanh[lut_index(gi[2 * h_n + i] + r * gh[2 * h_n + i])]
        h_new.append(fp16((1.0 - z) * n + z * state.hidden[i]))

    q_h2 = _quant_act(h_new, qdef.s_h)
    m_o = float(qdef.s_h) * float(qdef.s_w_out)
    o = _matvec_i32(qdef.w_out, q_h2, qdef.b_out)[0] * m_o
    p = max(0, min(qdef.p_max, rhu(max(o, 0.0))))
    return p, QuantizedState(buf, h_new, state.step + 1, state.seed)


def quantized_run(qdef: QuantizedDefender, samples, seed: int) -> np.ndarray:
    """Run a whole trace through quantized_step with a fresh per-stream state."""
    state = QuantizedState.fresh(qdef, seed)
    out = np.empty(len(samples), dtype=np.float64)
    for t, x_t in enumerate(samples):
        out[t], state = quantized_step(qdef, state, int(round(float(x_t))))
    return out
