"""Synthetic side-channel victims, dataset splits, and CSV import/export.

Real traces from crypto or benchmark victims are not reproducible at desk
scale, so both channels are modeled with leaky synthetic victims: a
class-dependent contention burst for the memory-latency channel and
class-dependent piecewise-constant power phases for the power channel.
The constants are tuned so an unprotected attacker succeeds, which is the
precondition for any defense claim.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np


class Channel(enum.Enum):
    MEMORY = "memory"
    POWER = "power"


@dataclass(frozen=True)
class Signal:
    """One labeled trace: cycle counts (memory) or watts (power) plus its secret label."""

    samples: np.ndarray
    label: int

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 1 or len(self.samples) == 0:
            raise ValueError("signal must be a nonempty 1-D sample sequence")
        if self.label < 0:
            raise ValueError("label must be a nonnegative class id")


@dataclass
class Dataset:
    signals: list[Signal]
    n_classes: int
    signal_len: int
    channel: Channel

    def __post_init__(self):
        for s in self.signals:
            if len(s.samples) != self.signal_len:
                raise ValueError("all signals must share signal_len")
            if s.label >= self.n_classes:
                raise ValueError(f"label {s.label} out of range for {self.n_classes} classes")

    def __len__(self) -> int:
        return len(self.signals)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([s.samples for s in self.signals])
        y = np.array([s.label for s in self.signals], dtype=np.int64)
        return x, y

    @classmethod
    def from_arrays(cls, x, y, n_classes, channel) -> "Dataset":
        sigs = [Signal(row, int(lab)) for row, lab in zip(x, y)]
        return cls(sigs, n_classes, x.shape[1], channel)


@dataclass(frozen=True)
class VictimSpec:
    """Parameters of a synthetic victim application."""

    channel: Channel
    signal_len: int
    n_classes: int
    base_level: float
    burst_amplitude: float
    burst_width: int
    jitter: int
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if self.signal_len < self.burst_width:
            raise ValueError("signal_len must be >= burst_width")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")


def default_memory_spec(seed: int = 0) -> VictimSpec:
    # 42-sample binary traces mirror the shape of per-iteration RSA latency signals.
    return VictimSpec(
        channel=Channel.MEMORY,
        signal_len=42,
        n_classes=2,
        base_level=100.0,
        burst_amplitude=60.0,
        burst_width=6,
        jitter=4,
        noise_sigma=5.0,
        seed=seed,
    )


def default_power_spec(seed: int = 0) -> VictimSpec:
    # 500-sample, 10-class traces mirror per-application power recordings.
    return VictimSpec(
        channel=Channel.POWER,
        signal_len=500,
        n_classes=10,
        base_level=40.0,
        burst_amplitude=0.0,
        burst_width=1,
        jitter=10,
        noise_sigma=2.0,
        seed=seed,
    )


def memory_class_templates(spec: VictimSpec) -> np.ndarray:
    """Noise-free per-class latency templates: a contention burst in a class-specific window."""
    t = np.full((spec.n_classes, spec.signal_len), spec.base_level, dtype=np.float64)
    for k in range(spec.n_classes):
        center = int(round((k + 1) * spec.signal_len / (spec.n_classes + 1)))
        start = max(0, center - spec.burst_width // 2)
        t[k, start : start + spec.burst_width] += spec.burst_amplitude
    return t


def power_class_templates(spec: VictimSpec) -> np.ndarray:
    """Per-class piecewise-constant phase power templates with seed-drawn amplitudes."""
    rng = np.random.default_rng(spec.seed)
    n_phases = max(2, spec.signal_len // 100)
    bounds = np.linspace(0, spec.signal_len, n_phases + 1).astype(int)
    t = np.empty((spec.n_classes, spec.signal_len), dtype=np.float64)
    for k in range(spec.n_classes):
        amps = rng.uniform(0.5 * spec.base_level, 2.0 * spec.base_level, size=n_phases)
        for j in range(n_phases):
            t[k, bounds[j] : bounds[j + 1]] = amps[j]
    return t


def _balanced_labels(n_signals: int, n_classes: int) -> np.ndarray:
    return np.arange(n_signals, dtype=np.int64) % n_classes


def gen_memory_dataset(spec: VictimSpec, n_signals: int) -> Dataset:
    """Generate binary-labeled memory-latency traces (non-negative integer cycles)."""
    if spec.channel is not Channel.MEMORY:
        raise ValueError("spec.channel must be MEMORY")
    if spec.n_classes != 2:
        raise ValueError("memory victim is a binary (secret-bit) channel")
    if n_signals < 2 * spec.n_classes:
        raise ValueError("need at least 2 signals per class")
    rng = np.random.default_rng(spec.seed)
    templates = memory_class_templates(spec)
    labels = _balanced_labels(n_signals, spec.n_classes)
    sigs = []
    for lab in labels:
        x = templates[lab]
        if spec.jitter > 0:
            x = np.roll(x, int(rng.integers(-spec.jitter, spec.jitter + 1)))
        if spec.noise_sigma > 0:
            x = x + rng.normal(0.0, spec.noise_sigma, size=spec.signal_len)
        x = np.maximum(np.rint(x), 0.0)
        sigs.append(Signal(x, int(lab)))
    return Dataset(sigs, spec.n_classes, spec.signal_len, Channel.MEMORY)


def gen_power_dataset(spec: VictimSpec, n_signals: int) -> Dataset:
    """Generate multi-class power traces (non-negative watts)."""
    if spec.channel is not Channel.POWER:
        raise ValueError("spec.channel must be POWER")
    if n_signals < 2 * spec.n_classes:
        raise ValueError("need at least 2 signals per class")
    rng = np.random.default_rng(spec.seed)
    templates = power_class_templates(spec)
    labels = _balanced_labels(n_signals, spec.n_classes)
    sigs = []
    for lab in labels:
        x = templates[lab]
        if spec.jitter > 0:
            x = np.roll(x, int(rng.integers(-spec.jitter, spec.jitter + 1)))
        if spec.noise_sigma > 0:
            x = x + rng.normal(0.0, spec.noise_sigma, size=spec.signal_len)
        x = np.maximum(x, 0.0)
        sigs.append(Signal(x, int(lab)))
    return Dataset(sigs, spec.n_classes, spec.signal_len, Channel.POWER)


def split_dataset(
    d: Dataset, fractions: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified, disjoint (train1, train2, test) split with exact-fraction sizing."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    rng = np.random.default_rng(seed)
    parts: list[list[Signal]] = [[], [], []]
    for k in range(d.n_classes):
        idx = [i for i, s in enumerate(d.signals) if s.label == k]
        rng.shuffle(idx)
        n = len(idx)
        # largest-remainder allocation keeps per-class sizes exact; ties are
        # broken on a per-class rotation so equal remainders spread across
        # parts instead of always inflating the same one
        raw = [f * n for f in fractions]
        sizes = [int(np.floor(r)) for r in raw]
        rem = n - sum(sizes)
        order = sorted(range(3), key=lambda j: (sizes[j] - raw[j], (j + k) % 3))
        for j in range(rem):
            sizes[order[j]] += 1
        pos = 0
        for part, sz in zip(parts, sizes):
            part.extend(d.signals[i] for i in idx[pos : pos + sz])
            pos += sz
    if any(len(p) == 0 for p in parts):
        raise ValueError("degenerate fractions: every split must be nonempty")
    return tuple(Dataset(p, d.n_classes, d.signal_len, d.channel) for p in parts)


def save_csv(d: Dataset, path) -> None:
    """Write `label,s0,...,s{L-1}` rows; integer cycles for MEMORY, floats for POWER."""
    with open(path, "w", encoding="utf-8") as fh:
        header = "label," + ",".join(f"s{i}" for i in range(d.signal_len))
        fh.write(header + "\n")
        for s in d.signals:
            if d.channel is Channel.MEMORY:
                row = ",".join(str(int(v)) for v in s.samples)
            else:
                row = ",".join(repr(float(v)) for v in s.samples)
            fh.write(f"{s.label},{row}\n")


def load_csv(path) -> Dataset:
    """Round-trip inverse of save_csv; channel inferred from the sample lexical form."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError("empty file")
    header = lines[0].split(",")
    if header[0] != "label" or any(h != f"s{i}" for i, h in enumerate(header[1:])):
        raise ValueError(f"malformed header: {lines[0][:80]}")
    signal_len = len(header) - 1
    all_int = True
    sigs = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != signal_len + 1:
            raise ValueError(f"ragged row: expected {signal_len + 1} cells, got {len(cells)}")
        label = int(cells[0])
        if label < 0:
            raise ValueError(f"label out of range: {label}")
        for c in cells[1:]:
            if all_int:
                try:
                    int(c)
                except ValueError:
                    all_int = False
        sigs.append(Signal(np.array([float(c) for c in cells[1:]]), label))
    n_classes = max(s.label for s in sigs) + 1
    if n_classes < 2:
        raise ValueError("dataset must contain at least 2 classes")
    channel = Channel.MEMORY if all_int else Channel.POWER
    return Dataset(sigs, n_classes, signal_len, channel)
