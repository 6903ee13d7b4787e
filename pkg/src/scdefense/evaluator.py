"""Adaptive-attack transferability protocol, leakage metrics, and trade-off sweeps.

An adaptive attack trains a fresh classifier on signals already perturbed by
the frozen defense, then tests on a disjoint perturbed split; the report keeps
every classifier's accuracy and the worst-case (best-attacker) number. The
power channel is always evaluated through the first-order plant, since that is
what an attacker measures on a deployed system.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import prand
from .attackers import ClassifierSpec, build_classifier, eval_accuracy, train_classifier
from .baselines import (
    MaskKind,
    MaskParams,
    gauss_sine_mask_run,
    gaussian_mask_run,
    pad_to_constant_run,
)
from .compressor import QuantizedDefender, quantized_run
from .defender import Defender, Perturbation, batch_perturbations, perturb
from .deploysim import PlantConfig, power_plant_sim
from .traces import Channel, Dataset, Signal


class NoDefense:
    defense_id = "none"

    def apply(self, d: Dataset, seed: int) -> Dataset:
        return d


class DefenderDefense:
    """A frozen float defender; fresh counter-based randomness per signal."""

    def __init__(self, defender: Defender, name: str = "defender"):
        self.defender = defender
        self.defense_id = name

    def apply(self, d: Dataset, seed: int) -> Dataset:
        x, y = d.as_arrays()
        seeds = np.array([prand.derive_seed(seed, i) for i in range(len(x))])
        out = np.empty_like(x)
        for i in range(0, len(x), 256):
            out[i : i + 256] = x[i : i + 256] + batch_perturbations(
                self.defender, x[i : i + 256], seeds[i : i + 256]
            )
        return Dataset.from_arrays(out, y, d.n_classes, d.channel)


class QuantizedDefenderDefense:
    def __init__(self, qdef: QuantizedDefender, name: str = "defender-quantized"):
        self.qdef = qdef
        self.defense_id = name

    def apply(self, d: Dataset, seed: int) -> Dataset:
        x, y = d.as_arrays()
        out = np.empty_like(x)
        for i, row in enumerate(x):
            out[i] = row + quantized_run(self.qdef, row, prand.derive_seed(seed, i))
        return Dataset.from_arrays(out, y, d.n_classes, d.channel)


class MaskDefense:
    def __init__(self, params: MaskParams):
        self.params = params
        self.defense_id = params.kind.value

    def apply(self, d: Dataset, seed: int) -> Dataset:
        if self.params.kind is MaskKind.PAD_CONSTANT and d.channel is not Channel.MEMORY:
            raise ValueError("padding-to-constant applies to the memory channel only")
        sigs = []
        for i, s in enumerate(d.signals):
            sd = prand.derive_seed(seed, i)
            if self.params.kind is MaskKind.PAD_CONSTANT:
                p = pad_to_constant_run(self.params.constant_c, s)
            elif self.params.kind is MaskKind.GAUSSIAN:
                p = gaussian_mask_run(self.params, s, d.channel, sd)
            else:
                p = gauss_sine_mask_run(self.params, s, d.channel, sd)
            sigs.append(perturb(s, p))
        return Dataset(sigs, d.n_classes, d.signal_len, d.channel)


class PlantDefense:
    """Power-channel deployment: inner mask/defender enforced by the tracking plant."""

    def __init__(self, inner, cfg: PlantConfig, name: str | None = None):
        self.inner = inner
        self.cfg = cfg
        inner_id = getattr(inner, "defense_id", None) or (
            inner.params.kind.value if hasattr(inner, "params") else "defender"
        )
        self.defense_id = name or f"plant[{inner_id}]"

    def apply(self, d: Dataset, seed: int) -> Dataset:
        source = None
        if isinstance(self.inner, MaskDefense):
            source_params = self.inner.params
        elif isinstance(self.inner, DefenderDefense):
            source_params = None
            source = self.inner.defender
        elif self.inner is None or isinstance(self.inner, NoDefense):
            source_params = None
        else:
            raise TypeError(f"unsupported plant source: {type(self.inner)!r}")
        sigs = []
        for i, s in enumerate(d.signals):
            src = source if source is not None else source_params
            sigs.append(power_plant_sim(src, s, self.cfg, prand.derive_seed(seed, i)))
        return Dataset(sigs, d.n_classes, d.signal_len, d.channel)


@dataclass
class EvalReport:
    defense_id: str
    accuracies: dict[str, float]
    best_accuracy: float
    leakage_bits: float
    overhead: float  # mean added cycles (memory) or mean added watts (power)
    seed: int

    def as_dict(self) -> dict:
        return {
            "defense": self.defense_id,
            "accuracies": self.accuracies,
            "best_accuracy": self.best_accuracy,
            "leakage_bits": self.leakage_bits,
            "overhead": self.overhead,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def mutual_information(preds, truth) -> float:
    """Plug-in mutual information (bits) of the empirical joint distribution."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if len(preds) == 0 or len(preds) != len(truth):
        raise ValueError("need equal-length, nonempty label sequences")
    pv, pi = np.unique(preds, return_inverse=True)
    tv, ti = np.unique(truth, return_inverse=True)
    joint = np.zeros((len(pv), len(tv)))
    np.add.at(joint, (pi, ti), 1.0)
    joint /= len(preds)
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (px @ py)[nz])))


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log2(p) - (1.0 - p) * np.log2(1.0 - p))


def binary_bits_per_measurement(acc: float) -> float:
    """Bits per measurement of a symmetric binary channel observed at accuracy `acc`."""
    if not (0.0 <= acc <= 1.0):
        raise ValueError("accuracy must be in [0, 1]")
    p = acc if acc >= 0.5 else 1.0 - acc
    return 1.0 - binary_entropy(p)


def overhead(original: Dataset, perturbed: Dataset) -> float:
    """Mean added cycles (memory) or mean added watts (power) per sample."""
    if len(original) != len(perturbed) or original.signal_len != perturbed.signal_len:
        raise ValueError("datasets are misaligned")
    xo, yo = original.as_arrays()
    xp, yp = perturbed.as_arrays()
    if not np.array_equal(yo, yp):
        raise ValueError("datasets are misaligned (labels differ)")
    return float(np.mean(xp - xo))


def adaptive_attack_eval(
    defense,
    specs: list[ClassifierSpec],
    train2: Dataset,
    test: Dataset,
    seed: int,
) -> EvalReport:
    """Train Classifier 2 per spec on freshly perturbed Train2, test on perturbed Test."""
    if not specs:
        raise ValueError("need at least one classifier spec")
    train2_p = defense.apply(train2, prand.derive_seed(seed, 0x7121))
    test_p = defense.apply(test, prand.derive_seed(seed, 0x7357))
    accs: dict[str, float] = {}
    leakage = 0.0
    _, y_test = test_p.as_arrays()
    x_test, _ = test_p.as_arrays()
    for k, spec in enumerate(specs):
        c = build_classifier(spec, train2.signal_len, train2.n_classes,
                             prand.derive_seed(seed, 0xC1F, k), channel=train2.channel)
        train_classifier(c, train2_p)
        accs[spec.kind.value] = eval_accuracy(c, test_p)
        leakage = max(leakage, mutual_information(c.predict(x_test), y_test))
    return EvalReport(
        defense_id=getattr(defense, "defense_id", "unknown"),
        accuracies=accs,
        best_accuracy=max(accs.values()),
        leakage_bits=leakage,
        overhead=overhead(test, test_p),
        seed=seed,
    )


@dataclass
class SweepPoint:
    level: float
    report: EvalReport


def sweep(defense_for_level, levels: list[float], train2: Dataset, test: Dataset,
          specs: list[ClassifierSpec], seeds: list[int]) -> list[SweepPoint]:
    """One (overhead, best-accuracy) point per level; medians over the given seeds."""
    if len(set(levels)) != len(levels):
        raise ValueError("levels must be distinct")
    points = []
    for level in levels:
        reports = [
            adaptive_attack_eval(defense_for_level(level), specs, train2, test, s)
            for s in seeds
        ]
        mid = int(np.argsort([r.best_accuracy for r in reports])[len(reports) // 2])
        points.append(SweepPoint(level=level, report=reports[mid]))
    return points


def sweep_to_csv(points: list[SweepPoint], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("level,overhead,best_accuracy,leakage_bits,defense\n")
        for pt in points:
            r = pt.report
            fh.write(f"{pt.level},{r.overhead},{r.best_accuracy},{r.leakage_bits},{r.defense_id}\n")
