"""Batch entry points: gen-data, train, compress, eval-transfer, sweep, export.

All randomness flows from one root seed; rerunning a command with the same
config and seed reproduces its artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import prand
from .attackers import ClassifierKind, ClassifierSpec
from .baselines import MaskKind, MaskParams
from .compressor import distill_defender, quantize_defender
from .defender import Defender, DefenderConfig, defender_init, memory_defender_config, power_defender_config
from .deploysim import PlantConfig, export_weights
from .evaluator import (
    DefenderDefense,
    MaskDefense,
    NoDefense,
    PlantDefense,
    adaptive_attack_eval,
    sweep,
    sweep_to_csv,
)
from .gan import GanConfig, PretrainConfig, discriminator_init, pretrain_defender, train_defendergan
from .traces import (
    Channel,
    default_memory_spec,
    default_power_spec,
    gen_memory_dataset,
    gen_power_dataset,
    load_csv,
    save_csv,
    split_dataset,
)
from .attackers import build_classifier


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _channel(config: dict) -> Channel:
    return Channel(config.get("channel", "memory"))


def _victim_spec(config: dict, seed: int):
    chan = _channel(config)
    spec = default_memory_spec(seed) if chan is Channel.MEMORY else default_power_spec(seed)
    overrides = dict(config.get("victim", {}))
    overrides.pop("channel", None)
    return replace(spec, seed=seed, **overrides)


def _defender_config(config: dict) -> DefenderConfig:
    chan = _channel(config)
    base = memory_defender_config() if chan is Channel.MEMORY else power_defender_config()
    return replace(base, **config.get("defender", {}))


def _gan_config(config: dict, seed: int, profile: str) -> GanConfig:
    overrides = dict(config.get("gan", {}))
    if profile == "ci":
        overrides.setdefault("epochs", 5)
    return GanConfig(seed=seed, **overrides)


def _classifier_specs(config: dict, profile: str) -> list[ClassifierSpec]:
    names = config.get("classifiers", ["mlp", "rnn", "cnn", "svm", "knn"])
    return [ClassifierSpec.default(ClassifierKind(n), profile) for n in names]


def _datasets(out: Path):
    return tuple(load_csv(out / f"{name}.csv") for name in ("train1", "train2", "test"))


def _save_defender(defender: Defender, path: Path) -> None:
    torch.save({"cfg": defender.cfg, "state_dict": defender.state_dict()}, path)


def _load_defender(path: Path) -> Defender:
    blob = torch.load(path, weights_only=False)
    d = Defender(blob["cfg"])
    d.load_state_dict(blob["state_dict"])
    d.eval()
    return d


def _defense_from_config(config: dict, out: Path, profile: str):
    chan = _channel(config)
    kind = config.get("defense", "defender")
    if kind == "none":
        inner = NoDefense()
    elif kind == "defender":
        inner = DefenderDefense(_load_defender(out / "defender.pt"))
    elif kind == "defender-quantized":
        from .deploysim import load_weights
        from .evaluator import QuantizedDefenderDefense

        inner = QuantizedDefenderDefense(load_weights(out / "defender.bundle"))
    else:
        mask_cfg = dict(config.get("mask", {}))
        inner = MaskDefense(MaskParams(kind=MaskKind(kind), **mask_cfg))
    if chan is Channel.POWER:
        plant = PlantConfig(**config.get("plant", {}))
        return PlantDefense(None if isinstance(inner, NoDefense) else inner, plant)
    return inner


def cmd_gen_data(config: dict, seed: int, profile: str, out: Path) -> None:
    chan = _channel(config)
    spec = _victim_spec(config, seed)
    n = config.get("n_signals", 10000 if chan is Channel.MEMORY else 2000)
    d = gen_memory_dataset(spec, n) if chan is Channel.MEMORY else gen_power_dataset(spec, n)
    fr = tuple(config.get("split", (0.5, 0.25, 0.25)))
    train1, train2, test = split_dataset(d, fr, prand.derive_seed(seed, 0x5B11))
    for name, part in (("train1", train1), ("train2", train2), ("test", test)):
        save_csv(part, out / f"{name}.csv")
    print(f"wrote {len(train1)}/{len(train2)}/{len(test)} signals to {out}")


def _pretrain_config(config: dict, seed: int) -> PretrainConfig:
    overrides = dict(config.get("pretrain", {}))
    if "mmd_bandwidths" in overrides:
        overrides["mmd_bandwidths"] = tuple(overrides["mmd_bandwidths"])
    return PretrainConfig(seed=seed, **overrides)


def cmd_train(config: dict, seed: int, profile: str, out: Path) -> None:
    train1, _, _ = _datasets(out)
    dcfg = _defender_config(config)
    # fine-tune phase: the pretrained defender only needs a light adversarial
    # polish, so default to a small step and anchor it to its pretrained self
    gan_defaults = {"lr_defender": 1e-6, "hinge_p": 43.0 * train1.signal_len}
    gcfg = _gan_config(
        {**config, "gan": {**gan_defaults, **config.get("gan", {})}}, seed, profile
    )
    defender = defender_init(dcfg, seed)
    defender, pre_log = pretrain_defender(defender, train1, _pretrain_config(config, seed))
    anchor = copy.deepcopy(defender)
    cls = build_classifier(
        ClassifierSpec.default(ClassifierKind.CNN, profile),
        train1.signal_len, train1.n_classes, prand.derive_seed(seed, 0xC1),
        channel=train1.channel,
    )
    disc = discriminator_init(train1.signal_len, train1.n_classes,
                              prand.derive_seed(seed, 0xD1), channel=train1.channel)
    defender, _, log = train_defendergan(
        defender, cls, disc, train1, gcfg,
        teacher=anchor, lambda_kd=config.get("lambda_anchor", 200.0),
    )
    _save_defender(defender, out / "defender.pt")
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as fh:
        for rec in pre_log:
            fh.write(json.dumps({"phase": "pretrain", **rec}) + "\n")
        for rec in log:
            fh.write(json.dumps({"phase": "gan", **rec.as_dict()}) + "\n")
    print(f"trained defender: final mean_p={log[-1].mean_p:.2f}, probe_acc={log[-1].probe_acc:.3f}")


def cmd_compress(config: dict, seed: int, profile: str, out: Path) -> None:
    train1, _, _ = _datasets(out)
    teacher = _load_defender(out / "defender.pt")
    student_cfg = replace(teacher.cfg, hidden=config.get("student_hidden", 16))
    # distillation leans on the imitation term: long schedule, heavy lambda_kd
    gan_defaults = {"epochs": 60, "hinge_p": 43.0 * train1.signal_len}
    gcfg = _gan_config(
        {**config, "gan": {**gan_defaults, **config.get("gan", {})}},
        prand.derive_seed(seed, 0x57D) & 0xFFFFFFFF, profile,
    )
    cls = build_classifier(
        ClassifierSpec.default(ClassifierKind.CNN, profile),
        train1.signal_len, train1.n_classes, prand.derive_seed(seed, 0xC2),
        channel=train1.channel,
    )
    disc = discriminator_init(train1.signal_len, train1.n_classes,
                              prand.derive_seed(seed, 0xD2), channel=train1.channel)
    student, log = distill_defender(teacher, student_cfg, train1, cls, disc, gcfg,
                                    lambda_kd=config.get("lambda_kd", 20000.0))
    _save_defender(student, out / "student.pt")
    calib = load_csv(out / "train2.csv")
    calib.signals = calib.signals[: config.get("calibration_signals", 200)]
    qdef = quantize_defender(student, calib)
    export_weights(qdef, out / "defender.bundle", seed=prand.derive_seed(seed, 0x90) & 0xFFFF)
    print(f"student saved; quantized bundle at {out / 'defender.bundle'}")


def cmd_eval_transfer(config: dict, seed: int, profile: str, out: Path) -> None:
    _, train2, test = _datasets(out)
    defense = _defense_from_config(config, out, profile)
    specs = _classifier_specs(config, profile)
    report = adaptive_attack_eval(defense, specs, train2, test, seed)
    with open(out / "eval_report.json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    print(report.to_json())


def cmd_sweep(config: dict, seed: int, profile: str, out: Path) -> None:
    _, train2, test = _datasets(out)
    chan = _channel(config)
    family = config.get("defense", "pad_constant")
    levels = config.get("sweep_levels")
    if not levels:
        raise SystemExit("config must provide sweep_levels")
    specs = _classifier_specs(config, profile)
    seeds = [prand.derive_seed(seed, 0x5EED, i) & 0xFFFFFFFF for i in range(config.get("sweep_seeds", 1))]

    def for_level(level):
        if family == "pad_constant":
            return MaskDefense(MaskParams(kind=MaskKind.PAD_CONSTANT, constant_c=level))
        if family == "gaussian":
            mask_cfg = dict(config.get("mask", {}))
            mask_cfg["mean"] = level
            inner = MaskDefense(MaskParams(kind=MaskKind.GAUSSIAN, **mask_cfg))
            if chan is Channel.POWER:
                return PlantDefense(inner, PlantConfig(**config.get("plant", {})))
            return inner
        raise SystemExit(f"unsupported sweep family: {family}")

    points = sweep(for_level, levels, train2, test, specs, seeds)
    sweep_to_csv(points, out / "sweep.csv")
    print(f"wrote {len(points)} sweep points to {out / 'sweep.csv'}")


def cmd_export(config: dict, seed: int, profile: str, out: Path) -> None:
    student = _load_defender(out / "student.pt")
    calib = load_csv(out / "train2.csv")
    calib.signals = calib.signals[: config.get("calibration_signals", 200)]
    qdef = quantize_defender(student, calib)
    golden = export_weights(qdef, out / "defender.bundle", seed=prand.derive_seed(seed, 0x90) & 0xFFFF)
    print(f"bundle at {out / 'defender.bundle'}, golden vectors at {golden}")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "compress": cmd_compress,
    "eval-transfer": cmd_eval_transfer,
    "sweep": cmd_sweep,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="scdefense", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--profile", choices=("ci", "full"), default="full")
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _load_config(args.config)
    try:
        COMMANDS[args.command](config, args.seed, args.profile, out)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
