"""Adversarial training of the defender against a classifier and a Wasserstein critic.

Per batch the three networks are updated in order: (1) the classifier on
perturbed signals with cross-entropy, (2) the critic on the one-to-all
Wasserstein objective followed by weight clipping, (3) the defender on its
combined loss with the other two frozen. The same loop doubles as the
distillation trainer when a teacher and a distillation weight are supplied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import prand
from .attackers import Classifier
from .defender import Defender, monitor_init
from .traces import Channel, Dataset

_EPS = 1e-12


@dataclass(frozen=True)
class GanConfig:
    lambda_d: float = 0.1
    lambda_h: float = 1.0
    hinge_p: float = 0.0
    clip_threshold: float = 0.01
    epochs: int = 5
    batch_size: int = 64
    lr_defender: float = 1e-3
    lr_classifier: float = 1e-3
    lr_discriminator: float = 5e-4
    critic_steps: int = 1
    defender_steps: int = 1
    flip_binary_target: bool = True  # False: literal 1 - f(x) target instead of flipped one-hot
    seed: int = 0

    def __post_init__(self):
        if self.clip_threshold <= 0:
            raise ValueError("clip_threshold must be > 0")
        if self.lambda_d < 0 or self.lambda_h < 0 or self.hinge_p < 0:
            raise ValueError("lambda_d, lambda_h, hinge_p must be >= 0")
        if self.critic_steps < 1:
            raise ValueError("critic_steps must be >= 1")
        if self.defender_steps < 1:
            raise ValueError("defender_steps must be >= 1")


@dataclass(frozen=True)
class PretrainConfig:
    """Imitation pretraining of the defender toward a headroom envelope.

    The defender first regresses its raw (pre-rectifier) output onto
    env(t) - x_t, where env is a per-position ceiling derived from Train1:
    the victim's quiescent level everywhere, raised above the largest
    class-conditional mean (plus `headroom`) wherever the class means
    disagree. Phase 1 fits the clean network; phase 2 keeps fitting with the
    runtime randomness (dropout / input noise) active so the noisy mean
    lands on the target; phase 3 adds a class moment-matching penalty that
    equalizes the per-position mean and variance of the defended traces
    across classes; phase 4 keeps the moment penalty and adds a kernel MMD
    term between the binary class batches, closing the second-order side
    channel that the noise source would otherwise open. Each phase restarts
    Adam at a lower learning rate (`phase_lr_decay`) with its own cosine
    schedule, so later phases refine rather than overwrite the earlier fit.
    """

    epochs: int = 30
    noise_epochs: int = 60
    align_epochs: int = 50
    mmd_epochs: int = 40
    lr: float = 1e-3
    phase_lr_decay: tuple[float, ...] = (1.0, 0.5, 0.3, 0.2)
    batch_size: int = 64
    align_batch_size: int = 128
    headroom: float = 6.0
    gap_fraction: float = 0.05
    monitor_units: int = 8
    monitor_margin: float = 25.0  # monitor ceiling: max(Train1) + margin
    lambda_align: float = 0.5
    lambda_mmd: float = 200.0
    mmd_bandwidths: tuple[float, ...] = (1.0, 2.0, 4.0)  # in units of trace dimension
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.noise_epochs, self.align_epochs, self.mmd_epochs) < 0:
            raise ValueError("epoch counts must be >= 0")
        if len(self.phase_lr_decay) != 4 or min(self.phase_lr_decay) <= 0:
            raise ValueError("phase_lr_decay must be 4 positive factors")
        if self.headroom < 0 or self.lambda_align < 0:
            raise ValueError("headroom and lambda_align must be >= 0")
        if not (0.0 < self.gap_fraction < 1.0):
            raise ValueError("gap_fraction must be in (0, 1)")


def headroom_envelope(train1: Dataset, headroom: float = 6.0, gap_fraction: float = 0.05) -> np.ndarray:
    """Per-position padding ceiling derived from Train1.

    Positions where the class-conditional means disagree (gap above
    `gap_fraction` of the largest gap) are raised to a flat level
    `headroom` above the typical per-trace peak in that region (the median
    over traces of the per-trace maximum, which tracks the activity
    plateau while ignoring rare noise excursions), so the defended trace
    saturates at the ceiling regardless of the class; everywhere else the
    ceiling sits at the quiescent median, so quiet regions are left
    unpadded.
    """
    x, y = train1.as_arrays()
    means = np.stack([x[y == k].mean(axis=0) for k in range(train1.n_classes)])
    gap = means.max(axis=0) - means.min(axis=0)
    leaky = gap > gap_fraction * gap.max()
    if not leaky.any():
        return np.full(x.shape[1], float(np.median(x)))
    base = float(np.median(x[:, ~leaky])) if (~leaky).any() else float(np.median(x))
    level = float(np.median(x[:, leaky].max(axis=1))) + headroom
    return np.where(leaky, max(level, base), base)


def _mmd2(a: torch.Tensor, b: torch.Tensor, bandwidths: tuple[float, ...]) -> torch.Tensor:
    """Squared maximum mean discrepancy between two standardized trace batches.

    A multi-bandwidth RBF kernel on per-position standardized traces: driving
    this to zero aligns the full class-conditional distributions, not just
    their low-order moments, which is what kernel-based attackers exploit.
    """
    ab = torch.cat([a, b])
    mu, sd = ab.mean(dim=0, keepdim=True), ab.std(dim=0, keepdim=True) + 1e-6
    a = (a - mu) / sd
    b = (b - mu) / sd
    dim = a.shape[1]

    def k(u, v):
        d2 = torch.cdist(u, v) ** 2
        return sum(torch.exp(-d2 / (2.0 * bw * dim)) for bw in bandwidths) / len(bandwidths)

    return k(a, a).mean() + k(b, b).mean() - 2.0 * k(a, b).mean()


def _pretrain_target(envelope: np.ndarray, x: np.ndarray, channel: Channel) -> np.ndarray:
    if channel is Channel.POWER:
        # the raw output at step t is actuated at t+1: aim for env(t+1) - x_t
        env_next = np.append(envelope[1:], envelope[-1])
        return env_next[None, :] - x
    return envelope[None, :] - x


def pretrain_defender(
    defender: Defender, train1: Dataset, cfg: PretrainConfig
) -> tuple[Defender, list[dict]]:
    """Envelope-imitation pretraining; returns the defender and per-epoch stats."""
    if train1.channel is not defender.cfg.channel:
        raise ValueError("dataset and defender channel must match")
    x_np, y_np = train1.as_arrays()
    envelope = headroom_envelope(train1, cfg.headroom, cfg.gap_fraction)
    target = _pretrain_target(envelope, x_np, defender.cfg.channel)
    x_all = torch.as_tensor(x_np, dtype=torch.float32)
    t_all = torch.as_tensor(target, dtype=torch.float32)
    y_all = torch.as_tensor(y_np)
    classes = range(train1.n_classes)

    ceiling = float(x_np.max()) + cfg.monitor_margin
    # keep the monitor pre-activations in the tanh linear range across the data
    gain = 0.45 / max((ceiling - float(x_np.min())) * defender.cfg.input_scale, 1e-6)
    monitor_init(defender, cfg.monitor_units, ceiling, gain)
    torch.manual_seed(prand.derive_seed(cfg.seed, 0x9E7) & 0x7FFFFFFF)
    rng = np.random.default_rng(prand.derive_seed(cfg.seed, 0x9E8) & 0xFFFFFFFF)
    phases = (cfg.epochs, cfg.noise_epochs, cfg.align_epochs, cfg.mmd_epochs)

    log: list[dict] = []
    epoch = 0
    for phase, n_epochs in enumerate(phases):
        if n_epochs == 0:
            continue
        noisy = phase >= 1
        align = phase >= 2
        use_mmd = phase >= 3 and train1.n_classes == 2 and cfg.lambda_mmd > 0
        batch = cfg.align_batch_size if align else cfg.batch_size
        lr = cfg.lr * cfg.phase_lr_decay[phase]
        opt = torch.optim.Adam(defender.parameters(), lr=lr)
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, n_epochs, eta_min=lr / 100.0)
        for _ in range(n_epochs):
            mse_sum = align_sum = 0.0
            n_batches = 0
            for idx in np.array_split(rng.permutation(len(x_all)), max(1, len(x_all) // batch)):
                x, t, y = x_all[idx], t_all[idx], y_all[idx]
                o = defender.raw_sequence(x, train_dropout=noisy, rectify=False)
                mse = F.mse_loss(o, t)
                loss = mse
                if align:
                    xp = x + defender.perturbation_sequence(
                        o if defender.cfg.channel is Channel.POWER else torch.relu(o)
                    )
                    by_class = [xp[y == k] for k in classes]
                    if all(len(g) > 1 for g in by_class):
                        mu = torch.stack([g.mean(dim=0) for g in by_class])
                        var = torch.stack([g.var(dim=0) for g in by_class])
                        l_align = mu.var(dim=0).mean() + var.var(dim=0).mean()
                        if use_mmd:
                            loss = loss + cfg.lambda_mmd * _mmd2(
                                by_class[0], by_class[1], cfg.mmd_bandwidths
                            )
                        loss = loss + cfg.lambda_align * l_align
                        align_sum += float(l_align.detach())
                opt.zero_grad()
                loss.backward()
                opt.step()
                mse_sum += float(mse.detach())
                n_batches += 1
            sched.step()
            log.append(
                {
                    "epoch": epoch,
                    "mse": mse_sum / n_batches,
                    "align": align_sum / n_batches,
                    "noisy": noisy,
                }
            )
            epoch += 1
    return defender, log


class Discriminator(nn.Module):
    """MLP critic; one unbounded score for binary, n scores for n-class."""

    def __init__(self, signal_len: int, n_classes: int, norm: float = 256.0):
        super().__init__()
        self.norm = norm
        out_arity = 1 if n_classes == 2 else n_classes
        self.net = nn.Sequential(
            nn.Linear(signal_len, 128), nn.LeakyReLU(0.2),
            nn.Linear(128, 64), nn.LeakyReLU(0.2),
            nn.Linear(64, out_arity),
        )

    def forward(self, x):
        return self.net(x / self.norm)


def discriminator_init(signal_len: int, n_classes: int, seed: int,
                       channel: Channel = Channel.MEMORY) -> Discriminator:
    torch.manual_seed(prand.derive_seed(seed, 0xD15C) & 0x7FFFFFFF)
    norm = 256.0 if channel is Channel.MEMORY else 64.0
    return Discriminator(signal_len, n_classes, norm)


def classifier_loss(y, f_probs: torch.Tensor) -> torch.Tensor:
    """Cross-entropy -log f[y]; accepts a single probability row or a (B, n) batch."""
    f_probs = torch.as_tensor(f_probs)
    if f_probs.dim() == 1:
        return -torch.log(f_probs[int(y)] + _EPS)
    y = torch.as_tensor(y)
    picked = f_probs.gather(1, y.view(-1, 1)).squeeze(1)
    return -torch.log(picked + _EPS)


def one_to_all_wasserstein(y, d_scores: torch.Tensor) -> torch.Tensor:
    """Mean non-true-class critic score minus the true-class score.

    With a single score (binary critic) the convention is (1 - 2y) * score.
    Minimizing this drives the true class's score above the rest.
    """
    d_scores = torch.as_tensor(d_scores)
    batched = d_scores.dim() == 2
    d2 = d_scores if batched else d_scores.view(1, -1)
    yv = torch.as_tensor(y).view(-1)
    n = d2.shape[1]
    if n == 1:
        out = (1.0 - 2.0 * yv.to(d2.dtype)) * d2[:, 0]
    else:
        if n < 2:
            raise ValueError("need at least 2 critic scores")
        true = d2.gather(1, yv.view(-1, 1)).squeeze(1)
        others = (d2.sum(dim=1) - true) / (n - 1)
        out = others - true
    return out if batched else out[0]


def kl_to_uniform(f_probs: torch.Tensor) -> torch.Tensor:
    """KL(f || uniform) = sum f_i ln(n f_i); per-row for batches."""
    f_probs = torch.as_tensor(f_probs)
    n = f_probs.shape[-1]
    return (f_probs * torch.log(f_probs * n + _EPS)).sum(dim=-1)


def flipped_target_loss(y, f_probs: torch.Tensor) -> torch.Tensor:
    """Binary defender target: cross-entropy to the flipped one-hot label."""
    f_probs = torch.as_tensor(f_probs)
    if f_probs.dim() == 1:
        return -torch.log(f_probs[1 - int(y)] + _EPS)
    flipped = 1 - torch.as_tensor(y)
    return classifier_loss(flipped, f_probs)


def hinge_l1(p: torch.Tensor, hinge_p: float) -> torch.Tensor:
    """max(0, ||p||_1 - P) per signal; p is (L,) or (B, L)."""
    p = torch.as_tensor(p)
    l1 = p.abs().sum(dim=-1)
    return torch.clamp(l1 - hinge_p, min=0.0)


def defender_loss(f_probs, l_d_value, p, cfg: GanConfig, y=None) -> torch.Tensor:
    """kl(f, u) - lambda_d * L_D + lambda_h * max(0, ||p||_1 - P).

    For the binary channel the KL term is replaced by cross-entropy to the
    flipped label (y required), or by -log(1 - f[y]) when flip_binary_target
    is off.
    """
    f_probs = torch.as_tensor(f_probs)
    n = f_probs.shape[-1]
    if n == 2 and y is not None:
        if cfg.flip_binary_target:
            conf = flipped_target_loss(y, f_probs)
        else:
            picked = classifier_loss(y, f_probs)
            conf = -torch.log(1.0 - torch.exp(-picked) + _EPS)
    else:
        conf = kl_to_uniform(f_probs)
    l_d_value = torch.as_tensor(l_d_value, dtype=f_probs.dtype)
    return conf - cfg.lambda_d * l_d_value + cfg.lambda_h * hinge_l1(p, cfg.hinge_p)


def clip_weights(disc: nn.Module, threshold: float) -> nn.Module:
    """Clamp every critic parameter to [-threshold, +threshold] in place."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    with torch.no_grad():
        for p in disc.parameters():
            p.clamp_(-threshold, threshold)
    return disc


class _frozen_batchnorm_train:
    """Run a model in train mode without letting BatchNorm running stats drift.

    The defender's adversarial pass must see the same batch statistics the
    classifier trained with (eval-mode running stats are stale early on and
    give a near-zero gradient), but it must not mutate classifier state.
    """

    def __init__(self, model: nn.Module):
        self.model = model
        self.bns = [m for m in model.modules() if isinstance(m, nn.modules.batchnorm._BatchNorm)]

    def __enter__(self):
        self.was_training = self.model.training
        self.model.train()
        self.saved = [(bn.momentum, bn.num_batches_tracked.clone()) for bn in self.bns]
        for bn in self.bns:
            bn.momentum = 0.0
        return self.model

    def __exit__(self, *exc):
        for bn, (mom, nbt) in zip(self.bns, self.saved):
            bn.momentum = mom
            bn.num_batches_tracked.copy_(nbt)
        self.model.train(self.was_training)


@dataclass
class EpochRecord:
    epoch: int
    loss_classifier: float
    loss_discriminator: float
    loss_defender: float
    mean_p: float  # mean |p| per sample: cycles (memory) or watts (power)
    probe_acc: float

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "L_C": self.loss_classifier,
            "L_D": self.loss_discriminator,
            "L_G": self.loss_defender,
            "mean_p": self.mean_p,
            "probe_acc": self.probe_acc,
        }


def train_defendergan(
    defender: Defender,
    classifier: Classifier,
    discriminator: Discriminator,
    train1: Dataset,
    cfg: GanConfig,
    teacher: Defender | None = None,
    lambda_kd: float = 0.0,
) -> tuple[Defender, Classifier, list[EpochRecord]]:
    """Adversarial training on Train1; returns the trained defender, the adapted
    classifier, and per-epoch records. With a teacher and lambda_kd > 0 the
    defender loss gains lambda_kd * MSE(student p, teacher p) (distillation)."""
    x_np, y_np = train1.as_arrays()
    x_all = torch.as_tensor(x_np, dtype=torch.float32)
    y_all = torch.as_tensor(y_np)
    model = classifier.model
    if not isinstance(model, nn.Module):
        raise ValueError("DefenderGAN needs a differentiable (DNN) classifier")
    torch.manual_seed(prand.derive_seed(cfg.seed, 0x9A4) & 0x7FFFFFFF)
    rng = np.random.default_rng(prand.derive_seed(cfg.seed, 0x5E1) & 0xFFFFFFFF)

    # hold out a slice as the probe set: probe_acc then measures how well the
    # co-trained classifier generalizes against the current defender, not how
    # much per-trace noise it has memorized
    perm = rng.permutation(len(x_all))
    n_probe = max(2, len(perm) // 10) if len(perm) >= 4 else 0
    probe_idx, fit_idx = perm[:n_probe], perm[n_probe:]

    opt_g = torch.optim.Adam(defender.parameters(), lr=cfg.lr_defender)
    opt_c = torch.optim.Adam(model.parameters(), lr=cfg.lr_classifier)
    opt_d = torch.optim.RMSprop(discriminator.parameters(), lr=cfg.lr_discriminator)
    use_kd = teacher is not None and lambda_kd > 0.0
    if use_kd:
        teacher.eval()

    log: list[EpochRecord] = []
    for epoch in range(cfg.epochs):
        lc_sum = ld_sum = lg_sum = p_sum = 0.0
        n_batches = 0
        order = rng.permutation(fit_idx) if len(fit_idx) else rng.permutation(len(x_all))
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            if len(idx) < 2:
                continue
            x, y = x_all[idx], y_all[idx]

            # (1) classifier update on perturbed signals
            model.train()
            with torch.no_grad():
                p_fixed = defender.perturbation_sequence(
                    defender.raw_sequence(x, train_dropout=True)
                )
            logits = model(x + p_fixed)
            lc = F.cross_entropy(logits, y)
            opt_c.zero_grad()
            lc.backward()
            opt_c.step()

            # (2) critic updates, each followed by weight clipping
            for _ in range(cfg.critic_steps):
                ld = one_to_all_wasserstein(y, discriminator(x + p_fixed)).mean()
                opt_d.zero_grad()
                ld.backward()
                opt_d.step()
                clip_weights(discriminator, cfg.clip_threshold)

            # (3) defender update(s); classifier and critic frozen (their optimizers idle)
            for _ in range(cfg.defender_steps):
                p = defender.perturbation_sequence(defender.raw_sequence(x, train_dropout=True))
                x_adv = x + p
                with _frozen_batchnorm_train(model):
                    f_probs = torch.softmax(model(x_adv), dim=1)
                ld_val = one_to_all_wasserstein(y, discriminator(x_adv)).mean()
                lg = defender_loss(f_probs, ld_val, p, cfg, y=y).mean()
                if use_kd:
                    # imitate the teacher on the deterministic path: the shared
                    # dropout stage downstream then reproduces the teacher's
                    # noise distribution too, and the MSE has no noise floor
                    with torch.no_grad():
                        p_t = teacher.perturbation_sequence(teacher.raw_sequence(x))
                    p_det = defender.perturbation_sequence(defender.raw_sequence(x))
                    lg = lg + lambda_kd * F.mse_loss(p_det, p_t)
                if not torch.isfinite(lg):
                    raise RuntimeError(f"defender loss diverged at epoch {epoch}: {float(lg)}")
                opt_g.zero_grad()
                opt_c.zero_grad()
                opt_d.zero_grad()
                lg.backward()
                opt_g.step()

            with torch.no_grad():
                lc_sum += float(lc)
                ld_sum += float(ld)
                lg_sum += float(lg)
                p_sum += float(p.abs().mean())
            n_batches += 1

        model.eval()
        with torch.no_grad():
            xq, yq = (x_all[probe_idx], y_all[probe_idx]) if n_probe else (x_all, y_all)
            # deployment keeps the noise source live, so the probe sees it too
            pq = defender.perturbation_sequence(defender.raw_sequence(xq, train_dropout=True))
            probe_acc = float((model(xq + pq).argmax(dim=1) == yq).float().mean())
        log.append(
            EpochRecord(
                epoch=epoch,
                loss_classifier=lc_sum / n_batches,
                loss_discriminator=ld_sum / n_batches,
                loss_defender=lg_sum / n_batches,
                mean_p=p_sum / n_batches,
                probe_acc=probe_acc,
            )
        )
    classifier.fitted = True
    return defender, classifier, log
