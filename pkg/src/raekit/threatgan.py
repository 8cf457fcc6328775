"""Discriminator-based detectability attack on replaced sections.

An adversary holding a user's gray-listed windows trains a GAN on them, then
uses the discriminator to tell real gray windows from RAE replacements.  The
GAN works on raw-unit windows and normalizes them with statistics fitted on
its own training data, since that is all an attacker would have.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import nncore
from .dataio import NormStats, WindowSet, fit_normalizer, normalize_windows

DEFAULT_SNAPSHOTS = (1, 5, 10, 20, 30, 50, 70, 100)
CATEGORIES = ("real_gray", "fake_gray", "generated", "top10_generated")


@dataclass
class GanConfig:
    noise_dim: int = 64
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 2e-4
    d_learning_rate: float | None = 5e-4  # None means learning_rate
    d_steps: int = 3  # discriminator updates per generator update
    beta1: float = 0.5
    seed: int = 0
    snapshots: tuple = DEFAULT_SNAPSHOTS

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "snapshots" in known:
            known["snapshots"] = tuple(known["snapshots"])
        return cls(**known)


@dataclass
class Gan:
    generator: nncore.Network
    discriminator: nncore.Network
    norm: NormStats
    k: int
    d: int
    config: GanConfig
    # epoch -> (generator copy, discriminator copy)
    snapshots: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def snapshot(self, epoch=None):
        """The (generator, discriminator) pair at ``epoch``; the latest one by default."""
        if epoch is None:
            epoch = max(self.snapshots)
        return self.snapshots[epoch]

    def score(self, windows, epoch=None):
        """Discriminator probability that each raw-unit window is real."""
        _, disc = self.snapshot(epoch)
        x = normalize_windows(np.asarray(windows, dtype=np.float64), self.norm)
        return disc.forward(x.reshape(len(x), -1))[:, 0]

    def generate(self, n, seed=0, epoch=None):
        """Raw-unit windows drawn from the generator."""
        gen, _ = self.snapshot(epoch)
        z = np.random.default_rng(seed).normal(size=(n, self.config.noise_dim))
        x = gen.forward(z).reshape(n, self.k, self.d)
        return x * self.norm.std[:, None] + self.norm.mean[:, None]


class GanDivergenceError(RuntimeError):
    def __init__(self, epoch):
        super().__init__(f"GAN training produced NaN at epoch {epoch}")
        self.epoch = epoch


def build_generator(noise_dim, inp, rng):
    return nncore.Network.build([noise_dim, max(inp // 4, 1), inp], ["selu", "linear"], rng=rng)


def build_discriminator(inp, rng):
    return nncore.Network.build([inp, max(inp // 4, 1), 1], ["selu", "sigmoid"], rng=rng)


def train_gan(gray, config: GanConfig | None = None, on_epoch=None) -> Gan:
    """Train a GAN on raw-unit gray windows (WindowSet or (n, k, d) array).

    Each step makes ``d_steps`` discriminator updates on a real and a generated
    batch, then one generator update with the non-saturating loss -log D(G(z)).
    """
    config = config or GanConfig()
    values = gray.values if isinstance(gray, WindowSet) else np.asarray(gray, dtype=np.float64)
    if len(values) == 0:
        raise ValueError("cannot train a GAN without gray-listed windows")
    n, k, d = values.shape
    inp = k * d
    norm = fit_normalizer(WindowSet(values, np.zeros(n, dtype=np.int64)))
    real = normalize_windows(values, norm).reshape(n, inp)

    rng = np.random.default_rng(config.seed)
    gen = build_generator(config.noise_dim, inp, rng)
    disc = build_discriminator(inp, rng)
    opt_g = nncore.Optimizer(gen.parameters(), "adam", config.learning_rate, beta1=config.beta1)
    d_lr = config.d_learning_rate or config.learning_rate
    opt_d = nncore.Optimizer(disc.parameters(), "adam", d_lr, beta1=config.beta1)

    gan = Gan(gen, disc, norm, k, d, config)
    wanted = set(config.snapshots) | {config.epochs}
    for epoch in range(1, config.epochs + 1):
        d_total = g_total = 0.0
        steps = 0
        for idx in nncore.iterate_minibatches(n, config.batch_size, rng):
            m = len(idx)
            labels = np.concatenate([np.ones((m, 1)), np.zeros((m, 1))])
            for _ in range(config.d_steps):
                z = rng.normal(size=(m, config.noise_dim))
                batch = np.concatenate([real[idx], gen.forward(z)])
                d_loss, d_grads = disc.backprop(batch, labels, "binary_cross_entropy")
                opt_d.step(d_grads)

            z = rng.normal(size=(m, config.noise_dim))
            fake = gen.forward(z)
            p = disc.forward(fake)
            g_loss = nncore.loss_eval("binary_cross_entropy", p, np.ones_like(p))
            # sigmoid + BCE against 1: dL/d(logit) = (p - 1) / m
            _, _, dx = disc.backward_from(fake, (p - 1.0) / m)
            _, g_grads, _ = gen.backward_from(z, dx)
            opt_g.step(g_grads)

            if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
                raise GanDivergenceError(epoch)
            d_total += d_loss
            g_total += g_loss
            steps += 1
        gan.history.append((d_total / steps, g_total / steps))
        if epoch in wanted:
            gan.snapshots[epoch] = (gen.copy(), disc.copy())
        if on_epoch is not None:
            on_epoch(epoch, gan.history[-1])
    return gan


def _accuracies(real_scores, fake_scores):
    real_acc = float(np.mean(real_scores > 0.5)) if len(real_scores) else float("nan")
    fake_acc = float(np.mean(fake_scores <= 0.5)) if len(fake_scores) else float("nan")
    return real_acc, fake_acc


def top_decile(scores):
    """Highest-scored tenth (at least one element) of ``scores``."""
    scores = np.asarray(scores)
    n_top = max(1, int(np.ceil(0.1 * len(scores))))
    return np.sort(scores)[::-1][:n_top]


def four_way_eval(gan: Gan, real_gray, fake_gray, n_generated=1000, epoch=None, seed=0):
    """Discriminator accuracy on real, replaced, generated and top-decile generated windows.

    Real windows count as correct when scored above 0.5, all others when
    scored at or below 0.5.
    """
    real_gray = np.asarray(real_gray, dtype=np.float64)
    fake_gray = np.asarray(fake_gray, dtype=np.float64)
    if len(real_gray) == 0 or len(fake_gray) == 0 or n_generated < 1:
        raise ValueError("four-way evaluation needs non-empty real, fake and generated sets")
    real_acc, fake_acc = _accuracies(gan.score(real_gray, epoch), gan.score(fake_gray, epoch))
    gen_scores = gan.score(gan.generate(n_generated, seed=seed, epoch=epoch), epoch)
    return {
        "real_gray": real_acc,
        "fake_gray": fake_acc,
        "generated": float(np.mean(gen_scores <= 0.5)),
        "top10_generated": float(np.mean(top_decile(gen_scores) <= 0.5)),
    }


def cross_user_eval(gan: Gan, real_gray, fake_gray, epoch=None):
    """Real/fake accuracy of a discriminator trained on another user's gray data.

    ``non_informative`` flags the case where the discriminator rejects most
    real windows as well as the fakes, so its fake detections carry no signal.
    """
    real_gray = np.asarray(real_gray, dtype=np.float64)
    fake_gray = np.asarray(fake_gray, dtype=np.float64)
    if len(real_gray) == 0 or len(fake_gray) == 0:
        raise ValueError("cross-user evaluation needs non-empty real and fake sets")
    real_acc, fake_acc = _accuracies(gan.score(real_gray, epoch), gan.score(fake_gray, epoch))
    return {"real_gray": real_acc, "fake_gray": fake_acc, "non_informative": real_acc < 0.5 and fake_acc > 0.5}


@dataclass
class AttackReport:
    scenario: str
    rows: dict = field(default_factory=dict)  # epoch -> {category: accuracy}

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cats = [c for c in CATEGORIES if any(c in r for r in self.rows.values())]
        writer.writerow(["epoch", *cats])
        for epoch in sorted(self.rows):
            writer.writerow([epoch, *[f"{self.rows[epoch][c]:.6f}" for c in cats]])
        return buf.getvalue()

    def final(self):
        return self.rows[max(self.rows)]


def attack_report(gan: Gan, real_gray, fake_gray, scenario="same_user", n_generated=1000, seed=0):
    """Evaluate every stored snapshot; cross-user runs report real/fake only."""
    report = AttackReport(scenario)
    for epoch in sorted(gan.snapshots):
        if scenario == "cross_user":
            row = cross_user_eval(gan, real_gray, fake_gray, epoch)
            row.pop("non_informative")
        else:
            row = four_way_eval(gan, real_gray, fake_gray, n_generated, epoch, seed)
        report.rows[epoch] = row
    return report
