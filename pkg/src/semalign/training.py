"""Cosine-distance training of the student against frozen teacher anchors.

Two parameter groups with separate learning rates mirror the scheme of
pretrained-encoder pipelines: the per-frame encoder (W1, b1, W2, b2) trains
slowly, the pooling and projection head (Wa, ba, v, P, bp) trains fast. Both
groups use Adam; the teacher is a pure function of the manifest and is never
updated.

Config file: ``key=value`` lines with keys exactly epochs, batch_size,
lr_encoder, lr_pool, beta1, beta2, eps, seed, checkpoint_every.
Report CSV: ``epoch,mean_loss,heldout_mean_cosine``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Manifest, load_frame_sequence, teacher_embed, atomic_write_text
from .errors import ConfigurationError, NumericError
from .model import ModelParams, ParamGrads, backward, forward, save_model
from .prng import SplitMix64

ENCODER_GROUP = ("W1", "b1", "W2", "b2")
POOL_GROUP = ("Wa", "ba", "v", "P", "bp")

_CONFIG_KEYS = (
    "epochs",
    "batch_size",
    "lr_encoder",
    "lr_pool",
    "beta1",
    "beta2",
    "eps",
    "seed",
    "checkpoint_every",
)


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """(u.v)/(|u||v|), clamped to [-1, 1]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_loss(s: np.ndarray, t: np.ndarray) -> float:
    """Cosine distance 1 - cos(s, t), in [0, 2]."""
    return 1.0 - cosine_similarity(s, t)


def loss_grad(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """d cosine_loss / d s = -(t/(|s||t|) - (s.t) s/(|s|^3 |t|))."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.shape != t.shape:
        raise ValueError(f"dimension mismatch: {s.shape} vs {t.shape}")
    ns = np.linalg.norm(s)
    nt = np.linalg.norm(t)
    if ns == 0.0 or nt == 0.0:
        raise ValueError("cosine loss gradient is undefined for zero-norm vectors")
    return -(t / (ns * nt) - np.dot(s, t) * s / (ns**3 * nt))


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr_encoder: float = 1e-3
    lr_pool: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables checkpoints

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.lr_encoder < 0 or self.lr_pool < 0:
            raise ConfigurationError("learning rates must be >= 0")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigurationError("beta1 and beta2 must lie in (0, 1)")
        if self.eps <= 0:
            raise ConfigurationError("eps must be > 0")
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every must be >= 0")


def load_train_config(path: Path) -> TrainConfig:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = raw.strip()
    cfg = TrainConfig()
    ints = {"epochs", "batch_size", "seed", "checkpoint_every"}
    for key, raw in values.items():
        setattr(cfg, key, int(raw) if key in ints else float(raw))
    cfg.validate()
    return cfg


def write_train_config(cfg: TrainConfig, path: Path) -> None:
    lines = [f"{key}={getattr(cfg, key)}" for key in _CONFIG_KEYS]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    heldout_cosines: list[float] = field(default_factory=list)
    final_params_path: str | None = None


def write_report_csv(report: TrainReport, path: Path) -> None:
    lines = ["epoch,mean_loss,heldout_mean_cosine"]
    for i, (loss, cos) in enumerate(zip(report.epoch_losses, report.heldout_cosines), 1):
        lines.append(f"{i},{loss:.8e},{cos:.8e}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


class Adam:
    """Adam over named parameter arrays with a per-group learning rate."""

    def __init__(self, params: ModelParams, lr_by_name: dict[str, float], cfg: TrainConfig):
        self.lr_by_name = lr_by_name
        self.beta1 = cfg.beta1
        self.beta2 = cfg.beta2
        self.eps = cfg.eps
        self.step_count = 0
        self.m = {name: np.zeros_like(value) for name, value in params.items()}
        self.v = {name: np.zeros_like(value) for name, value in params.items()}

    def step(self, params: ModelParams, grads: ParamGrads) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            getattr(params, name).__isub__(self.lr_by_name[name] * update)


def _load_training_data(manifest: Manifest):
    """Frames and teacher anchors per entry, cached in manifest order."""
    data = []
    teacher_cache: dict[tuple[int, ...], np.ndarray] = {}
    for entry in manifest.entries:
        seq = load_frame_sequence(manifest, entry)
        t = teacher_cache.get(entry.concepts)
        if t is None:
            t = teacher_embed(entry.concepts, manifest.d_e, manifest.seed)
            teacher_cache[entry.concepts] = t
        data.append((seq, t))
    return data


def mean_heldout_cosine(params: ModelParams, manifest: Manifest) -> float:
    data = _load_training_data(manifest)
    total = 0.0
    for seq, t in data:
        s, _, _ = forward(params, seq)
        total += cosine_similarity(s, t)
    return total / len(data)


def train(
    config: TrainConfig,
    manifest: Manifest,
    params: ModelParams,
    heldout: Manifest | None = None,
    out_dir: Path | None = None,
) -> tuple[ModelParams, TrainReport]:
    """Run the full optimization; returns updated params and the report.

    Batches are canonical-manifest-order slices of batch_size utterances;
    their visit order is reshuffled each epoch by the seeded PRNG. The batch
    gradient is the mean of per-utterance gradients. Input params are not
    mutated. A non-finite loss aborts with the offending epoch and batch.
    """
    config.validate()
    if not manifest.entries:
        raise ConfigurationError("cannot train on an empty manifest")

    params = params.copy()
    data = _load_training_data(manifest)
    heldout_data = _load_training_data(heldout) if heldout and heldout.entries else None

    batches = [data[i : i + config.batch_size] for i in range(0, len(data), config.batch_size)]
    lr_by_name = {name: config.lr_encoder for name in ENCODER_GROUP}
    lr_by_name.update({name: config.lr_pool for name in POOL_GROUP})
    optimizer = Adam(params, lr_by_name, config)
    rng = SplitMix64(config.seed)
    report = TrainReport()

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, config.epochs + 1):
        order = list(range(len(batches)))
        rng.shuffle(order)
        epoch_loss_sum = 0.0
        for batch_index in order:
            batch = batches[batch_index]
            grads = ParamGrads.zeros_like(params)
            batch_loss = 0.0
            for seq, t in batch:
                s, h, record = forward(params, seq)
                batch_loss += cosine_loss(s, t)
                grads.add_(backward(params, seq, h, record, loss_grad(s, t)))
            if not math.isfinite(batch_loss):
                raise NumericError(
                    f"non-finite loss in epoch {epoch}, batch {batch_index}"
                )
            grads.scale_(1.0 / len(batch))
            optimizer.step(params, grads)
            epoch_loss_sum += batch_loss

        report.epoch_losses.append(epoch_loss_sum / len(data))
        if heldout_data is None:
            report.heldout_cosines.append(float("nan"))
        else:
            total = 0.0
            for seq, t in heldout_data:
                s, _, _ = forward(params, seq)
                total += cosine_similarity(s, t)
            report.heldout_cosines.append(total / len(heldout_data))

        if (
            out_dir is not None
            and config.checkpoint_every > 0
            and epoch % config.checkpoint_every == 0
        ):
            save_model(params, out_dir / f"checkpoint_ep{epoch:04d}.model")

    if out_dir is not None:
        final_path = out_dir / "final.model"
        save_model(params, final_path)
        report.final_params_path = str(final_path)
    return params, report
