"""Siamese training loop with early stopping, plus pair embedding for evaluation.

The twin (or triple) branches share one parameter store: the members of a
batch are stacked into a single forward pass of 2N (or 3N) inputs and the
loss gradients are concatenated for one backward pass.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ArchMismatch, DivergedLoss, EmptyManifest, ShapeMismatch
from ..neuralcore import Module, OptimizerState, load_state, optimizer_step, read_checkpoint, save_checkpoint
from .losses import contrastive_loss, dist_euclidean, triplet_loss
from .models import EmbeddingNet, ModelConfig, build_model


@dataclass
class TrainConfig:
    optimizer: str = "sgd"  # sgd | momentum | adam
    lr: float = 0.001
    batch_size: int = 32
    epochs: int = 20
    margin: float = 1.0
    loss: str = "contrastive"  # contrastive | triplet
    patience: int = 5
    min_delta: float = 0.0
    seed: int = 0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    bias_correction: bool = False

    def __post_init__(self):
        self.loss = self.loss.lower()
        self.optimizer = self.optimizer.lower()
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.loss not in ("contrastive", "triplet"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.optimizer not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(
            self.optimizer, lr=self.lr, beta=self.momentum, beta1=self.beta1, beta2=self.beta2,
            eps=self.eps, bias_correction=self.bias_correction,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float


@dataclass
class TrainResult:
    model: EmbeddingNet
    history: list[EpochRecord]
    best_epoch: int
    stopped_early: bool
    checkpoint: Path | None = None
    step_losses: list[float] = field(default_factory=list)

    @property
    def best_valid_losses(self) -> list[float]:
        """Running minimum of the validation loss, one value per epoch."""
        return list(np.minimum.accumulate([h.valid_loss for h in self.history]))


def _keys(sample) -> tuple[str, ...]:
    if hasattr(sample, "keys"):
        return tuple(sample.keys)
    return tuple(sample[:-1]) if len(sample) == 3 and not isinstance(sample[2], str) else tuple(sample)


def _label(sample) -> float:
    return float(sample.label if hasattr(sample, "label") else sample[2])


def _stack(store, keys, rng=None):
    if rng is not None and hasattr(store, "augment"):
        return np.stack([store.augment(k, rng) for k in keys])
    return np.stack([np.asarray(store[k], dtype=np.float64) for k in keys])


def _batch_loss(model, store, batch, cfg: TrainConfig, train: bool, rng=None, aug_rng=None):
    """Loss and (when training) gradients for one batch of pairs or triplets."""
    n = len(batch)
    keys = [_keys(s) for s in batch]
    arity = 2 if cfg.loss == "contrastive" else 3
    if any(len(k) != arity for k in keys):
        raise ShapeMismatch(f"{cfg.loss} loss needs {arity}-tuples of samples")
    flat = [k[i] for i in range(arity) for k in keys]
    x = _stack(store, flat, aug_rng if train else None)
    h = model.forward(x, train=train, rng=rng)
    parts = [h[i * n : (i + 1) * n] for i in range(arity)]
    if cfg.loss == "contrastive":
        y = np.array([_label(s) for s in batch])
        loss, grads = contrastive_loss(parts[0], parts[1], y, cfg.margin)
    else:
        loss, grads = triplet_loss(parts[0], parts[1], parts[2], cfg.margin)
    return loss, np.concatenate(grads)


def evaluate_loss(model, store, samples, cfg: TrainConfig, batch_size: int | None = None) -> float:
    """Sample-weighted mean loss in eval mode."""
    bs = batch_size or max(cfg.batch_size, 1)
    total = 0.0
    for i in range(0, len(samples), bs):
        batch = samples[i : i + bs]
        loss, _ = _batch_loss(model, store, batch, cfg, train=False)
        total += loss * len(batch)
    return total / len(samples)


def _snapshot(model):
    return [p.data.copy() for p in model.parameters()], {k: v.copy() for k, v in model.named_buffers()}


def _restore(model, snap):
    params, buffers = snap
    for p, v in zip(model.parameters(), params):
        p.data[...] = v
    load_state(model, {**{n: t.data for n, t in model.named_parameters()}, **buffers})


def write_history(path, history: list[EpochRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "valid_loss"])
        for h in history:
            w.writerow([h.epoch, repr(h.train_loss), repr(h.valid_loss)])
    return path


def read_history(path) -> list[EpochRecord]:
    with open(path, newline="") as fh:
        return [EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["valid_loss"])) for r in csv.DictReader(fh)]


def train(
    model_cfg: ModelConfig | Module,
    train_cfg: TrainConfig,
    train_samples,
    valid_samples,
    store,
    out_dir=None,
    log=None,
) -> TrainResult:
    """Train a shared-weight embedding network.

    ``train_samples``/``valid_samples`` hold pairs (label 0 genuine, 1 forged
    or cross-writer) for the contrastive loss, triplets for the triplet loss.
    Early stopping watches the validation loss (the training loss when no
    validation samples are given). The best-validation weights are restored
    before returning and, with ``out_dir``, written to ``model.ckpt`` next to
    ``history.csv``.
    """
    train_samples = list(train_samples)
    valid_samples = list(valid_samples or [])
    if not train_samples:
        raise EmptyManifest("no training samples")
    model = model_cfg if isinstance(model_cfg, Module) else build_model(model_cfg)
    root = np.random.SeedSequence(train_cfg.seed)
    shuffle_rng, dropout_rng, aug_rng = (np.random.default_rng(s) for s in root.spawn(3))
    state = train_cfg.optimizer_state()
    params = model.parameters()

    history: list[EpochRecord] = []
    step_losses: list[float] = []
    best, best_epoch, bad, snap = math.inf, 0, 0, _snapshot(model)
    stopped = False
    bs = train_cfg.batch_size
    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_samples))
        running, seen = 0.0, 0
        for i in range(0, len(order), bs):
            idx = order[i : i + bs]
            if len(idx) < 2:
                continue  # batch norm needs two samples; the leftover is reshuffled next epoch
            batch = [train_samples[j] for j in idx]
            model.zero_grad()
            loss, grad = _batch_loss(model, store, batch, train_cfg, True, dropout_rng, aug_rng)
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}")
            model.backward(grad)
            optimizer_step(params, state)
            step_losses.append(loss)
            running += loss * len(batch)
            seen += len(batch)
        train_loss = running / max(seen, 1)
        valid_loss = evaluate_loss(model, store, valid_samples, train_cfg) if valid_samples else train_loss
        if not np.isfinite(valid_loss):
            raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
        history.append(EpochRecord(epoch, float(train_loss), float(valid_loss)))
        if log is not None:
            log(f"epoch {epoch}: train {train_loss:.6f} valid {valid_loss:.6f}")
        if valid_loss < best - train_cfg.min_delta:
            best, best_epoch, bad, snap = valid_loss, epoch, 0, _snapshot(model)
        else:
            bad += 1
            if bad >= train_cfg.patience:
                stopped = True
                break
    _restore(model, snap)

    ckpt = None
    if out_dir is not None:
        out = Path(out_dir)
        write_history(out / "history.csv", history)
        cfg = getattr(model, "config", None)
        ckpt = save_checkpoint(out / "model.ckpt", model, checkpoint_config(cfg, train_cfg))
    return TrainResult(model, history, best_epoch, stopped, ckpt, step_losses)


def checkpoint_config(model_cfg: ModelConfig | None, train_cfg: TrainConfig | None = None) -> dict:
    cfg = {"model": model_cfg.to_dict()} if model_cfg is not None else {}
    if train_cfg is not None:
        cfg["train"] = train_cfg.to_dict()
    return cfg


def load_model(path) -> EmbeddingNet:
    """Rebuild the network described by a checkpoint and load its weights."""
    cfg, arrays = read_checkpoint(path)
    if "model" not in cfg:
        raise ArchMismatch("checkpoint carries no model config")
    model = build_model(cfg["model"])
    load_state(model, arrays)
    return model


def embed_keys(model: Module, store, keys, batch_size: int = 32) -> dict[str, np.ndarray]:
    """Eval-mode embeddings for every distinct key, in first-seen order."""
    unique = list(dict.fromkeys(keys))
    out = {}
    for i in range(0, len(unique), batch_size):
        chunk = unique[i : i + batch_size]
        x = _stack(store, chunk)
        expected = getattr(model, "input_shape", None)
        if expected is not None and tuple(x.shape[1:]) != tuple(expected):
            raise ArchMismatch(f"inputs of shape {x.shape[1:]} do not fit a network expecting {tuple(expected)}")
        for k, h in zip(chunk, model.forward(x, train=False)):
            out[k] = h
    return out


def embed_pairs(model, pairs, store, batch_size: int = 32) -> list[tuple[float, int]]:
    """``(distance, label)`` per pair, in input order. ``model`` may be a checkpoint path."""
    if not isinstance(model, Module):
        model = load_model(model)
    pairs = list(pairs)
    keys = [k for p in pairs for k in _keys(p)[:2]]
    emb = embed_keys(model, store, keys, batch_size)
    out = []
    for p in pairs:
        a, b = _keys(p)[:2]
        out.append((float(dist_euclidean(emb[a], emb[b])), int(_label(p))))
    return out
