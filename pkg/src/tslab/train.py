"""Training loops: supervised-contrastive (two-stage), the supervised
baseline, and classifier fine-tuning on a frozen encoder.

Batches hold M original samples plus M node-permuted views (2M inputs);
the view map j(i) is an involution and labels are preserved.  Stage one of
the contrastive path minimizes the supervised contrastive loss over the
encoder; stage two freezes the encoder and trains the classifier with
cross-entropy on the same batch pipeline.  The supervised baseline trains
encoder and classifier jointly with cross-entropy.  Everything is
deterministic per seed: one PCG64 stream drives shuffling and augmentation,
parameter initialization derives from the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor, cross_entropy, l2_normalize_rows, softmax_probs, supcon_loss
from .features import GedfSample
from .model import (ClassifierParams, EncoderParams, classify, encode,
                    init_classifier, init_encoder, predict_logits, set_trainable)

STAGES = ("scl_encoder", "classifier", "sl_baseline", "finetune")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.07
    learning_rate: float = 1e-3
    batch_size: int = 128          # M originals per batch (2M with views)
    epochs: int = 30
    seed: int = 0
    stage: str = "scl_encoder"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass
class HistoryRow:
    stage: str
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float                 # nan during encoder-only epochs


def history_table(rows) -> str:
    lines = [f"{'stage':<12} {'epoch':>5} {'train_loss':>14} {'val_loss':>14} {'val_acc':>8}"]
    for r in rows:
        acc = f"{r.val_acc:.4f}" if not math.isnan(r.val_acc) else "-"
        lines.append(f"{r.stage:<12} {r.epoch:>5} {r.train_loss:>14.6f} {r.val_loss:>14.6f} {acc:>8}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

def augment(sample: GedfSample, rng: np.random.Generator) -> GedfSample:
    """Node-id augmentation: permute the rows, keep label and metadata."""
    if sample.matrix.shape[0] < 2:
        raise ValueError("need at least 2 rows to permute")
    perm = rng.permutation(sample.matrix.shape[0])
    return replace(sample, matrix=sample.matrix[perm])


def augment_batch(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independently permute the rows of each sample matrix in (B, n, N)."""
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = x[i][rng.permutation(x.shape[1])]
    return out


def make_view_batch(x: np.ndarray, y: np.ndarray, rng: np.random.Generator):
    """Originals + views: (2M, n, N), labels (2M,), pairing j with j(j(i)) = i."""
    m = x.shape[0]
    views = augment_batch(x, rng)
    inputs = np.concatenate([x, views], axis=0)
    labels = np.concatenate([y, y])
    pairing = np.concatenate([np.arange(m, 2 * m), np.arange(0, m)])
    return inputs, labels, pairing


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adaptive per-parameter first-order optimizer."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _check_finite(loss: float, context: str) -> float:
    if not math.isfinite(loss):
        raise TrainingDivergedError(f"{context}: loss became {loss}")
    return loss


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for k in range(0, n, batch_size):
        yield order[k:k + batch_size]


# ---------------------------------------------------------------------------
# Dataset views (arrays in, arrays out)
# ---------------------------------------------------------------------------

@dataclass
class ArrayDataset:
    x: np.ndarray                  # (B, n, N)
    y: np.ndarray                  # (B,)
    topology_ids: tuple = ()

    def __len__(self) -> int:
        return len(self.y)


def stack_samples(samples) -> ArrayDataset:
    samples = list(samples)
    x = np.stack([s.matrix for s in samples]).astype(np.float32)
    y = np.array([s.label for s in samples], dtype=int)
    topo = tuple(s.topology_id for s in samples)
    return ArrayDataset(x=x, y=y, topology_ids=topo)


# ---------------------------------------------------------------------------
# Training stages
# ---------------------------------------------------------------------------

def _encoder_stage(enc, train: ArrayDataset, val: ArrayDataset, config: TrainConfig,
                   history: list, augment_views: bool = True) -> None:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))
    val_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 12]))
    val_in, val_lab, val_pair = make_view_batch(val.x, val.y, val_rng)
    opt = Adam(enc.params.values(), lr=config.learning_rate)
    for epoch in range(1, config.epochs + 1):
        total, batches = 0.0, 0
        for idx in _epoch_batches(len(train), config.batch_size, rng):
            xb, yb = train.x[idx], train.y[idx]
            if augment_views:
                inputs, labels, pairing = make_view_batch(xb, yb, rng)
            else:
                inputs, labels, pairing = xb, yb, None
            if np.unique(labels).size < 2 and len(labels) < 2:
                continue
            z = l2_normalize_rows(encode(enc, inputs))
            loss = supcon_loss(z, labels, pairing, tau=config.temperature)
            loss.backward()
            opt.step()
            total += _check_finite(float(loss.data), "supcon stage")
            batches += 1
        with _frozen(enc):
            zv = l2_normalize_rows(encode(enc, val_in))
            val_loss = float(supcon_loss(zv, val_lab, val_pair, tau=config.temperature).data)
        history.append(HistoryRow("scl_encoder", epoch, total / max(batches, 1),
                                  val_loss, float("nan")))


class _frozen:
    def __init__(self, *containers):
        self.containers = containers
        self.saved = []

    def __enter__(self):
        self.saved = [[t.requires_grad for t in c.params.values()] for c in self.containers]
        for c in self.containers:
            set_trainable(c, False)
        return self

    def __exit__(self, *exc):
        for c, flags in zip(self.containers, self.saved):
            for t, f in zip(c.params.values(), flags):
                t.requires_grad = f
        return False


def _classifier_stage(enc, clf, train: ArrayDataset, val: ArrayDataset,
                      config: TrainConfig, history: list, stage_name: str = "classifier",
                      augment_views: bool = True) -> None:
    """Cross-entropy training of the classifier on a frozen encoder."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 21]))
    opt = Adam(clf.params.values(), lr=config.learning_rate)
    with _frozen(enc):
        for epoch in range(1, config.epochs + 1):
            total, batches = 0.0, 0
            for idx in _epoch_batches(len(train), config.batch_size, rng):
                xb, yb = train.x[idx], train.y[idx]
                if augment_views:
                    inputs, labels, _ = make_view_batch(xb, yb, rng)
                else:
                    inputs, labels = xb, yb
                z = Tensor(encode(enc, inputs).data)   # frozen: cut the graph
                loss = cross_entropy(classify(clf, z), labels)
                loss.backward()
                opt.step()
                total += _check_finite(float(loss.data), stage_name)
                batches += 1
            val_loss, val_acc = _eval_ce(enc, clf, val)
            history.append(HistoryRow(stage_name, epoch, total / max(batches, 1),
                                      val_loss, val_acc))


def _eval_ce(enc, clf, ds: ArrayDataset) -> tuple[float, float]:
    logits = predict_logits(enc, clf, ds.x)
    loss = float(cross_entropy(Tensor(logits), ds.y).data)
    acc = float(np.mean(logits.argmax(axis=1) == ds.y)) if len(ds) else float("nan")
    return loss, acc


def train_scl(train: ArrayDataset, val: ArrayDataset, config: TrainConfig,
              augment_views: bool = True):
    """Two-stage contrastive training; returns (encoder, classifier, history)."""
    enc = init_encoder(train.x.shape[1:], config.seed)
    clf = init_classifier(config.seed)
    history: list[HistoryRow] = []
    _encoder_stage(enc, train, val, config, history, augment_views)
    _classifier_stage(enc, clf, train, val, config, history, augment_views=augment_views)
    return enc, clf, history


def train_sl(train: ArrayDataset, val: ArrayDataset, config: TrainConfig,
             augment_views: bool = True):
    """Single-stage supervised baseline: joint encoder+classifier cross-entropy."""
    enc = init_encoder(train.x.shape[1:], config.seed)
    clf = init_classifier(config.seed)
    history: list[HistoryRow] = []
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 31]))
    opt = Adam(list(enc.params.values()) + list(clf.params.values()),
               lr=config.learning_rate)
    for epoch in range(1, config.epochs + 1):
        total, batches = 0.0, 0
        for idx in _epoch_batches(len(train), config.batch_size, rng):
            xb, yb = train.x[idx], train.y[idx]
            if augment_views:
                inputs, labels, _ = make_view_batch(xb, yb, rng)
            else:
                inputs, labels = xb, yb
            loss = cross_entropy(classify(clf, encode(enc, inputs)), labels)
            loss.backward()
            opt.step()
            total += _check_finite(float(loss.data), "sl baseline")
            batches += 1
        val_loss, val_acc = _eval_ce(enc, clf, val)
        history.append(HistoryRow("sl_baseline", epoch, total / max(batches, 1),
                                  val_loss, val_acc))
    return enc, clf, history


def finetune(pretrained: EncoderParams, new_train: ArrayDataset, val: ArrayDataset,
             config: TrainConfig):
    """Fresh classifier on a frozen pretrained encoder; encoder is untouched."""
    if len(new_train) == 0:
        raise ValueError("empty fine-tune set")
    clf = init_classifier(config.seed)
    history: list[HistoryRow] = []
    _classifier_stage(pretrained, clf, new_train, val, config, history,
                      stage_name="finetune")
    return clf, history


def predict(enc: EncoderParams, clf: ClassifierParams, x: np.ndarray):
    """(predicted labels, probability of class 1)."""
    logits = predict_logits(enc, clf, x)
    return logits.argmax(axis=1), softmax_probs(logits)[:, 1]
