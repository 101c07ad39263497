"""Epoch-driven training of one pathway and batch prediction."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import Dataset
from .errors import ConfigError
from .fusion import PredictionTable
from .losses import NumericEvents, mean_loss
from .metrics import topk_accuracy
from .model import PathwayModel, forward, loss_and_grads
from .optim import AdamW
from .rng import substream
from .schedule import GammaSchedule, gamma_at

log = logging.getLogger(__name__)

LOSSES = ("focal", "ce")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "focal"
    literal_eq2: bool = False
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 32
    epochs: int | None = None
    hidden: tuple[int, ...] = (64, 64)
    freeze_encoder: bool = False
    merge_train_val: bool = False

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.literal_eq2 and self.loss != "focal":
            raise ConfigError("literal_eq2 only applies to the focal loss")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if any(int(h) != h or h < 1 for h in self.hidden):
            raise ConfigError(f"hidden widths must be positive integers, got {list(self.hidden)}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    gamma: float | None
    train_loss: float
    val_top1: float | None
    batch_losses: list[float] = field(default_factory=list)


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)
    clamped: int = 0
    singular: int = 0
    steps: int = 0

    @property
    def losses(self) -> list[float]:
        return [r.train_loss for r in self.records]

    @property
    def gammas(self) -> list[float | None]:
        return [r.gamma for r in self.records]

    def to_dict(self) -> dict:
        return {
            "epochs": [asdict(r) for r in self.records],
            "clamped_probabilities": self.clamped,
            "singular_gradients": self.singular,
            "optimizer_steps": self.steps,
        }


def predict(model: PathwayModel, ids, X, y, batch_size: int = 256) -> PredictionTable:
    X = np.asarray(X, dtype=np.float64)
    rows = []
    for lo in range(0, len(X), batch_size):
        _, p = forward(model, X[lo : lo + batch_size])
        rows.append(np.atleast_2d(p))
    probs = np.concatenate(rows) if rows else np.zeros((0, model.n_classes))
    return PredictionTable(list(ids), np.asarray(y, dtype=np.int64), probs)


def train(
    model: PathwayModel,
    dataset: Dataset,
    schedule: GammaSchedule,
    config: TrainConfig,
    *,
    modality: str = "rgb",
    seed: int = 0,
) -> tuple[PathwayModel, TrainTrace]:
    """Train ``model`` in place for ``schedule.total_epochs`` epochs.

    The modulating factor is recomputed at the start of every epoch and held
    for all its mini-batches. Shuffling uses a fresh substream per epoch.
    """
    Z = schedule.total_epochs
    if config.epochs is not None and config.epochs != Z:
        raise ConfigError(f"config asks for {config.epochs} epochs but the schedule spans {Z}")
    splits = ("train", "val") if config.merge_train_val else ("train",)
    _, X, y = dataset.view(modality, *splits)
    if len(X) == 0:
        raise ConfigError(f"no {modality} samples in split(s) {splits}")
    if X.shape[1] != model.input_dim:
        raise ConfigError(f"dataset has {X.shape[1]} features but the model expects {model.input_dim}")
    val_ids, Xv, yv = dataset.view(modality, "val")

    if model.frozen_encoder != config.freeze_encoder:
        model.frozen_encoder = config.freeze_encoder
    opt = AdamW(config.lr, config.beta1, config.beta2, config.eps, config.weight_decay)
    mask = model.trainable_mask()
    params = model.params()
    trace = TrainTrace()
    events = NumericEvents()
    n = len(X)
    for z in range(Z):
        gamma = None if config.loss == "ce" else gamma_at(schedule, z)
        order = substream(seed, "shuffle", z).permutation(n)
        sample_losses: list[np.ndarray] = []
        batch_losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            losses, grads = loss_and_grads(
                model, X[idx], y[idx], gamma, literal=config.literal_eq2, events=events
            )
            opt.step(params, grads, mask)
            sample_losses.append(losses)
            batch_losses.append(mean_loss(losses))
        epoch_loss = mean_loss(v for chunk in sample_losses for v in chunk)
        val_top1 = None
        if len(Xv):
            val_top1 = topk_accuracy(predict(model, val_ids, Xv, yv), 1)
        trace.records.append(EpochRecord(z, gamma, epoch_loss, val_top1, batch_losses))
        log.debug("epoch %d gamma=%s loss=%.6f val_top1=%s", z, gamma, epoch_loss, val_top1)
    trace.clamped = events.clamped
    trace.singular = events.singular
    trace.steps = opt.step_count
    return model, trace
