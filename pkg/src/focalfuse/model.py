"""Feed-forward pathway classifier with hand-written backpropagation.

A pathway is a stack of ``Linear -> GELU`` encoder layers followed by a
linear classification head. One pathway is trained per modality and the two
never share parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ShapeError
from .losses import NumericEvents, batch_loss_and_grad, softmax
from .rng import substream

CHECKPOINT_VERSION = 1

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x):
    """Exact GELU, ``x * Phi(x)``."""
    x = np.asarray(x, dtype=np.float64)
    out = x * 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return float(out) if out.ndim == 0 else out


def gelu_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


@dataclass
class PathwayModel:
    """``weights[i]`` has shape (d_out, d_in). The last entry is the head."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    frozen_encoder: bool = False

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("weights and biases must be non-empty lists of equal length")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ShapeError(f"layer {i}: weight {W.shape} does not match bias {b.shape}")
            if i and W.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(
                    f"layer {i} expects {W.shape[1]} inputs but layer {i - 1} "
                    f"emits {self.weights[i - 1].shape[0]}"
                )

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def dims(self) -> list[int]:
        """Input width followed by every hidden width (the head is implied by K)."""
        return [self.input_dim] + [W.shape[0] for W in self.weights[:-1]]

    @property
    def n_encoder_layers(self) -> int:
        return len(self.weights) - 1

    def params(self) -> list[np.ndarray]:
        """Flat parameter list in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def trainable_mask(self) -> list[bool]:
        mask = []
        for i in range(len(self.weights)):
            t = not (self.frozen_encoder and i < self.n_encoder_layers)
            mask.extend((t, t))
        return mask

    def copy(self) -> "PathwayModel":
        return PathwayModel(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.frozen_encoder,
        )


def init_model(dims, n_classes: int, seed: int, frozen_encoder: bool = False) -> PathwayModel:
    """Glorot-uniform weights and zero biases.

    ``dims`` lists the input width followed by the hidden widths, so
    ``[8]`` is a head-only model on 8 features.
    """
    dims = list(dims)
    if not dims:
        raise ConfigError("dims must list at least the input width")
    if any(int(d) != d or d < 1 for d in dims):
        raise ConfigError(f"layer widths must be positive integers, got {dims}")
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    sizes = [int(d) for d in dims] + [int(n_classes)]
    rng = substream(seed, "init")
    weights, biases = [], []
    for d_in, d_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-bound, bound, size=(d_out, d_in)))
        biases.append(np.zeros(d_out))
    return PathwayModel(weights, biases, frozen_encoder)


def _check_input(model: PathwayModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise ShapeError(f"model expects {model.input_dim} features, got {x.shape[-1]}")
    return x


def _forward_cache(model: PathwayModel, X: np.ndarray):
    pre, acts = [], [X]
    h = X
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        a = h @ W.T + b
        h = gelu(a)
        pre.append(a)
        acts.append(h)
    logits = h @ model.weights[-1].T + model.biases[-1]
    return logits, pre, acts


def forward(model: PathwayModel, features) -> tuple[np.ndarray, np.ndarray]:
    """Logits and class probabilities for one feature vector or a batch."""
    x = _check_input(model, features)
    single = x.ndim == 1
    logits, _, _ = _forward_cache(model, np.atleast_2d(x))
    probs = softmax(logits)
    if single:
        return logits[0], probs[0]
    return logits, probs


def loss_and_grads(
    model: PathwayModel,
    X,
    y,
    gamma: float | None,
    *,
    literal: bool = False,
    events: NumericEvents | None = None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Per-sample losses and gradients of the batch-mean loss.

    Gradients come back in :meth:`PathwayModel.params` order. ``gamma=None``
    means cross-entropy.
    """
    X = np.atleast_2d(_check_input(model, X))
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    logits, pre, acts = _forward_cache(model, X)
    losses, dlogits = batch_loss_and_grad(logits, y, gamma, literal=literal, events=events)
    delta = dlogits / n

    n_layers = len(model.weights)
    gW: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        if model.frozen_encoder and i < n_layers - 1:
            gW[i] = np.zeros_like(model.weights[i])
            gb[i] = np.zeros_like(model.biases[i])
            continue
        gW[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i]) * gelu_grad(pre[i - 1])
    grads = []
    for W, b in zip(gW, gb):
        grads.extend((W, b))
    return losses, grads


def backward(model: PathwayModel, batch, gamma: float | None, **kw) -> list[np.ndarray]:
    """Gradients of the batch-mean loss for a list of ``(features, label)`` pairs."""
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    X = np.stack([np.asarray(f, dtype=np.float64) for f, _ in batch])
    y = np.array([int(lbl) for _, lbl in batch])
    return loss_and_grads(model, X, y, gamma, **kw)[1]


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(model: PathwayModel, path, fingerprint: str = "", extra: dict | None = None):
    payload = {
        "format": "focalfuse-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config_fingerprint": fingerprint,
        "dims": model.dims,
        "n_classes": model.n_classes,
        "frozen_encoder": model.frozen_encoder,
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    if extra:
        payload["extra"] = extra
    Path(path).write_text(json.dumps(payload, separators=(",", ":")) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[PathwayModel, dict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "focalfuse-checkpoint":
        raise ConfigError(f"{path} is not a checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {payload.get('version')}")
    model = PathwayModel(
        [np.array(W, dtype=np.float64) for W in payload["weights"]],
        [np.array(b, dtype=np.float64) for b in payload["biases"]],
        bool(payload.get("frozen_encoder", False)),
    )
    if model.dims != payload["dims"] or model.n_classes != payload["n_classes"]:
        raise ShapeError(f"{path}: stored dims disagree with parameter shapes")
    return model, payload
