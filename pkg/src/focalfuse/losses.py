"""Cross-entropy and focal objectives with analytic gradients.

Two focal forms are provided. The default scores only the ground-truth class,
``-(1 - p_y)**gamma * log(p_y)``. The ``literal`` form sums
``-(1 - p_j)**gamma * log(p_j)`` over every class j; it is kept for
comparison only, because under a softmax it cannot be minimised (every
``p_j`` is pushed towards 1 at once).

Probabilities are clamped to ``[PROB_FLOOR, 1]`` before taking logs. Callers
that care how often that happens pass a :class:`NumericEvents` and read the
counters afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12


@dataclass
class NumericEvents:
    clamped: int = 0
    singular: int = 0

    def merge(self, other: "NumericEvents") -> None:
        self.clamped += other.clamped
        self.singular += other.singular


def _clamp(q, events: NumericEvents | None):
    q = np.asarray(q, dtype=np.float64)
    low = q < PROB_FLOOR
    if events is not None:
        events.clamped += int(np.count_nonzero(low))
    return np.clip(q, PROB_FLOOR, 1.0)


def _check_label(p: np.ndarray, y: int) -> None:
    if not 0 <= y < p.shape[-1]:
        raise IndexError(f"label {y} out of range for {p.shape[-1]} classes")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; works on 1-D or 2-D input."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def ce_loss(p, y: int, events: NumericEvents | None = None) -> float:
    p = np.asarray(p, dtype=np.float64)
    _check_label(p, y)
    q = float(_clamp(p[y], events))
    return -math.log(q)


def focal_loss(p, y: int, gamma: float, events: NumericEvents | None = None) -> float:
    p = np.asarray(p, dtype=np.float64)
    _check_label(p, y)
    q = float(_clamp(p[y], events))
    return (1.0 - q) ** gamma * -math.log(q)


def focal_loss_literal(p, gamma: float, events: NumericEvents | None = None) -> float:
    """All-class sum without the one-hot factor; label-independent by construction."""
    q = _clamp(p, events)
    return float(np.sum((1.0 - q) ** gamma * -np.log(q)))


def focal_grad_prob(p, y: int, gamma: float, events: NumericEvents | None = None) -> float:
    """d focal_loss / d p[y]. Derivatives w.r.t. the other entries are zero.

    At ``p[y] == 1`` with ``0 < gamma < 1`` the ``(1 - p)**(gamma - 1)`` factor
    blows up while ``log p`` vanishes; 0 is returned and the event counted.
    """
    p = np.asarray(p, dtype=np.float64)
    _check_label(p, y)
    q = float(_clamp(p[y], events))
    one_minus = 1.0 - q
    if one_minus == 0.0:
        if 0.0 < gamma < 1.0:
            if events is not None:
                events.singular += 1
            return 0.0
        if gamma == 0.0:
            return -1.0
        return 0.0
    return gamma * one_minus ** (gamma - 1.0) * math.log(q) - one_minus**gamma / q


def _focal_weight(q: np.ndarray, one_minus: np.ndarray, gamma: float) -> np.ndarray:
    """``(1-q)**g - g*q*log(q)*(1-q)**(g-1)``, finite as q -> 1.

    This is the scalar that multiplies ``softmax - onehot`` in the logit
    gradient. For gamma == 0 it is exactly 1.0, so the focal path reproduces
    cross-entropy updates bit for bit.
    """
    safe = np.where(one_minus > 0.0, one_minus, 1.0)
    # log(q)/(1-q) tends to -1 at q = 1
    ratio = np.where(one_minus > 0.0, np.log(q) / safe, -1.0)
    return one_minus**gamma * (1.0 - gamma * q * ratio)


def batch_loss_and_grad(
    logits: np.ndarray,
    y: np.ndarray,
    gamma: float | None,
    *,
    literal: bool = False,
    events: NumericEvents | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample losses and d(loss_i)/d(logits_i) for a batch.

    ``gamma=None`` selects plain cross-entropy. Returns ``(losses, grads)``
    with shapes ``(n,)`` and ``(n, K)``; the gradient is *not* divided by n.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    n, K = logits.shape
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    if np.any((y < 0) | (y >= K)):
        raise IndexError("label out of range")
    p = softmax(logits)
    rows = np.arange(n)

    if literal:
        if gamma is None:
            raise ValueError("literal form needs an explicit gamma")
        q = _clamp(p, events)
        one_minus = 1.0 - p
        losses = np.sum(one_minus**gamma * -np.log(q), axis=1)
        w = _focal_weight(q, one_minus, gamma)
        # dL/dz_k = -w_k + p_k * sum_j w_j
        grads = -w + p * w.sum(axis=1, keepdims=True)
        return losses, grads

    q = _clamp(p[rows, y], events)
    onehot = np.zeros_like(p)
    onehot[rows, y] = 1.0
    diff = p - onehot
    if gamma is None:
        return -np.log(q), diff
    # 1 - p_y as the sum of the other entries keeps precision when p_y ~ 1
    one_minus = np.maximum(p.sum(axis=1) - p[rows, y], 0.0)
    if gamma == 0.0:
        one_minus_pow = np.ones(n)
    else:
        one_minus_pow = one_minus**gamma
    losses = one_minus_pow * -np.log(q)
    w = _focal_weight(q, one_minus, gamma)
    return losses, w[:, None] * diff


def loss_grad_logits(logits, y: int, gamma: float, *, literal: bool = False) -> np.ndarray:
    """Gradient of focal_loss(softmax(logits), y, gamma) w.r.t. the logits."""
    _, g = batch_loss_and_grad(np.asarray(logits)[None, :], np.array([y]), gamma, literal=literal)
    return g[0]


def mean_loss(losses) -> float:
    """Arithmetic mean by sequential summation in sample order."""
    total = 0.0
    count = 0
    for v in losses:
        total += float(v)
        count += 1
    if count == 0:
        raise ValueError("mean of an empty batch")
    return total / count
