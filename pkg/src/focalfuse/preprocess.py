"""Clip sampling, aspect-preserving resize, consistent cropping and pooling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

MODALITIES = ("rgb", "depth")


@dataclass
class FrameSequence:
    """A synthetic video: ``frames`` has shape (L, H, W, C)."""

    frames: np.ndarray
    modality: str
    label: int
    sample_id: str

    def __post_init__(self):
        if self.frames.ndim != 4:
            raise DataError(f"frames must be (L, H, W, C), got shape {self.frames.shape}")
        if len(self.frames) < 1:
            raise DataError(f"sequence {self.sample_id!r} has no frames")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class Clip:
    frames: np.ndarray
    start: int = 0
    n_padded: int = 0
    crop_offset: tuple[int, int] | None = None
    crop_size: int | None = None
    source_length: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)


def sample_clip(seq, T: int, rng: np.random.Generator) -> Clip:
    """Take ``T`` consecutive frames, padding short sequences with the last frame.

    Long sequences get a start index drawn uniformly from ``[0, len - T]`` so
    padding only ever happens when the sequence itself is too short.
    """
    if T < 1:
        raise ConfigError(f"clip length must be >= 1, got {T}")
    frames = seq.frames if isinstance(seq, FrameSequence) else np.asarray(seq)
    L = len(frames)
    if L == 0:
        raise DataError("cannot sample a clip from an empty sequence")
    if L >= T:
        start = int(rng.integers(0, L - T + 1))
        return Clip(frames[start : start + T], start=start, n_padded=0, source_length=L)
    idx = np.concatenate([np.arange(L), np.full(T - L, L - 1)])
    return Clip(frames[idx], start=0, n_padded=T - L, source_length=L)


def resized_height(height: int, width: int, target_width: int) -> int:
    return max(1, int(math.floor(height * target_width / width + 0.5)))


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Bilinear weights with half-pixel centres (align_corners=False), edge-clamped."""
    M = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        M[i, lo] += 1.0 - frac
        M[i, hi] += frac
    return M


_MATRIX_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _cached_interp(n_in: int, n_out: int) -> np.ndarray:
    key = (n_in, n_out)
    if key not in _MATRIX_CACHE:
        _MATRIX_CACHE[key] = _interp_matrix(n_in, n_out)
    return _MATRIX_CACHE[key]


def resize_keep_aspect(frame: np.ndarray, target_width: int) -> np.ndarray:
    """Bilinear resize of one (H, W, C) frame, or a (T, H, W, C) stack, to a new width."""
    if target_width < 1:
        raise ConfigError(f"target width must be >= 1, got {target_width}")
    frame = np.asarray(frame)
    if frame.dtype != np.float32:
        frame = frame.astype(np.float64)
    H, W = frame.shape[-3], frame.shape[-2]
    if W < 1 or H < 1:
        raise DataError(f"cannot resize a frame of shape {frame.shape}")
    new_h = resized_height(H, W, target_width)
    if new_h == H and target_width == W:
        return frame.copy()
    rh = _cached_interp(H, new_h).astype(frame.dtype)
    rw = _cached_interp(W, target_width).astype(frame.dtype)
    # one gemm per axis; tensordot moves the contracted axis to the front
    x = np.tensordot(rh, frame, axes=([1], [frame.ndim - 3]))  # (H', ..., W, C)
    x = np.tensordot(rw, x, axes=([1], [x.ndim - 2]))  # (W', H', ..., C)
    lead = frame.ndim - 3
    order = [2 + i for i in range(lead)] + [1, 0, x.ndim - 1]
    return np.ascontiguousarray(x.transpose(order))


def resize_clip(clip: Clip, target_width: int) -> Clip:
    return replace(clip, frames=resize_keep_aspect(clip.frames, target_width))


def random_crop_clip(clip: Clip, size: int, rng: np.random.Generator) -> Clip:
    """Cut the same ``size`` x ``size`` window out of every frame."""
    if size < 1:
        raise ConfigError(f"crop size must be >= 1, got {size}")
    H, W = clip.frames.shape[1:3]
    if size > min(H, W):
        raise ConfigError(f"crop size {size} exceeds frame size {H}x{W}")
    row = int(rng.integers(0, H - size + 1))
    col = int(rng.integers(0, W - size + 1))
    out = clip.frames[:, row : row + size, col : col + size, :]
    return replace(clip, frames=out, crop_offset=(row, col), crop_size=size)


def temporal_pool(clip) -> np.ndarray:
    """Mean over frames, flattened row-major into an H*W*C vector."""
    frames = clip.frames if isinstance(clip, Clip) else np.asarray(clip)
    if len(frames) == 0:
        raise DataError("cannot pool an empty clip")
    return frames.mean(axis=0).reshape(-1)


def clip_features(
    seq: FrameSequence,
    *,
    clip_len: int,
    resize_width: int,
    crop_size: int,
    clip_rng: np.random.Generator,
    crop_rng: np.random.Generator,
) -> np.ndarray:
    """The full per-sample pipeline: sample, resize, crop, pool."""
    clip = sample_clip(seq, clip_len, clip_rng)
    clip = resize_clip(clip, resize_width)
    clip = random_crop_clip(clip, crop_size, crop_rng)
    return temporal_pool(clip)
