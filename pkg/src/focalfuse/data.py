"""Synthetic long-tailed two-modality data and the feature-table format.

Samples are smooth latent trajectories around a per-class mean on the unit
hypersphere. Each trajectory is rendered into frames twice: once directly
(``rgb``) and once after a fixed random rotation with partly independent
noise (``depth``). Frames go through the clip pipeline in
:mod:`focalfuse.preprocess` and are stored only as pooled feature vectors.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import AlignmentError, ConfigError, DataError, ParseError
from .preprocess import MODALITIES, FrameSequence, clip_features, resized_height
from .rng import substream

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.55, 0.10, 0.35)
MANIFEST_FORMAT = "focalfuse-manifest"
_SQRT12 = math.sqrt(12.0)


@dataclass(frozen=True)
class GeneratorConfig:
    n_classes: int = 20
    n_samples: int = 2000
    zipf_s: float = 1.5
    frame_height: int = 48
    frame_width: int = 64
    channels: int = 3
    latent_dim: int = 16
    seq_len_min: int = 8
    seq_len_max: int = 40
    clip_len: int = 16
    resize_width: int = 40
    crop_size: int = 28
    modality_correlation: float = 0.5
    class_separation: float = 1.0
    sample_noise: float = 4.0
    drift: float = 0.3
    pixel_noise: float = 0.2
    depth_noise_scale: float = 1.3
    tail_hardness: float = 2.0
    difficulty_spread: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.n_samples < self.n_classes:
            raise ConfigError(
                f"n_samples ({self.n_samples}) must be at least n_classes ({self.n_classes})"
            )
        if self.zipf_s < 0:
            raise ConfigError(f"zipf_s must be >= 0, got {self.zipf_s}")
        if not 0.0 <= self.modality_correlation <= 1.0:
            raise ConfigError(f"modality_correlation must lie in [0, 1], got {self.modality_correlation}")
        for name in ("frame_height", "frame_width", "channels", "latent_dim", "clip_len",
                     "resize_width", "crop_size", "seq_len_min"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.seq_len_max < self.seq_len_min:
            raise ConfigError("seq_len_max must be >= seq_len_min")
        for name in ("sample_noise", "drift", "pixel_noise", "depth_noise_scale",
                     "difficulty_spread", "class_separation", "tail_hardness"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        h = resized_height(self.frame_height, self.frame_width, self.resize_width)
        if self.crop_size > min(h, self.resize_width):
            raise ConfigError(
                f"crop {self.crop_size} does not fit the resized {h}x{self.resize_width} frame"
            )

    @property
    def feature_dim(self) -> int:
        return self.crop_size * self.crop_size * self.channels

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
        return cls(**d)


# Frame and crop sizes matching the original 256-wide resize and 224 crop.
PAPER_SCALE = dict(frame_height=320, frame_width=320, resize_width=256, crop_size=224, clip_len=16)


def smoke_config(seed: int = 0) -> GeneratorConfig:
    """Tiny, nearly noise-free, linearly separable set for quick checks."""
    return GeneratorConfig(
        n_classes=3, n_samples=120, zipf_s=0.0, frame_height=12, frame_width=16,
        latent_dim=4, seq_len_min=4, seq_len_max=10, clip_len=4, resize_width=16,
        crop_size=10, sample_noise=0.05, drift=0.05, pixel_noise=0.01,
        difficulty_spread=0.0, seed=seed,
    )


@dataclass
class Dataset:
    """Pooled features per modality, aligned row-for-row by sample id."""

    ids: np.ndarray
    labels: np.ndarray
    splits: np.ndarray
    features: dict[str, np.ndarray]
    n_classes: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=object)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.splits = np.asarray(self.splits, dtype=object)
        n = len(self.ids)
        if len(set(self.ids.tolist())) != n:
            raise DataError("sample ids are not unique")
        if self.labels.shape != (n,) or self.splits.shape != (n,):
            raise DataError("ids, labels and splits must have equal length")
        bad = set(self.splits.tolist()) - set(SPLITS)
        if bad:
            raise DataError(f"unknown split tags {sorted(bad)}")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        if not self.features:
            raise DataError("dataset has no modalities")
        for mod, X in self.features.items():
            if mod not in MODALITIES:
                raise DataError(f"unknown modality {mod!r}")
            if X.ndim != 2 or X.shape[0] != n:
                raise DataError(f"{mod} features have shape {X.shape}, expected ({n}, d)")
            if not np.all(np.isfinite(X)):
                raise DataError(f"{mod} features contain non-finite values")

    @property
    def modalities(self) -> list[str]:
        return [m for m in MODALITIES if m in self.features]

    @property
    def feature_dim(self) -> int:
        return next(iter(self.features.values())).shape[1]

    def indices(self, *split_names: str) -> np.ndarray:
        return np.flatnonzero(np.isin(self.splits, list(split_names)))

    def view(self, modality: str, *split_names: str):
        """``(ids, X, y)`` for one modality restricted to some splits, X as float64."""
        if modality not in self.features:
            raise DataError(f"dataset has no {modality!r} modality")
        idx = self.indices(*split_names)
        X = self.features[modality][idx].astype(np.float64)
        return self.ids[idx], X, self.labels[idx]

    def class_counts(self, *split_names: str) -> np.ndarray:
        y = self.labels if not split_names else self.labels[self.indices(*split_names)]
        return np.bincount(y, minlength=self.n_classes)

    def equals(self, other: "Dataset") -> bool:
        if self.n_classes != other.n_classes or self.modalities != other.modalities:
            return False
        if self.ids.tolist() != other.ids.tolist():
            return False
        if not (np.array_equal(self.labels, other.labels) and self.splits.tolist() == other.splits.tolist()):
            return False
        return all(np.array_equal(self.features[m], other.features[m]) for m in self.modalities)


# -- class sizes and splits ----------------------------------------------------


def largest_remainder(exact: np.ndarray, total: int) -> np.ndarray:
    """Round ``exact`` to integers summing to ``total``; ties go to the lower index."""
    base = np.floor(exact).astype(np.int64)
    short = total - int(base.sum())
    frac = exact - base
    order = sorted(range(len(exact)), key=lambda i: (-frac[i], i))
    for i in order[:short]:
        base[i] += 1
    return base


def zipf_class_sizes(n_classes: int, n_samples: int, s: float) -> np.ndarray:
    """Class sizes proportional to ``rank**-s``, each at least 1."""
    if n_samples < n_classes:
        raise ConfigError(f"cannot give {n_classes} classes a sample each from {n_samples}")
    ranks = np.arange(1, n_classes + 1, dtype=np.float64)
    w = ranks**-s
    sizes = largest_remainder(n_samples * w / w.sum(), n_samples)
    for c in range(n_classes):
        if sizes[c] == 0:
            donor = int(np.argmax(sizes))
            sizes[donor] -= 1
            sizes[c] = 1
    return sizes


def split_counts(n: int) -> tuple[int, int, int]:
    exact = np.array(SPLIT_FRACTIONS) * n
    return tuple(int(v) for v in largest_remainder(exact, n))


# -- generation -----------------------------------------------------------------


def _render_basis(cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    """Smooth spatial patterns, one per (latent unit, channel): (m, H, W, C)."""
    H, W, C, m = cfg.frame_height, cfg.frame_width, cfg.channels, cfg.latent_dim
    yy, xx = np.meshgrid(np.arange(H) / H, np.arange(W) / W, indexing="ij")
    basis = np.empty((m, H, W, C))
    for k in range(m):
        for c in range(C):
            a, b = rng.uniform(-1.5, 1.5, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            basis[k, :, :, c] = np.cos(2 * np.pi * (a * xx + b * yy) + phase)
    return basis


def _random_rotation(m: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


class SyntheticWorld:
    """Fixed generator state: class means, render bases, depth rotation."""

    def __init__(self, cfg: GeneratorConfig):
        self.cfg = cfg
        m = cfg.latent_dim
        means = substream(cfg.seed, "class_means").standard_normal((cfg.n_classes, m))
        self.means = cfg.class_separation * means / np.linalg.norm(means, axis=1, keepdims=True)
        u = substream(cfg.seed, "difficulty").uniform(-1.0, 1.0, cfg.n_classes)
        # rarer classes get noisier: scale grows as (rank / K) ** tail_hardness
        rank = np.arange(1, cfg.n_classes + 1) / cfg.n_classes
        self.class_noise = (
            cfg.sample_noise * rank**cfg.tail_hardness * np.exp(cfg.difficulty_spread * u)
        )
        self.rotation = _random_rotation(m, substream(cfg.seed, "rotation"))
        self.bases = {
            mod: _render_basis(cfg, substream(cfg.seed, "render", j)).reshape(m, -1)
            for j, mod in enumerate(MODALITIES)
        }

    def sequences(self, index: int, label: int, sample_id: str) -> dict[str, FrameSequence]:
        """Render one aligned (rgb, depth) pair for sample ``index``."""
        cfg = self.cfg
        m = cfg.latent_dim
        rng = substream(cfg.seed, "sample", index)
        L = int(rng.integers(cfg.seq_len_min, cfg.seq_len_max + 1))
        sigma = self.class_noise[label] / math.sqrt(m)
        shared = rng.standard_normal(m) * sigma
        private = rng.standard_normal(m) * sigma
        rho = cfg.modality_correlation
        t = np.arange(L)[:, None]
        out = {}
        for j, mod in enumerate(MODALITIES):
            omega = rng.uniform(0.1, 0.5, m)
            phase = rng.uniform(0, 2 * np.pi, m)
            wobble = cfg.drift / math.sqrt(m) * np.sin(omega * t + phase)
            if mod == "rgb":
                latent = self.means[label] + shared + wobble
            else:
                offset = rho * shared + math.sqrt(1.0 - rho * rho) * private
                latent = (self.means[label] + cfg.depth_noise_scale * offset + wobble) @ self.rotation.T
            pix = substream(cfg.seed, "pixels", index, j)
            frames = (latent @ self.bases[mod]).astype(np.float32)
            # zero-mean, unit-variance uniform noise; much cheaper than normals
            noise = pix.random(frames.shape, dtype=np.float32)
            noise -= 0.5
            frames += np.float32(cfg.pixel_noise * _SQRT12) * noise
            frames = frames.reshape(L, cfg.frame_height, cfg.frame_width, cfg.channels)
            out[mod] = FrameSequence(frames, mod, label, sample_id)
        return out

    def features(self, index: int, label: int, sample_id: str) -> dict[str, np.ndarray]:
        cfg = self.cfg
        feats = {}
        for mod, seq in self.sequences(index, label, sample_id).items():
            # Both modalities reuse the same clip start and crop window.
            feats[mod] = clip_features(
                seq,
                clip_len=cfg.clip_len,
                resize_width=cfg.resize_width,
                crop_size=cfg.crop_size,
                clip_rng=substream(cfg.seed, "clip", index),
                crop_rng=substream(cfg.seed, "crop", index),
            )
        return feats


def sample_labels_and_splits(cfg: GeneratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Label and split for every sample in id order."""
    sizes = zipf_class_sizes(cfg.n_classes, cfg.n_samples, cfg.zipf_s)
    labels = np.repeat(np.arange(cfg.n_classes), sizes)
    splits = np.empty(cfg.n_samples, dtype=object)
    split_rng = substream(cfg.seed, "split")
    start = 0
    for c, n in enumerate(sizes):
        tags = np.repeat(np.array(SPLITS, dtype=object), split_counts(int(n)))
        splits[start : start + n] = tags[split_rng.permutation(n)]
        start += n
    perm = substream(cfg.seed, "order").permutation(cfg.n_samples)
    return labels[perm], splits[perm]


def sample_id(index: int) -> str:
    return f"s{index:06d}"


def generate_synthetic(cfg: GeneratorConfig) -> Dataset:
    labels, splits = sample_labels_and_splits(cfg)
    world = SyntheticWorld(cfg)
    n, d = cfg.n_samples, cfg.feature_dim
    feats = {mod: np.empty((n, d), dtype=np.float32) for mod in MODALITIES}
    ids = []
    for i in range(n):
        sid = sample_id(i)
        ids.append(sid)
        for mod, f in world.features(i, int(labels[i]), sid).items():
            feats[mod][i] = f
    ds = Dataset(np.array(ids, dtype=object), labels, splits, feats, cfg.n_classes)
    missing = np.flatnonzero(ds.class_counts("train") == 0)
    if len(missing):
        raise DataError(f"classes {missing.tolist()} have no training samples")
    return ds


# -- manifest -------------------------------------------------------------------


def write_manifest(cfg: GeneratorConfig, path, fingerprint: str = "") -> None:
    payload = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "config_fingerprint": fingerprint,
        "generator": cfg.to_dict(),
        "class_sizes": zipf_class_sizes(cfg.n_classes, cfg.n_samples, cfg.zipf_s).tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(path) -> GeneratorConfig:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != MANIFEST_FORMAT:
        raise ConfigError(f"{path} is not a dataset manifest")
    return GeneratorConfig.from_dict(payload["generator"])


# -- feature tables ---------------------------------------------------------------


def write_feature_table(ds: Dataset, path, fingerprint: str = "") -> None:
    """Comma-separated, one row per (sample, modality).

    Values are written with 9 significant digits, which round-trips float32.
    Leading ``#`` lines carry metadata and are skipped by readers.
    """
    d = ds.feature_dim
    header = ",".join(["id", "split", "label", "modality"] + [f"f{j}" for j in range(d)])
    fmt = ",".join(["%.9g"] * d)
    order = sorted(range(len(ds.ids)), key=lambda i: ds.ids[i])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if fingerprint:
            fh.write(f"# config_fingerprint={fingerprint}\n")
        fh.write(f"# n_classes={ds.n_classes}\n")
        fh.write(header + "\n")
        for i in order:
            for mod in ds.modalities:
                row = fmt % tuple(ds.features[mod][i].astype(np.float64))
                fh.write(f"{ds.ids[i]},{ds.splits[i]},{int(ds.labels[i])},{mod},{row}\n")


def read_table_meta(path) -> dict[str, str]:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
    return meta


def load_feature_table(path) -> Dataset:
    path = str(path)
    meta: dict[str, str] = {}
    header = None
    records: dict[tuple[str, str], np.ndarray] = {}
    info: dict[str, tuple[str, int, int]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        skipper = _MetaSkipper()
        for row in csv.reader(skipper(fh, meta)):
            lineno = skipper.line
            if header is None:
                header = row
                if header[:4] != ["id", "split", "label", "modality"]:
                    raise ParseError("header must start with id,split,label,modality", lineno, path)
                d = len(header) - 4
                if d < 1 or header[4:] != [f"f{j}" for j in range(d)]:
                    raise ParseError("feature columns must be named f0..f{d-1}", lineno, path)
                continue
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields ({d} features), got {len(row)}", lineno, path
                )
            sid, split, label_s, mod = row[:4]
            if split not in SPLITS:
                raise ParseError(f"unknown split tag {split!r}", lineno, path)
            if mod not in MODALITIES:
                raise ParseError(f"unknown modality {mod!r}", lineno, path)
            try:
                label = int(label_s)
                vec = np.array(row[4:], dtype=np.float64).astype(np.float32)
            except ValueError as exc:
                raise ParseError(f"bad number: {exc}", lineno, path) from None
            if label < 0:
                raise ParseError(f"negative label {label}", lineno, path)
            if not np.all(np.isfinite(vec)):
                raise ParseError("non-finite feature value", lineno, path)
            if (sid, mod) in records:
                raise ParseError(f"duplicate row for id {sid!r}, modality {mod!r}", lineno, path)
            if sid in info and info[sid][:2] != (split, label):
                raise AlignmentError(
                    f"{path}:line {lineno}: id {sid!r} has split/label {(split, label)} "
                    f"but an earlier row says {info[sid][:2]}"
                )
            info.setdefault(sid, (split, label, lineno))
            records[(sid, mod)] = vec
    if header is None:
        raise ParseError("missing header", None, path)
    mods = [m for m in MODALITIES if any(k[1] == m for k in records)]
    ids = sorted(info)
    for sid in ids:
        for mod in mods:
            if (sid, mod) not in records:
                raise AlignmentError(
                    f"{path}: id {sid!r} (first seen on line {info[sid][2]}) has no {mod!r} row"
                )
    labels = np.array([info[s][1] for s in ids], dtype=np.int64)
    n_classes = int(meta.get("n_classes", labels.max() + 1 if len(labels) else 0))
    if len(labels) and labels.max() >= n_classes:
        raise DataError(f"{path}: label {labels.max()} exceeds declared n_classes={n_classes}")
    feats = {mod: np.stack([records[(s, mod)] for s in ids]) for mod in mods}
    ds = Dataset(np.array(ids, dtype=object), labels, np.array([info[s][0] for s in ids], dtype=object),
                 feats, n_classes)
    missing = np.flatnonzero(ds.class_counts("train") == 0)
    if len(missing):
        raise DataError(f"{path}: classes {missing.tolist()} have no training rows")
    return ds


class _MetaSkipper:
    """Line iterator that strips ``#`` metadata lines and tracks line numbers."""

    def __init__(self):
        self.line = 0

    def __call__(self, fh, meta: dict):
        self.line = 0
        for raw in fh:
            self.line += 1
            if raw.startswith("#"):
                key, _, value = raw[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            yield raw

