"""Experiment configuration: JSON file, dotted overrides, fingerprint.

Schema (every key optional; defaults shown by ``focalfuse config``)::

    {
      "generator": {...GeneratorConfig fields...},
      "feature_table": null,            # path; replaces the generator when set
      "train": {...TrainConfig fields...},
      "schedule": {"mode": "exp_decay", "gamma_init": 2.0, "gamma_fin": 0.1, "total_epochs": 20},
      "modalities": "both",             # rgb | depth | both
      "fusion": true,
      "seeds": [0],
      "ablation_modality": "rgb",
      "bench": {"batch_sizes": [1, 2, 4, 8, 16], "batches": 5, "pool": 32},
      "out": "runs"
    }
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import GeneratorConfig
from .errors import ConfigError
from .schedule import GammaSchedule
from .train import TrainConfig

MODALITY_CHOICES = {"rgb": ("rgb",), "depth": ("depth",), "both": ("rgb", "depth")}

# The reference fixture: defaults of the generator, five training seeds.
FIXTURE_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class BenchConfig:
    batch_sizes: tuple[int, ...] = (1, 2, 4, 8, 16)
    batches: int = 5
    pool: int = 32

    def __post_init__(self):
        bs = [int(b) for b in self.batch_sizes]
        if not bs or any(b < 1 for b in bs) or any(b2 <= b1 for b1, b2 in zip(bs, bs[1:])):
            raise ConfigError(f"bench batch sizes must be positive and strictly increasing, got {bs}")
        if self.batches < 1 or self.pool < 1:
            raise ConfigError("bench batches and pool must be >= 1")
        self.batch_sizes = tuple(bs)


@dataclass
class ExperimentConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    feature_table: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    schedule: GammaSchedule = field(default_factory=GammaSchedule)
    modalities: str = "both"
    fusion: bool = True
    seeds: tuple[int, ...] = (0,)
    ablation_modality: str = "rgb"
    bench: BenchConfig = field(default_factory=BenchConfig)
    out: str = "runs"

    def __post_init__(self):
        if self.modalities not in MODALITY_CHOICES:
            raise ConfigError(f"modalities must be one of {sorted(MODALITY_CHOICES)}")
        if self.fusion and self.modalities != "both":
            raise ConfigError("fusion needs both modalities; set fusion=false or modalities=both")
        if self.ablation_modality not in ("rgb", "depth"):
            raise ConfigError("ablation_modality must be rgb or depth")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds or any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of non-negative integers")
        if self.train.epochs is not None and self.train.epochs != self.schedule.total_epochs:
            raise ConfigError(
                f"train.epochs={self.train.epochs} disagrees with schedule.total_epochs="
                f"{self.schedule.total_epochs}"
            )

    @property
    def modality_list(self) -> tuple[str, ...]:
        return MODALITY_CHOICES[self.modalities]

    def to_dict(self) -> dict:
        return {
            "generator": self.generator.to_dict(),
            "feature_table": self.feature_table,
            "train": self.train.to_dict(),
            "schedule": self.schedule.to_dict(),
            "modalities": self.modalities,
            "fusion": self.fusion,
            "seeds": list(self.seeds),
            "ablation_modality": self.ablation_modality,
            "bench": {
                "batch_sizes": list(self.bench.batch_sizes),
                "batches": self.bench.batches,
                "pool": self.bench.pool,
            },
            "out": self.out,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {"generator", "feature_table", "train", "schedule", "modalities", "fusion",
                 "seeds", "ablation_modality", "bench", "out"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        if "generator" in d:
            kw["generator"] = GeneratorConfig.from_dict(d.pop("generator"))
        if "train" in d:
            kw["train"] = TrainConfig.from_dict(d.pop("train"))
        if "schedule" in d:
            kw["schedule"] = GammaSchedule.from_dict(d.pop("schedule"))
        if "bench" in d:
            b = dict(d.pop("bench"))
            bad = set(b) - {"batch_sizes", "batches", "pool"}
            if bad:
                raise ConfigError(f"unknown bench keys: {sorted(bad)}")
            kw["bench"] = BenchConfig(**b)
        if "seeds" in d:
            seeds = d.pop("seeds")
            kw["seeds"] = tuple(seeds) if isinstance(seeds, (list, tuple)) else (seeds,)
        kw.update(d)
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def fingerprint(self) -> str:
        return fingerprint_dict(self.to_dict())

    def replace(self, **dotted) -> "ExperimentConfig":
        d = self.to_dict()
        for key, value in dotted.items():
            set_dotted(d, key, value)
        return ExperimentConfig.from_dict(d)


def fingerprint_dict(d: dict) -> str:
    """Stable hash of the canonical JSON form; the output directory is excluded."""
    d = {k: v for k, v in d.items() if k != "out"}
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        if not isinstance(cur.get(p), dict):
            raise ConfigError(f"config key {key!r} does not name a nested field")
        cur = cur[p]
    if parts[-1] not in cur:
        raise ConfigError(f"unknown config key {key!r}")
    cur[parts[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` where value is JSON, falling back to a bare string."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str | Path | None, overrides: list[tuple[str, object]] = ()) -> ExperimentConfig:
    d = ExperimentConfig().to_dict()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        _merge(d, user)
    for key, value in overrides:
        set_dotted(d, key, value)
    return ExperimentConfig.from_dict(d)


def _merge(base: dict, user: dict, prefix: str = "") -> None:
    for k, v in user.items():
        if k not in base:
            raise ConfigError(f"unknown config key {prefix + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            _merge(base[k], v, prefix + k + ".")
        else:
            base[k] = copy.deepcopy(v)
