"""Annealing profiles for the focal-loss modulating factor.

The factor is evaluated once per epoch. ``z`` counts completed epochs, so the
first epoch trains with ``gamma_init`` and a run of ``total_epochs`` epochs
never reaches ``gamma_fin`` itself (that value sits at ``z == total_epochs``).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import ConfigError

MODES = ("constant", "linear_decay", "linear_growth", "exp_decay", "exp_growth")

DEFAULT_GAMMA_INIT = 2.0
DEFAULT_GAMMA_FIN = 0.1
DEFAULT_EPOCHS = 20


@dataclass(frozen=True)
class GammaSchedule:
    mode: str = "exp_decay"
    gamma_init: float = DEFAULT_GAMMA_INIT
    gamma_fin: float = DEFAULT_GAMMA_FIN
    total_epochs: int = DEFAULT_EPOCHS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown schedule mode {self.mode!r}; expected one of {MODES}")
        if isinstance(self.total_epochs, bool) or int(self.total_epochs) != self.total_epochs:
            raise ConfigError(f"total_epochs must be an integer, got {self.total_epochs!r}")
        if self.total_epochs < 1:
            raise ConfigError(f"total_epochs must be >= 1, got {self.total_epochs}")
        for name in ("gamma_init", "gamma_fin"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be a finite non-negative number, got {v!r}")
        if self.mode == "constant":
            return
        if self.mode.startswith("exp") and (self.gamma_init <= 0 or self.gamma_fin <= 0):
            raise ConfigError("exponential profiles need gamma_init > 0 and gamma_fin > 0")
        if self.mode.endswith("decay") and self.gamma_init < self.gamma_fin:
            raise ConfigError(
                f"{self.mode} needs gamma_init >= gamma_fin "
                f"({self.gamma_init} < {self.gamma_fin})"
            )
        if self.mode.endswith("growth") and self.gamma_init > self.gamma_fin:
            raise ConfigError(
                f"{self.mode} needs gamma_init <= gamma_fin "
                f"({self.gamma_init} > {self.gamma_fin})"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GammaSchedule":
        unknown = set(d) - {"mode", "gamma_init", "gamma_fin", "total_epochs"}
        if unknown:
            raise ConfigError(f"unknown schedule keys: {sorted(unknown)}")
        return cls(**d)


def constant(gamma: float, total_epochs: int = DEFAULT_EPOCHS) -> GammaSchedule:
    return GammaSchedule("constant", gamma, gamma, total_epochs)


def gamma_at(schedule: GammaSchedule, z_curr: int) -> float:
    """Modulating factor after ``z_curr`` completed epochs."""
    Z = schedule.total_epochs
    if z_curr < 0 or z_curr > Z:
        raise ValueError(f"epoch index {z_curr} outside [0, {Z}]")
    g0, g1 = float(schedule.gamma_init), float(schedule.gamma_fin)
    if schedule.mode == "constant":
        return g0
    # Endpoints are returned verbatim so they are exact, not merely close.
    if z_curr == 0:
        return g0
    if z_curr == Z:
        return g1
    frac = z_curr / Z
    if schedule.mode.startswith("exp"):
        if g0 == g1:
            return g0
        return g0 * (g1 / g0) ** frac
    return g0 + (g1 - g0) * frac


def gamma_trajectory(schedule: GammaSchedule) -> list[float]:
    """Values used for each of the ``total_epochs`` training epochs."""
    return [gamma_at(schedule, z) for z in range(schedule.total_epochs)]
