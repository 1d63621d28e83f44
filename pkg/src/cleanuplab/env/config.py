"""Environment parameter sets.

Two named presets ship with the package: ``agent-paper`` (the parameters used
to train agent populations) and ``human-paper`` (the parameters used for live
human sessions). Everything is overridable for custom experiments.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

from cleanuplab.errors import ConfigurationError

TRAINING_START = "training-start"
EVALUATION_START = "evaluation-start"

N_PLAYERS = 5


@dataclass(frozen=True)
class EnvConfig:
    """One arena's rule parameters."""

    pr_apple: float
    pr_pollution: float
    h_abundance: float
    h_depletion: float
    episode_length: int
    apple_reward: int = 1
    ticket_cost: int = 1
    ticket_penalty: int = 50
    beam_length: int = 5
    beam_width: int = 3
    obs_window: int = 15
    initial_mode: str = TRAINING_START
    ticket_budget: int | None = None  # None = unlimited
    pollution_blocks_movement: bool = True
    rotate_observations: bool = True

    def validate(self) -> None:
        for name in ("pr_apple", "pr_pollution"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name}={p} outside [0, 1]")
        if not 0.0 <= self.h_abundance < self.h_depletion <= 1.0:
            raise ConfigurationError(
                f"need 0 <= h_abundance < h_depletion <= 1, "
                f"got ({self.h_abundance}, {self.h_depletion})"
            )
        if self.episode_length <= 0:
            raise ConfigurationError(f"episode_length={self.episode_length} must be positive")
        if self.obs_window <= 0 or self.obs_window % 2 == 0:
            raise ConfigurationError(f"obs_window={self.obs_window} must be odd and positive")
        if self.beam_length < 1 or self.beam_width < 1 or self.beam_width % 2 == 0:
            raise ConfigurationError("beam_length must be >= 1 and beam_width odd >= 1")
        if self.initial_mode not in (TRAINING_START, EVALUATION_START):
            raise ConfigurationError(f"unknown initial_mode {self.initial_mode!r}")
        if self.ticket_budget is not None and self.ticket_budget < 0:
            raise ConfigurationError("ticket_budget must be nonnegative or None")

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def with_mode(self, mode: str) -> "EnvConfig":
        return replace(self, initial_mode=mode)


_PRESETS: dict[str, EnvConfig] = {
    # Agent training/evaluation parameters: ticket issuing costs 1 point,
    # receiving one loses 50.
    "agent-paper": EnvConfig(
        pr_apple=0.03,
        pr_pollution=0.5,
        h_abundance=0.0,
        h_depletion=0.32,
        episode_length=1000,
        ticket_cost=1,
        ticket_penalty=50,
        obs_window=15,
        initial_mode=TRAINING_START,
        rotate_observations=True,
    ),
    # Live human sessions: faster regrowth, 2000-step episodes, ticket
    # issuing costs 4 points and receiving one loses 40.
    "human-paper": EnvConfig(
        pr_apple=0.067,
        pr_pollution=0.6,
        h_abundance=0.3,
        h_depletion=0.6,
        episode_length=2000,
        ticket_cost=4,
        ticket_penalty=40,
        obs_window=27,
        initial_mode=EVALUATION_START,
        rotate_observations=False,
    ),
}


def preset(name: str) -> EnvConfig:
    try:
        cfg = _PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {sorted(_PRESETS)}"
        ) from None
    cfg.validate()
    return cfg


def preset_names() -> list[str]:
    return sorted(_PRESETS)
