"""Reputation intrinsic motivation: smoothed contribution traces, visibility
masking, and the asymmetric social-comparison reward.

Each observer keeps its own trace vector. In the identifiable condition every
player's trace updates every step; in the anonymous condition only players
within the observer's visibility range are updated, so out-of-range traces go
stale and keep their held value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IDENTIFIABLE = "identifiable"
ANONYMOUS = "anonymous"

SMOOTHING = 0.97
VISIBILITY_RANGE = 9  # l-infinity cells

ALPHA_RANGE = (2.4, 3.0)
BETA_RANGE = (0.16, 0.20)


@dataclass(frozen=True)
class ReputationParams:
    """Disadvantage/advantage comparison weights, sampled once per agent."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")


@dataclass
class ContributionTracker:
    """Exponentially smoothed per-player contribution traces for one observer."""

    n_players: int = 5
    smoothing: float = SMOOTHING
    traces: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.traces is None:
            self.traces = np.zeros(self.n_players, dtype=np.float64)

    def copy(self) -> "ContributionTracker":
        return ContributionTracker(
            n_players=self.n_players, smoothing=self.smoothing, traces=self.traces.copy()
        )


def sample_params(rng: np.random.Generator) -> ReputationParams:
    """Draw frozen per-agent comparison weights from their uniform ranges."""
    return ReputationParams(
        alpha=float(rng.uniform(*ALPHA_RANGE)),
        beta=float(rng.uniform(*BETA_RANGE)),
    )


def update_traces(
    tracker: ContributionTracker,
    q: np.ndarray,
    positions: np.ndarray,
    observer: int,
    condition: str,
    visibility_range: int = VISIBILITY_RANGE,
) -> None:
    """One smoothing step ``c <- lambda * c + q`` with visibility masking.

    In the anonymous condition the observer's own trace always updates; another
    player's trace updates only when that player is within l-infinity distance
    ``visibility_range`` of the observer, and holds its previous value
    otherwise.
    """
    q = np.asarray(q, dtype=np.float64)
    if len(q) != tracker.n_players:
        raise ValueError(f"need one q per player, got {len(q)}")
    if condition == IDENTIFIABLE:
        visible = np.ones(tracker.n_players, dtype=bool)
    elif condition == ANONYMOUS:
        deltas = np.abs(positions - positions[observer]).max(axis=1)
        visible = deltas <= visibility_range
        visible[observer] = True
    else:
        raise ValueError(f"unknown condition {condition!r}")
    updated = tracker.smoothing * tracker.traces + q
    tracker.traces = np.where(visible, updated, tracker.traces)


def intrinsic_reward(c_self: float, c_bar: float, params: ReputationParams) -> float:
    """Asymmetric penalty for deviating from the group's contribution level.

    Never positive; zero exactly when ``c_self == c_bar``.
    """
    return -params.alpha * max(c_bar - c_self, 0.0) - params.beta * max(c_self - c_bar, 0.0)


def combined_reward(r_extrinsic: float, r_intrinsic: float) -> float:
    return r_extrinsic + r_intrinsic


def others_mean(traces: np.ndarray, observer: int, include_self: bool = False) -> float:
    """The comparison level: mean of the other members' traces by default."""
    traces = np.asarray(traces, dtype=np.float64)
    if include_self:
        return float(traces.mean())
    mask = np.ones(len(traces), dtype=bool)
    mask[observer] = False
    return float(traces[mask].mean())
