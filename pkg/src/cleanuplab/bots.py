"""Scripted policies: cooperator (clean-then-harvest) and defector
(harvest-only) bots, plus a runner that records bot episodes.

Bots read world state directly (no observation tensors), which keeps corpus
generation fast. Movement is greedy with a seeded tie-break; the maps used
here are open bands, so no path planning is needed.
"""

from __future__ import annotations

import numpy as np

from cleanuplab.env.config import EnvConfig
from cleanuplab.env.engine import (
    Action,
    WorldState,
    beam_footprint,
    polluted_fraction,
    reset,
    step,
)
from cleanuplab.env.grid import GridMap
from cleanuplab.records import EpisodeRecord, EpisodeRecorder


def _greedy_move(state: WorldState, player: int, target: tuple[int, int], rng) -> Action:
    pr, pc = int(state.positions[player, 0]), int(state.positions[player, 1])
    dr, dc = target[0] - pr, target[1] - pc
    options: list[Action] = []
    if abs(dr) >= abs(dc):
        if dr != 0:
            options.append(Action.MOVE_DOWN if dr > 0 else Action.MOVE_UP)
        if dc != 0:
            options.append(Action.MOVE_RIGHT if dc > 0 else Action.MOVE_LEFT)
    else:
        if dc != 0:
            options.append(Action.MOVE_RIGHT if dc > 0 else Action.MOVE_LEFT)
        if dr != 0:
            options.append(Action.MOVE_DOWN if dr > 0 else Action.MOVE_UP)
    if not options:
        return Action.NOOP
    # Occasional sideways jitter breaks deadlocks when bots block each other.
    if rng.random() < 0.1:
        return Action(int(rng.integers(0, 4)))
    return options[0]


def _nearest(cells: np.ndarray, pos: np.ndarray) -> tuple[int, int] | None:
    if len(cells) == 0:
        return None
    d = np.abs(cells - pos).sum(axis=1)
    k = int(np.argmin(d))
    return int(cells[k, 0]), int(cells[k, 1])


def _harvest_action(
    state: WorldState, grid: GridMap, player: int, rng: np.random.Generator
) -> Action:
    pos = state.positions[player]
    if state.apples.any():
        target = _nearest(grid.orchard_cells[state.apples], pos)
        if target is not None:
            return _greedy_move(state, player, target, rng)
    # Nothing to pick: loiter near the orchard so regrowth is harvested fast.
    mid = grid.orchard_cells[len(grid.orchard_cells) // 2]
    if abs(int(pos[0]) - int(mid[0])) + abs(int(pos[1]) - int(mid[1])) > 3:
        return _greedy_move(state, player, (int(mid[0]), int(mid[1])), rng)
    return Action.NOOP if rng.random() < 0.5 else Action(int(rng.integers(0, 4)))


def defector_action(
    state: WorldState, grid: GridMap, player: int, rng: np.random.Generator
) -> Action:
    """Harvest-only policy."""
    return _harvest_action(state, grid, player, rng)


class CooperatorMode:
    """Per-bot hysteresis so cooperators alternate cleaning and harvesting.

    A cooperator heads for the river when pollution approaches the point
    where regrowth degrades, and returns to the orchard once the river is
    clean enough; without this, all-cooperator groups over-service the river
    and never harvest.
    """

    def __init__(self, enter_clean: float = 0.85, exit_clean: float = 0.4):
        self.cleaning = False
        self.enter_clean = enter_clean
        self.exit_clean = exit_clean

    def update(self, fraction: float, h_abundance: float, h_depletion: float) -> bool:
        knee = h_abundance + self.enter_clean * (h_depletion - h_abundance)
        floor = h_abundance + self.exit_clean * (h_depletion - h_abundance)
        if not self.cleaning and fraction >= knee:
            self.cleaning = True
        elif self.cleaning and fraction <= floor:
            self.cleaning = False
        return self.cleaning


def cooperator_action(
    state: WorldState,
    grid: GridMap,
    player: int,
    rng: np.random.Generator,
    config: EnvConfig,
    mode: CooperatorMode | None = None,
) -> Action:
    """Clean-then-harvest: service the river when duty calls, else harvest."""
    fraction = polluted_fraction(state)
    if mode is not None:
        duty = mode.update(fraction, config.h_abundance, config.h_depletion)
    else:
        duty = fraction > 0.05
    if not duty or not state.polluted.any():
        return _harvest_action(state, grid, player, rng)

    # Fire if some orientation's beam would clean; rotate toward it if needed.
    current = int(state.orientations[player])
    for orient in (current, (current + 1) % 4, (current + 3) % 4, (current + 2) % 4):
        saved = state.orientations[player]
        state.orientations[player] = orient
        hits = any(
            grid.river_index[r, c] >= 0 and state.polluted[grid.river_index[r, c]]
            for r, c in beam_footprint(state, grid, player, config)
        )
        state.orientations[player] = saved
        if hits:
            if orient == current:
                return Action.FIRE_CLEAN
            if (orient - current) % 4 == 1:
                return Action.ROTATE_RIGHT
            return Action.ROTATE_LEFT

    target = _nearest(grid.river_cells[state.polluted], state.positions[player])
    if target is None:
        return _harvest_action(state, grid, player, rng)
    return _greedy_move(state, player, target, rng)


def run_bot_episode(
    config: EnvConfig,
    grid: GridMap,
    seed: int,
    cooperators: list[bool],
    condition: str = "identifiable",
    group_id: str = "bots",
    episode_index: int = 0,
) -> EpisodeRecord:
    """Play one full episode with the given cooperator/defector roles."""
    state = reset(config, grid, seed)
    policy_rng = np.random.default_rng(seed ^ 0x5EED_B075)
    players = [f"bot{i}" for i in range(len(cooperators))]
    rec = EpisodeRecorder(
        config, grid, seed, condition, group_id, players, state, episode_index=episode_index
    )
    modes = [CooperatorMode() if coop else None for coop in cooperators]
    for _ in range(config.episode_length):
        actions = []
        for p, coop in enumerate(cooperators):
            if coop:
                actions.append(cooperator_action(state, grid, p, policy_rng, config, modes[p]))
            else:
                actions.append(defector_action(state, grid, p, policy_rng))
        events = step(state, actions, config, grid)
        rec.add_step(actions, state, events, polluted_fraction(state))
    return rec.finish(state)
