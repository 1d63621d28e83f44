"""The Cleanup Markov game: world state, dynamics, and the step function.

All stochasticity flows through ``WorldState.rng`` in a fixed draw order, so
identical (config, map, seed, action sequence) runs are bit-identical.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from cleanuplab.env.config import EVALUATION_START, N_PLAYERS, TRAINING_START, EnvConfig
from cleanuplab.env.grid import CellClass, GridMap
from cleanuplab.errors import ConfigurationError, StateError


class Action(IntEnum):
    MOVE_UP = 0
    MOVE_DOWN = 1
    MOVE_LEFT = 2
    MOVE_RIGHT = 3
    ROTATE_LEFT = 4
    ROTATE_RIGHT = 5
    FIRE_CLEAN = 6
    FIRE_TICKET = 7
    NOOP = 8


N_ACTIONS = 9

# Orientation codes: 0 = up, 1 = right, 2 = down, 3 = left (row, col) deltas.
ORIENT_VECS = ((-1, 0), (0, 1), (1, 0), (0, -1))
_MOVE_VECS = {
    Action.MOVE_UP: (-1, 0),
    Action.MOVE_DOWN: (1, 0),
    Action.MOVE_LEFT: (0, -1),
    Action.MOVE_RIGHT: (0, 1),
}


@dataclass
class WorldState:
    """Complete mutable state of one arena. Single-writer."""

    t: int
    positions: np.ndarray  # (n_players, 2) int64 row/col
    orientations: np.ndarray  # (n_players,) int64, orientation codes
    scores: np.ndarray  # (n_players,) int64 cumulative extrinsic points
    tickets_remaining: np.ndarray  # (n_players,) int64; -1 = unlimited
    polluted: np.ndarray  # (n_river,) bool
    apples: np.ndarray  # (n_orchard,) bool

    rng: np.random.Generator

    @property
    def n_players(self) -> int:
        return len(self.positions)


@dataclass
class StepEvents:
    """Per-player outcomes of one step."""

    reward: np.ndarray  # extrinsic points this step
    cleaned_cells: np.ndarray
    apples_collected: np.ndarray
    tickets_issued: np.ndarray
    tickets_received: np.ndarray

    @property
    def q(self) -> np.ndarray:
        """Instantaneous contribution flags: 1 iff >= 1 pollution cell removed."""
        return (self.cleaned_cells >= 1).astype(np.int64)


def apple_regrowth_prob(fraction_polluted: float, config: EnvConfig) -> float:
    """Per-cell regrowth probability at river pollution fraction ``F``.

    Linear in ``F`` between the abundance and depletion thresholds, clamped to
    ``[0, pr_apple]`` outside them; above the depletion threshold no apples
    regrow.
    """
    span = config.h_depletion - config.h_abundance
    p = config.pr_apple * ((config.h_depletion - fraction_polluted) / span)
    return float(min(max(p, 0.0), config.pr_apple))


def pollution_spawn_prob(fraction_polluted: float, config: EnvConfig) -> float:
    """Per-step probability of one new pollution unit; zero at saturation."""
    return config.pr_pollution if fraction_polluted < config.h_depletion else 0.0


def polluted_fraction(state: WorldState) -> float:
    if len(state.polluted) == 0:
        return 0.0
    return float(state.polluted.sum()) / len(state.polluted)


def reset(config: EnvConfig, grid: GridMap, seed: int, n_players: int = N_PLAYERS) -> WorldState:
    """A fresh world: saturated river/empty orchard for training starts,
    clean river/full orchard for evaluation starts.

    Scored games always run with 5 players; smaller counts exist for
    single-player tutorial worlds.
    """
    config.validate()
    if len(grid.spawns) < n_players:
        raise ConfigurationError(
            f"map has {len(grid.spawns)} spawn cells, need {n_players}"
        )
    rng = np.random.default_rng(seed)
    spawn_idx = rng.choice(len(grid.spawns), size=n_players, replace=False)
    positions = np.array([grid.spawns[i] for i in spawn_idx], dtype=np.int64)
    orientations = rng.integers(0, 4, size=n_players)

    if config.initial_mode == TRAINING_START:
        polluted = np.ones(grid.n_river, dtype=bool)
        apples = np.zeros(grid.n_orchard, dtype=bool)
    elif config.initial_mode == EVALUATION_START:
        polluted = np.zeros(grid.n_river, dtype=bool)
        apples = np.ones(grid.n_orchard, dtype=bool)
    else:  # pragma: no cover - caught by validate()
        raise ConfigurationError(config.initial_mode)

    budget = -1 if config.ticket_budget is None else config.ticket_budget
    return WorldState(
        t=0,
        positions=positions,
        orientations=orientations,
        scores=np.zeros(n_players, dtype=np.int64),
        tickets_remaining=np.full(n_players, budget, dtype=np.int64),
        polluted=polluted,
        apples=apples,
        rng=rng,
    )


def _cell_enterable(
    state: WorldState, config: EnvConfig, grid: GridMap, row: int, col: int
) -> bool:
    """Walls, map borders, polluted river cells, and occupied cells block."""
    if not grid.in_bounds(row, col):
        return False
    klass = grid.cells[row, col]
    if klass == CellClass.WALL:
        return False
    if (
        config.pollution_blocks_movement
        and klass == CellClass.RIVER
        and state.polluted[grid.river_index[row, col]]
    ):
        return False
    for p in range(state.n_players):
        if state.positions[p, 0] == row and state.positions[p, 1] == col:
            return False
    return True


def beam_footprint(
    state: WorldState, grid: GridMap, player: int, config: EnvConfig
) -> list[tuple[int, int]]:
    """Cells covered by a beam fired by ``player``.

    Three parallel rays (center, left, right of the facing direction), each
    extending ``beam_length`` cells from the cell in front of the avatar and
    stopping at walls or the map border. Ordered by forward distance, then
    center-first laterally; ticketing targets the first avatar in this order.
    """
    fr, fc = ORIENT_VECS[int(state.orientations[player])]
    lr, lc = fc, -fr  # lateral unit vector
    half = config.beam_width // 2
    offsets = [0]
    for k in range(1, half + 1):
        offsets.extend([-k, k])
    pr, pc = int(state.positions[player, 0]), int(state.positions[player, 1])

    blocked = {off: False for off in offsets}
    cells: list[tuple[int, int]] = []
    for d in range(1, config.beam_length + 1):
        for off in offsets:
            if blocked[off]:
                continue
            r = pr + d * fr + off * lr
            c = pc + d * fc + off * lc
            if not grid.in_bounds(r, c) or grid.cells[r, c] == CellClass.WALL:
                blocked[off] = True
                continue
            cells.append((r, c))
    return cells


def step(
    state: WorldState,
    actions: "np.ndarray | list[int]",
    config: EnvConfig,
    grid: GridMap,
) -> StepEvents:
    """Advance the world by one step, mutating ``state`` in place.

    Resolution order: rotations, movement (seeded random priority), beams,
    apple collection, pollution spawn, apple regrowth.
    """
    if state.t >= config.episode_length:
        raise StateError(f"episode finished at t={state.t}, cannot step")
    acts = [Action(int(a)) for a in actions]
    if len(acts) != state.n_players:
        raise StateError(f"need {state.n_players} actions, got {len(acts)}")

    n = state.n_players
    events = StepEvents(
        reward=np.zeros(n, dtype=np.int64),
        cleaned_cells=np.zeros(n, dtype=np.int64),
        apples_collected=np.zeros(n, dtype=np.int64),
        tickets_issued=np.zeros(n, dtype=np.int64),
        tickets_received=np.zeros(n, dtype=np.int64),
    )

    # (1) rotations
    for p, a in enumerate(acts):
        if a == Action.ROTATE_LEFT:
            state.orientations[p] = (state.orientations[p] - 1) % 4
        elif a == Action.ROTATE_RIGHT:
            state.orientations[p] = (state.orientations[p] + 1) % 4

    # (2) movement in seeded random priority order; losers stay put
    priority = state.rng.permutation(n)
    entered = np.zeros(n, dtype=bool)
    for p in priority:
        a = acts[p]
        if a not in _MOVE_VECS:
            continue
        dr, dc = _MOVE_VECS[a]
        r = int(state.positions[p, 0]) + dr
        c = int(state.positions[p, 1]) + dc
        if _cell_enterable(state, config, grid, r, c):
            state.positions[p, 0] = r
            state.positions[p, 1] = c
            entered[p] = True

    # (3) beams, processed in the same priority order
    for p in priority:
        a = acts[p]
        if a == Action.FIRE_CLEAN:
            for r, c in beam_footprint(state, grid, p, config):
                idx = grid.river_index[r, c]
                if idx >= 0 and state.polluted[idx]:
                    state.polluted[idx] = False
                    events.cleaned_cells[p] += 1
        elif a == Action.FIRE_TICKET:
            if state.tickets_remaining[p] == 0:
                continue
            target = -1
            for r, c in beam_footprint(state, grid, p, config):
                for o in range(n):
                    if o != p and state.positions[o, 0] == r and state.positions[o, 1] == c:
                        target = o
                        break
                if target >= 0:
                    break
            if target >= 0:
                events.tickets_issued[p] += 1
                events.tickets_received[target] += 1
                events.reward[p] -= config.ticket_cost
                events.reward[target] -= config.ticket_penalty
                if state.tickets_remaining[p] > 0:
                    state.tickets_remaining[p] -= 1

    # (4) apple collection on entering an apple-bearing cell
    for p in range(n):
        if not entered[p]:
            continue
        idx = grid.orchard_index[state.positions[p, 0], state.positions[p, 1]]
        if idx >= 0 and state.apples[idx]:
            state.apples[idx] = False
            events.apples_collected[p] += 1
            events.reward[p] += config.apple_reward

    # (5) pollution spawn: one Bernoulli trial per step into a uniform
    # unpolluted river cell
    frac = polluted_fraction(state)
    u = state.rng.random()
    if u < pollution_spawn_prob(frac, config):
        clean_idx = np.flatnonzero(~state.polluted)
        if len(clean_idx) > 0:
            pick = clean_idx[state.rng.integers(len(clean_idx))]
            state.polluted[pick] = True

    # (6) apple regrowth, independent per empty, unoccupied orchard cell
    frac = polluted_fraction(state)
    p_regrow = apple_regrowth_prob(frac, config)
    empty_idx = np.flatnonzero(~state.apples)
    if len(empty_idx) > 0:
        occupied = set()
        for p in range(n):
            oi = grid.orchard_index[state.positions[p, 0], state.positions[p, 1]]
            if oi >= 0:
                occupied.add(int(oi))
        draws = state.rng.random(len(empty_idx))
        for k, idx in enumerate(empty_idx):
            if draws[k] < p_regrow and int(idx) not in occupied:
                state.apples[idx] = True

    state.scores += events.reward
    state.t += 1
    return events


def state_digest(state: WorldState) -> str:
    """Canonical hash of the world (excluding the RNG stream position)."""
    h = hashlib.sha256()
    h.update(state.t.to_bytes(8, "big"))
    h.update(np.ascontiguousarray(state.positions).tobytes())
    h.update(np.ascontiguousarray(state.orientations).tobytes())
    h.update(np.ascontiguousarray(state.scores).tobytes())
    h.update(np.ascontiguousarray(state.tickets_remaining).tobytes())
    h.update(np.packbits(state.polluted).tobytes())
    h.update(np.packbits(state.apples).tobytes())
    return h.hexdigest()
