"""Egocentric observations: one-hot entity tensors for agents, tile codes for
the human display layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cleanuplab.env.config import EnvConfig
from cleanuplab.env.engine import WorldState
from cleanuplab.env.grid import CellClass, GridMap

IDENTIFIABLE = "identifiable"
ANONYMOUS = "anonymous"

# Channel layout, versioned with the record schema. In the identifiable
# condition each other player occupies its own slot channel (ordered by
# player index); in the anonymous condition all others share slot 1.
CH_SELF = 0
CH_OTHER_SLOTS = (1, 2, 3, 4)
CH_APPLE = 5
CH_POLLUTION = 6
CH_WALL = 7
CH_RIVER = 8
CH_GROUND = 9
N_CHANNELS = 10

# Tile codes for the human display layer (what the client renders).
TILE_GROUND = 0
TILE_RIVER = 1
TILE_POLLUTION = 2
TILE_ORCHARD = 3
TILE_APPLE = 4
TILE_WALL = 5
TILE_VOID = 6  # outside the map


@dataclass(frozen=True)
class Observation:
    """One player's view: entity channels plus smoothed contribution inputs."""

    tensor: np.ndarray  # (N_CHANNELS, window, window) float32
    contributions: np.ndarray  # (5,) float64, self first

    @property
    def window(self) -> int:
        return self.tensor.shape[1]


def _entity_grid(state: WorldState, grid: GridMap) -> np.ndarray:
    """Full-map channel tensor without avatars."""
    full = np.zeros((N_CHANNELS, grid.height, grid.width), dtype=np.float32)
    full[CH_GROUND] = grid.cells == CellClass.GROUND
    full[CH_WALL] = grid.cells == CellClass.WALL
    full[CH_RIVER] = grid.cells == CellClass.RIVER
    if state.polluted.any():
        rc = grid.river_cells[state.polluted]
        full[CH_POLLUTION, rc[:, 0], rc[:, 1]] = 1.0
    if state.apples.any():
        oc = grid.orchard_cells[state.apples]
        full[CH_APPLE, oc[:, 0], oc[:, 1]] = 1.0
    return full


def render_observation(
    state: WorldState,
    player: int,
    condition: str,
    tracker_traces: np.ndarray,
    config: EnvConfig,
    grid: GridMap,
    window: int | None = None,
) -> Observation:
    """Egocentric window of one-hot entity channels, zero-padded past borders.

    ``tracker_traces`` is the observer's (already visibility-masked) 5-trace
    vector indexed by player; it is reordered self-first for the network.
    """
    if condition not in (IDENTIFIABLE, ANONYMOUS):
        raise ValueError(f"unknown condition {condition!r}")
    win = config.obs_window if window is None else window
    half = win // 2

    full = _entity_grid(state, grid)
    slot = iter(CH_OTHER_SLOTS)
    for p in range(state.n_players):
        r, c = state.positions[p]
        if p == player:
            full[CH_SELF, r, c] = 1.0
        elif condition == IDENTIFIABLE:
            full[next(slot), r, c] = 1.0
        else:
            full[CH_OTHER_SLOTS[0], r, c] = 1.0

    out = np.zeros((N_CHANNELS, win, win), dtype=np.float32)
    pr, pc = int(state.positions[player, 0]), int(state.positions[player, 1])
    r0, r1 = max(0, pr - half), min(grid.height, pr + half + 1)
    c0, c1 = max(0, pc - half), min(grid.width, pc + half + 1)
    out[:, r0 - (pr - half) : r1 - (pr - half), c0 - (pc - half) : c1 - (pc - half)] = full[
        :, r0:r1, c0:c1
    ]

    if config.rotate_observations:
        # Align the window so the avatar's facing direction points up.
        out = np.ascontiguousarray(np.rot90(out, k=int(state.orientations[player]), axes=(1, 2)))

    order = [player] + [p for p in range(state.n_players) if p != player]
    contributions = np.asarray(tracker_traces, dtype=np.float64)[order]
    return Observation(tensor=out, contributions=contributions)


class ObservationBuilder:
    """Batch observation rendering for one arena.

    Caches the static channels (wall/river/ground) per map and rebuilds only
    the dynamic layers once per step; produces the same tensors as
    ``render_observation``.
    """

    def __init__(self, config: EnvConfig, grid: GridMap):
        self.config = config
        self.grid = grid
        self.static = np.zeros((N_CHANNELS, grid.height, grid.width), dtype=np.float32)
        self.static[CH_GROUND] = grid.cells == CellClass.GROUND
        self.static[CH_WALL] = grid.cells == CellClass.WALL
        self.static[CH_RIVER] = grid.cells == CellClass.RIVER

    def all_observations(
        self, state: WorldState, condition: str, trackers: list[np.ndarray]
    ) -> list[Observation]:
        grid = self.grid
        full = self.static.copy()
        if state.polluted.any():
            rc = grid.river_cells[state.polluted]
            full[CH_POLLUTION, rc[:, 0], rc[:, 1]] = 1.0
        if state.apples.any():
            oc = grid.orchard_cells[state.apples]
            full[CH_APPLE, oc[:, 0], oc[:, 1]] = 1.0

        win = self.config.obs_window
        half = win // 2
        out: list[Observation] = []
        n = state.n_players
        for player in range(n):
            frame = full.copy()
            slot = iter(CH_OTHER_SLOTS)
            for p in range(n):
                r, c = state.positions[p]
                if p == player:
                    frame[CH_SELF, r, c] = 1.0
                elif condition == IDENTIFIABLE:
                    frame[next(slot), r, c] = 1.0
                else:
                    frame[CH_OTHER_SLOTS[0], r, c] = 1.0
            window = np.zeros((N_CHANNELS, win, win), dtype=np.float32)
            pr, pc = int(state.positions[player, 0]), int(state.positions[player, 1])
            r0, r1 = max(0, pr - half), min(grid.height, pr + half + 1)
            c0, c1 = max(0, pc - half), min(grid.width, pc + half + 1)
            window[
                :, r0 - (pr - half) : r1 - (pr - half), c0 - (pc - half) : c1 - (pc - half)
            ] = frame[:, r0:r1, c0:c1]
            if self.config.rotate_observations:
                window = np.ascontiguousarray(
                    np.rot90(window, k=int(state.orientations[player]), axes=(1, 2))
                )
            order = [player] + [p for p in range(n) if p != player]
            contributions = np.asarray(trackers[player], dtype=np.float64)[order]
            out.append(Observation(tensor=window, contributions=contributions))
        return out


def full_tile_map(state: WorldState, grid: GridMap) -> np.ndarray:
    """Tile codes for the whole arena (vectorized; no avatars)."""
    tiles = np.full((grid.height, grid.width), TILE_GROUND, dtype=np.int64)
    tiles[grid.cells == CellClass.WALL] = TILE_WALL
    tiles[grid.cells == CellClass.RIVER] = TILE_RIVER
    tiles[grid.cells == CellClass.ORCHARD] = TILE_ORCHARD
    if state.polluted.any():
        rc = grid.river_cells[state.polluted]
        tiles[rc[:, 0], rc[:, 1]] = TILE_POLLUTION
    if state.apples.any():
        oc = grid.orchard_cells[state.apples]
        tiles[oc[:, 0], oc[:, 1]] = TILE_APPLE
    return tiles


def render_tiles(
    state: WorldState,
    player: int,
    grid: GridMap,
    window: int = 27,
    full_map: np.ndarray | None = None,
) -> dict:
    """Map-aligned tile-code window plus avatar overlay for the display layer."""
    half = window // 2
    pr, pc = int(state.positions[player, 0]), int(state.positions[player, 1])
    full = full_tile_map(state, grid) if full_map is None else full_map
    tiles = np.full((window, window), TILE_VOID, dtype=np.int64)
    r0, r1 = max(0, pr - half), min(grid.height, pr + half + 1)
    c0, c1 = max(0, pc - half), min(grid.width, pc + half + 1)
    tiles[r0 - (pr - half) : r1 - (pr - half), c0 - (pc - half) : c1 - (pc - half)] = full[
        r0:r1, c0:c1
    ]

    avatars = []
    for p in range(state.n_players):
        r, c = int(state.positions[p, 0]), int(state.positions[p, 1])
        wr, wc = r - (pr - half), c - (pc - half)
        if 0 <= wr < window and 0 <= wc < window:
            avatars.append(
                {"player": p, "row": wr, "col": wc, "orientation": int(state.orientations[p])}
            )
    return {"tiles": tiles, "avatars": avatars}
