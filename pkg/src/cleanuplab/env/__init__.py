from cleanuplab.env.config import EnvConfig, preset
from cleanuplab.env.engine import (
    Action,
    StepEvents,
    WorldState,
    apple_regrowth_prob,
    polluted_fraction,
    pollution_spawn_prob,
    reset,
    state_digest,
    step,
)
from cleanuplab.env.grid import CellClass, GridMap, builtin_map, load_map, parse_map
from cleanuplab.env.observe import Observation, render_observation, render_tiles

__all__ = [
    "Action",
    "CellClass",
    "EnvConfig",
    "GridMap",
    "Observation",
    "StepEvents",
    "WorldState",
    "apple_regrowth_prob",
    "builtin_map",
    "load_map",
    "parse_map",
    "polluted_fraction",
    "pollution_spawn_prob",
    "preset",
    "render_observation",
    "render_tiles",
    "reset",
    "state_digest",
    "step",
]
