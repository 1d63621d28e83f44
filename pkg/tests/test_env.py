from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cleanuplab.env.config import EVALUATION_START, preset
from cleanuplab.env.engine import (
    Action,
    apple_regrowth_prob,
    beam_footprint,
    polluted_fraction,
    pollution_spawn_prob,
    reset,
    state_digest,
    step,
)
from cleanuplab.env.grid import parse_map
from cleanuplab.env.observe import (
    ANONYMOUS,
    CH_APPLE,
    CH_OTHER_SLOTS,
    CH_SELF,
    IDENTIFIABLE,
    ObservationBuilder,
    render_observation,
    render_tiles,
)
from cleanuplab.errors import ConfigurationError, StateError
from tests.conftest import make_test_map

NOOPS = [Action.NOOP] * 5


# ---------------------------------------------------------------------------
# Maps


def test_default_map_geometry(grid):
    assert grid.width == 23 and grid.height == 16
    assert len(grid.spawns) >= 5
    assert grid.n_river > 0 and grid.n_orchard > 0


def test_map_rejects_split_river():
    rows = [
        "R......OO",
        ".......OO",
        "R...P..OO",
        "....P..OO",
        "....P..OO",
        "....P..OO",
        "....P..OO",
    ]
    with pytest.raises(ConfigurationError, match="river"):
        parse_map(make_test_map(rows))


def test_map_rejects_too_few_spawns():
    rows = [
        "RR.....OO",
        "RR.....OO",
        "RR..P..OO",
        "RR.....OO",
        "RR.....OO",
        "RR.....OO",
        "RR.....OO",
    ]
    with pytest.raises(ConfigurationError, match="spawn"):
        parse_map(make_test_map(rows))


def test_map_round_trip(grid):
    reparsed = parse_map(grid.text)
    assert np.array_equal(reparsed.cells, grid.cells)
    assert reparsed.spawns == grid.spawns


# ---------------------------------------------------------------------------
# Production functions (hand values)


def test_apple_regrowth_agent_params(agent_cfg):
    assert apple_regrowth_prob(0.0, agent_cfg) == pytest.approx(0.03, abs=1e-15)
    assert apple_regrowth_prob(0.32, agent_cfg) == 0.0
    assert apple_regrowth_prob(1.0, agent_cfg) == 0.0  # clamped below zero


def test_apple_regrowth_human_params(human_cfg):
    assert apple_regrowth_prob(0.45, human_cfg) == pytest.approx(0.0335, abs=1e-15)
    # Below the abundance threshold the rate clamps at its maximum.
    assert apple_regrowth_prob(0.1, human_cfg) == pytest.approx(0.067, abs=1e-15)


def test_pollution_spawn_prob(agent_cfg, human_cfg):
    assert pollution_spawn_prob(0.0, agent_cfg) == 0.5
    assert pollution_spawn_prob(0.32, agent_cfg) == 0.0
    assert pollution_spawn_prob(0.59, human_cfg) == 0.6
    assert pollution_spawn_prob(0.60, human_cfg) == 0.0


@given(f=st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_regrowth_prob_bounds(f):
    cfg = preset("agent-paper")
    p = apple_regrowth_prob(f, cfg)
    assert 0.0 <= p <= cfg.pr_apple


# ---------------------------------------------------------------------------
# Reset


def test_reset_training_start(agent_cfg, grid):
    state = reset(agent_cfg, grid, 7)
    assert polluted_fraction(state) == 1.0
    assert state.apples.sum() == 0
    assert np.all(state.scores == 0)


def test_reset_evaluation_start(human_cfg, grid):
    state = reset(human_cfg, grid, 7)
    assert polluted_fraction(state) == 0.0
    assert state.apples.all()


def test_reset_distinct_spawns(agent_cfg, grid):
    state = reset(agent_cfg, grid, 3)
    cells = {tuple(p) for p in state.positions}
    assert len(cells) == 5
    for r, c in cells:
        assert (r, c) in grid.spawns


def test_reset_deterministic(agent_cfg, grid):
    a = reset(agent_cfg, grid, 99)
    b = reset(agent_cfg, grid, 99)
    assert state_digest(a) == state_digest(b)
    assert np.array_equal(a.positions, b.positions)


def test_reset_rejects_invalid_config(grid, agent_cfg):
    bad = dataclasses.replace(agent_cfg, h_abundance=0.5, h_depletion=0.4)
    with pytest.raises(ConfigurationError):
        reset(bad, grid, 0)


# ---------------------------------------------------------------------------
# Step mechanics


def _state_with_positions(cfg, grid, positions, orientations=None, seed=0):
    state = reset(cfg, grid, seed)
    state.positions = np.asarray(positions, dtype=np.int64)
    if orientations is not None:
        state.orientations = np.asarray(orientations, dtype=np.int64)
    return state


def test_apple_collection_human_params(human_cfg, small_grid):
    # Player 0 just left of an orchard cell with an apple; move right onto it.
    cfg = human_cfg
    positions = [[2, 6], [0, 3], [1, 3], [3, 3], [6, 5]]
    state = _state_with_positions(cfg, small_grid, positions)
    apple_idx = small_grid.orchard_index[2, 7]
    assert state.apples[apple_idx]
    events = step(state, [Action.MOVE_RIGHT] + [Action.NOOP] * 4, cfg, small_grid)
    assert events.reward[0] == 1
    assert events.apples_collected[0] == 1
    assert not state.apples[apple_idx]


def test_ticket_hits_agent_params(agent_cfg, small_grid):
    # Player 0 faces right with player 1 two cells ahead.
    cfg = agent_cfg
    positions = [[3, 3], [3, 5], [0, 3], [1, 3], [6, 3]]
    state = _state_with_positions(cfg, small_grid, positions, orientations=[1, 0, 0, 0, 0])
    events = step(state, [Action.FIRE_TICKET] + [Action.NOOP] * 4, cfg, small_grid)
    assert events.reward[0] == -1
    assert events.reward[1] == -50
    assert events.tickets_issued[0] == 1
    assert events.tickets_received[1] == 1


def test_ticket_budget_exhaustion(agent_cfg, small_grid):
    cfg = dataclasses.replace(agent_cfg, ticket_budget=1)
    positions = [[3, 3], [3, 5], [0, 3], [1, 3], [6, 3]]
    state = _state_with_positions(cfg, small_grid, positions, orientations=[1, 0, 0, 0, 0])
    step(state, [Action.FIRE_TICKET] + [Action.NOOP] * 4, cfg, small_grid)
    assert state.tickets_remaining[0] == 0
    events = step(state, [Action.FIRE_TICKET] + [Action.NOOP] * 4, cfg, small_grid)
    assert events.tickets_issued[0] == 0
    assert events.reward[0] == 0


def test_ticket_no_target_no_cost(agent_cfg, small_grid):
    positions = [[6, 3], [0, 6], [0, 3], [1, 3], [0, 4]]
    state = _state_with_positions(agent_cfg, small_grid, positions, orientations=[2, 0, 0, 0, 0])
    events = step(state, [Action.FIRE_TICKET] + [Action.NOOP] * 4, agent_cfg, small_grid)
    assert events.reward[0] == 0
    assert events.tickets_issued[0] == 0


def test_clean_beam_removes_pollution_and_sets_q(agent_cfg, small_grid):
    # Player 0 adjacent to the polluted river, facing it: footprint covers
    # the 2-wide river band over 3 rows -> 6 polluted cells.
    state = _state_with_positions(
        agent_cfg, small_grid, [[3, 2], [3, 4], [0, 4], [1, 4], [6, 4]],
        orientations=[3, 0, 0, 0, 0],
    )
    events = step(state, [Action.FIRE_CLEAN] + [Action.NOOP] * 4, agent_cfg, small_grid)
    assert events.cleaned_cells[0] == 6
    assert events.q[0] == 1
    assert events.q[1] == 0


def test_clean_three_cells_q(agent_cfg, small_grid):
    # Restrict pollution to exactly 3 cells in the footprint.
    state = _state_with_positions(
        agent_cfg, small_grid, [[3, 2], [3, 4], [0, 4], [1, 4], [6, 4]],
        orientations=[3, 0, 0, 0, 0],
    )
    state.polluted[:] = False
    for cell in [(2, 0), (3, 0), (4, 0)]:
        state.polluted[small_grid.river_index[cell]] = True
    events = step(state, [Action.FIRE_CLEAN] + [Action.NOOP] * 4, agent_cfg, small_grid)
    assert events.cleaned_cells[0] == 3
    assert events.q[0] == 1


def test_move_into_wall_stays(agent_cfg):
    rows = [
        "RR..#..OO",
        "RR..P..OO",
        "RR.#P#.OO",
        "RR..P..OO",
        "RR..P..OO",
        "RR..P..OO",
        "RR..P..OO",
    ]
    grid = parse_map(make_test_map(rows))
    state = _state_with_positions(
        agent_cfg, grid, [[2, 4], [1, 4], [3, 4], [4, 4], [5, 4]]
    )
    events = step(state, [Action.MOVE_LEFT] + [Action.NOOP] * 4, agent_cfg, grid)
    assert tuple(state.positions[0]) == (2, 4)
    assert events.reward[0] == 0


def test_move_into_polluted_river_blocked(agent_cfg, small_grid):
    state = _state_with_positions(
        agent_cfg, small_grid, [[3, 2], [3, 4], [0, 4], [1, 4], [6, 4]]
    )
    assert polluted_fraction(state) == 1.0
    step(state, [Action.MOVE_LEFT] + [Action.NOOP] * 4, agent_cfg, small_grid)
    assert tuple(state.positions[0]) == (3, 2)
    # After cleaning, the same move succeeds.
    state.polluted[:] = False
    step(state, [Action.MOVE_LEFT] + [Action.NOOP] * 4, agent_cfg, small_grid)
    assert tuple(state.positions[0]) == (3, 1)


def test_move_conflict_single_winner(agent_cfg, small_grid):
    # Players 0 and 1 both target (3, 4).
    wins = set()
    for seed in range(20):
        state = _state_with_positions(
            agent_cfg, small_grid, [[3, 3], [3, 5], [0, 4], [1, 4], [6, 4]], seed=seed
        )
        step(
            state,
            [Action.MOVE_RIGHT, Action.MOVE_LEFT] + [Action.NOOP] * 3,
            agent_cfg,
            small_grid,
        )
        p0, p1 = tuple(state.positions[0]), tuple(state.positions[1])
        assert (p0 == (3, 4)) != (p1 == (3, 4))  # exactly one enters
        wins.add(0 if p0 == (3, 4) else 1)
    assert wins == {0, 1}  # both players win sometimes across seeds


def test_occupied_cell_blocks(agent_cfg, small_grid):
    state = _state_with_positions(
        agent_cfg, small_grid, [[3, 3], [3, 4], [0, 4], [1, 4], [6, 4]]
    )
    step(state, [Action.MOVE_RIGHT] + [Action.NOOP] * 4, agent_cfg, small_grid)
    assert tuple(state.positions[0]) == (3, 3)


def test_rotation_changes_beam_direction(agent_cfg, small_grid):
    state = _state_with_positions(
        agent_cfg, small_grid, [[3, 3], [0, 5], [1, 5], [2, 5], [6, 5]],
        orientations=[0, 0, 0, 0, 0],
    )
    footprint_up = set(beam_footprint(state, small_grid, 0, agent_cfg))
    step(state, [Action.ROTATE_LEFT] + [Action.NOOP] * 4, agent_cfg, small_grid)
    assert state.orientations[0] == 3
    footprint_left = set(beam_footprint(state, small_grid, 0, agent_cfg))
    assert footprint_up != footprint_left
    assert all(c < 3 for _, c in footprint_left)  # pointing at the river


def test_beam_blocked_by_wall(agent_cfg):
    rows = [
        "RR.....OO",
        "RR.....OO",
        "RR.P#..OO",
        "RR.P...OO",
        "RR.P...OO",
        "RR.P...OO",
        "RR.P...OO",
    ]
    grid = parse_map(make_test_map(rows))
    state = _state_with_positions(
        agent_cfg, grid, [[2, 3], [3, 3], [4, 3], [5, 3], [6, 3]],
        orientations=[1, 0, 0, 0, 0],
    )
    cells = beam_footprint(state, grid, 0, agent_cfg)
    assert (2, 4) not in cells  # the wall itself
    assert (2, 5) not in cells  # center ray stops at the wall
    assert (1, 5) in cells  # side ray continues


def test_step_after_end_raises(agent_cfg, grid):
    cfg = dataclasses.replace(agent_cfg, episode_length=2)
    state = reset(cfg, grid, 0)
    step(state, NOOPS, cfg, grid)
    step(state, NOOPS, cfg, grid)
    with pytest.raises(StateError):
        step(state, NOOPS, cfg, grid)


def test_polluted_fraction_counts(agent_cfg, grid):
    state = reset(agent_cfg, grid, 0)
    state.polluted[:] = False
    assert polluted_fraction(state) == 0.0
    state.polluted[:] = True
    assert polluted_fraction(state) == 1.0
    state.polluted[:] = False
    state.polluted[:13] = True
    assert polluted_fraction(state) == pytest.approx(13 / grid.n_river)


def test_pollution_never_spawns_at_saturation_threshold(agent_cfg, grid):
    # Pin the fraction exactly at h_depletion and verify no spawn ever occurs.
    state = reset(agent_cfg, grid, 11)
    k = int(round(agent_cfg.h_depletion * grid.n_river))
    assert k / grid.n_river >= agent_cfg.h_depletion
    for t in range(300):
        state.polluted[:] = False
        state.polluted[:k] = True
        state.t = 0
        step(state, NOOPS, agent_cfg, grid)
        assert state.polluted.sum() == k  # no new pollution entered


def test_score_accounting_identity(agent_cfg, grid):
    state = reset(agent_cfg, grid, 5)
    apples = np.zeros(5, dtype=np.int64)
    issued = np.zeros(5, dtype=np.int64)
    received = np.zeros(5, dtype=np.int64)
    rng = np.random.default_rng(0)
    for _ in range(300):
        events = step(state, rng.integers(0, 9, size=5), agent_cfg, grid)
        apples += events.apples_collected
        issued += events.tickets_issued
        received += events.tickets_received
    expected = (
        apples * agent_cfg.apple_reward
        - issued * agent_cfg.ticket_cost
        - received * agent_cfg.ticket_penalty
    )
    assert np.array_equal(state.scores, expected)


def test_apple_collected_at_most_once(agent_cfg, grid):
    # Conservation: total apples collected never exceeds apples removed.
    cfg = dataclasses.replace(agent_cfg, initial_mode=EVALUATION_START)
    state = reset(cfg, grid, 5)
    rng = np.random.default_rng(2)
    collected = 0
    regrown_possible = 0
    for _ in range(200):
        before = int(state.apples.sum())
        events = step(state, rng.integers(0, 9, size=5), cfg, grid)
        after = int(state.apples.sum())
        collected = int(events.apples_collected.sum())
        # apples removed by collection == collected count (each from one cell)
        assert after - before >= -collected


def test_episode_determinism(agent_cfg, grid):
    rng = np.random.default_rng(8)
    actions = rng.integers(0, 9, size=(100, 5))
    digests = []
    for _ in range(2):
        state = reset(agent_cfg, grid, 77)
        for t in range(100):
            step(state, actions[t], agent_cfg, grid)
        digests.append(state_digest(state))
    assert digests[0] == digests[1]


# ---------------------------------------------------------------------------
# Observations


def test_human_window_covers_map_from_center(human_cfg, grid):
    state = reset(human_cfg, grid, 0)
    state.positions[0] = [grid.height // 2, grid.width // 2]
    obs = render_observation(state, 0, IDENTIFIABLE, np.zeros(5), human_cfg, grid)
    assert obs.window == 27
    # Every apple in the full orchard is visible inside the window.
    assert obs.tensor[CH_APPLE].sum() == grid.n_orchard


def test_observation_determinism(agent_cfg, grid):
    state = reset(agent_cfg, grid, 3)
    a = render_observation(state, 2, IDENTIFIABLE, np.arange(5.0), agent_cfg, grid)
    b = render_observation(state, 2, IDENTIFIABLE, np.arange(5.0), agent_cfg, grid)
    assert np.array_equal(a.tensor, b.tensor)
    assert np.array_equal(a.contributions, b.contributions)


def test_observation_identity_channels(agent_cfg, grid):
    state = reset(agent_cfg, grid, 3)
    ident = render_observation(state, 0, IDENTIFIABLE, np.zeros(5), agent_cfg, grid)
    anon = render_observation(state, 0, ANONYMOUS, np.zeros(5), agent_cfg, grid)
    assert ident.tensor[CH_SELF].sum() == 1
    # identifiable: others spread across distinct slot channels
    ident_slots = [ident.tensor[ch].sum() for ch in CH_OTHER_SLOTS]
    anon_slots = [anon.tensor[ch].sum() for ch in CH_OTHER_SLOTS]
    visible_others = sum(ident_slots)
    assert visible_others == sum(anon_slots)
    if visible_others > 0:
        assert max(ident_slots) <= 1.0
        assert anon_slots[1:] == [0.0, 0.0, 0.0]


def test_observation_contribution_order(agent_cfg, grid):
    state = reset(agent_cfg, grid, 3)
    traces = np.array([0.0, 10.0, 20.0, 30.0, 40.0])
    obs = render_observation(state, 2, IDENTIFIABLE, traces, agent_cfg, grid)
    assert obs.contributions[0] == 20.0  # self first
    assert sorted(obs.contributions[1:]) == [0.0, 10.0, 30.0, 40.0]


def test_observation_rotation_faces_up(agent_cfg, grid):
    # An apple directly in front of the avatar appears above the window
    # center after the orientation-aligned rotation, whichever way it faces.
    state = reset(agent_cfg, grid, 5)
    state.positions[0] = [8, 18]  # inside the orchard band
    state.positions[1:] = [[4, 11], [5, 11], [6, 11], [7, 11]]
    half = agent_cfg.obs_window // 2
    for orient, (dr, dc) in enumerate([(-1, 0), (0, 1), (1, 0), (0, -1)]):
        state.orientations[0] = orient
        state.apples[:] = False
        front = (8 + dr, 18 + dc)
        state.apples[grid.orchard_index[front]] = True
        obs = render_observation(state, 0, IDENTIFIABLE, np.zeros(5), agent_cfg, grid)
        assert obs.tensor[CH_APPLE, half - 1, half] == 1.0, f"orientation {orient}"


def test_observation_builder_matches_reference(agent_cfg, grid):
    state = reset(agent_cfg, grid, 21)
    rng = np.random.default_rng(0)
    for _ in range(5):
        step(state, rng.integers(0, 9, size=5), agent_cfg, grid)
    traces = [rng.random(5) for _ in range(5)]
    builder = ObservationBuilder(agent_cfg, grid)
    fast = builder.all_observations(state, IDENTIFIABLE, traces)
    for p in range(5):
        ref = render_observation(state, p, IDENTIFIABLE, traces[p], agent_cfg, grid)
        assert np.array_equal(fast[p].tensor, ref.tensor)
        assert np.array_equal(fast[p].contributions, ref.contributions)


def test_render_tiles_window(human_cfg, grid):
    state = reset(human_cfg, grid, 0)
    view = render_tiles(state, 0, grid, window=27)
    assert view["tiles"].shape == (27, 27)
    assert any(a["row"] == 13 and a["col"] == 13 for a in view["avatars"])
