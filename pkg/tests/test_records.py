from __future__ import annotations

import dataclasses
import io

import numpy as np
import pytest

from cleanuplab.env.config import preset
from cleanuplab.env.engine import polluted_fraction, reset, state_digest, step
from cleanuplab.errors import ConfigurationError, RecordCorruptionError
from cleanuplab.records import EpisodeRecorder, parse_record, read_record, replay


def make_record(cfg, grid, seed=11, steps=60, track_intrinsic=False):
    state = reset(cfg, grid, seed)
    rec = EpisodeRecorder(
        cfg, grid, seed, "identifiable", "g0", [f"p{i}" for i in range(5)], state,
        track_intrinsic=track_intrinsic,
    )
    rng = np.random.default_rng(seed + 1)
    for _ in range(steps):
        actions = rng.integers(0, 9, size=5)
        events = step(state, actions, cfg, grid)
        rec.add_step(actions, state, events, polluted_fraction(state),
                     r_i=np.zeros(5) if track_intrinsic else None)
    return rec.finish(state), state


def test_round_trip_identity(agent_cfg, grid, tmp_path):
    cfg = dataclasses.replace(agent_cfg, episode_length=60)
    record, _ = make_record(cfg, grid)
    path = tmp_path / "ep.jsonl"
    record.write(str(path))
    loaded = read_record(str(path))
    assert loaded.config == record.config
    assert loaded.seed == record.seed
    assert np.array_equal(loaded.actions, record.actions)
    assert np.array_equal(loaded.positions, record.positions)
    assert np.array_equal(loaded.rewards_e, record.rewards_e)
    assert np.array_equal(loaded.scores, record.scores)
    assert loaded.final_digest == record.final_digest
    assert loaded.condition == record.condition


def test_replay_matches(agent_cfg, grid):
    cfg = dataclasses.replace(agent_cfg, episode_length=60)
    record, final_state = make_record(cfg, grid)
    replayed = replay(record)
    assert state_digest(replayed) == state_digest(final_state)


def test_replay_detects_tampered_step(agent_cfg, grid):
    cfg = dataclasses.replace(agent_cfg, episode_length=60)
    record, _ = make_record(cfg, grid)
    record.rewards_e[33, 2] += 1
    with pytest.raises(RecordCorruptionError) as err:
        replay(record)
    assert err.value.step == 33


def test_replay_rejects_wrong_preset(agent_cfg, human_cfg, grid):
    cfg = dataclasses.replace(agent_cfg, episode_length=60)
    record, _ = make_record(cfg, grid)
    with pytest.raises(ConfigurationError, match="digest"):
        replay(record, expect_config=human_cfg)


def test_truncated_file_rejected(agent_cfg, grid, tmp_path):
    cfg = dataclasses.replace(agent_cfg, episode_length=60)
    record, _ = make_record(cfg, grid)
    buf = io.StringIO()
    record.dump(buf)
    lines = buf.getvalue().splitlines()
    truncated = "\n".join(lines[:30])  # no footer
    with pytest.raises(RecordCorruptionError, match="truncated"):
        parse_record(io.StringIO(truncated))


def test_truncated_with_footer_names_step(agent_cfg, grid):
    cfg = dataclasses.replace(agent_cfg, episode_length=60)
    record, _ = make_record(cfg, grid)
    buf = io.StringIO()
    record.dump(buf)
    lines = buf.getvalue().splitlines()
    clipped = "\n".join(lines[:30] + [lines[-1]])
    with pytest.raises(RecordCorruptionError) as err:
        parse_record(io.StringIO(clipped))
    assert err.value.step == 29


def test_newer_schema_rejected(agent_cfg, grid):
    cfg = dataclasses.replace(agent_cfg, episode_length=5)
    record, _ = make_record(cfg, grid, steps=5)
    buf = io.StringIO()
    record.dump(buf)
    text = buf.getvalue().replace('"schema":1', '"schema":999', 1)
    with pytest.raises(RecordCorruptionError, match="schema"):
        parse_record(io.StringIO(text))


def test_intrinsic_extension_round_trip(agent_cfg, grid, tmp_path):
    cfg = dataclasses.replace(agent_cfg, episode_length=20)
    record, _ = make_record(cfg, grid, steps=20, track_intrinsic=True)
    path = tmp_path / "ri.jsonl"
    record.write(str(path))
    loaded = read_record(str(path))
    assert loaded.rewards_i is not None
    assert loaded.rewards_i.shape == (20, 5)
