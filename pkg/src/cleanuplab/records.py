"""Episode logs: schema-versioned line-delimited records and exact replay.

A record file is JSONL: one header line, one line per step, one footer line.
Records embed the full environment config and map text, so any record is
replayable on its own; ``replay`` re-simulates from the seed and recorded
actions and verifies the trajectory and final state digest.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from cleanuplab import SCHEMA_VERSION
from cleanuplab.env.config import EnvConfig
from cleanuplab.env.engine import WorldState, reset, state_digest, step
from cleanuplab.env.grid import GridMap, parse_map
from cleanuplab.errors import ConfigurationError, RecordCorruptionError


@dataclass
class EpisodeRecord:
    """Immutable per-episode log consumed by metrics and replay."""

    config: EnvConfig
    config_digest: str
    seed: int
    map_text: str
    condition: str
    group_id: str
    players: list[str]
    initial_positions: np.ndarray  # (5, 2)
    actions: np.ndarray  # (T, 5) int
    positions: np.ndarray  # (T, 5, 2) post-step
    orientations: np.ndarray  # (T, 5)
    rewards_e: np.ndarray  # (T, 5) extrinsic points
    q: np.ndarray  # (T, 5) contribution flags
    apples: np.ndarray  # (T, 5) apples collected
    fpol: np.ndarray  # (T,) polluted fraction after the step
    final_digest: str
    scores: np.ndarray  # (5,)
    episode_index: int = 0
    task_order: str | None = None  # "first" | "second" for counterbalanced sessions
    rewards_i: np.ndarray | None = None  # (T, 5) intrinsic reward extension

    _grid: GridMap | None = field(default=None, repr=False, compare=False)

    @property
    def length(self) -> int:
        return len(self.actions)

    def grid(self) -> GridMap:
        if self._grid is None:
            object.__setattr__(self, "_grid", parse_map(self.map_text))
        return self._grid

    def header_dict(self) -> dict:
        from dataclasses import asdict

        head = {
            "kind": "header",
            "schema": SCHEMA_VERSION,
            "config": asdict(self.config),
            "config_digest": self.config_digest,
            "seed": self.seed,
            "map_text": self.map_text,
            "condition": self.condition,
            "group_id": self.group_id,
            "players": self.players,
            "episode_index": self.episode_index,
            "initial_positions": self.initial_positions.tolist(),
            "length": self.length,
        }
        if self.task_order is not None:
            head["task_order"] = self.task_order
        return head

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            self.dump(fh)

    def dump(self, fh) -> None:
        def emit(obj):
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")

        emit(self.header_dict())
        for t in range(self.length):
            line = {
                "kind": "step",
                "t": t,
                "act": self.actions[t].tolist(),
                "pos": self.positions[t].tolist(),
                "ori": self.orientations[t].tolist(),
                "re": self.rewards_e[t].tolist(),
                "q": self.q[t].tolist(),
                "ap": self.apples[t].tolist(),
                "fpol": float(self.fpol[t]),
            }
            if self.rewards_i is not None:
                line["ri"] = [float(x) for x in self.rewards_i[t]]
            emit(line)
        emit(
            {
                "kind": "end",
                "final_digest": self.final_digest,
                "scores": self.scores.tolist(),
            }
        )


class EpisodeRecorder:
    """Accumulates one episode's steps and freezes them into a record."""

    def __init__(
        self,
        config: EnvConfig,
        grid: GridMap,
        seed: int,
        condition: str,
        group_id: str,
        players: list[str],
        state: WorldState,
        episode_index: int = 0,
        task_order: str | None = None,
        track_intrinsic: bool = False,
    ):
        self.config = config
        self.grid_text = grid.text
        self.seed = seed
        self.condition = condition
        self.group_id = group_id
        self.players = list(players)
        self.episode_index = episode_index
        self.task_order = task_order
        self.initial_positions = state.positions.copy()
        self._acts: list[np.ndarray] = []
        self._pos: list[np.ndarray] = []
        self._ori: list[np.ndarray] = []
        self._re: list[np.ndarray] = []
        self._q: list[np.ndarray] = []
        self._ap: list[np.ndarray] = []
        self._fpol: list[float] = []
        self._ri: list[np.ndarray] | None = [] if track_intrinsic else None

    def add_step(self, actions, state: WorldState, events, fpol: float, r_i=None) -> None:
        self._acts.append(np.asarray(actions, dtype=np.int64).copy())
        self._pos.append(state.positions.copy())
        self._ori.append(state.orientations.copy())
        self._re.append(events.reward.copy())
        self._q.append(events.q.copy())
        self._ap.append(events.apples_collected.copy())
        self._fpol.append(float(fpol))
        if self._ri is not None:
            self._ri.append(np.asarray(r_i, dtype=np.float64).copy())

    def finish(self, state: WorldState) -> EpisodeRecord:
        return EpisodeRecord(
            config=self.config,
            config_digest=self.config.digest(),
            seed=self.seed,
            map_text=self.grid_text,
            condition=self.condition,
            group_id=self.group_id,
            players=self.players,
            initial_positions=self.initial_positions,
            actions=np.stack(self._acts),
            positions=np.stack(self._pos),
            orientations=np.stack(self._ori),
            rewards_e=np.stack(self._re),
            q=np.stack(self._q),
            apples=np.stack(self._ap),
            fpol=np.asarray(self._fpol),
            final_digest=state_digest(state),
            scores=state.scores.copy(),
            episode_index=self.episode_index,
            task_order=self.task_order,
            rewards_i=np.stack(self._ri) if self._ri else None,
        )


def read_record(path: str) -> EpisodeRecord:
    with open(path, encoding="utf-8") as fh:
        return parse_record(fh)


def parse_record(fh) -> EpisodeRecord:
    lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise RecordCorruptionError("empty record file")
    head = json.loads(lines[0])
    if head.get("kind") != "header":
        raise RecordCorruptionError("first line is not a header")
    if head.get("schema", 0) > SCHEMA_VERSION:
        raise RecordCorruptionError(f"record schema {head['schema']} newer than supported")
    tail = json.loads(lines[-1])
    if tail.get("kind") != "end":
        raise RecordCorruptionError(
            f"record truncated: footer missing after {len(lines) - 1} lines"
        )
    steps = [json.loads(ln) for ln in lines[1:-1]]
    expected = head.get("length", len(steps))
    if len(steps) != expected:
        raise RecordCorruptionError(
            f"record truncated at step {len(steps)} of {expected}", step=len(steps)
        )
    for t, s in enumerate(steps):
        if s.get("kind") != "step" or s.get("t") != t:
            raise RecordCorruptionError(f"bad step line at index {t}", step=t)

    cfg = EnvConfig(**head["config"])
    has_ri = steps and "ri" in steps[0]
    return EpisodeRecord(
        config=cfg,
        config_digest=head["config_digest"],
        seed=head["seed"],
        map_text=head["map_text"],
        condition=head["condition"],
        group_id=head["group_id"],
        players=head["players"],
        initial_positions=np.asarray(head["initial_positions"], dtype=np.int64),
        actions=np.asarray([s["act"] for s in steps], dtype=np.int64),
        positions=np.asarray([s["pos"] for s in steps], dtype=np.int64),
        orientations=np.asarray([s["ori"] for s in steps], dtype=np.int64),
        rewards_e=np.asarray([s["re"] for s in steps], dtype=np.int64),
        q=np.asarray([s["q"] for s in steps], dtype=np.int64),
        apples=np.asarray([s["ap"] for s in steps], dtype=np.int64),
        fpol=np.asarray([s["fpol"] for s in steps], dtype=np.float64),
        final_digest=tail["final_digest"],
        scores=np.asarray(tail["scores"], dtype=np.int64),
        episode_index=head.get("episode_index", 0),
        task_order=head.get("task_order"),
        rewards_i=np.asarray([s["ri"] for s in steps], dtype=np.float64) if has_ri else None,
    )


def read_records_dir(directory: str) -> Iterator[EpisodeRecord]:
    names = sorted(n for n in os.listdir(directory) if n.endswith((".jsonl", ".rec")))
    for name in names:
        yield read_record(os.path.join(directory, name))


def replay(record: EpisodeRecord, expect_config: EnvConfig | None = None) -> WorldState:
    """Re-simulate a record and verify it step by step.

    Returns the final world state; raises ``RecordCorruptionError`` naming the
    first divergent step on mismatch, and ``ConfigurationError`` when the
    record was produced under a different parameter set than expected.
    """
    if expect_config is not None and expect_config.digest() != record.config_digest:
        raise ConfigurationError(
            f"record config digest {record.config_digest} does not match "
            f"expected {expect_config.digest()}"
        )
    if record.config.digest() != record.config_digest:
        raise RecordCorruptionError("embedded config does not match its digest")
    grid = record.grid()
    state = reset(record.config, grid, record.seed)
    if not np.array_equal(state.positions, record.initial_positions):
        raise RecordCorruptionError("initial positions diverge", step=0)
    from cleanuplab.env.engine import polluted_fraction

    for t in range(record.length):
        events = step(state, record.actions[t], record.config, grid)
        ok = (
            np.array_equal(state.positions, record.positions[t])
            and np.array_equal(state.orientations, record.orientations[t])
            and np.array_equal(events.reward, record.rewards_e[t])
            and np.array_equal(events.q, record.q[t])
            and np.array_equal(events.apples_collected, record.apples[t])
            and abs(polluted_fraction(state) - record.fpol[t]) < 1e-12
        )
        if not ok:
            raise RecordCorruptionError(f"replay diverges at step {t}", step=t)
    digest = state_digest(state)
    if digest != record.final_digest:
        raise RecordCorruptionError(
            f"final digest {digest} != recorded {record.final_digest}",
            step=record.length,
        )
    return state
