"""Live 5-human session engine: lobby, six tutorials, a counterbalanced
14-episode schedule, buffered input, and scoring.

The engine is transport-independent: ``tick()`` advances one authoritative
step and returns the messages to deliver (slot-targeted frames plus
broadcasts). The service layer owns the wall clock and the websockets.

Input buffering: arrivals overwrite a per-participant candidate slot; a
candidate is accepted at tick time, at most once per 100 session-ms, so the
latest arrival within an acceptance window wins and a held key caps out at
10 actions per second.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from cleanuplab import SCHEMA_VERSION
from cleanuplab.env.config import EVALUATION_START, TRAINING_START, EnvConfig, preset
from cleanuplab.env.engine import (
    Action,
    WorldState,
    beam_footprint,
    polluted_fraction,
    reset,
    step,
)
from cleanuplab.env.grid import GridMap, builtin_map
from cleanuplab.env.observe import full_tile_map, render_tiles
from cleanuplab.errors import StateError
from cleanuplab.records import EpisodeRecord, EpisodeRecorder
from cleanuplab.reputation import ContributionTracker, update_traces
from cleanuplab.seeding import derive_seed

N_SLOTS = 5
SELF_COLOR = "#4363d8"  # the observer's own avatar is always blue
IDENTIFIABLE_COLORS = ["#e6194b", "#3cb44b", "#ffe119", "#f58231", "#911eb4"]
ANONYMOUS_COLOR = "#b8a9dd"  # lavender

TUTORIALS = (
    ("movement", "tutorial_movement", TRAINING_START),
    ("apples", "tutorial_apples", EVALUATION_START),
    ("cleaning", "tutorial_cleaning", TRAINING_START),
    ("growth", "tutorial_growth", TRAINING_START),
    ("ticket_cost", "tutorial_ticket_give", TRAINING_START),
    ("ticket_receipt", "tutorial_ticket_receive", TRAINING_START),
)


@dataclass(frozen=True)
class SessionConfig:
    env: EnvConfig = None  # type: ignore[assignment]
    condition_order: str = "identifiable-first"  # or "anonymous-first"
    episodes_per_condition: int = 7
    tick_ms: int = 60
    input_min_interval_ms: int = 100
    tutorial_step_cap: int = 600
    seed: int = 0
    map_name: str = "default"
    window: int = 27
    lockstep: bool = False  # test mode: tick() waits until every slot has input

    def __post_init__(self):
        if self.env is None:
            object.__setattr__(self, "env", preset("human-paper"))
        if self.condition_order not in ("identifiable-first", "anonymous-first"):
            raise ValueError(f"bad condition_order {self.condition_order!r}")

    @property
    def conditions(self) -> list[str]:
        first = "identifiable" if self.condition_order == "identifiable-first" else "anonymous"
        second = "anonymous" if first == "identifiable" else "identifiable"
        return [first] * self.episodes_per_condition + [second] * self.episodes_per_condition


@dataclass
class _InputSlot:
    candidate: int | None = None
    last_accept_ms: float = -1e12


@dataclass
class _TutorialWorld:
    state: WorldState
    grid: GridMap
    config: EnvConfig
    name: str
    with_bot: bool
    visited: set = field(default_factory=set)
    cleaned: int = 0
    collected: int = 0
    issued: int = 0
    received: int = 0
    steps: int = 0
    done: bool = False

    def goal_met(self) -> bool:
        return {
            "movement": len(self.visited) >= 6,
            "apples": self.collected >= 3,
            "cleaning": self.cleaned >= 5,
            "growth": self.cleaned >= 3 and self.collected >= 1,
            "ticket_cost": self.issued >= 1,
            "ticket_receipt": self.received >= 1,
        }[self.name]


def _bot_action(world: _TutorialWorld) -> Action:
    """Scripted second avatar for the ticketing tutorials."""
    state, grid = world.state, world.grid
    if world.name == "ticket_cost":
        return Action.NOOP  # stationary target
    # ticket_receipt: chase the player and fire once in range
    for r, c in beam_footprint(state, grid, 1, world.config):
        if state.positions[0, 0] == r and state.positions[0, 1] == c:
            return Action.FIRE_TICKET
    pr, pc = state.positions[0]
    br, bc = state.positions[1]
    dr, dc = int(pr - br), int(pc - bc)
    # Face the player when roughly aligned, otherwise close the gap.
    if abs(dr) + abs(dc) <= world.config.beam_length:
        want = (
            (0 if dr < 0 else 2) if abs(dr) >= abs(dc) else (1 if dc > 0 else 3)
        )
        cur = int(state.orientations[1])
        if cur != want:
            return Action.ROTATE_RIGHT if (want - cur) % 4 <= 2 else Action.ROTATE_LEFT
        return Action.FIRE_TICKET
    if abs(dr) >= abs(dc):
        return Action.MOVE_DOWN if dr > 0 else Action.MOVE_UP
    return Action.MOVE_RIGHT if dc > 0 else Action.MOVE_LEFT


class PlaySession:
    """Authoritative state machine for one 5-participant session."""

    def __init__(self, config: SessionConfig, session_id: str = "session0"):
        self.config = config
        self.session_id = session_id
        self.grid = builtin_map(config.map_name)
        self.names: list[str | None] = [None] * N_SLOTS
        self.connected = [False] * N_SLOTS
        self.inputs = [_InputSlot() for _ in range(N_SLOTS)]
        self.phase = "lobby"  # lobby | tutorial | episode | done | invalid
        self.phase_index = 0  # tutorial index or episode index
        self.tick_index = 0
        self.phase_step = 0
        self.cumulative = np.zeros(N_SLOTS, dtype=np.int64)
        self.episode_scores: list[np.ndarray] = []
        self.records: list[EpisodeRecord] = []
        self._tutorials: list[_TutorialWorld] = []
        self._world: WorldState | None = None
        self._recorder: EpisodeRecorder | None = None
        self._tracker = ContributionTracker(n_players=N_SLOTS)
        self._actions_accepted = [0] * N_SLOTS
        self._last_tiles: list[np.ndarray | None] = [None] * N_SLOTS
        self.paused = False

    # -- lobby ------------------------------------------------------------

    def join(self, name: str) -> int:
        if self.phase != "lobby":
            raise StateError("session already started")
        for slot in range(N_SLOTS):
            if self.names[slot] is None:
                self.names[slot] = name
                self.connected[slot] = True
                return slot
        raise StateError("session full")

    def lobby_state(self) -> dict:
        return {
            "v": SCHEMA_VERSION,
            "type": "lobby_state",
            "session_id": self.session_id,
            "slots": [
                {"slot": i, "name": self.names[i], "connected": self.connected[i]}
                for i in range(N_SLOTS)
            ],
            "needed": self.names.count(None),
        }

    @property
    def full(self) -> bool:
        return all(n is not None for n in self.names)

    # -- phase control ----------------------------------------------------

    def start(self) -> list[tuple[int | None, dict]]:
        if not self.full:
            raise StateError("cannot start before 5 participants joined")
        self.phase = "tutorial"
        self.phase_index = 0
        return self._enter_tutorial()

    def _enter_tutorial(self) -> list[tuple[int | None, dict]]:
        name, map_name, mode = TUTORIALS[self.phase_index]
        self._tutorials = []
        for slot in range(N_SLOTS):
            grid = builtin_map(map_name, min_spawns=1, require_regions=False)
            with_bot = name in ("ticket_cost", "ticket_receipt")
            cfg = dataclasses.replace(
                self.config.env,
                initial_mode=mode,
                episode_length=self.config.tutorial_step_cap + 1,
            )
            state = reset(
                cfg, grid, derive_seed(self.config.seed, "tutorial", self.phase_index, slot),
                n_players=2 if with_bot else 1,
            )
            self._tutorials.append(
                _TutorialWorld(state=state, grid=grid, config=cfg, name=name, with_bot=with_bot)
            )
        self.phase_step = 0
        msg = {
            "v": SCHEMA_VERSION,
            "type": "phase_start",
            "phase": {"kind": "tutorial", "index": self.phase_index, "name": name},
        }
        return [(None, msg)] + [(s, self._tutorial_frame(s, full=True)) for s in range(N_SLOTS)]

    def _enter_episode(self) -> list[tuple[int | None, dict]]:
        condition = self.config.conditions[self.phase_index]
        seed = derive_seed(self.config.seed, "episode", self.phase_index)
        self._world = reset(self.config.env, self.grid, seed)
        self._tracker = ContributionTracker(n_players=N_SLOTS)
        order = "first" if self.phase_index < self.config.episodes_per_condition else "second"
        self._recorder = EpisodeRecorder(
            self.config.env,
            self.grid,
            seed,
            condition,
            self.session_id,
            [str(n) for n in self.names],
            self._world,
            episode_index=self.phase_index,
            task_order=order,
        )
        self.phase_step = 0
        msg = {
            "v": SCHEMA_VERSION,
            "type": "phase_start",
            "phase": {
                "kind": "episode",
                "index": self.phase_index,
                "condition": condition,
                "episode_in_condition": self.phase_index % self.config.episodes_per_condition,
            },
        }
        return [(None, msg)] + [(s, self._episode_frame(s, full=True)) for s in range(N_SLOTS)]

    # -- input ------------------------------------------------------------

    def submit_input(self, slot: int, action_id: int) -> bool:
        """Stage an action; the latest arrival before an accepting tick wins."""
        if not 0 <= action_id < len(Action):
            return False
        if self.phase not in ("tutorial", "episode"):
            return False
        self.inputs[slot].candidate = int(action_id)
        return True

    def _consume_action(self, slot: int) -> int:
        buf = self.inputs[slot]
        now_ms = self.tick_index * self.config.tick_ms
        # Lockstep test mode applies every staged action 1:1 with ticks.
        if self.config.lockstep and buf.candidate is not None:
            action = buf.candidate
            buf.candidate = None
            self._actions_accepted[slot] += 1
            return action
        if (
            buf.candidate is not None
            and now_ms - buf.last_accept_ms >= self.config.input_min_interval_ms
        ):
            action = buf.candidate
            buf.candidate = None
            buf.last_accept_ms = now_ms
            self._actions_accepted[slot] += 1
            return action
        return int(Action.NOOP)

    # -- tick -------------------------------------------------------------

    def tick(self) -> list[tuple[int | None, dict]]:
        """Advance the session one authoritative step."""
        if self.paused or self.phase in ("lobby", "done", "invalid"):
            return []
        if self.config.lockstep and self.phase in ("tutorial", "episode"):
            waiting = [
                s
                for s in range(N_SLOTS)
                if self.inputs[s].candidate is None and not self._slot_done(s)
            ]
            if waiting:
                return []
        self.tick_index += 1
        if self.phase == "tutorial":
            return self._tick_tutorial()
        return self._tick_episode()

    def _slot_done(self, slot: int) -> bool:
        if self.phase == "tutorial" and self._tutorials:
            return self._tutorials[slot].done
        return False

    def _tick_tutorial(self) -> list[tuple[int | None, dict]]:
        out: list[tuple[int | None, dict]] = []
        self.phase_step += 1
        for slot in range(N_SLOTS):
            world = self._tutorials[slot]
            action = self._consume_action(slot)
            if world.done:
                continue
            actions = [action]
            if world.with_bot:
                actions.append(int(_bot_action(world)))
            before = tuple(world.state.positions[0])
            events = step(world.state, actions, world.config, world.grid)
            world.steps += 1
            world.visited.add(before)
            world.visited.add(tuple(world.state.positions[0]))
            world.cleaned += int(events.cleaned_cells[0])
            world.collected += int(events.apples_collected[0])
            world.issued += int(events.tickets_issued[0])
            world.received += int(events.tickets_received[0])
            if world.goal_met() or world.steps >= self.config.tutorial_step_cap:
                world.done = True
            out.append((slot, self._tutorial_frame(slot)))
        if all(w.done for w in self._tutorials):
            out.append(
                (
                    None,
                    {
                        "v": SCHEMA_VERSION,
                        "type": "phase_end",
                        "phase": {"kind": "tutorial", "index": self.phase_index},
                    },
                )
            )
            self.phase_index += 1
            if self.phase_index >= len(TUTORIALS):
                self.phase = "episode"
                self.phase_index = 0
                out.extend(self._enter_episode())
            else:
                out.extend(self._enter_tutorial())
        return out

    def _tick_episode(self) -> list[tuple[int | None, dict]]:
        assert self._world is not None and self._recorder is not None
        out: list[tuple[int | None, dict]] = []
        actions = [self._consume_action(slot) for slot in range(N_SLOTS)]
        events = step(self._world, actions, self.config.env, self.grid)
        update_traces(
            self._tracker, events.q, self._world.positions, 0, "identifiable"
        )  # session traces are common knowledge; masking happens at display time
        self._recorder.add_step(actions, self._world, events, polluted_fraction(self._world))
        self.phase_step += 1
        tile_map = full_tile_map(self._world, self.grid)
        for slot in range(N_SLOTS):
            out.append((slot, self._episode_frame(slot, tile_map=tile_map)))
        if self.phase_step >= self.config.env.episode_length:
            record = self._recorder.finish(self._world)
            self.records.append(record)
            scores = self._world.scores.copy()
            self.episode_scores.append(scores)
            self.cumulative += scores
            out.append(
                (
                    None,
                    {
                        "v": SCHEMA_VERSION,
                        "type": "phase_end",
                        "phase": {
                            "kind": "episode",
                            "index": self.phase_index,
                            "condition": record.condition,
                        },
                        "scores": scores.tolist(),
                        "cumulative": self.cumulative.tolist(),
                    },
                )
            )
            self.phase_index += 1
            if self.phase_index >= len(self.config.conditions):
                self.phase = "done"
                out.append((None, self.score_summary_message()))
            else:
                out.extend(self._enter_episode())
        return out

    # -- frames -----------------------------------------------------------

    def _hud(self, slot: int, condition: str | None) -> dict:
        tickets = (
            None
            if self.config.env.ticket_budget is None
            else int(self._world.tickets_remaining[slot])
            if self._world is not None
            else self.config.env.ticket_budget
        )
        hud: dict[str, Any] = {
            "episode_score": int(self._world.scores[slot]) if self._world is not None else 0,
            "cumulative_score": int(self.cumulative[slot]),
            "tickets_available": tickets,
            "own_contribution": float(self._tracker.traces[slot]),
        }
        if condition == "identifiable":
            hud["peer_contributions"] = [
                {"slot": p, "value": float(self._tracker.traces[p])}
                for p in range(N_SLOTS)
                if p != slot
            ]
        return hud

    def _avatar_colors(self, slot: int, condition: str | None, players: list[int]) -> dict:
        colors = {}
        for p in players:
            if p == slot:
                colors[p] = SELF_COLOR
            elif condition == "identifiable":
                colors[p] = IDENTIFIABLE_COLORS[p]
            else:
                colors[p] = ANONYMOUS_COLOR
        return colors

    def _grid_payload(self, slot: int, tiles: np.ndarray, force_full: bool) -> dict:
        """Full grid on phase starts and big changes, cell deltas otherwise."""
        last = self._last_tiles[slot]
        self._last_tiles[slot] = tiles
        if force_full or last is None or last.shape != tiles.shape:
            return {"full": True, "grid": tiles.tolist()}
        changed = np.argwhere(tiles != last)
        if len(changed) > 150:
            return {"full": True, "grid": tiles.tolist()}
        return {
            "full": False,
            "changes": [[int(r), int(c), int(tiles[r, c])] for r, c in changed],
        }

    def _tutorial_frame(self, slot: int, full: bool = False) -> dict:
        world = self._tutorials[slot]
        view = render_tiles(world.state, 0, world.grid, window=self.config.window)
        colors = {0: SELF_COLOR}
        if world.with_bot:
            colors[1] = ANONYMOUS_COLOR
        avatars = [
            {**a, "color": colors[a["player"]], "is_self": a["player"] == 0}
            for a in view["avatars"]
        ]
        for a in avatars:
            a.pop("player")
        return {
            "v": SCHEMA_VERSION,
            "type": "frame",
            "step": self.phase_step,
            **self._grid_payload(slot, view["tiles"], force_full=full),
            "avatars": avatars,
            "hud": {
                "episode_score": int(world.state.scores[0]),
                "cumulative_score": int(self.cumulative[slot]),
                "tickets_available": None,
                "own_contribution": 0.0,
                "tutorial_progress": {
                    "name": world.name,
                    "done": world.done,
                    "cleaned": world.cleaned,
                    "collected": world.collected,
                },
            },
        }

    def _episode_frame(
        self, slot: int, full: bool = False, tile_map: np.ndarray | None = None
    ) -> dict:
        assert self._world is not None
        condition = self.config.conditions[self.phase_index]
        view = render_tiles(
            self._world, slot, self.grid, window=self.config.window, full_map=tile_map
        )
        colors = self._avatar_colors(slot, condition, [a["player"] for a in view["avatars"]])
        avatars = []
        for a in view["avatars"]:
            p = a.pop("player")
            entry = {**a, "color": colors[p], "is_self": p == slot}
            # Peer slot identity is exposed only under identifiability.
            if condition == "identifiable" and p != slot:
                entry["peer_slot"] = p
            avatars.append(entry)
        return {
            "v": SCHEMA_VERSION,
            "type": "frame",
            "step": self.phase_step,
            **self._grid_payload(slot, view["tiles"], force_full=full),
            "avatars": avatars,
            "hud": self._hud(slot, condition),
        }

    def score_summary_message(self) -> dict:
        return {
            "v": SCHEMA_VERSION,
            "type": "session_end",
            "totals": [
                {
                    "slot": i,
                    "name": self.names[i],
                    "total": int(self.cumulative[i]),
                    "per_episode": [int(s[i]) for s in self.episode_scores],
                }
                for i in range(N_SLOTS)
            ],
        }

    def score_summary(self) -> dict:
        """Cumulative and per-episode points per participant."""
        return {
            str(self.names[i]): {
                "total": int(self.cumulative[i]),
                "per_episode": [int(s[i]) for s in self.episode_scores],
            }
            for i in range(N_SLOTS)
        }
