"""Population training and frozen-policy evaluation.

Arenas sample 5 distinct agents per episode, play with the current parameter
snapshots, and route each agent's 100-step trajectory segments to that
agent's learner, which updates on full batches. A serial deterministic mode
(the default here) makes runs bit-reproducible; arenas are independent
workers otherwise.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from cleanuplab.env.config import EVALUATION_START, TRAINING_START, EnvConfig
from cleanuplab.env.engine import polluted_fraction, reset, step
from cleanuplab.env.grid import GridMap
from cleanuplab.env.observe import ObservationBuilder
from cleanuplab.errors import ConfigurationError
from cleanuplab.nets import (
    NetConfig,
    PolicyNet,
    load_state_arrays,
    make_net,
    sample_action,
    state_dict_arrays,
)
from cleanuplab.records import EpisodeRecord, EpisodeRecorder
from cleanuplab.reputation import (
    ContributionTracker,
    ReputationParams,
    combined_reward,
    intrinsic_reward,
    others_mean,
    sample_params,
    update_traces,
)
from cleanuplab.seeding import derive_seed, generator
from cleanuplab.training.learner import Hyperparams, LearnerState, Trajectory, a2c_update

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PopulationConfig:
    """Population/arena sizing; defaults are the full-scale experiment."""

    population_size: int = 120
    arena_count: int = 2000
    group_size: int = 5
    total_steps_per_agent: int = 100_000_000
    evaluation_groups: int = 24
    evaluation_episodes: int = 7

    @classmethod
    def desk_scale(cls) -> "PopulationConfig":
        return cls(
            population_size=10,
            arena_count=4,
            total_steps_per_agent=2_000_000,
            evaluation_groups=2,
            evaluation_episodes=7,
        )

    def validate(self) -> None:
        if self.population_size < self.group_size:
            raise ConfigurationError("population must be at least one group")
        if self.group_size <= 0 or self.arena_count <= 0:
            raise ConfigurationError("group_size and arena_count must be positive")


@dataclass
class Agent:
    agent_id: int
    net: PolicyNet
    learner: LearnerState
    reputation: ReputationParams
    pending: list[Trajectory] = field(default_factory=list)


@dataclass
class EpisodeStats:
    collective_return: float
    contributions: float
    intrinsic_sum: float
    extrinsic_sum: float


def _play_episode(
    agents: list[Agent],
    env_cfg: EnvConfig,
    grid: GridMap,
    builder: ObservationBuilder,
    env_seed: int,
    action_rng: np.random.Generator,
    condition: str,
    segment_length: int,
    collect: bool = True,
    recorder_info: dict | None = None,
) -> tuple[dict[int, list[Trajectory]], EpisodeStats, EpisodeRecord | None]:
    """Run one episode; returns per-agent segments and summary stats."""
    n = len(agents)
    state = reset(env_cfg, grid, env_seed)
    trackers = [ContributionTracker(n_players=n) for _ in range(n)]
    recurrent = [a.net.initial_state(1) for a in agents]

    recorder = None
    if recorder_info is not None:
        recorder = EpisodeRecorder(
            env_cfg,
            grid,
            env_seed,
            condition,
            recorder_info.get("group_id", "train"),
            recorder_info.get("players", [f"agent{a.agent_id}" for a in agents]),
            state,
            episode_index=recorder_info.get("episode_index", 0),
            task_order=recorder_info.get("task_order"),
            track_intrinsic=True,
        )

    # Per-agent segment accumulation
    segs: dict[int, list[Trajectory]] = {a.agent_id: [] for a in agents}
    buf: list[dict] = [
        {
            "obs": [], "scal": [], "act": [], "logits": [], "r": [], "re": [], "ri": [],
            "h": recurrent[i][0][0, 0].numpy().copy(),
            "c": recurrent[i][1][0, 0].numpy().copy(),
        }
        for i in range(n)
    ]
    stats = EpisodeStats(0.0, 0.0, 0.0, 0.0)

    def cut_segment(i: int, agent: Agent, terminal: bool, next_obs, next_scal) -> None:
        data = buf[i]
        if not data["act"]:
            return
        seg = Trajectory(
            observations=np.stack(data["obs"]),
            scalars=np.stack(data["scal"]).astype(np.float32),
            actions=np.asarray(data["act"], dtype=np.int64),
            behavior_logits=np.stack(data["logits"]),
            rewards=np.asarray(data["r"], dtype=np.float32),
            rewards_extrinsic=np.asarray(data["re"], dtype=np.float32),
            rewards_intrinsic=np.asarray(data["ri"], dtype=np.float32),
            initial_h=data["h"],
            initial_c=data["c"],
            bootstrap_obs=next_obs,
            bootstrap_scalars=next_scal.astype(np.float32),
            terminal=terminal,
            segment_id=f"{env_seed}:{agent.agent_id}:{len(segs[agent.agent_id])}",
        )
        segs[agent.agent_id].append(seg)
        buf[i] = {
            "obs": [], "scal": [], "act": [], "logits": [], "r": [], "re": [], "ri": [],
            "h": recurrent[i][0][0, 0].numpy().copy(),
            "c": recurrent[i][1][0, 0].numpy().copy(),
        }

    with torch.no_grad():
        for t in range(env_cfg.episode_length):
            observations = builder.all_observations(
                state, condition, [tr.traces for tr in trackers]
            )
            actions = []
            logits_list = []
            for i, agent in enumerate(agents):
                obs_t = torch.from_numpy(observations[i].tensor).unsqueeze(0)
                scal_t = torch.as_tensor(
                    observations[i].contributions, dtype=torch.float32
                ).unsqueeze(0)
                logits, _value, recurrent[i] = agent.net.step(obs_t, scal_t, recurrent[i])
                logits_np = logits[0].numpy().copy()
                logits_list.append(logits_np)
                actions.append(sample_action(logits_np, action_rng))

            events = step(state, actions, env_cfg, grid)
            q = events.q
            r_is = np.zeros(n)
            for i in range(n):
                update_traces(trackers[i], q, state.positions, i, condition)
            for i, agent in enumerate(agents):
                traces = trackers[i].traces
                r_i = intrinsic_reward(traces[i], others_mean(traces, i), agent.reputation)
                r_e = float(events.reward[i])
                r_is[i] = r_i
                if collect:
                    data = buf[i]
                    data["obs"].append(observations[i].tensor)
                    data["scal"].append(observations[i].contributions)
                    data["act"].append(actions[i])
                    data["logits"].append(logits_list[i])
                    data["r"].append(combined_reward(r_e, r_i))
                    data["re"].append(r_e)
                    data["ri"].append(r_i)
                stats.intrinsic_sum += r_i
                stats.extrinsic_sum += r_e
            stats.collective_return += float(events.reward.sum())
            stats.contributions += float(q.sum())
            if recorder is not None:
                recorder.add_step(actions, state, events, polluted_fraction(state), r_is)

            terminal = t == env_cfg.episode_length - 1
            if collect and (len(buf[0]["act"]) == segment_length or terminal):
                next_observations = builder.all_observations(
                    state, condition, [tr.traces for tr in trackers]
                )
                for i, agent in enumerate(agents):
                    cut_segment(
                        i,
                        agent,
                        terminal,
                        next_observations[i].tensor,
                        next_observations[i].contributions,
                    )

    record = recorder.finish(state) if recorder is not None else None
    return segs, stats, record


def build_population(
    pop_cfg: PopulationConfig,
    net_cfg: NetConfig,
    hyper: Hyperparams,
    master_seed: int,
    condition: str,
) -> list[Agent]:
    rng = generator(master_seed, "reputation", condition)
    agents = []
    for i in range(pop_cfg.population_size):
        net = make_net(net_cfg, derive_seed(master_seed, "net", condition, i))
        agents.append(
            Agent(
                agent_id=i,
                net=net,
                learner=LearnerState(net=net, hyper=hyper),
                reputation=sample_params(rng),
            )
        )
    return agents


def run_training(
    pop_cfg: PopulationConfig,
    env_cfg: EnvConfig,
    grid: GridMap,
    condition: str,
    master_seed: int,
    out_dir: str | None = None,
    net_cfg: NetConfig | None = None,
    hyper: Hyperparams | None = None,
    checkpoint_every_episodes: int | None = None,
    metrics_path: str | None = None,
    agents: list[Agent] | None = None,
    progress_every: int = 0,
) -> list[Agent]:
    """Train a population until every agent consumed its step budget.

    Serial deterministic: arenas run round-robin in one process; identical
    seeds give identical checkpoints.
    """
    pop_cfg.validate()
    env_cfg = env_cfg.with_mode(TRAINING_START)
    net_cfg = net_cfg or NetConfig(window=env_cfg.obs_window)
    hyper = hyper or Hyperparams()
    if agents is None:
        agents = build_population(pop_cfg, net_cfg, hyper, master_seed, condition)
    builder = ObservationBuilder(env_cfg, grid)
    sample_rngs = [
        generator(master_seed, "arena-sample", condition, k) for k in range(pop_cfg.arena_count)
    ]
    action_rngs = [
        generator(master_seed, "arena-actions", condition, k) for k in range(pop_cfg.arena_count)
    ]
    metrics_fh = open(metrics_path, "w", encoding="utf-8") if metrics_path else None

    budget = pop_cfg.total_steps_per_agent
    episode = 0
    try:
        while any(a.learner.steps_applied < budget for a in agents):
            arena = episode % pop_cfg.arena_count
            ids = sample_rngs[arena].choice(
                pop_cfg.population_size, size=pop_cfg.group_size, replace=False
            )
            group = [agents[int(i)] for i in ids]
            env_seed = derive_seed(master_seed, "env", condition, arena, episode)
            segs, stats, _ = _play_episode(
                group,
                env_cfg,
                grid,
                builder,
                env_seed,
                action_rngs[arena],
                condition,
                hyper.segment_length,
            )
            for agent in group:
                agent.pending.extend(segs[agent.agent_id])
                while (
                    len(agent.pending) >= hyper.batch_size
                    and agent.learner.steps_applied < budget
                ):
                    batch = agent.pending[: hyper.batch_size]
                    agent.pending = agent.pending[hyper.batch_size :]
                    parts = a2c_update(agent.learner, batch)
                    if metrics_fh is not None and "loss" in parts:
                        metrics_fh.write(
                            json.dumps(
                                {
                                    "agent": agent.agent_id,
                                    "steps": agent.learner.steps_applied,
                                    "episode": episode,
                                    "loss": parts["loss"],
                                    "policy_loss": parts["policy_loss"],
                                    "value_loss": parts["value_loss"],
                                    "entropy": parts["entropy"],
                                    "episode_return": stats.collective_return,
                                }
                            )
                            + "\n"
                        )
                if agent.learner.steps_applied >= budget:
                    agent.pending.clear()
            episode += 1
            if progress_every and episode % progress_every == 0:
                done_steps = sum(a.learner.steps_applied for a in agents)
                print(
                    f"[train {condition}] episode {episode}, applied steps {done_steps}",
                    flush=True,
                )
            if (
                out_dir
                and checkpoint_every_episodes
                and episode % checkpoint_every_episodes == 0
            ):
                save_population(agents, out_dir, condition, master_seed, env_cfg)
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    if out_dir:
        save_population(agents, out_dir, condition, master_seed, env_cfg)
    return agents


def run_evaluation(
    agents: list[Agent],
    pop_cfg: PopulationConfig,
    env_cfg: EnvConfig,
    grid: GridMap,
    condition: str,
    master_seed: int,
    groups: int | None = None,
    episodes: int | None = None,
) -> list[EpisodeRecord]:
    """Frozen-policy evaluation: disjoint random groups, evaluation starts."""
    groups = pop_cfg.evaluation_groups if groups is None else groups
    episodes = pop_cfg.evaluation_episodes if episodes is None else episodes
    if groups * pop_cfg.group_size != len(agents):
        raise ConfigurationError(
            f"population of {len(agents)} does not divide into "
            f"{groups} groups of {pop_cfg.group_size}"
        )
    env_cfg = env_cfg.with_mode(EVALUATION_START)
    builder = ObservationBuilder(env_cfg, grid)
    perm = generator(master_seed, "eval-partition", condition).permutation(len(agents))
    records: list[EpisodeRecord] = []
    for g in range(groups):
        members = [agents[int(i)] for i in perm[g * pop_cfg.group_size : (g + 1) * pop_cfg.group_size]]
        action_rng = generator(master_seed, "eval-actions", condition, g)
        for e in range(episodes):
            env_seed = derive_seed(master_seed, "eval-env", condition, g, e)
            _, _, record = _play_episode(
                members,
                env_cfg,
                grid,
                builder,
                env_seed,
                action_rng,
                condition,
                segment_length=10**9,
                collect=False,
                recorder_info={
                    "group_id": f"{condition}-g{g:02d}",
                    "players": [f"agent{m.agent_id}" for m in members],
                    "episode_index": e,
                },
            )
            records.append(record)
    return records


def save_population(
    agents: list[Agent],
    out_dir: str,
    condition: str,
    master_seed: int,
    env_cfg: EnvConfig,
) -> str:
    """Versioned named-tensor checkpoint per agent plus a manifest."""
    os.makedirs(out_dir, exist_ok=True)
    for agent in agents:
        arrays = state_dict_arrays(agent.net)
        arrays.update(
            {f"opt/{k}": v.numpy().copy() for k, v in agent.learner.accumulators.items()}
        )
        arrays["meta/alpha"] = np.array(agent.reputation.alpha)
        arrays["meta/beta"] = np.array(agent.reputation.beta)
        arrays["meta/steps_applied"] = np.array(agent.learner.steps_applied)
        np.savez(os.path.join(out_dir, f"agent_{agent.agent_id:03d}.npz"), **arrays)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "condition": condition,
        "master_seed": master_seed,
        "population_size": len(agents),
        "env_config_digest": env_cfg.digest(),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def load_population(
    checkpoint_dir: str, net_cfg: NetConfig, hyper: Hyperparams | None = None
) -> tuple[list[Agent], dict]:
    with open(os.path.join(checkpoint_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest["version"] > CHECKPOINT_VERSION:
        raise ConfigurationError(f"checkpoint version {manifest['version']} not supported")
    hyper = hyper or Hyperparams()
    agents = []
    for i in range(manifest["population_size"]):
        data = np.load(os.path.join(checkpoint_dir, f"agent_{i:03d}.npz"))
        net = PolicyNet(net_cfg)
        load_state_arrays(net, {k: data[k] for k in data.files if "/" not in k})
        learner = LearnerState(net=net, hyper=hyper)
        for k in data.files:
            if k.startswith("opt/"):
                learner.accumulators[k[4:]] = torch.as_tensor(data[k].copy())
        learner.steps_applied = int(data["meta/steps_applied"])
        agents.append(
            Agent(
                agent_id=i,
                net=net,
                learner=learner,
                reputation=ReputationParams(
                    float(data["meta/alpha"]), float(data["meta/beta"])
                ),
            )
        )
    return agents, manifest
