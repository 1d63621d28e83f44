"""Advantage actor-critic updates with VTrace targets and RMSProp.

One ``LearnerState`` owns one agent's parameters and optimizer accumulators;
segment application is serialized per learner.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
import torch

from cleanuplab.errors import NumericsError
from cleanuplab.nets import PolicyNet
from cleanuplab.training.returns import vtrace_targets

SEGMENT_LENGTH = 100


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.000321
    rmsprop_eps: float = 1e-5
    rmsprop_momentum: float = 0.0
    rmsprop_decay: float = 0.99
    entropy_cost: float = 0.00154
    gamma: float = 0.99
    batch_size: int = 10
    segment_length: int = SEGMENT_LENGTH
    value_loss_coef: float = 0.5
    vtrace_rho_bar: float = 1.0
    vtrace_c_bar: float = 1.0
    grad_clip: float | None = None


@dataclass
class Trajectory:
    """One contiguous segment of experience from a single episode.

    Behavior logits are the ones recorded at acting time; the recurrent state
    is the acting state at the segment's first step. ``bootstrap_obs`` is the
    observation after the final step (ignored when ``terminal``).
    """

    observations: np.ndarray  # (T, C, H, W) float32
    scalars: np.ndarray  # (T, n_scalars) float32
    actions: np.ndarray  # (T,) int64
    behavior_logits: np.ndarray  # (T, A) float32
    rewards: np.ndarray  # (T,) float32 combined reward
    rewards_extrinsic: np.ndarray
    rewards_intrinsic: np.ndarray
    initial_h: np.ndarray  # (lstm,) float32
    initial_c: np.ndarray
    bootstrap_obs: np.ndarray  # (C, H, W)
    bootstrap_scalars: np.ndarray  # (n_scalars,)
    terminal: bool
    segment_id: str = ""

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass
class LearnerState:
    """Single-writer owner of one agent's parameters."""

    net: PolicyNet
    hyper: Hyperparams = field(default_factory=Hyperparams)
    accumulators: dict[str, torch.Tensor] = field(default_factory=dict)
    steps_applied: int = 0
    updates: int = 0
    applied_segments: set = field(default_factory=set)

    def __post_init__(self):
        if not self.accumulators:
            self.accumulators = {
                name: torch.zeros_like(p) for name, p in self.net.named_parameters()
            }


def rmsprop_step(
    params: list[torch.Tensor],
    grads: list[torch.Tensor],
    accumulators: list[torch.Tensor],
    lr: float = 0.000321,
    decay: float = 0.99,
    eps: float = 1e-5,
    momentum: float = 0.0,
) -> None:
    """v <- decay*v + (1-decay)*g^2;  theta <- theta - lr*g/sqrt(v + eps)."""
    if momentum != 0.0:
        raise NotImplementedError("momentum is fixed at 0")
    with torch.no_grad():
        for p, g, v in zip(params, grads, accumulators):
            if g is None:
                continue
            v.mul_(decay).addcmul_(g, g, value=1.0 - decay)
            p.sub_(lr * g / torch.sqrt(v + eps))


def _stack_batch(net: PolicyNet, batch: list[Trajectory]):
    """Pad a batch into (T+1, B, ...) tensors; frame T is the bootstrap."""
    b = len(batch)
    t_max = max(seg.length for seg in batch)
    dtype = next(net.parameters()).dtype
    cfg = net.config
    obs = torch.zeros(t_max + 1, b, cfg.in_channels, cfg.window, cfg.window, dtype=dtype)
    scalars = torch.zeros(t_max + 1, b, cfg.n_scalars, dtype=dtype)
    actions = torch.zeros(t_max, b, dtype=torch.int64)
    mask = torch.zeros(t_max, b, dtype=dtype)
    h0 = torch.zeros(1, b, cfg.lstm_size, dtype=dtype)
    c0 = torch.zeros(1, b, cfg.lstm_size, dtype=dtype)
    for k, seg in enumerate(batch):
        t = seg.length
        obs[:t, k] = torch.as_tensor(seg.observations, dtype=dtype)
        obs[t, k] = torch.as_tensor(seg.bootstrap_obs, dtype=dtype)
        scalars[:t, k] = torch.as_tensor(seg.scalars, dtype=dtype)
        scalars[t, k] = torch.as_tensor(seg.bootstrap_scalars, dtype=dtype)
        actions[:t, k] = torch.as_tensor(seg.actions)
        mask[:t, k] = 1.0
        h0[0, k] = torch.as_tensor(seg.initial_h, dtype=dtype)
        c0[0, k] = torch.as_tensor(seg.initial_c, dtype=dtype)
    return obs, scalars, actions, mask, (h0, c0), t_max


def _targets_from(net, batch, hyper, logits, values):
    """VTrace targets per segment from detached forward outputs (float64)."""
    dtype = next(net.parameters()).dtype
    t_max = max(seg.length for seg in batch)
    values_np = values.detach().cpu().numpy().astype(np.float64)
    logits_np = logits.detach().cpu().numpy().astype(np.float64)
    vs = torch.zeros(t_max, len(batch), dtype=dtype)
    adv = torch.zeros(t_max, len(batch), dtype=dtype)
    for k, seg in enumerate(batch):
        t = seg.length
        bootstrap = 0.0 if seg.terminal else float(values_np[t, k])
        res = vtrace_targets(
            seg.behavior_logits.astype(np.float64),
            logits_np[:t, k],
            seg.actions,
            seg.rewards.astype(np.float64),
            values_np[:t, k],
            bootstrap,
            hyper.gamma,
            rho_bar=hyper.vtrace_rho_bar,
            c_bar=hyper.vtrace_c_bar,
        )
        vs[:t, k] = torch.as_tensor(res.vs, dtype=dtype)
        adv[:t, k] = torch.as_tensor(res.pg_advantages, dtype=dtype)
    return vs, adv


def batch_vtrace_targets(
    net: PolicyNet, batch: list[Trajectory], hyper: Hyperparams
) -> tuple[torch.Tensor, torch.Tensor]:
    """The (value targets, advantages) a2c_loss would compute, detached."""
    obs, scalars, _, _, state0, _ = _stack_batch(net, batch)
    with torch.no_grad():
        logits, values, _ = net.forward_sequence(obs, scalars, state0)
    return _targets_from(net, batch, hyper, logits, values)


def a2c_loss(
    net: PolicyNet,
    batch: list[Trajectory],
    hyper: Hyperparams,
    fixed_targets: "tuple[torch.Tensor, torch.Tensor] | None" = None,
) -> tuple[torch.Tensor, dict]:
    """Assemble the masked policy-gradient + value + entropy loss for a batch.

    Advantages and value targets come from VTrace and enter the loss as
    constants (pass ``fixed_targets`` to pin them, e.g. for gradient
    checking). Segments shorter than the longest in the batch are padded and
    masked out.
    """
    obs, scalars, actions, mask, state0, t_max = _stack_batch(net, batch)
    logits, values, _ = net.forward_sequence(obs, scalars, state0)
    if fixed_targets is not None:
        vs, adv = fixed_targets
    else:
        vs, adv = _targets_from(net, batch, hyper, logits, values)

    log_probs = torch.log_softmax(logits[:t_max], dim=-1)
    probs = torch.softmax(logits[:t_max], dim=-1)
    action_log_probs = log_probs.gather(-1, actions.unsqueeze(-1)).squeeze(-1)
    # Padded positions can hold arbitrary logits; zero them before masking so
    # 0 * (-inf) never poisons the loss.
    action_log_probs = torch.where(mask > 0, action_log_probs, torch.zeros_like(action_log_probs))

    policy_loss = -(mask * adv * action_log_probs).sum()
    value_loss = hyper.value_loss_coef * (mask * (values[:t_max] - vs) ** 2).sum()
    entropy = -(mask.unsqueeze(-1) * probs * log_probs).sum()
    loss = policy_loss + value_loss - hyper.entropy_cost * entropy
    parts = {
        "loss": float(loss.detach()),
        "policy_loss": float(policy_loss.detach()),
        "value_loss": float(value_loss.detach()),
        "entropy": float(entropy.detach()),
        "steps": int(mask.sum().item()),
    }
    return loss, parts


def a2c_update(learner: LearnerState, batch: list[Trajectory]) -> dict:
    """Apply one RMSProp step from a batch of trajectory segments.

    Segments already applied (by id) are skipped: delivery retries are
    idempotent, at most one application per segment id.
    """
    fresh = [
        seg
        for seg in batch
        if not seg.segment_id or seg.segment_id not in learner.applied_segments
    ]
    if not fresh:
        return {"skipped": True}
    loss, parts = a2c_loss(learner.net, fresh, learner.hyper)
    if not torch.isfinite(loss):
        dump = os.path.join(tempfile.gettempdir(), f"a2c-nonfinite-{id(learner)}.npz")
        np.savez(
            dump,
            rewards=np.concatenate([seg.rewards for seg in fresh]),
            parts=np.array([parts["policy_loss"], parts["value_loss"], parts["entropy"]]),
        )
        raise NumericsError(f"non-finite loss {parts}; diagnostics in {dump}")
    params = [p for _, p in learner.net.named_parameters()]
    names = [n for n, _ in learner.net.named_parameters()]
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    if learner.hyper.grad_clip is not None:
        total = torch.sqrt(sum((g**2).sum() for g in grads))
        if total > learner.hyper.grad_clip:
            grads = [g * (learner.hyper.grad_clip / total) for g in grads]
    rmsprop_step(
        params,
        grads,
        [learner.accumulators[n] for n in names],
        lr=learner.hyper.learning_rate,
        decay=learner.hyper.rmsprop_decay,
        eps=learner.hyper.rmsprop_eps,
        momentum=learner.hyper.rmsprop_momentum,
    )
    for seg in fresh:
        if seg.segment_id:
            learner.applied_segments.add(seg.segment_id)
    learner.steps_applied += parts["steps"]
    learner.updates += 1
    return parts
