"""Return computations: discounted returns and truncated-importance-weighted
(VTrace) value targets and policy advantages.

Everything here is plain float64 numpy; when behavior equals the target
policy all importance ratios are 1 and the VTrace targets reduce to on-policy
n-step bootstrapped returns.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np


def discounted_return(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """G_t = sum_{k>=t} gamma^(k-t) r_k by backward recursion."""
    r = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(r)
    acc = 0.0
    for t in range(len(r) - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class VTraceReturns(NamedTuple):
    vs: np.ndarray  # value targets, shape (T,)
    pg_advantages: np.ndarray  # policy-gradient advantages, shape (T,)


def vtrace_targets(
    behavior_logits: np.ndarray,  # (T, A)
    target_logits: np.ndarray,  # (T, A)
    actions: np.ndarray,  # (T,)
    rewards: np.ndarray,  # (T,)
    values: np.ndarray,  # (T,) value estimates V(s_t)
    bootstrap_value: float,  # V(s_T), 0 for terminal segments
    gamma: float,
    rho_bar: float = 1.0,
    c_bar: float = 1.0,
) -> VTraceReturns:
    """Truncated-importance-sampling value targets and advantages.

    vs_t = V(s_t) + sum of discounted, c-weighted temporal differences with
    rho-clipped importance ratios; advantages are rho_t (r_t + gamma vs_{t+1}
    - V(s_t)).
    """
    behavior_logits = np.asarray(behavior_logits, dtype=np.float64)
    target_logits = np.asarray(target_logits, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    t_len = len(rewards)
    idx = np.arange(t_len)

    log_rhos = (
        _log_softmax(target_logits)[idx, actions] - _log_softmax(behavior_logits)[idx, actions]
    )
    rhos = np.exp(log_rhos)
    clipped_rhos = np.minimum(rho_bar, rhos)
    cs = np.minimum(c_bar, rhos)

    values_next = np.append(values[1:], bootstrap_value)
    deltas = clipped_rhos * (rewards + gamma * values_next - values)

    vs_minus_v = np.zeros(t_len, dtype=np.float64)
    acc = 0.0
    for t in range(t_len - 1, -1, -1):
        acc = deltas[t] + gamma * cs[t] * acc
        vs_minus_v[t] = acc
    vs = values + vs_minus_v

    vs_next = np.append(vs[1:], bootstrap_value)
    pg_advantages = clipped_rhos * (rewards + gamma * vs_next - values)
    return VTraceReturns(vs=vs, pg_advantages=pg_advantages)
