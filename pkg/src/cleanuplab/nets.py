"""Per-agent recurrent policy/value network.

Architecture: 3x3 stride-1 convolution with 32 output channels over the
one-hot observation window, contribution scalars concatenated after the conv
torso, a 2-layer 64-unit MLP, an LSTM with hidden size 128, and linear policy
(9 logits) and value heads. No parameter sharing: every agent owns its own
``PolicyNet`` instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import os

import numpy as np
import torch
from torch import nn

from cleanuplab.env.engine import N_ACTIONS
from cleanuplab.env.observe import N_CHANNELS
from cleanuplab.errors import ConfigurationError, NumericsError

# The networks here are tiny; intra-op threading costs more than it buys.
torch.set_num_threads(int(os.environ.get("CLEANUPLAB_TORCH_THREADS", "1")))


@dataclass(frozen=True)
class NetConfig:
    window: int = 15
    in_channels: int = N_CHANNELS
    conv_channels: int = 32
    conv_kernel: int = 3
    mlp_units: int = 64
    lstm_size: int = 128
    n_actions: int = N_ACTIONS
    n_scalars: int = 5

    def validate(self) -> None:
        for name in ("window", "in_channels", "conv_channels", "conv_kernel",
                     "mlp_units", "lstm_size", "n_actions", "n_scalars"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.window <= self.conv_kernel:
            raise ConfigurationError("window must exceed the conv kernel")


RecurrentState = tuple[torch.Tensor, torch.Tensor]  # (h, c), each (1, B, lstm_size)


class PolicyNet(nn.Module):
    def __init__(self, config: NetConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.conv = nn.Conv2d(config.in_channels, config.conv_channels, config.conv_kernel)
        side = config.window - config.conv_kernel + 1
        flat = config.conv_channels * side * side
        self.mlp = nn.Sequential(
            nn.Linear(flat + config.n_scalars, config.mlp_units),
            nn.ReLU(),
            nn.Linear(config.mlp_units, config.mlp_units),
            nn.ReLU(),
        )
        self.lstm = nn.LSTM(config.mlp_units, config.lstm_size)
        self.policy_head = nn.Linear(config.lstm_size, config.n_actions)
        self.value_head = nn.Linear(config.lstm_size, 1)

    def initial_state(self, batch: int = 1, dtype: torch.dtype = torch.float32) -> RecurrentState:
        z = torch.zeros(1, batch, self.config.lstm_size, dtype=dtype)
        return (z, z.clone())

    def forward_sequence(
        self,
        observations: torch.Tensor,  # (T, B, C, H, W)
        scalars: torch.Tensor,  # (T, B, n_scalars)
        state: RecurrentState,
    ) -> tuple[torch.Tensor, torch.Tensor, RecurrentState]:
        cfg = self.config
        if observations.dim() != 5 or observations.shape[2:] != (
            cfg.in_channels,
            cfg.window,
            cfg.window,
        ):
            raise ConfigurationError(
                f"observation shape {tuple(observations.shape)} does not match "
                f"(T, B, {cfg.in_channels}, {cfg.window}, {cfg.window})"
            )
        if scalars.shape[:2] != observations.shape[:2] or scalars.shape[2] != cfg.n_scalars:
            raise ConfigurationError(f"scalar shape {tuple(scalars.shape)} mismatched")
        t, b = observations.shape[:2]
        x = self.conv(observations.reshape(t * b, *observations.shape[2:]))
        x = torch.relu(x).reshape(t, b, -1)
        x = self.mlp(torch.cat([x, scalars], dim=-1))
        x, next_state = self.lstm(x, state)
        logits = self.policy_head(x)
        values = self.value_head(x).squeeze(-1)
        return logits, values, next_state

    def step(
        self, observation: torch.Tensor, scalars: torch.Tensor, state: RecurrentState
    ) -> tuple[torch.Tensor, torch.Tensor, RecurrentState]:
        """Single-step forward for acting: (B, ...) inputs, no time axis."""
        logits, values, next_state = self.forward_sequence(
            observation.unsqueeze(0), scalars.unsqueeze(0), state
        )
        return logits[0], values[0], next_state


def make_net(config: NetConfig, seed: int) -> PolicyNet:
    """Deterministically initialized network (fan-in scaled uniform init)."""
    torch.manual_seed(seed & 0x7FFF_FFFF_FFFF_FFFF)
    return PolicyNet(config)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def sample_action(logits: np.ndarray, rng: np.random.Generator) -> int:
    """Categorical draw from softmax(logits)."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericsError(f"non-finite logits: {z}")
    probs = softmax(z)
    u = rng.random()
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, len(z) - 1))


def state_dict_arrays(net: PolicyNet) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in net.state_dict().items()}


def load_state_arrays(net: PolicyNet, arrays: dict[str, np.ndarray]) -> None:
    net.load_state_dict({k: torch.as_tensor(v) for k, v in arrays.items()})
