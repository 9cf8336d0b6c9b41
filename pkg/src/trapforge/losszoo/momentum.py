"""Target-network machinery: EMA parameter updates and the negative queue."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class MomentumState:
    momentum: float = 0.99
    max_size: int = 4096
    queue: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError(f"momentum must lie in [0, 1], got {self.momentum}")
        if self.max_size < 1:
            raise ValueError("queue max_size must be positive")

    def __len__(self) -> int:
        return len(self.queue)


def ema_update(target_params, online_params, m: float) -> np.ndarray:
    """Return ``m * target + (1 - m) * online``; inputs are not modified."""
    target = np.asarray(target_params, dtype=np.float64)
    online = np.asarray(online_params, dtype=np.float64)
    if target.shape != online.shape:
        raise ValueError(f"length mismatch: {target.shape} vs {online.shape}")
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"momentum must lie in [0, 1], got {m}")
    return m * target + (1.0 - m) * online


def queue_push(state: MomentumState, batch) -> MomentumState:
    """Append rows FIFO, evicting the oldest so at most ``max_size`` remain."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if state.queue.size and state.queue.shape[1] != batch.shape[1]:
        raise ValueError(f"batch dimension {batch.shape[1]} does not match queue "
                         f"dimension {state.queue.shape[1]}")
    stacked = batch if state.queue.size == 0 else np.vstack([state.queue, batch])
    return replace(state, queue=stacked[-state.max_size:].copy())
