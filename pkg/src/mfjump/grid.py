from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform time grid ``t_k = k * T / n`` on ``[0, T]`` with ``n`` a power of two."""

    T: float
    n: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if not is_power_of_two(int(self.n)):
            raise ValueError(f"step count n must be a power of two, got {self.n}")

    @property
    def delta(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.delta

    def step_index(self, t):
        """Index k with ``t`` in ``(t_k, t_{k+1}]``; jumps at ``t = 0`` land in step 0."""
        k = np.ceil(np.asarray(t, dtype=float) / self.delta).astype(np.int64) - 1
        return np.clip(k, 0, self.n - 1)

    def eta(self, t):
        """Map ``t`` in ``(t_k, t_{k+1}]`` to ``t_k``; ``eta(0) = 0`` and ``eta(t) = T`` past the horizon."""
        t = np.asarray(t, dtype=float)
        k = np.ceil(t / self.delta) - 1
        out = np.where(t <= 0, 0.0, np.maximum(k, 0) * self.delta)
        out = np.where(t > self.T, self.T, out)
        return out if out.ndim else float(out)

    def coarsened(self, factor: int) -> "GridSpec":
        if not is_power_of_two(factor) or self.n % factor:
            raise ValueError(f"factor {factor} must be a power of two dividing n={self.n}")
        return GridSpec(self.T, self.n // factor)
