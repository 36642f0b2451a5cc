"""Uniform time grid on [0, T]."""

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ContractError(f"T must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ContractError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_step(cls, T, h):
        n = int(round(T / h))
        if n < 1 or abs(n * h - T) > 1e-9 * T:
            raise ContractError(f"step {h} does not divide horizon {T}")
        return cls(T, n)

    @property
    def h(self):
        return self.T / self.n_steps

    @property
    def nodes(self):
        t = np.arange(self.n_steps + 1) * self.h
        t[-1] = self.T
        return t

    def step_of(self, times):
        """Index ``j`` of the step ``(t_j, t_{j+1}]`` containing each time."""
        j = np.ceil(np.asarray(times, dtype=float) / self.h).astype(int) - 1
        return np.clip(j, 0, self.n_steps - 1)
