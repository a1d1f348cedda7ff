"""Reproducible Wiener-increment streams.

Every trajectory owns a counter-based Philox stream keyed by
(master seed, trajectory index), so ensembles are bit-reproducible no matter
how the work is partitioned across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NoisePath", "trajectory_rng", "ChunkedNoise"]


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Philox generator for one trajectory, keyed (master_seed, index)."""
    key = np.array([np.uint64(master_seed), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class NoisePath:
    """Precomputed Wiener increments dB_k ~ N(0, dt) for one trajectory."""

    master_seed: int
    index: int
    dt: float
    increments: np.ndarray

    @classmethod
    def generate(cls, master_seed: int, index: int, n_steps: int, dt: float) -> "NoisePath":
        rng = trajectory_rng(master_seed, index)
        db = rng.standard_normal(n_steps) * np.sqrt(dt)
        return cls(master_seed=master_seed, index=index, dt=dt, increments=db)

    @classmethod
    def zeros(cls, n_steps: int, dt: float) -> "NoisePath":
        """Deterministic (noise-free) path for closed-system checks."""
        return cls(master_seed=0, index=0, dt=dt, increments=np.zeros(n_steps))

    def __len__(self) -> int:
        return len(self.increments)


class ChunkedNoise:
    """Per-step standard-normal draws for a batch of trajectories.

    Keeps one generator per trajectory and refills an (m, chunk) buffer so the
    per-call numpy overhead is amortized; the draw sequence seen by trajectory
    i depends only on (master_seed, offset + i).
    """

    def __init__(self, master_seed: int, m: int, offset: int = 0, chunk: int = 256):
        self._gens = [trajectory_rng(master_seed, offset + i) for i in range(m)]
        self._chunk = chunk
        self._buf = np.empty((m, 0))
        self._pos = 0

    def initial_draws(self, k: int) -> np.ndarray:
        """(m, k) draws consumed before stepping starts (initial conditions)."""
        return self.next_columns(k)

    def next_columns(self, k: int = 1) -> np.ndarray:
        out = np.empty((len(self._gens), k))
        filled = 0
        while filled < k:
            if self._pos >= self._buf.shape[1]:
                self._buf = np.stack(
                    [g.standard_normal(self._chunk) for g in self._gens], axis=0
                )
                self._pos = 0
            take = min(k - filled, self._buf.shape[1] - self._pos)
            out[:, filled : filled + take] = self._buf[:, self._pos : self._pos + take]
            self._pos += take
            filled += take
        return out

    def next_step(self) -> np.ndarray:
        """(m,) standard normals for the current step."""
        return self.next_columns(1)[:, 0]
