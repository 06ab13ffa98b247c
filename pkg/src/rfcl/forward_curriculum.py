"""Stage-2 scheduler: prioritized sampling over seeded initial-state levels.

Levels are scored 1/2/3 from the fraction of recent episodes with nonzero
return, sampled via rank-based priorities mixed with a staleness term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from collections import deque

import numpy as np


def score_from_history(history, omega: float) -> int:
    """q = success fraction of the window: q=0 -> 2, 0<q<omega -> 3, q>=omega -> 1."""
    if len(history) == 0:
        return 2
    q = sum(history) / len(history)
    if q == 0.0:
        return 2
    if q < omega:
        return 3
    return 1


def fractional_ranks_desc(values) -> np.ndarray:
    """Rank 1 = largest value; ties share the average of their occupied ranks."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(-v, kind="stable")
    ranks = np.empty(len(v))
    pos = 0
    while pos < len(v):
        end = pos
        while end + 1 < len(v) and v[order[end + 1]] == v[order[pos]]:
            end += 1
        avg = (pos + end) / 2.0 + 1.0
        for j in range(pos, end + 1):
            ranks[order[j]] = avg
        pos = end + 1
    return ranks


@dataclass
class PoolLevel:
    level_id: int
    demo_index: int | None = None  # set for demo-initial levels
    history: deque = field(default_factory=lambda: deque(maxlen=5))
    score: int = 2
    last_sampled: int = 0  # C_i


class ForwardCurriculum:
    def __init__(self, levels, k: int = 5, omega: float = 0.75, beta: float = 0.1,
                 staleness_coef: float = 0.1):
        if not levels:
            raise ValueError("level pool must be non-empty")
        self.levels = levels
        for lvl in self.levels:
            lvl.history = deque(lvl.history, maxlen=k)
        self.omega = omega
        self.beta = beta
        self.staleness_coef = staleness_coef
        self.episode_count = 0  # c

    @classmethod
    def build_pool(cls, n: int, num_demos: int, rng: np.random.Generator, **kwargs):
        """n seeded levels from the initial distribution plus one level per demo
        initial state; everything starts at score 2 with empty history."""
        if n < 1:
            raise ValueError("n must be >= 1")
        ids = rng.integers(0, 2 ** 62, size=n)
        levels = [PoolLevel(level_id=int(i)) for i in ids]
        levels += [PoolLevel(level_id=-(d + 1), demo_index=d) for d in range(num_demos)]
        return cls(levels, **kwargs)

    def scores(self) -> np.ndarray:
        return np.array([lvl.score for lvl in self.levels])

    def score_distribution(self) -> np.ndarray:
        """P_S: rank-based priorities with temperature beta."""
        ranks = fractional_ranks_desc(self.scores())
        w = ranks ** (-1.0 / self.beta)
        return w / w.sum()

    def staleness_distribution(self) -> np.ndarray:
        """P_C: proportional to episodes since last sampled; uniform on a fresh pool."""
        gaps = np.array([self.episode_count - lvl.last_sampled for lvl in self.levels],
                        dtype=np.float64)
        total = gaps.sum()
        if total == 0.0:
            return np.full(len(self.levels), 1.0 / len(self.levels))
        return gaps / total

    def sampling_distribution(self) -> np.ndarray:
        c_s = self.staleness_coef
        return (1.0 - c_s) * self.score_distribution() + c_s * self.staleness_distribution()

    def sample_level(self, rng: np.random.Generator) -> int:
        """Draw a level index and mark it freshly sampled."""
        idx = int(rng.choice(len(self.levels), p=self.sampling_distribution()))
        self.levels[idx].last_sampled = self.episode_count
        return idx

    def record_outcome(self, idx: int, nonzero_return: bool):
        if not 0 <= idx < len(self.levels):
            raise IndexError(f"unknown level index {idx}")
        lvl = self.levels[idx]
        lvl.history.append(bool(nonzero_return))
        lvl.score = score_from_history(lvl.history, self.omega)
        self.episode_count += 1

    def mean_score(self) -> float:
        return float(self.scores().mean())

    def snapshot_rows(self):
        """(level_id, score, q, C_i) rows for the metrics dump."""
        rows = []
        for lvl in self.levels:
            q = sum(lvl.history) / len(lvl.history) if lvl.history else float("nan")
            rows.append((lvl.level_id, lvl.score, q, lvl.last_sampled))
        return rows
