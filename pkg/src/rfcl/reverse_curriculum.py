"""Stage-1 scheduler: per-demo reverse curriculum plus the Uniform/Global variants.

Each successful demo carries a start-step frontier t_i that walks backward from
the demo's end toward its initial state as the agent masters each stage.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from collections import deque

import numpy as np

log = logging.getLogger("rfcl.reverse")


def dynamic_timelimit(demo_length: int, start_step: int, phi: float) -> int:
    """Episode budget 1 + ceil((T_i - t)/phi), shrinking as starts near the demo end."""
    return 1 + math.ceil((demo_length - start_step) / phi)


def sample_truncated_geometric(p: float, k_max: int, rng: np.random.Generator) -> int:
    """Geometric on {0..k_max}, pmf p*(1-p)^k renormalized over the support."""
    if k_max == 0:
        return 0
    pmf = p * (1.0 - p) ** np.arange(k_max + 1)
    return int(rng.choice(k_max + 1, p=pmf / pmf.sum()))


@dataclass
class _DemoState:
    length: int
    start_step: int
    history: deque = field(default_factory=lambda: deque(maxlen=3))
    complete: bool = False


class ReverseCurriculum:
    """Per-demonstration frontier scheduler with m-consecutive-success advancement."""

    def __init__(self, demo_lengths, delta: int = 4, m: int = 3, phi: float = 3.0,
                 p_geom: float = 0.5, use_dynamic_timelimit: bool = True,
                 episode_horizon: int = 100):
        self.delta = delta
        self.m = m
        self.phi = phi
        self.p_geom = p_geom
        self.use_dynamic_timelimit = use_dynamic_timelimit
        self.episode_horizon = episode_horizon
        self.demos = [_DemoState(length=T, start_step=T, history=deque(maxlen=m))
                      for T in demo_lengths]
        if not self.demos:
            raise ValueError("reverse curriculum needs at least one successful demo")

    @property
    def is_complete(self) -> bool:
        return all(d.complete for d in self.demos)

    @property
    def progress(self) -> float:
        """Fraction of demo steps still ahead of the frontiers; 0 when fully reversed."""
        return sum(d.start_step for d in self.demos) / sum(d.length for d in self.demos)

    def start_steps(self) -> list:
        return [d.start_step for d in self.demos]

    def selection_probabilities(self) -> np.ndarray:
        """Normalized t_i/T_i weights; complete demos get 0; all-zero falls back to uniform
        over incomplete demos so frontier-at-zero demos can still finish."""
        w = np.array([0.0 if d.complete else d.start_step / d.length for d in self.demos])
        if w.sum() == 0.0:
            w = np.array([0.0 if d.complete else 1.0 for d in self.demos])
        return w / w.sum()

    def sample_start(self, rng: np.random.Generator):
        """Returns (demo index, start step t*, offset k, episode timelimit)."""
        if self.is_complete:
            raise RuntimeError("scheduler finished: all demos complete")
        i = int(rng.choice(len(self.demos), p=self.selection_probabilities()))
        d = self.demos[i]
        k = sample_truncated_geometric(self.p_geom, d.length - d.start_step, rng)
        t_star = d.start_step + k
        if self.use_dynamic_timelimit:
            limit = dynamic_timelimit(d.length, t_star, self.phi)
        else:
            limit = self.episode_horizon
        return i, t_star, k, limit

    def record_episode(self, i: int, k: int, success: bool):
        """Returns an advancement event dict, or None. Only k=0 episodes touch history."""
        d = self.demos[i]
        if d.complete:
            log.warning("episode recorded for already-complete demo %d, ignored", i)
            return None
        if k != 0:
            return None
        d.history.append(bool(success))
        if len(d.history) == self.m and all(d.history):
            d.history.clear()
            if d.start_step == 0:
                d.complete = True
                return {"demo": i, "event": "complete", "start_step": 0}
            d.start_step = max(0, d.start_step - self.delta)
            return {"demo": i, "event": "advance", "start_step": d.start_step}
        return None


def resolve_reset(demos, i: int, t_star: int):
    """Snapshot for demo i at step t*; restoring it reproduces states[t*] exactly."""
    traj = demos[i]
    if not 0 <= t_star <= traj.length:
        raise IndexError(f"step {t_star} out of range for demo {i} of length {traj.length}")
    return traj.snapshots[t_star]


class UniformVariant:
    """Ablation: uniform demo and step choice, full horizon, never self-completes."""

    def __init__(self, demo_lengths, episode_horizon: int = 100):
        self.lengths = list(demo_lengths)
        self.episode_horizon = episode_horizon
        self.is_complete = False
        self.progress = 1.0

    def sample_start(self, rng: np.random.Generator):
        i = int(rng.integers(0, len(self.lengths)))
        t_star = int(rng.integers(0, self.lengths[i] + 1))
        return i, t_star, 0, self.episode_horizon

    def record_episode(self, i, k, success):
        return None

    def start_steps(self):
        return [0] * len(self.lengths)


class GlobalVariant:
    """Ablation: one shared reverse offset u across demos; u advances when the
    mean success of the last v episodes (any offset) exceeds the threshold."""

    def __init__(self, demo_lengths, delta: int = 4, v: int = 20, threshold: float = 0.9,
                 p_geom: float = 0.5, phi: float = 3.0, use_dynamic_timelimit: bool = True,
                 episode_horizon: int = 100):
        self.lengths = list(demo_lengths)
        self.delta = delta
        self.threshold = threshold
        self.p_geom = p_geom
        self.phi = phi
        self.use_dynamic_timelimit = use_dynamic_timelimit
        self.episode_horizon = episode_horizon
        self.u = 0
        self.history = deque(maxlen=v)
        self.is_complete = False

    @property
    def progress(self) -> float:
        return sum(max(0, T - self.u) for T in self.lengths) / sum(self.lengths)

    def start_steps(self):
        return [max(0, T - self.u) for T in self.lengths]

    def sample_start(self, rng: np.random.Generator):
        if self.is_complete:
            raise RuntimeError("scheduler finished")
        starts = self.start_steps()
        w = np.array([s / T for s, T in zip(starts, self.lengths)])
        if w.sum() == 0.0:
            w = np.ones(len(self.lengths))
        i = int(rng.choice(len(self.lengths), p=w / w.sum()))
        t_i = starts[i]
        k = sample_truncated_geometric(self.p_geom, self.lengths[i] - t_i, rng)
        t_star = t_i + k
        if self.use_dynamic_timelimit:
            limit = dynamic_timelimit(self.lengths[i], t_star, self.phi)
        else:
            limit = self.episode_horizon
        return i, t_star, k, limit

    def record_episode(self, i, k, success):
        if self.is_complete:
            return None
        self.history.append(bool(success))
        if len(self.history) == self.history.maxlen and np.mean(self.history) > self.threshold:
            self.history.clear()
            if self.u >= max(self.lengths):
                self.is_complete = True
                return {"event": "complete", "u": self.u}
            self.u += self.delta
            return {"event": "advance", "u": self.u}
        return None
