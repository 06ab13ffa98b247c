"""Ring transition buffers and the 50:50 online/offline mixed sampler."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import DemoDataset, Transition

log = logging.getLogger("rfcl.buffers")


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    truncateds: np.ndarray
    n_offline: int = 0

    def __len__(self):
        return len(self.states)


class TransitionBuffer:
    """Fixed-capacity FIFO ring of transitions, stored as flat arrays."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.size = 0
        self.write_cursor = 0
        self._arrays = None

    def _alloc(self, state_dim: int, action_dim: int):
        self._arrays = dict(
            states=np.zeros((self.capacity, state_dim)),
            actions=np.zeros((self.capacity, action_dim)),
            rewards=np.zeros(self.capacity),
            next_states=np.zeros((self.capacity, state_dim)),
            terminals=np.zeros(self.capacity, dtype=bool),
            truncateds=np.zeros(self.capacity, dtype=bool),
        )

    @property
    def state_dim(self):
        return None if self._arrays is None else self._arrays["states"].shape[1]

    @property
    def action_dim(self):
        return None if self._arrays is None else self._arrays["actions"].shape[1]

    def push(self, t: Transition):
        self.push_raw(t.state, t.action, t.reward, t.next_state, t.terminal, t.truncated)

    def push_raw(self, state, action, reward, next_state, terminal, truncated):
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        if self._arrays is None:
            self._alloc(state.shape[0], action.shape[0])
        a = self._arrays
        if state.shape[0] != self.state_dim or action.shape[0] != self.action_dim:
            raise ValueError(f"dimension mismatch: got state {state.shape[0]}, action {action.shape[0]}, "
                             f"buffer holds ({self.state_dim}, {self.action_dim})")
        i = self.write_cursor
        a["states"][i] = state
        a["actions"][i] = action
        a["rewards"][i] = reward
        a["next_states"][i] = np.asarray(next_state)
        a["terminals"][i] = terminal
        a["truncateds"][i] = truncated
        self.write_cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, idx) -> Batch:
        a = self._arrays
        return Batch(states=a["states"][idx], actions=a["actions"][idx], rewards=a["rewards"][idx],
                     next_states=a["next_states"][idx], terminals=a["terminals"][idx],
                     truncateds=a["truncateds"][idx])

    def chronological_indices(self) -> np.ndarray:
        """Oldest-first indices of the live entries."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.write_cursor) % self.capacity

    def sample(self, batch: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.get(rng.integers(0, self.size, size=batch))


def absorb(dst: TransitionBuffer, src: TransitionBuffer) -> None:
    """Append all of src to dst in chronological order; src is untouched."""
    if src.size == 0:
        return
    if dst._arrays is not None and (dst.state_dim, dst.action_dim) != (src.state_dim, src.action_dim):
        raise ValueError("buffer dimension mismatch")
    dropped = dst.size + src.size - dst.capacity
    if dropped > 0:
        log.info("absorb overflows dst capacity %d, dropping %d oldest entries", dst.capacity, dropped)
    a = src._arrays
    for i in src.chronological_indices():
        dst.push_raw(a["states"][i], a["actions"][i], a["rewards"][i],
                     a["next_states"][i], a["terminals"][i], a["truncateds"][i])


class MixedSampler:
    """Draws batches split between the online and offline buffers."""

    def __init__(self, online: TransitionBuffer, offline: TransitionBuffer, ratio: float = 0.5):
        if not 0.0 < ratio <= 1.0:
            raise ValueError("offline ratio must be in (0, 1]")
        self.online = online
        self.offline = offline
        self.ratio = ratio

    def sample(self, batch: int, rng: np.random.Generator) -> Batch:
        if self.offline.size == 0:
            raise ValueError("offline buffer empty: demonstrations must be loaded before updates")
        if self.online.size == 0:
            raise ValueError("online buffer empty: seed steps must precede updates")
        n_off = int(np.floor(self.ratio * batch))
        n_on = batch - n_off
        on = self.online.get(rng.integers(0, self.online.size, size=n_on))
        off = self.offline.get(rng.integers(0, self.offline.size, size=n_off))
        perm = rng.permutation(batch)
        cat = {f: np.concatenate([getattr(on, f), getattr(off, f)])[perm]
               for f in ("states", "actions", "rewards", "next_states", "terminals", "truncateds")}
        return Batch(**cat, n_offline=n_off)


def demo_transitions(dataset: DemoDataset, env) -> list:
    """Flatten demos into transitions, recomputing sparse reward from the env's
    success predicate (success at next_state => reward 1 and terminal)."""
    out = []
    for traj in dataset.trajectories:
        T = traj.length
        for t in range(T):
            ns = traj.states[t + 1]
            success = env.is_success(ns)
            out.append(Transition(state=traj.states[t].copy(), action=traj.actions[t].copy(),
                                  reward=1.0 if success else 0.0, next_state=ns.copy(),
                                  terminal=success, truncated=False))
            if success:
                break
    return out
