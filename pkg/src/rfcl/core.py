"""Shared domain types, seeded RNG streams, and the demo container format."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

DEMO_MAGIC = b"RFCLDEMO"
DEMO_FORMAT_VERSION = 1


class DemoFormatError(ValueError):
    """Raised when a demo container file is malformed or corrupted."""


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Deterministic generator for (seed, stream_id); identical draws across runs."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream_id,))))


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool
    truncated: bool

    def __post_init__(self):
        if self.terminal and self.truncated:
            raise ValueError("transition cannot be both terminal and truncated")
        if self.reward not in (0.0, 1.0):
            raise ValueError(f"sparse reward must be 0 or 1, got {self.reward}")
        if self.state.shape != self.next_state.shape:
            raise ValueError("state/next_state dimension mismatch")


@dataclass
class EnvSnapshot:
    payload: bytes
    env_id: str
    version: int = 1


@dataclass
class DemoTrajectory:
    states: np.ndarray      # (T+1, state_dim)
    actions: np.ndarray     # (T, action_dim)
    snapshots: list         # T+1 EnvSnapshot
    success: bool

    @property
    def length(self) -> int:
        return len(self.actions)

    def validate(self):
        T = self.length
        if T < 1:
            raise ValueError("trajectory must contain at least one action")
        if len(self.states) != T + 1:
            raise ValueError(f"expected {T + 1} states, got {len(self.states)}")
        if len(self.snapshots) != T + 1:
            raise ValueError(f"expected {T + 1} snapshots, got {len(self.snapshots)}")


@dataclass
class DemoDataset:
    trajectories: list
    env_id: str
    state_dim: int
    action_dim: int
    action_bounds: np.ndarray = field(default=None)  # (action_dim, 2) low/high

    def __post_init__(self):
        if self.action_bounds is None:
            self.action_bounds = np.tile([-1.0, 1.0], (self.action_dim, 1))
        self.action_bounds = np.asarray(self.action_bounds, dtype=np.float64)

    def validate(self):
        if not self.trajectories:
            raise ValueError("dataset must contain at least one trajectory")
        for i, traj in enumerate(self.trajectories):
            try:
                traj.validate()
            except ValueError as e:
                raise ValueError(f"trajectory {i}: {e}") from e
            if traj.states.shape[1] != self.state_dim:
                raise ValueError(f"trajectory {i}: state_dim {traj.states.shape[1]} != {self.state_dim}")
            if traj.actions.shape[1] != self.action_dim:
                raise ValueError(f"trajectory {i}: action_dim {traj.actions.shape[1]} != {self.action_dim}")
        if self.action_bounds.shape != (self.action_dim, 2):
            raise ValueError("action_bounds must be (action_dim, 2)")

    @property
    def successful(self) -> list:
        return [t for t in self.trajectories if t.success]


def _pack_u32(x: int) -> bytes:
    return struct.pack("<I", x)


def save_demos(dataset: DemoDataset, path) -> None:
    """Write the dataset in the binary container format; byte-identical for identical inputs."""
    dataset.validate()
    out = bytearray()
    out += DEMO_MAGIC
    out += _pack_u32(DEMO_FORMAT_VERSION)
    env_id = dataset.env_id.encode("utf-8")
    out += _pack_u32(len(env_id)) + env_id
    out += _pack_u32(dataset.state_dim)
    out += _pack_u32(dataset.action_dim)
    out += dataset.action_bounds.astype("<f8").tobytes()
    out += _pack_u32(len(dataset.trajectories))
    for traj in dataset.trajectories:
        payload = bytearray()
        payload += _pack_u32(traj.length)
        payload += struct.pack("<B", 1 if traj.success else 0)
        payload += np.asarray(traj.states, dtype="<f8").tobytes()
        payload += np.asarray(traj.actions, dtype="<f8").tobytes()
        for snap in traj.snapshots:
            payload += _pack_u32(len(snap.payload)) + snap.payload
        out += payload
        out += _pack_u32(zlib.crc32(bytes(payload)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DemoFormatError("truncated file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_demos(path) -> DemoDataset:
    """Parse a demo container file, verifying magic, version, and per-trajectory CRCs."""
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    if len(data) < 8 or r.take(8) != DEMO_MAGIC:
        raise DemoFormatError(f"{path}: bad magic, not a demo container")
    version = r.u32()
    if version != DEMO_FORMAT_VERSION:
        raise DemoFormatError(f"{path}: unsupported format version {version}")
    env_id = r.take(r.u32()).decode("utf-8")
    state_dim = r.u32()
    action_dim = r.u32()
    bounds = np.frombuffer(r.take(action_dim * 2 * 8), dtype="<f8").reshape(action_dim, 2).copy()
    count = r.u32()
    trajectories = []
    for i in range(count):
        start = r.pos
        T = r.u32()
        if T == 0 or T > 10_000_000:
            raise DemoFormatError(f"trajectory {i}: implausible length {T}")
        success = struct.unpack("<B", r.take(1))[0] != 0
        states = np.frombuffer(r.take((T + 1) * state_dim * 8), dtype="<f8").reshape(T + 1, state_dim).copy()
        actions = np.frombuffer(r.take(T * action_dim * 8), dtype="<f8").reshape(T, action_dim).copy()
        snapshots = []
        for _ in range(T + 1):
            snapshots.append(EnvSnapshot(payload=bytes(r.take(r.u32())), env_id=env_id))
        payload = data[start:r.pos]
        if r.u32() != (zlib.crc32(payload) & 0xFFFFFFFF):
            raise DemoFormatError(f"trajectory {i}: checksum mismatch")
        trajectories.append(DemoTrajectory(states=states, actions=actions, snapshots=snapshots, success=success))
    dataset = DemoDataset(trajectories=trajectories, env_id=env_id,
                          state_dim=state_dim, action_dim=action_dim, action_bounds=bounds)
    dataset.validate()
    return dataset


def derive_action_rescale(dataset: DemoDataset, factor: float) -> np.ndarray:
    """Per-dimension bound = factor * max |a_j| over every demo action.

    Policies with unit-range outputs map onto [-bound, +bound]. A dimension whose
    demos never move it would get a zero bound, which is unusable; the caller
    must override those explicitly.
    """
    if factor <= 0:
        raise ValueError("factor must be positive")
    all_actions = np.concatenate([t.actions for t in dataset.trajectories], axis=0)
    bounds = factor * np.abs(all_actions).max(axis=0)
    zero_dims = np.nonzero(bounds == 0.0)[0]
    if zero_dims.size:
        raise ValueError(f"zero-magnitude action dimensions {zero_dims.tolist()}: bound would be 0, override required")
    return bounds


def subsample_demos(dataset: DemoDataset, count: int, rng: np.random.Generator) -> DemoDataset:
    """Uniform sample without replacement, order-stable by original index."""
    n = len(dataset.trajectories)
    if not 1 <= count <= n:
        raise ValueError(f"count must be in [1, {n}], got {count}")
    idx = sorted(rng.choice(n, size=count, replace=False).tolist())
    return DemoDataset(trajectories=[dataset.trajectories[i] for i in idx],
                       env_id=dataset.env_id, state_dim=dataset.state_dim,
                       action_dim=dataset.action_dim, action_bounds=dataset.action_bounds.copy())
