"""State-resettable continuous pointmaze, seeded initial-state levels, scripted demos."""

from __future__ import annotations

import logging
import struct
import zlib
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import DemoTrajectory, EnvSnapshot, make_rng

log = logging.getLogger("rfcl.envs")

# Default testbed: 8x8 S-shaped corridor, goal in the bottom-left corner.
# Demo lengths land around 40-80 steps at max_step_displacement 0.2.
DEFAULT_MAZE_ASCII = """\
........
........
#####...
........
........
...#####
........
G.......
"""

BIAS_EXPONENT = 2       # P(cell) ~ (1 + manhattan(cell, goal))^2
_LEVEL_STREAM = 7001    # stream id reserved for level resolution


@dataclass
class MazeSpec:
    grid: np.ndarray            # (H, W) bool, True = wall
    goal_cell: tuple
    cell_size: float = 1.0
    goal_radius: float = 0.3
    max_step_displacement: float = 0.2
    episode_horizon: int = 100

    @classmethod
    def from_ascii(cls, art: str, **kwargs) -> "MazeSpec":
        rows = [line for line in art.splitlines() if line.strip()]
        if len({len(r) for r in rows}) != 1:
            raise ValueError("maze rows must have equal width")
        grid = np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)
        goals = [(r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == "G"]
        if len(goals) != 1:
            raise ValueError(f"maze must contain exactly one 'G', found {len(goals)}")
        spec = cls(grid=grid, goal_cell=goals[0], **kwargs)
        spec.validate()
        return spec

    @classmethod
    def default(cls) -> "MazeSpec":
        return cls.from_ascii(DEFAULT_MAZE_ASCII)

    def to_ascii(self) -> str:
        lines = []
        for r in range(self.grid.shape[0]):
            line = ""
            for c in range(self.grid.shape[1]):
                if (r, c) == tuple(self.goal_cell):
                    line += "G"
                else:
                    line += "#" if self.grid[r, c] else "."
            lines.append(line)
        return "\n".join(lines) + "\n"

    def validate(self):
        if self.grid[self.goal_cell]:
            raise ValueError("goal cell is a wall")
        if not 0 < self.goal_radius < self.cell_size / 2:
            raise ValueError("goal_radius must be in (0, cell_size/2)")
        free = self.free_cells()
        reach = self.reachable_from(self.goal_cell)
        if set(free) != reach:
            raise ValueError("free cells must form one connected component")

    def free_cells(self) -> list:
        return [(r, c) for r in range(self.grid.shape[0])
                for c in range(self.grid.shape[1]) if not self.grid[r, c]]

    def reachable_from(self, cell) -> set:
        seen = {tuple(cell)}
        queue = deque([tuple(cell)])
        while queue:
            r, c = queue.popleft()
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nr, nc = r + dr, c + dc
                if (0 <= nr < self.grid.shape[0] and 0 <= nc < self.grid.shape[1]
                        and not self.grid[nr, nc] and (nr, nc) not in seen):
                    seen.add((nr, nc))
                    queue.append((nr, nc))
        return seen

    def shortest_cell_path(self, start, goal=None) -> list:
        """BFS cell path from start to goal (inclusive of both ends)."""
        goal = tuple(goal if goal is not None else self.goal_cell)
        start = tuple(start)
        prev = {start: None}
        queue = deque([start])
        while queue:
            cell = queue.popleft()
            if cell == goal:
                path = []
                while cell is not None:
                    path.append(cell)
                    cell = prev[cell]
                return path[::-1]
            r, c = cell
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nxt = (r + dr, c + dc)
                if (0 <= nxt[0] < self.grid.shape[0] and 0 <= nxt[1] < self.grid.shape[1]
                        and not self.grid[nxt] and nxt not in prev):
                    prev[nxt] = cell
                    queue.append(nxt)
        raise ValueError(f"no path from {start} to {goal}")

    def cell_center(self, cell) -> np.ndarray:
        r, c = cell
        return np.array([(c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size])

    def goal_center(self) -> np.ndarray:
        return self.cell_center(self.goal_cell)

    def cell_of(self, pos) -> tuple:
        return (int(pos[1] // self.cell_size), int(pos[0] // self.cell_size))

    def in_bounds(self, pos) -> bool:
        H, W = self.grid.shape
        return 0 <= pos[0] < W * self.cell_size and 0 <= pos[1] < H * self.cell_size

    def fingerprint(self) -> str:
        blob = self.to_ascii().encode() + struct.pack(
            "<4dI", self.cell_size, self.goal_radius, self.max_step_displacement, 0.0, self.episode_horizon)
        return f"{zlib.crc32(blob) & 0xFFFFFFFF:08x}"


def bias_weights(spec: MazeSpec, cells) -> np.ndarray:
    """Unnormalized sampling weights, heavier far from the goal."""
    gr, gc = spec.goal_cell
    d = np.array([abs(r - gr) + abs(c - gc) for r, c in cells], dtype=np.float64)
    return (1.0 + d) ** BIAS_EXPONENT


@dataclass(frozen=True)
class InitialStateLevel:
    level_id: int


def resolve_level(spec: MazeSpec, level_id: int, exclude_cells=frozenset()) -> np.ndarray:
    """Deterministic initial position for a level seed: biased cell, uniform inside it."""
    cells = [c for c in spec.free_cells() if c not in exclude_cells]
    if not cells:
        raise ValueError("no eligible cells for level sampling")
    w = bias_weights(spec, cells)
    rng = make_rng(level_id, _LEVEL_STREAM)
    r, c = cells[rng.choice(len(cells), p=w / w.sum())]
    u = rng.uniform(0.0, 1.0, size=2)
    return np.array([(c + u[0]) * spec.cell_size, (r + u[1]) * spec.cell_size])


class PointMazeEnv:
    """Continuous 2-D pointmaze with sparse success reward and exact state reset.

    State is the agent position; a step moves by action * max_step_displacement
    with axis-separated wall blocking (blocked axis keeps its old coordinate).
    """

    SNAPSHOT_VERSION = 1

    def __init__(self, spec: MazeSpec, exclude_demo_cells: bool = False, demo_cells=frozenset()):
        self.spec = spec
        self.env_id = f"pointmaze-{spec.grid.shape[0]}x{spec.grid.shape[1]}-{spec.fingerprint()}"
        self.exclude_cells = frozenset(demo_cells) if exclude_demo_cells else frozenset()
        self.pos = None
        self.steps = 0
        self.timelimit = spec.episode_horizon

    # -- resets ------------------------------------------------------------

    def reset_to_position(self, pos, timelimit: int | None = None) -> np.ndarray:
        pos = np.asarray(pos, dtype=np.float64)
        cell = self.spec.cell_of(pos)
        assert self.spec.in_bounds(pos) and not self.spec.grid[cell], f"reset into wall at {pos}"
        self.pos = pos.copy()
        self.steps = 0
        self.timelimit = timelimit if timelimit is not None else self.spec.episode_horizon
        return self.pos.copy()

    def reset_to_level(self, level: InitialStateLevel, timelimit: int | None = None) -> np.ndarray:
        return self.reset_to_position(resolve_level(self.spec, level.level_id, self.exclude_cells), timelimit)

    def reset_to_snapshot(self, snap: EnvSnapshot, timelimit: int | None = None) -> np.ndarray:
        if snap.env_id != self.env_id:
            raise ValueError(f"snapshot env_id {snap.env_id!r} != {self.env_id!r}")
        if snap.version != self.SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {snap.version}")
        x, y = struct.unpack("<2d", snap.payload)
        return self.reset_to_position((x, y), timelimit)

    def get_snapshot(self) -> EnvSnapshot:
        return EnvSnapshot(payload=struct.pack("<2d", *self.pos), env_id=self.env_id,
                           version=self.SNAPSHOT_VERSION)

    # -- dynamics ----------------------------------------------------------

    def is_success(self, pos) -> bool:
        return float(np.linalg.norm(np.asarray(pos) - self.spec.goal_center())) <= self.spec.goal_radius

    def step(self, action):
        assert self.pos is not None, "reset before stepping"
        a = np.asarray(action, dtype=np.float64)
        if np.any(np.abs(a) > 1.0 + 1e-9):
            log.debug("clamping out-of-range action %s", a)
        a = np.clip(a, -1.0, 1.0)
        delta = a * self.spec.max_step_displacement
        new = self.pos.copy()
        for axis in (0, 1):
            cand = new.copy()
            cand[axis] += delta[axis]
            if self.spec.in_bounds(cand) and not self.spec.grid[self.spec.cell_of(cand)]:
                new = cand
        self.pos = new
        self.steps += 1
        success = self.is_success(new)
        reward = 1.0 if success else 0.0
        terminal = success
        truncated = (not success) and self.steps >= self.timelimit
        return new.copy(), reward, terminal, truncated


def generate_demo(spec: MazeSpec, start_cell, rng: np.random.Generator,
                  noise_sigma: float = 0.05, k_p: float = 5.0) -> DemoTrajectory:
    """Scripted shortest-path demo: BFS waypoints, proportional control, mild noise."""
    env = PointMazeEnv(spec)
    path = spec.shortest_cell_path(start_cell)
    waypoints = [spec.cell_center(c) for c in path[1:]] + [spec.goal_center()]
    lower_bound = int(np.ceil(spec.cell_size * len(path) / spec.max_step_displacement))
    limit = 4 * lower_bound + 8

    pos = env.reset_to_position(spec.cell_center(start_cell), timelimit=limit + 1)
    states = [pos.copy()]
    snapshots = [env.get_snapshot()]
    actions = []
    wp = 0
    for _ in range(limit):
        while wp < len(waypoints) - 1 and np.linalg.norm(waypoints[wp] - pos) < 0.25 * spec.cell_size:
            wp += 1
        a = np.clip(k_p * (waypoints[wp] - pos), -1.0, 1.0)
        if noise_sigma > 0:
            a = np.clip(a + rng.normal(0.0, noise_sigma, size=2), -1.0, 1.0)
        pos, _, terminal, _ = env.step(a)
        actions.append(a)
        states.append(pos.copy())
        snapshots.append(env.get_snapshot())
        if terminal:
            return DemoTrajectory(states=np.array(states), actions=np.array(actions),
                                  snapshots=snapshots, success=True)
    raise RuntimeError(f"scripted controller failed to reach goal from {start_cell} within {limit} steps")
