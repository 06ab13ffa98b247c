"""Two-stage training orchestration, evaluation protocol, and metrics output."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import buffers, core, envs
from .forward_curriculum import ForwardCurriculum
from .learner import SACConfig, SACLearner
from .reverse_curriculum import (GlobalVariant, ReverseCurriculum, UniformVariant,
                                 resolve_reset)

log = logging.getLogger("rfcl.trainer")

# Stream ids carve one seed into independent deterministic RNGs.
STREAM_LEARNER_INIT = 1
STREAM_TRAIN = 2       # action noise, batch sampling, gradient-step randomness
STREAM_SCHEDULER = 3
STREAM_LEVELS = 4
STREAM_EVAL = 5
STREAM_DEMO_SUBSAMPLE = 6

CSV_HEADER = ("stage,env_steps,grad_steps,success_full,success_demo_inits,"
              "reverse_progress,mean_forward_score")


def build_maze(cfg: dict) -> envs.MazeSpec:
    e = cfg["env"]
    kwargs = dict(cell_size=e["cell_size"], goal_radius=e["goal_radius"],
                  max_step_displacement=e["max_step_displacement"],
                  episode_horizon=e["episode_horizon"])
    if e["maze"] == "default":
        return envs.MazeSpec.from_ascii(envs.DEFAULT_MAZE_ASCII, **kwargs)
    with open(e["maze"]) as f:
        return envs.MazeSpec.from_ascii(f.read(), **kwargs)


def load_dataset(cfg: dict) -> core.DemoDataset:
    path = cfg["demos"]["path"]
    if not path:
        raise ValueError("demos.path is required for this mode")
    dataset = core.load_demos(path)
    count = cfg["demos"]["count"]
    if count and count < len(dataset.trajectories):
        rng = core.make_rng(cfg["trainer"]["seed"], STREAM_DEMO_SUBSAMPLE)
        dataset = core.subsample_demos(dataset, count, rng)
    return dataset


def make_learner(cfg: dict, state_dim: int, action_dim: int) -> SACLearner:
    lc = cfg["learner"]
    sac = SACConfig(discount=lc["discount"], polyak_tau=lc["polyak_tau"], utd=lc["utd"],
                    actor_update_every=lc["actor_update_every"], lr=lc["lr"],
                    num_critics=lc["num_critics"], num_sampled_critics=lc["num_sampled_critics"],
                    init_temperature=lc["init_temperature"],
                    learnable_temperature=lc["learnable_temperature"],
                    batch_size=lc["batch_size"], seed_steps=lc["seed_steps"])
    rng = core.make_rng(cfg["trainer"]["seed"], STREAM_LEARNER_INIT)
    return SACLearner(state_dim, action_dim, sac, rng)


def make_reverse_scheduler(cfg: dict, demo_lengths):
    mode = cfg["trainer"]["mode"]
    r = cfg["reverse"]
    horizon = cfg["env"]["episode_horizon"]
    if mode == "uniform_reset":
        return UniformVariant(demo_lengths, episode_horizon=horizon)
    if mode == "global_reverse":
        return GlobalVariant(demo_lengths, delta=r["delta"], v=r["global_v"],
                             threshold=r["global_threshold"], p_geom=r["p_geom"], phi=r["phi"],
                             use_dynamic_timelimit=r["dynamic_timelimit"], episode_horizon=horizon)
    return ReverseCurriculum(demo_lengths, delta=r["delta"], m=r["m"], phi=r["phi"],
                             p_geom=r["p_geom"], use_dynamic_timelimit=r["dynamic_timelimit"],
                             episode_horizon=horizon)


# -- evaluation -----------------------------------------------------------


def run_episode(learner: SACLearner, env: envs.PointMazeEnv, obs, action_scale=None) -> bool:
    """Deterministic-policy rollout to termination; True iff success fired."""
    for _ in range(env.timelimit):
        a = learner.act(obs, deterministic=True)
        if action_scale is not None:
            a = a * action_scale
        obs, _, terminal, truncated = env.step(a)
        if terminal:
            return True
        if truncated:
            return False
    return False


def evaluate_levels(learner, spec: envs.MazeSpec, episodes: int, rng: np.random.Generator,
                    action_scale=None) -> float:
    """Success rate over `episodes` fresh levels from the full initial distribution."""
    env = envs.PointMazeEnv(spec)
    wins = 0
    for _ in range(episodes):
        level = envs.InitialStateLevel(int(rng.integers(0, 2 ** 62)))
        wins += run_episode(learner, env, env.reset_to_level(level), action_scale)
    return wins / episodes


def evaluate_demo_inits(learner, spec: envs.MazeSpec, dataset: core.DemoDataset,
                        action_scale=None) -> float:
    env = envs.PointMazeEnv(spec)
    demos = dataset.successful
    wins = sum(run_episode(learner, env, env.reset_to_snapshot(t.snapshots[0]), action_scale)
               for t in demos)
    return wins / len(demos)


def heatmap(learner, spec: envs.MazeSpec, episodes_per_cell: int,
            rng: np.random.Generator, action_scale=None) -> np.ndarray:
    """Per-cell success-rate grid from uniform spawns inside each free cell; walls NaN."""
    H, W = spec.grid.shape
    grid = np.full((H, W), np.nan)
    env = envs.PointMazeEnv(spec)
    for r in range(H):
        for c in range(W):
            if spec.grid[r, c]:
                continue
            wins = 0
            for _ in range(episodes_per_cell):
                u = rng.uniform(0.0, 1.0, size=2)
                pos = ((c + u[0]) * spec.cell_size, (r + u[1]) * spec.cell_size)
                wins += run_episode(learner, env, env.reset_to_position(pos), action_scale)
            grid[r, c] = wins / episodes_per_cell
    return grid


# -- stage loops ----------------------------------------------------------


@dataclass
class StageResult:
    env_steps: int
    grad_steps: int
    completed: bool
    rows: list = field(default_factory=list)
    advancements: list = field(default_factory=list)


class _OnlineOnlySampler:
    """Stage-2 sampler for mode=none: no demonstrations anywhere."""

    def __init__(self, online: buffers.TransitionBuffer):
        self.online = online

    def sample(self, batch, rng):
        return self.online.sample(batch, rng)


class TrainingRun:
    """Owns counters, RNG streams, buffers, and the learner across both stages."""

    def __init__(self, cfg: dict, dataset: core.DemoDataset | None = None):
        self.cfg = cfg
        self.spec = build_maze(cfg)
        self.mode = cfg["trainer"]["mode"]
        self.dataset = dataset
        if self.mode != "none" and dataset is None:
            self.dataset = load_dataset(cfg)
        seed = cfg["trainer"]["seed"]
        self.rng_train = core.make_rng(seed, STREAM_TRAIN)
        self.rng_sched = core.make_rng(seed, STREAM_SCHEDULER)
        self.rng_levels = core.make_rng(seed, STREAM_LEVELS)
        self.rng_eval = core.make_rng(seed, STREAM_EVAL)
        probe = envs.PointMazeEnv(self.spec)
        self.state_dim, self.action_dim = 2, 2
        self.learner = make_learner(cfg, self.state_dim, self.action_dim)
        factor = cfg["demos"]["action_rescale_factor"]
        self.action_scale = (core.derive_action_rescale(self.dataset, factor)
                             if factor > 0 and self.dataset is not None else None)
        self.env_steps = 0
        self.eval_env_steps = 0
        self.rows = []
        self.stage_switch_step = None
        self._next_eval = 0
        self._probe = probe
        self.metrics_stream = None       # optional file handle, appended at each eval
        self.advancement_stream = None

    # .. helpers ..........................................................

    def _demo_offline_buffer(self) -> buffers.TransitionBuffer:
        buf = buffers.TransitionBuffer(self.cfg["learner"]["replay_capacity"])
        for t in buffers.demo_transitions(self.dataset, self._probe):
            if self.action_scale is not None:
                t.action = t.action / self.action_scale
            buf.push(t)
        return buf

    def _env_action(self, a):
        return a if self.action_scale is None else a * self.action_scale

    def _eval_row(self, stage: int, reverse_progress, forward_score):
        ee = self.cfg["trainer"]["eval_episodes"]
        success_full = evaluate_levels(self.learner, self.spec, ee, self.rng_eval,
                                       self.action_scale)
        if self.dataset is not None and self.dataset.successful:
            success_demo = evaluate_demo_inits(self.learner, self.spec, self.dataset,
                                               self.action_scale)
        else:
            success_demo = float("nan")
        row = (f"{stage},{self.env_steps},{self.learner.critic_updates},"
               f"{success_full:.6f},{success_demo:.6f},"
               f"{reverse_progress:.6f},{forward_score:.6f}")
        self.rows.append(row)
        if self.metrics_stream is not None:
            self.metrics_stream.write(row + "\n")
            self.metrics_stream.flush()
        log.info("eval %s", row)
        return success_full, success_demo

    def _maybe_eval(self, stage, reverse_progress, forward_score):
        if self.env_steps >= self._next_eval:
            self._next_eval += self.cfg["trainer"]["eval_interval"]
            return self._eval_row(stage, reverse_progress, forward_score)
        return None

    def _actions(self, states):
        if self.env_steps < self.cfg["learner"]["seed_steps"]:
            return self.rng_train.uniform(-1.0, 1.0, size=(len(states), self.action_dim))
        return self.learner.act_batch(np.asarray(states), deterministic=False, rng=self.rng_train)

    def _train(self, sampler, fresh_steps):
        if self.env_steps < self.cfg["learner"]["seed_steps"]:
            return
        self.learner.train_step(sampler, fresh_steps, self.rng_train)

    # .. stage 1 ..........................................................

    def run_stage1(self) -> tuple:
        """Reverse-curriculum stage; returns (StageResult, online buffer)."""
        cfg = self.cfg
        demos = self.dataset.successful
        if not demos:
            raise ValueError("stage 1 requires at least one successful demonstration")
        scheduler = make_reverse_scheduler(cfg, [t.length for t in demos])
        online = buffers.TransitionBuffer(cfg["learner"]["replay_capacity"])
        offline = self._demo_offline_buffer()
        sampler = buffers.MixedSampler(online, offline, ratio=cfg["learner"]["offline_ratio"])

        E, B = cfg["trainer"]["num_envs"], cfg["trainer"]["steps_per_env"]
        workers = [envs.PointMazeEnv(self.spec) for _ in range(E)]
        budget = self.env_steps + cfg["trainer"]["stage1_budget"]
        result = StageResult(env_steps=0, grad_steps=0, completed=False)

        def assign(env):
            i, t_star, k, limit = scheduler.sample_start(self.rng_sched)
            obs = env.reset_to_snapshot(resolve_reset(demos, i, t_star), timelimit=limit)
            return {"i": i, "k": k, "obs": obs}

        slots = [assign(w) for w in workers]
        eval_completion = isinstance(scheduler, UniformVariant)
        done = False
        while not done and self.env_steps < budget:
            fresh = 0
            for _ in range(B):
                actions = self._actions([s["obs"] for s in slots])
                for e, w in enumerate(workers):
                    obs, reward, terminal, truncated = w.step(self._env_action(actions[e]))
                    online.push_raw(slots[e]["obs"], actions[e], reward, obs, terminal, truncated)
                    slots[e]["obs"] = obs
                    self.env_steps += 1
                    fresh += 1
                    if terminal or truncated:
                        event = scheduler.record_episode(slots[e]["i"], slots[e]["k"], terminal)
                        if event:
                            result.advancements.append((self.env_steps, event))
                        if scheduler.is_complete:
                            done = True
                            break
                        slots[e] = assign(w)
                if done or self.env_steps >= budget:
                    break
            self._train(sampler, fresh)
            ev = self._maybe_eval(1, scheduler.progress, float("nan"))
            if eval_completion and ev is not None and ev[1] >= 1.0:
                done = True
        result.completed = done
        result.env_steps = self.env_steps
        result.grad_steps = self.learner.critic_updates
        self.stage_switch_step = self.env_steps
        return result, online

    # .. stage 2 ..........................................................

    def run_stage2(self, stage1_online: buffers.TransitionBuffer | None = None) -> StageResult:
        cfg = self.cfg
        mode = self.mode
        online = buffers.TransitionBuffer(cfg["learner"]["replay_capacity"])
        if mode == "none":
            sampler = _OnlineOnlySampler(online)
        else:
            offline = self._demo_offline_buffer()
            if stage1_online is not None:
                buffers.absorb(offline, stage1_online)
            sampler = buffers.MixedSampler(online, offline, ratio=cfg["learner"]["offline_ratio"])

        use_forward = mode in ("rfcl", "forward_only", "uniform_reset", "global_reverse")
        fc = None
        if use_forward:
            num_demos = len(self.dataset.successful) if self.dataset else 0
            fc = ForwardCurriculum.build_pool(cfg["forward"]["n_levels"], num_demos,
                                              self.rng_levels, k=cfg["forward"]["k"],
                                              omega=cfg["forward"]["omega"],
                                              beta=cfg["forward"]["beta"],
                                              staleness_coef=cfg["forward"]["staleness_coef"])

        E, B = cfg["trainer"]["num_envs"], cfg["trainer"]["steps_per_env"]
        workers = [envs.PointMazeEnv(self.spec) for _ in range(E)]
        budget = self.env_steps + cfg["trainer"]["stage2_budget"]
        result = StageResult(env_steps=0, grad_steps=0, completed=True)
        demos = self.dataset.successful if self.dataset else []

        def assign(env):
            if fc is not None:
                idx = fc.sample_level(self.rng_sched)
                lvl = fc.levels[idx]
                if lvl.demo_index is not None:
                    obs = env.reset_to_snapshot(demos[lvl.demo_index].snapshots[0])
                else:
                    obs = env.reset_to_level(envs.InitialStateLevel(lvl.level_id))
                return {"idx": idx, "obs": obs}
            level = envs.InitialStateLevel(int(self.rng_sched.integers(0, 2 ** 62)))
            return {"idx": None, "obs": env.reset_to_level(level)}

        slots = [assign(w) for w in workers]
        while self.env_steps < budget:
            fresh = 0
            for _ in range(B):
                actions = self._actions([s["obs"] for s in slots])
                for e, w in enumerate(workers):
                    obs, reward, terminal, truncated = w.step(self._env_action(actions[e]))
                    online.push_raw(slots[e]["obs"], actions[e], reward, obs, terminal, truncated)
                    slots[e]["obs"] = obs
                    self.env_steps += 1
                    fresh += 1
                    if terminal or truncated:
                        if fc is not None and slots[e]["idx"] is not None:
                            fc.record_outcome(slots[e]["idx"], nonzero_return=terminal)
                        slots[e] = assign(w)
                if self.env_steps >= budget:
                    break
            self._train(sampler, fresh)
            self._maybe_eval(2, 0.0 if self.stage_switch_step is not None else float("nan"),
                             fc.mean_score() if fc is not None else float("nan"))
        result.env_steps = self.env_steps
        result.grad_steps = self.learner.critic_updates
        return result


def run_training(cfg: dict, out_dir) -> dict:
    """Full config-driven run; writes metrics.csv, checkpoints, and run.log."""
    import os

    from .config import serialize_config

    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    run = TrainingRun(cfg)
    with open(os.path.join(out_dir, "resolved_config.ini"), "w") as f:
        f.write(serialize_config(cfg))

    mode = cfg["trainer"]["mode"]
    summary = {"mode": mode}
    stage1_online = None
    # Stream eval rows as they land so interrupted runs keep partial metrics.
    metrics_f = open(os.path.join(out_dir, "metrics.csv"), "w")
    metrics_f.write(CSV_HEADER + "\n")
    metrics_f.flush()
    run.metrics_stream = metrics_f
    try:
        if mode in ("rfcl", "reverse_only", "uniform_reset", "global_reverse"):
            s1, stage1_online = run.run_stage1()
            summary["stage1_complete"] = s1.completed
            summary["stage1_env_steps"] = s1.env_steps
            save_checkpoint(os.path.join(out_dir, "stage1.ckpt.npz"), run.learner)
            with open(os.path.join(out_dir, "advancements.csv"), "w") as f:
                f.write("env_steps,demo,start_step\n")
                for step, ev in s1.advancements:
                    f.write(f"{step},{ev.get('demo', -1)},{ev.get('start_step', ev.get('u', 0))}\n")
        s2 = run.run_stage2(stage1_online)
    finally:
        metrics_f.close()
        run.metrics_stream = None
    summary["env_steps"] = run.env_steps
    summary["grad_steps"] = run.learner.critic_updates
    summary["stage_switch_step"] = run.stage_switch_step
    save_checkpoint(os.path.join(out_dir, "final.ckpt.npz"), run.learner)
    with open(os.path.join(out_dir, "run.log"), "w") as f:
        f.write(f"wall_seconds={time.time() - t0:.3f}\n")
        f.write(f"stage_switch_step={run.stage_switch_step}\n")
        f.write(f"eval_env_steps={run.eval_env_steps}\n")
        for k, v in summary.items():
            f.write(f"{k}={v}\n")
    final = run.rows[-1] if run.rows else ""
    if final:
        summary["final_success_full"] = float(final.split(",")[3])
    summary["run"] = run
    return summary


def save_checkpoint(path, learner: SACLearner):
    np.savez_compressed(path, **learner.state_arrays(),
                        dims=np.array([learner.state_dim, learner.action_dim]))


def load_checkpoint(path, cfg: dict) -> SACLearner:
    data = np.load(path, allow_pickle=True)
    dims = data["dims"]
    learner = make_learner(cfg, int(dims[0]), int(dims[1]))
    learner.load_state_arrays(data)
    return learner
