"""Command-line entry points: demo generation, training, heatmaps, ablations,
and a JSON-lines bridge server for foreign-language clients."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import core, envs, trainer
from .config import ConfigError, load_config, serialize_config
from .forward_curriculum import ForwardCurriculum
from .reverse_curriculum import ReverseCurriculum

BRIDGE_ABI = "rfcl-bridge-1"
_DEMO_GEN_STREAM = 11


def _setup_logging():
    level = os.environ.get("RFCL_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _load_cfg(args) -> dict:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["trainer.seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        overrides["trainer.mode"] = args.mode
    if getattr(args, "demos", None) is not None:
        overrides["demos.path"] = args.demos
    if getattr(args, "workers", None) is not None:
        overrides["trainer.num_envs"] = args.workers
    return load_config(path=args.config, overrides=overrides)


# -- demo-gen --------------------------------------------------------------


def cmd_demo_gen(args) -> int:
    cfg = _load_cfg(args)
    spec = trainer.build_maze(cfg)
    rng = core.make_rng(cfg["trainer"]["seed"], _DEMO_GEN_STREAM)
    cells = spec.free_cells()
    w = envs.bias_weights(spec, cells)
    count = args.count
    if count > len(cells):
        raise SystemExit(f"cannot pick {count} distinct start cells, only {len(cells)} free")
    picks = rng.choice(len(cells), size=count, replace=False, p=w / w.sum())
    trajectories = [envs.generate_demo(spec, cells[i], rng) for i in picks]
    env_id = envs.PointMazeEnv(spec).env_id
    dataset = core.DemoDataset(trajectories=trajectories, env_id=env_id, state_dim=2, action_dim=2)
    core.save_demos(dataset, args.out)
    for i, t in enumerate(trajectories):
        print(f"demo {i}: start_cell={cells[picks[i]]} length={t.length}")
    print(f"wrote {count} demos to {args.out}")
    return 0


# -- train -----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    summary = trainer.run_training(cfg, args.out)
    print(f"mode={summary['mode']} env_steps={summary['env_steps']} "
          f"grad_steps={summary['grad_steps']} stage_switch_step={summary['stage_switch_step']}")
    if "final_success_full" in summary:
        print(f"final_success_full={summary['final_success_full']:.3f}")
    return 0


# -- heatmap ---------------------------------------------------------------


def write_heatmap_files(grid: np.ndarray, out_prefix: str):
    with open(out_prefix + ".csv", "w") as f:
        for row in grid:
            f.write(",".join("NaN" if math.isnan(v) else f"{v:.6f}" for v in row) + "\n")
    H, W = grid.shape
    with open(out_prefix + ".pgm", "w") as f:
        f.write(f"P2\n{W} {H}\n255\n")
        for row in grid:
            f.write(" ".join("0" if math.isnan(v) else str(int(round(v * 255))) for v in row) + "\n")


def cmd_heatmap(args) -> int:
    cfg = _load_cfg(args)
    learner = trainer.load_checkpoint(args.checkpoint, cfg)
    spec = trainer.build_maze(cfg)
    rng = core.make_rng(cfg["trainer"]["seed"], trainer.STREAM_EVAL)
    grid = trainer.heatmap(learner, spec, args.episodes_per_cell, rng)
    write_heatmap_files(grid, args.out_prefix)
    print(f"wrote {args.out_prefix}.csv and {args.out_prefix}.pgm")
    return 0


# -- ablate-reverse --------------------------------------------------------

ABLATION_VARIANTS = {
    "per_demo_dynamic": {"trainer.mode": "rfcl", "reverse.dynamic_timelimit": True},
    "per_demo_nodynamic": {"trainer.mode": "rfcl", "reverse.dynamic_timelimit": False},
    "global": {"trainer.mode": "global_reverse"},
    "uniform": {"trainer.mode": "uniform_reset"},
}


def stage1_steps_to_completion(cfg: dict) -> tuple:
    """(steps, completed) for a stage-1-only run."""
    run = trainer.TrainingRun(cfg)
    result, _ = run.run_stage1()
    return result.env_steps, result.completed


def cmd_ablate_reverse(args) -> int:
    base = _load_cfg(args)
    budget = base["trainer"]["stage1_budget"]
    variants = args.variants.split(",") if args.variants else list(ABLATION_VARIANTS)
    seeds = [args.seed + i if args.seed is not None else i for i in range(args.seeds)]
    print(f"variant,mean_steps,ci95,seeds,capped")
    lines = []
    for name in variants:
        overrides = dict(ABLATION_VARIANTS[name])
        steps, capped = [], 0
        for s in seeds:
            cfg = load_config(path=args.config,
                              overrides={**{k: v for k, v in overrides.items()},
                                         "trainer.seed": s})
            n, completed = stage1_steps_to_completion(cfg)
            steps.append(n)
            capped += not completed
        mean = float(np.mean(steps))
        ci = 1.96 * float(np.std(steps)) / math.sqrt(len(steps)) if len(steps) > 1 else 0.0
        shown = f"> {budget}" if capped == len(seeds) else f"{mean:.0f}"
        line = f"{name},{shown},{ci:.0f},{len(seeds)},{capped}"
        print(line)
        lines.append(line)
    if args.out:
        with open(args.out, "w") as f:
            f.write("variant,mean_steps,ci95,seeds,capped\n" + "\n".join(lines) + "\n")
    return 0


# -- bridge ----------------------------------------------------------------


class BridgeSession:
    """Stateful handles behind the JSON-lines bridge protocol."""

    def __init__(self):
        self.reverse = None
        self.reverse_rng = None
        self.forward = None
        self.forward_rng = None
        self.env = None

    def _maze(self, maze):
        if maze in (None, "default"):
            return envs.MazeSpec.default()
        return envs.MazeSpec.from_ascii(maze)

    def handle(self, op: str, a: dict) -> dict:
        if op == "abi":
            return {"abi": BRIDGE_ABI}
        if op == "reverse.init":
            dataset = core.load_demos(a["demos_path"])
            p = a.get("params", {})
            self.reverse = ReverseCurriculum(
                [t.length for t in dataset.successful],
                delta=p.get("delta", 4), m=p.get("m", 3), phi=p.get("phi", 3.0),
                p_geom=p.get("p_geom", 0.5),
                use_dynamic_timelimit=p.get("dynamic_timelimit", True),
                episode_horizon=p.get("episode_horizon", 100))
            self.reverse_rng = core.make_rng(a["seed"], trainer.STREAM_SCHEDULER)
            return {"num_demos": len(self.reverse.demos)}
        if op == "reverse.sample_start":
            i, t, k, limit = self.reverse.sample_start(self.reverse_rng)
            return {"demo": i, "step": t, "offset": k, "timelimit": limit}
        if op == "reverse.record_episode":
            ev = self.reverse.record_episode(a["demo"], a["offset"], a["success"])
            return {"event": ev}
        if op == "reverse.is_complete":
            return {"complete": self.reverse.is_complete}
        if op == "forward.init":
            p = a.get("params", {})
            self.forward_rng = core.make_rng(a["seed"], trainer.STREAM_LEVELS)
            self.forward = ForwardCurriculum.build_pool(
                p.get("n_levels", 1000), p.get("num_demos", 0), self.forward_rng,
                k=p.get("k", 5), omega=p.get("omega", 0.75), beta=p.get("beta", 0.1),
                staleness_coef=p.get("staleness_coef", 0.1))
            self.forward_sample_rng = core.make_rng(a["seed"], trainer.STREAM_SCHEDULER)
            return {"pool_size": len(self.forward.levels)}
        if op == "forward.sample_level":
            idx = self.forward.sample_level(self.forward_sample_rng)
            return {"index": idx, "level_id": self.forward.levels[idx].level_id}
        if op == "forward.record_outcome":
            self.forward.record_outcome(a["index"], a["nonzero_return"])
            return {"episode_count": self.forward.episode_count}
        if op == "forward.scores":
            return {"scores": self.forward.scores().tolist()}
        if op == "env.init":
            spec = self._maze(a.get("maze"))
            self.env = envs.PointMazeEnv(spec)
            return {"env_id": self.env.env_id}
        if op == "env.reset_level":
            obs = self.env.reset_to_level(envs.InitialStateLevel(a["level_id"]))
            return {"obs": obs.tolist()}
        if op == "env.get_state":
            return {"state": self.env.get_snapshot().payload.hex()}
        if op == "env.set_state":
            snap = core.EnvSnapshot(payload=bytes.fromhex(a["state"]), env_id=self.env.env_id)
            return {"obs": self.env.reset_to_snapshot(snap).tolist()}
        if op == "env.step":
            obs, reward, terminal, truncated = self.env.step(np.array(a["action"]))
            return {"obs": obs.tolist(), "reward": reward,
                    "terminal": terminal, "truncated": truncated}
        raise ValueError(f"unknown op {op!r}")


def cmd_bridge_serve(args) -> int:
    session = BridgeSession()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        try:
            result = session.handle(req["op"], req.get("args", {}))
            resp = {"id": req.get("id"), "ok": True, "result": result}
        except Exception as e:  # protocol errors go back to the client
            resp = {"id": req.get("id"), "ok": False, "error": f"{type(e).__name__}: {e}"}
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()
    return 0


def cmd_bridge_trace(args) -> int:
    """Golden traces for bridge parity tests: inputs and expected outputs."""
    seed = args.seed if args.seed is not None else 0
    script_rng = core.make_rng(seed, 99)
    trace = {"seed": seed, "demos_path": args.demos, "calls": []}
    session = BridgeSession()

    def call(op, cargs):
        result = session.handle(op, cargs)
        trace["calls"].append({"op": op, "args": cargs, "result": result})

    call("abi", {})
    call("reverse.init", {"demos_path": args.demos, "seed": seed, "params": {}})
    pending = []
    for _ in range(1000):
        if session.reverse.is_complete:
            break
        out = session.reverse.sample_start(session.reverse_rng)
        trace["calls"].append({"op": "reverse.sample_start", "args": {},
                               "result": {"demo": out[0], "step": out[1],
                                          "offset": out[2], "timelimit": out[3]}})
        success = bool(script_rng.uniform() < 0.7)
        call("reverse.record_episode", {"demo": out[0], "offset": out[2], "success": success})
    call("forward.init", {"seed": seed, "params": {"n_levels": 50, "num_demos": 2}})
    for _ in range(1000):
        idx = session.forward.sample_level(session.forward_sample_rng)
        trace["calls"].append({"op": "forward.sample_level", "args": {},
                               "result": {"index": idx,
                                          "level_id": session.forward.levels[idx].level_id}})
        call("forward.record_outcome", {"index": idx,
                                        "nonzero_return": bool(script_rng.uniform() < 0.5)})
    call("forward.scores", {})
    call("env.init", {"maze": "default"})
    call("env.reset_level", {"level_id": int(seed) + 12345})
    for _ in range(100):
        action = script_rng.uniform(-1.0, 1.0, size=2).tolist()
        call("env.step", {"action": action})
    call("env.get_state", {})
    with open(args.out, "w") as f:
        json.dump(trace, f)
    print(f"wrote {len(trace['calls'])} calls to {args.out}")
    return 0


# -- entry -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfcl", description="Curriculum RL laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", default=None, help="INI config file")
        if seed:
            sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("demo-gen", help="generate scripted demos into a container file")
    common(sp)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_demo_gen)

    sp = sub.add_parser("train", help="run a full training job")
    common(sp)
    sp.add_argument("--mode", default=None)
    sp.add_argument("--demos", default=None)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("heatmap", help="per-cell success-rate grid from a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--episodes-per-cell", type=int, default=20)
    sp.add_argument("--out-prefix", required=True)
    sp.set_defaults(func=cmd_heatmap)

    sp = sub.add_parser("ablate-reverse", help="stage-1 scheduler ablation sweep")
    common(sp)
    sp.add_argument("--demos", default=None)
    sp.add_argument("--variants", default=None,
                    help=f"comma list from {sorted(ABLATION_VARIANTS)}")
    sp.add_argument("--seeds", type=int, default=5)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_ablate_reverse)

    sp = sub.add_parser("bridge-serve", help="serve schedulers/env over JSON lines on stdio")
    sp.set_defaults(func=cmd_bridge_serve)

    sp = sub.add_parser("bridge-trace", help="emit a golden trace for bridge parity tests")
    common(sp)
    sp.add_argument("--demos", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bridge_trace)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
