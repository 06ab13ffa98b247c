"""Config round-trips, CLI subcommands, bridge protocol, run determinism."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from rfcl import cli
from rfcl.config import ConfigError, SCHEMA, default_config, load_config, serialize_config

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def test_config_roundtrip_identity():
    cfg = load_config(overrides={"trainer.seed": 17, "learner.utd": 2.5,
                                 "reverse.dynamic_timelimit": False})
    again = load_config(text=serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


def test_config_validation_names_key():
    with pytest.raises(ConfigError, match=r"reverse\.delta"):
        load_config(overrides={"reverse.delta": -1})
    with pytest.raises(ConfigError, match=r"trainer\.mode"):
        load_config(overrides={"trainer.mode": "bogus"})
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(overrides={"trainer.nope": 1})
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(text="[nope]\nx = 1\n")


def test_shipped_config_loads_defaults():
    cfg = load_config(path=os.path.join(REPO, "configs", "sample_efficient.ini"))
    lc = cfg["learner"]
    assert (lc["utd"], lc["actor_update_every"]) == (10.0, 20)
    assert (lc["batch_size"], lc["seed_steps"], lc["lr"]) == (256, 5000, 3e-4)
    assert (lc["discount"], lc["polyak_tau"]) == (0.99, 0.005)
    assert (lc["num_critics"], lc["num_sampled_critics"]) == (10, 2)
    assert lc["offline_ratio"] == 0.5
    # Maze-specific overrides: phi (demos move at top speed) and a cold
    # temperature start (success terminates episodes); defaults stay 3 and 1.
    assert lc["init_temperature"] == 0.01
    r = cfg["reverse"]
    assert (r["delta"], r["m"], r["phi"], r["p_geom"]) == (4, 3, 0.75, 0.5)
    assert load_config()["reverse"]["phi"] == 3.0
    assert load_config()["learner"]["init_temperature"] == 1.0
    fw = cfg["forward"]
    assert (fw["k"], fw["omega"], fw["beta"], fw["staleness_coef"], fw["n_levels"]) == \
        (5, 0.75, 0.1, 0.1, 1000)


def test_wall_time_mode_overrides():
    cfg = load_config(path=os.path.join(REPO, "configs", "wall_time.ini"))
    assert cfg["learner"]["utd"] == 0.5
    assert cfg["learner"]["actor_update_every"] == 1
    assert cfg["trainer"]["num_envs"] == 8
    assert cfg["trainer"]["steps_per_env"] == 4


def test_cli_demo_gen_deterministic(tmp_path):
    p1, p2 = tmp_path / "a.rfcl", tmp_path / "b.rfcl"
    assert cli.main(["demo-gen", "--count", "2", "--seed", "3", "--out", str(p1)]) == 0
    assert cli.main(["demo-gen", "--count", "2", "--seed", "3", "--out", str(p2)]) == 0
    assert p1.read_bytes() == p2.read_bytes()


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[reverse]\ndelta = -1\n")
    assert cli.main(["demo-gen", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2


def test_cli_train_and_heatmap(tmp_path, demo_file):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text(
        "[trainer]\nmode = rfcl\nstage1_budget = 400\nstage2_budget = 400\n"
        "eval_interval = 400\neval_episodes = 1\n"
        f"[learner]\nseed_steps = 200\nutd = 0.05\n"
        f"[demos]\npath = {demo_file}\naction_rescale_factor = 1.25\n")
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "final.ckpt.npz").exists()
    prefix = tmp_path / "hm"
    assert cli.main(["heatmap", "--config", str(cfg), "--checkpoint",
                     str(out / "final.ckpt.npz"), "--episodes-per-cell", "1",
                     "--out-prefix", str(prefix)]) == 0
    rows = (tmp_path / "hm.csv").read_text().strip().splitlines()
    assert len(rows) == 8 and len(rows[0].split(",")) == 8
    assert (tmp_path / "hm.pgm").read_text().startswith("P2\n8 8\n255\n")


def test_metrics_csv_byte_identical(tmp_path, demo_file):
    # Two single-worker runs from the same (config, seed): byte-identical CSVs.
    cfg = tmp_path / "cfg.ini"
    cfg.write_text(
        "[trainer]\nmode = rfcl\nstage1_budget = 500\nstage2_budget = 500\n"
        "eval_interval = 250\neval_episodes = 2\nnum_envs = 1\nseed = 5\n"
        f"[learner]\nseed_steps = 200\nutd = 0.1\nactor_update_every = 1\n"
        f"[demos]\npath = {demo_file}\naction_rescale_factor = 1.25\n")
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append((out / "metrics.csv").read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0]) > len(cli.trainer.CSV_HEADER)


def test_bridge_session_ops(demo_file):
    s = cli.BridgeSession()
    assert s.handle("abi", {}) == {"abi": cli.BRIDGE_ABI}
    r = s.handle("reverse.init", {"demos_path": demo_file, "seed": 0, "params": {}})
    assert r["num_demos"] == 2
    out = s.handle("reverse.sample_start", {})
    assert set(out) == {"demo", "step", "offset", "timelimit"}
    ev = s.handle("reverse.record_episode",
                  {"demo": out["demo"], "offset": out["offset"], "success": True})
    assert "event" in ev
    assert s.handle("reverse.is_complete", {}) == {"complete": False}

    r = s.handle("forward.init", {"seed": 0, "params": {"n_levels": 10, "num_demos": 1}})
    assert r["pool_size"] == 11
    out = s.handle("forward.sample_level", {})
    s.handle("forward.record_outcome", {"index": out["index"], "nonzero_return": True})
    assert len(s.handle("forward.scores", {})["scores"]) == 11

    r = s.handle("env.init", {"maze": "default"})
    assert r["env_id"].startswith("pointmaze-8x8-")
    obs = s.handle("env.reset_level", {"level_id": 42})["obs"]
    assert len(obs) == 2
    state = s.handle("env.get_state", {})["state"]
    step = s.handle("env.step", {"action": [0.5, -0.5]})
    assert step["reward"] in (0.0, 1.0)
    restored = s.handle("env.set_state", {"state": state})["obs"]
    assert restored == obs
    with pytest.raises(ValueError, match="unknown op"):
        s.handle("nope", {})


def test_bridge_serve_subprocess(demo_file):
    reqs = [{"id": 1, "op": "abi", "args": {}},
            {"id": 2, "op": "env.init", "args": {"maze": "default"}},
            {"id": 3, "op": "env.reset_level", "args": {"level_id": 7}},
            {"id": 4, "op": "bogus", "args": {}}]
    proc = subprocess.run([sys.executable, "-m", "rfcl.cli", "bridge-serve"],
                          input="\n".join(json.dumps(r) for r in reqs) + "\n",
                          capture_output=True, text=True, timeout=120)
    lines = [json.loads(l) for l in proc.stdout.strip().splitlines()]
    assert [l["id"] for l in lines] == [1, 2, 3, 4]
    assert lines[0]["ok"] and lines[0]["result"]["abi"] == cli.BRIDGE_ABI
    assert lines[2]["ok"] and len(lines[2]["result"]["obs"]) == 2
    assert not lines[3]["ok"] and "unknown op" in lines[3]["error"]


def test_bridge_trace_replays_through_session(tmp_path, demo_file):
    out = tmp_path / "trace.json"
    assert cli.main(["bridge-trace", "--demos", demo_file, "--seed", "1",
                     "--out", str(out)]) == 0
    trace = json.loads(out.read_text())
    assert trace["seed"] == 1
    ops = [c["op"] for c in trace["calls"]]
    assert ops.count("forward.sample_level") == 1000
    assert ops.count("env.step") == 100
    # replaying the recorded inputs through a fresh session reproduces outputs
    s = cli.BridgeSession()
    for c in trace["calls"]:
        if c["op"] in ("reverse.sample_start", "forward.sample_level"):
            if c["op"] == "reverse.sample_start":
                i, t, k, lim = s.reverse.sample_start(s.reverse_rng)
                got = {"demo": i, "step": t, "offset": k, "timelimit": lim}
            else:
                idx = s.forward.sample_level(s.forward_sample_rng)
                got = {"index": idx, "level_id": s.forward.levels[idx].level_id}
        else:
            got = s.handle(c["op"], c["args"])
        assert got == c["result"], c["op"]
