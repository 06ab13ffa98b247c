import numpy as np
import pytest

from rfcl import core, envs


@pytest.fixture(scope="session")
def spec():
    return envs.MazeSpec.default()


@pytest.fixture(scope="session")
def demo_dataset(spec):
    rng = core.make_rng(123, 0)
    cells = [(0, 5), (7, 6)]
    trajectories = [envs.generate_demo(spec, c, rng) for c in cells]
    env_id = envs.PointMazeEnv(spec).env_id
    return core.DemoDataset(trajectories=trajectories, env_id=env_id,
                            state_dim=2, action_dim=2)


@pytest.fixture(scope="session")
def demo_file(demo_dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("demos") / "demos.rfcl"
    core.save_demos(demo_dataset, path)
    return str(path)
