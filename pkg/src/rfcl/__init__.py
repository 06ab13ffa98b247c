"""Curriculum-driven RL laboratory: reverse/forward start-state curricula, an
ensemble actor-critic learner, and a state-resettable continuous pointmaze."""

__version__ = "0.1.0"

from .core import (DemoDataset, DemoTrajectory, EnvSnapshot, Transition,
                   derive_action_rescale, load_demos, make_rng, save_demos,
                   subsample_demos)
from .envs import InitialStateLevel, MazeSpec, PointMazeEnv, generate_demo, resolve_level
from .buffers import MixedSampler, TransitionBuffer, absorb, demo_transitions
from .learner import SACConfig, SACLearner
from .reverse_curriculum import GlobalVariant, ReverseCurriculum, UniformVariant, resolve_reset
from .forward_curriculum import ForwardCurriculum, score_from_history
from .config import load_config, serialize_config
