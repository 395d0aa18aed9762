"""Meta-learned platformer agents: a numpy autodiff core, the MicroMario environment,
Reptile / PPO / DQN trainers and a seeded benchmark harness."""

from .bench import RunConfig, evaluate_policy, run_benchmark
from .dqn import DQNConfig, train_dqn
from .env import Action, Level, MicroMario, generate_level
from .policy import NetConfig, PolicyNetwork
from .ppo import PPOConfig, train_ppo
from .reptile import ReptileConfig, train_reptile

__all__ = [
    "Action",
    "DQNConfig",
    "Level",
    "MicroMario",
    "NetConfig",
    "PPOConfig",
    "PolicyNetwork",
    "ReptileConfig",
    "RunConfig",
    "evaluate_policy",
    "generate_level",
    "run_benchmark",
    "train_dqn",
    "train_ppo",
    "train_reptile",
]
