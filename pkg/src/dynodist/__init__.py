"""Dynamical distance learning at desk scale: supervised distance
regression, distance-shaped policy optimization, goal proposal, and exact
verification oracles."""

__version__ = "0.1.0"

from .envs import (EnvSpec, FiniteEnv, GridMaze, PathologicalMDP,
                   RandomDeterministicMDP, Transition, make_env, render_grid)
from .distance import (OnPolicyPool, PairSample, ParametricDistance,
                       TabularDistance, TDDistance, Trajectory, fit,
                       sample_pairs, td_fit)
from .policy import (GreedyDescentActor, RolloutConfig, TabularPolicy,
                     greedy_step_baseline, improve, rollout,
                     sparse_reward_improve)
from .goals import (GoalState, PreferenceQuery, PreferenceResponse,
                    ScriptedBfsOracle, ScriptedXMaxOracle, ddlfp_choose,
                    ddlus_choose, fixed_goal)
from .trainer import (TrainerConfig, TrajectoryPool, evaluate, export_heatmap,
                      train)
from . import oracle, verify
