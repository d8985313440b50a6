import numpy as np
import pytest

from dynodist.envs import EnvSpec, FiniteEnv


class CycleEnv(FiniteEnv):
    """n states on a ring; the single action advances one step."""

    deterministic = True

    def __init__(self, n: int, horizon_T: int = 50):
        self.n = n
        self.spec = EnvSpec(state_count=n, action_count=1, horizon_T=horizon_T,
                            initial_state=0)

    def enumerate_states(self):
        return list(range(self.n))

    def next_state(self, state, action):
        return (state + 1) % self.n

    def transition_dist(self, state, action):
        return [((state + 1) % self.n, 1.0)]

    def _sample_next(self, state, action, rng):
        return (state + 1) % self.n


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def cycle5():
    return CycleEnv(5)
