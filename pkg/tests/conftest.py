import sys

import numpy as np
import pytest

from regmdp.mdp import FiniteMdp, random_mdp


def single_state_mdp(rewards):
    rewards = np.asarray(rewards, dtype=float)
    return FiniteMdp(np.ones((1, len(rewards), 1)), rewards[None, :])


def swap_mdp(num_actions=2):
    P = np.zeros((2, num_actions, 2))
    P[0, :, 1] = 1.0
    P[1, :, 0] = 1.0
    return FiniteMdp(P, np.zeros((2, num_actions)))


def random_policy(rng, num_states, num_actions):
    return rng.dirichlet(np.ones(num_actions), size=num_states)


@pytest.fixture
def mdp32():
    return random_mdp(3, 2, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
