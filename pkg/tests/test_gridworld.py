import numpy as np
import pytest

from regmdp.errors import InvalidGrid
from regmdp.gridworld import build_gridworld, default_grid, parse_grid, render_policy
from regmdp.mdp import uniform_policy, uniform_chain_is_irreducible, validate_mdp


def test_one_cell_grid_self_loops():
    mdp = build_gridworld(parse_grid("X"))
    np.testing.assert_array_equal(mdp.transition, np.ones((1, 4, 1)))
    # every outcome except staying put hits a wall
    np.testing.assert_allclose(mdp.reward, np.full((1, 4), -0.1 * (0.9 + 4 * 0.02)), atol=1e-15)


def test_corridor_probabilities():
    spec = parse_grid("X.1\nD1=10")
    mdp = build_gridworld(spec)
    assert mdp.coords == ((0, 0), (0, 1))
    middle = 1  # state index of the middle cell
    # moving right from the middle enters the diamond: 0.9 + slip 0.02
    assert mdp.reward[middle, 3] == pytest.approx(0.92 * 10 + 2 * 0.02 * -0.1)
    # diamond, both walls and the left slip all end on the start
    assert mdp.transition[middle, 3, 0] == pytest.approx(0.92 + 0.04 + 0.02)
    assert mdp.transition[middle, 3, 1] == pytest.approx(0.02)
    # moving left from the middle lands on the start
    assert mdp.transition[middle, 2, 0] == pytest.approx(0.9 + 0.02 + 0.04 + 0.02)


def test_legend_options_and_errors():
    spec = parse_grid("X#\n..\nwall_penalty=-1 success_prob=1")
    assert (spec.wall_penalty, spec.success_prob) == (-1.0, 1.0)
    mdp = build_gridworld(spec)
    assert mdp.reward[0, 3] == -1.0
    with pytest.raises(InvalidGrid):
        parse_grid("X7")
    with pytest.raises(InvalidGrid):
        parse_grid("..")
    with pytest.raises(InvalidGrid):
        parse_grid("X.\n.")
    with pytest.raises(InvalidGrid):
        parse_grid("X\nD1=five")
    with pytest.raises(InvalidGrid):
        parse_grid("X\nsuccess_prob=0")


def test_default_grid_layout():
    spec = default_grid()
    assert (spec.rows, spec.cols) == (10, 10)
    assert sorted(spec.diamonds.values()) == [5.0, 50.0, 200.0]
    mdp = build_gridworld(spec)
    assert validate_mdp(mdp) == []
    assert uniform_chain_is_irreducible(mdp)
    assert len(mdp.starts) == 2
    # rows sum to one to rounding by construction
    assert np.max(np.abs(mdp.transition.sum(axis=2) - 1)) < 1e-12


def test_render_policy_marks_argmax():
    spec = parse_grid("X.\n#.")
    mdp = build_gridworld(spec)
    policy = uniform_policy(mdp.num_states, 4)
    policy[:] = [0, 0, 0, 1]
    assert render_policy(mdp, spec, policy) == ">>\n#>"
