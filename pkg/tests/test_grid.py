import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttql.envs.grid import (
    GridWorld,
    TabularMDP,
    bellman_backup,
    chain_mdp,
    grid_value_iteration,
    load_grid,
    random_gridworld,
)
from ttql.mdp import MDPError, ParameterError


def self_loop(reward=1.0):
    return TabularMDP(np.ones((1, 1, 1)), np.array([[reward]]), np.array([False]), 0)


def test_self_loop_is_geometric_series():
    q = grid_value_iteration(self_loop(), 0.5)
    assert q[0, 0] == pytest.approx(2.0, abs=1e-9)


def test_two_state_chain_by_hand():
    q = grid_value_iteration(chain_mdp([0.0, 1.0]), 0.9)
    assert q[0, 0] == pytest.approx(0.9, abs=1e-12)
    assert q[1, 0] == pytest.approx(1.0, abs=1e-12)
    assert q[2, 0] == 0.0  # absorbing terminal


def test_zero_rewards_give_zero_q():
    w = GridWorld.simple(4, 4, (0, 0), {(3, 3): 0.0}, slip_prob=0.3)
    assert np.all(grid_value_iteration(w, 0.95) == 0.0)


def scalar_backup(mdp, q, gamma):
    """Loop-based Bellman optimality operator, independent of the vectorized one."""
    out = np.zeros_like(q)
    S, A = q.shape
    for s in range(S):
        if mdp.terminal[s]:
            continue
        for a in range(A):
            total = mdp.rewards[s, a]
            for s2 in range(S):
                p = mdp.transitions[s, a, s2]
                if p and not mdp.terminal[s2]:
                    total += gamma * p * max(q[s2])
            out[s, a] = total
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 0.9, 0.99]))
def test_value_iteration_fixed_point(seed, gamma):
    w = random_gridworld(np.random.default_rng(seed))
    q = grid_value_iteration(w, gamma, tol=1e-10)
    m = w.mdp()
    assert np.max(np.abs(q - bellman_backup(m, q, gamma))) <= 1e-10
    assert np.allclose(bellman_backup(m, q, gamma), scalar_backup(m, q, gamma), atol=1e-12)


def test_grid_moves_and_walls():
    w = GridWorld.simple(2, 3, (0, 0), {(1, 2): 1.0})
    m = w.mdp()
    s = w.index((0, 0))
    # up and left bump into walls and stay
    assert m.sample_next(s, 0, 0.5) == s
    assert m.sample_next(s, 3, 0.5) == s
    assert w.cell(m.sample_next(s, 1, 0.5)) == (0, 1)
    assert w.cell(m.sample_next(s, 2, 0.5)) == (1, 0)
    # entering the goal pays its reward
    assert m.rewards[w.index((0, 2)), 2] == 1.0
    assert m.rewards[w.index((1, 1)), 1] == 1.0


def test_slip_spreads_mass_uniformly():
    w = GridWorld.simple(3, 3, (1, 1), {(0, 0): 1.0}, slip_prob=0.4)
    p = w.mdp().transitions[w.index((1, 1)), 1]
    assert p.sum() == pytest.approx(1.0)
    assert p[w.index((1, 2))] == pytest.approx(0.6 + 0.1)
    for cell in [(0, 1), (2, 1), (1, 0)]:
        assert p[w.index(cell)] == pytest.approx(0.1)


def test_world_without_terminal_rejected():
    rewards = np.zeros((4, 4))
    with pytest.raises(ParameterError):
        GridWorld(2, 2, (0, 0), frozenset(), rewards, 0.0)


def test_step_from_terminal_raises():
    m = chain_mdp([1.0])
    m.reset()
    rng = np.random.default_rng(0)
    _, _, term = m.step(0, rng)
    assert term
    with pytest.raises(MDPError):
        m.step(0, rng)


def test_bundled_grid():
    w = load_grid("grid5x5")
    assert (w.rows, w.cols, w.start) == (5, 5, (0, 0))
    q = grid_value_iteration(w, 0.9)
    # shortest path from the start is 8 moves, the last one pays 1
    assert q[0].max() == pytest.approx(0.9**7, abs=1e-9)


def test_grid_file_rejects_unknown_keys(tmp_path):
    p = tmp_path / "g.toml"
    p.write_text("rows = 2\ncols = 2\nwind = 1\n[[terminal]]\ncell = [1, 1]\nreward = 1.0\n")
    with pytest.raises(ParameterError):
        load_grid(p)


def test_grid_reward_overrides(tmp_path):
    p = tmp_path / "g.toml"
    p.write_text(
        "rows = 2\ncols = 2\n[[terminal]]\ncell = [1, 1]\nreward = 1.0\n"
        "[[reward]]\ncell = [0, 0]\naction = 0\nvalue = -0.5\n"
    )
    w = load_grid(p)
    assert w.mdp().rewards[0, 0] == -0.5
