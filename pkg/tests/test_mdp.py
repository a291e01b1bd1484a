import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risfed.channel import RisConfig
from risfed.env import GridMap, RobotState
from risfed.errors import DomainError
from risfed.mdp import (
    FeatureNorm,
    LocalAction,
    RewardConfig,
    centralized_action_space_size,
    decode_global_action,
    decode_local_action,
    encode_global_action,
    encode_global_state,
    encode_local_action,
    encode_local_state,
    global_action_digits,
    global_action_space_size,
    global_reward,
    local_action_space_size,
    local_reward,
    mask_power_actions,
    qoe_reward,
)

GRID = GridMap(0.0, 30.0, 0.0, 30.0, 0.5)


def test_local_state_at_normalization_endpoints():
    norm = FeatureNorm(-120.0, -40.0)
    robot = RobotState.at_start(0, (0.0, 0.0), (1.0, 1.0))
    assert encode_local_state(robot, 10 ** (-120 / 20), GRID, norm).tolist() == [0.0, 0.0, 0.0]
    top = RobotState.at_start(0, (30.0, 30.0), (1.0, 1.0))
    assert encode_local_state(top, 1.0, GRID, norm).tolist() == [1.0, 1.0, 1.0]


def test_global_state_shape():
    robots = [RobotState.at_start(i, (0.25, 0.25), (1.25, 1.25)) for i in range(2)]
    s = encode_global_state(robots, [1e-4, 1e-5], GRID)
    assert s.shape == (6,)
    np.testing.assert_array_equal(s[:3], encode_local_state(robots[0], 1e-4, GRID))


def test_decode_global_action_examples():
    np.testing.assert_allclose(decode_global_action(0, RisConfig(2, 1, 2)), [math.pi / 4], atol=1e-15)
    assert global_action_digits(5, 4, 2) == [1, 1]
    np.testing.assert_allclose(decode_global_action(5, RisConfig(2, 2, 2)), [3 * math.pi / 4] * 2, atol=1e-15)


def test_decode_global_action_out_of_range():
    with pytest.raises(DomainError):
        decode_global_action(16, RisConfig(2, 2, 2))


@given(st.integers(1, 4), st.sampled_from([1, 2, 4]), st.data())
def test_global_action_round_trip(bits, n, data):
    size = global_action_space_size(2**bits, n)
    idx = data.draw(st.integers(0, size - 1))
    assert encode_global_action(global_action_digits(idx, 2**bits, n), 2**bits) == idx


def test_decode_local_action_examples():
    assert decode_local_action(0, 6) == LocalAction("n", 1)
    assert decode_local_action(4 * 6 - 1, 6) == LocalAction("w", 6)
    with pytest.raises(DomainError):
        decode_local_action(24, 6)


@pytest.mark.parametrize("n_p", [1, 3, 6, 8])
def test_local_action_bijection(n_p):
    decoded = {decode_local_action(i, n_p) for i in range(4 * n_p)}
    assert len(decoded) == 4 * n_p
    for i in range(4 * n_p):
        assert encode_local_action(decode_local_action(i, n_p), n_p) == i


def test_mask_rank1_three_robots():
    mask = mask_power_actions(1, 3, 6)
    levels = {decode_local_action(i, 6).power_level for i in np.flatnonzero(mask)}
    assert levels == {3, 4, 5, 6}
    # Each allowed level satisfies P_max / 2**level < P_max / 4.
    assert all(1 / 2**lv < 1 / 4 for lv in levels)
    assert mask_power_actions(2, 3, 6).all()


def test_mask_single_robot_unrestricted():
    assert mask_power_actions(1, 1, 6).all()


@given(st.integers(1, 10), st.data())
def test_mask_never_empty(n_p, data):
    k = data.draw(st.integers(1, n_p))
    assert mask_power_actions(1, k, n_p).any()


def test_action_space_sizes():
    assert centralized_action_space_size(6, 2, 4, 1) == 2304
    assert centralized_action_space_size(6, 4, 4, 1) == 1_327_104
    assert global_action_space_size(4, 1) == 4
    assert local_action_space_size(6) == 24


def test_global_reward_examples():
    assert math.isclose(global_reward([5.0, 4.0, 3.0], 0.1), 1.2, rel_tol=1e-15)
    assert global_reward([0.0, 0.0], 0.1) == 0.0


def test_local_reward_examples():
    cfg = RewardConfig(phi=0.05, psi=2.0, r_time=-1.0, r_goal=100.0)
    assert math.isclose(local_reward(2.0, 5.0, 4.5, False, 3, cfg), 0.1, abs_tol=1e-12)
    assert math.isclose(local_reward(2.0, 5.0, 4.5, True, 3, cfg), 100.1, abs_tol=1e-12)
    assert math.isclose(local_reward(2.0, 5.0, 4.5, False, 1, cfg), 0.1 - 1.0, abs_tol=1e-12)


def test_reward_config_rejects_wandering_incentive():
    with pytest.raises(DomainError):
        RewardConfig(phi=0.1, r_time=-1.0)


def test_qoe_reward_examples():
    assert qoe_reward(10.0, 1.0, 0.0) == 1.0
    assert qoe_reward(1.0, 3.0, 0.7) == 0.7
    assert qoe_reward(0.0, 1.0, 0.0, floor=-5.0) == -5.0


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_qoe_reward_monotone(a, b):
    lo, hi = sorted((a, b))
    assert qoe_reward(lo) <= qoe_reward(hi)
