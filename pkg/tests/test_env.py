import numpy as np
import pytest

from neuralfc.dynamics import RigidBodyState
from neuralfc.rl.env import EpisodeConfig, RewardWeights, VecHoverEnv, reward, state_reward, terminated
from neuralfc.rotations import quat_from_euler

LEVEL = np.array([1.0, 0, 0, 0])


def _hover_action(params):
    return np.full(4, 2 * params.hover_speed / params.omega_max - 1)


def test_reward_perfect_hover(params):
    w = RewardWeights()
    h = _hover_action(params)
    s = RigidBodyState.at_rest((0, 0, -1))
    r = state_reward(s, h, h, np.array([0, 0, -1.0]), w)
    assert r == pytest.approx(1.0 + 0.2 - 0.02 * 2 * abs(h[0]), abs=1e-12)


def test_reward_decreases_with_error(params):
    w = RewardWeights()
    h = _hover_action(params)
    errs = np.linspace(0, 5, 30)
    r = [reward(np.array([e, 0, 0]), np.zeros(3), LEVEL, np.zeros(3), h, h, np.zeros(3), w) for e in errs]
    assert np.all(np.diff(r) < 0)


def test_action_difference_term():
    w = RewardWeights()
    a = np.array([0.1, 0.2, -0.3, 0.4])
    base = reward(np.zeros(3), np.zeros(3), LEVEL, np.zeros(3), a, a, np.zeros(3), w)
    no_diff = reward(np.zeros(3), np.zeros(3), LEVEL, np.zeros(3), a, a, np.zeros(3),
                     RewardWeights(w_act_diff=0.0))
    assert base == no_diff
    changed = reward(np.zeros(3), np.zeros(3), LEVEL, np.zeros(3), a, a + 0.1, np.zeros(3), w)
    assert changed == pytest.approx(base - 0.05 * 0.2)


def test_terminated_examples():
    assert not terminated(np.zeros(3), LEVEL, np.zeros(3))
    assert terminated(np.array([10.0, 0, 0]), LEVEL, np.zeros(3))
    assert terminated(np.zeros(3), quat_from_euler(np.pi, 0, 0), np.zeros(3))
    assert terminated(np.zeros(3), LEVEL, np.zeros(3), finite=np.bool_(False))


def test_crash_reward():
    w = RewardWeights()
    r = reward(np.array([10.0, 0, 0]), np.zeros(3), LEVEL, np.zeros(3), np.zeros(4), np.zeros(4), np.zeros(3), w)
    assert r == -w.crash_penalty


def test_env_reset_and_truncation(params):
    ep = EpisodeConfig(episode_steps=5)
    env = VecHoverEnv(8, params, RewardWeights(), ep, np.random.default_rng(0))
    assert np.all(np.abs(env.state.position) <= ep.init_pos_range)
    np.testing.assert_allclose(np.linalg.norm(env.state.attitude, axis=1), 1)
    np.testing.assert_allclose(env.state.motor_speed, params.hover_speed)
    h = np.tile(_hover_action(params), (8, 1))
    for k in range(5):
        r, term, trunc, final_obs = env.step(h)
        assert r.shape == (8,)
        assert final_obs.shape == (8, 15)
    assert np.all(trunc | term)
    assert np.all(env.steps == 0)


def test_env_is_deterministic(params):
    def run():
        env = VecHoverEnv(4, params, RewardWeights(), EpisodeConfig(), np.random.default_rng(5))
        rng = np.random.default_rng(9)
        out = []
        for _ in range(20):
            out.append(env.step(rng.uniform(-1, 1, (4, 4)))[0])
        return np.array(out)

    np.testing.assert_array_equal(run(), run())
