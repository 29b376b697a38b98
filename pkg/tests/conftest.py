import numpy as np
import pytest

import lqnash as lq

SCALAR_GAME_TEXT = (
    '{"num_agents": 1, "horizon": 1, "state_dim": 1, "action_dim": 1, "tau": 2,'
    ' "A": [1], "B": [1], "Q": [1, 1], "R": [1],'
    ' "noise_cov": 0, "init_mean": 1, "init_cov": 0}'
)


@pytest.fixture
def scalar_game() -> lq.GameSpec:
    """Hand-solvable game: gain -1/3, covariance 1/3, quadratic value 5/3."""
    return lq.load_game_spec(SCALAR_GAME_TEXT)


def random_pd_policy(spec: lq.GameSpec, rng: np.random.Generator, gain_scale: float = 0.3):
    """Random joint policy with strictly PD covariances."""
    n, T = spec.num_agents, spec.horizon
    m, p = spec.state_dim, spec.action_dim
    gains = rng.normal(0.0, gain_scale, (n, T, p, m))
    g = rng.normal(0.0, 0.4, (n, T, p, p))
    covs = np.einsum("...ji,...jk->...ik", g, g) + 0.3 * np.eye(p)
    return lq.joint_policy_from_arrays(gains, covs)


def with_tau(spec: lq.GameSpec, tau: float) -> lq.GameSpec:
    return spec.with_tau(tau)


def stage_fixed_point_residual(spec: lq.GameSpec, joint: lq.JointPolicy, t: int) -> float:
    """Policy-metric distance between stage ``t`` of ``joint`` and its own
    simultaneous best response (tail values from the policy's later stages)."""
    gains = lq.stack_gains(joint)
    covs = lq.stack_covs(joint)
    total = 0.0
    for i in range(spec.num_agents):
        tail = lq.lyapunov_backward(spec, joint, i, from_t=t + 1)[0]
        gain, cov = lq.best_response_stage(spec, i, gains[:, t], tail, t)
        total += np.linalg.norm(gain - gains[i, t]) + np.linalg.norm(cov - covs[i, t])
    return total
