import numpy as np
import pytest

from aiekf.liegroup import GroupState, exp_se2n3, exp_so3


def random_rotation(rng, max_angle=np.pi - 1e-3):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return exp_so3(axis * rng.uniform(1e-6, max_angle))


def random_group_state(rng, n_feet=4, scale=0.8):
    return exp_se2n3(rng.normal(size=9 + 3 * n_feet) * scale)


def se_wedge(xi, n_feet):
    """Dense (5+N)x(5+N) embedding of a tangent vector."""
    xi = np.asarray(xi, dtype=float)
    m = 5 + n_feet
    W = np.zeros((m, m))
    W[0, 1] = -xi[2]
    W[0, 2] = xi[1]
    W[1, 0] = xi[2]
    W[1, 2] = -xi[0]
    W[2, 0] = -xi[1]
    W[2, 1] = xi[0]
    W[:3, 3:] = xi[3:].reshape(-1, 3).T
    return W


def expm_series(M, terms=30):
    """Truncated matrix-exponential series; the oracle for group exps."""
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms + 1):
        term = term @ M / k
        out = out + term
    return out


@pytest.fixture(scope="session")
def trot_streams():
    from aiekf.simulator import ScenarioConfig, generate

    cfg = ScenarioConfig(gait="trot", terrain="flat", duration=6.0, seed=11)
    return generate(cfg)
