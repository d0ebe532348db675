import numpy as np
import pytest

from duelbandits import make_environment


class OracleEstimator:
    """Clairvoyant stand-in: theta pinned anywhere, zero confidence radius.

    Plugs into the scenario loops to check that with perfect knowledge they
    reduce to their ideal behavior (optimal policy, zero regret).
    """

    def __init__(self, theta, dim=None):
        self._theta0 = np.asarray(theta, dtype=float)
        self.dim = dim if dim is not None else self._theta0.shape[0]

    def reset(self):
        self.theta_ = self._theta0.copy()
        self.theta_sum_ = self._theta0.copy()
        self.t_ = 1
        return self

    def update(self, z, y):
        self.theta_sum_ = self.theta_sum_ + self.theta_
        self.t_ += 1

    def averaged_theta(self):
        return self.theta_

    def local_norm(self, v):
        return 0.0

    def inv_norm(self, v):
        return float(np.linalg.norm(v))

    def inv_norm_matrix(self):
        return np.eye(self.dim)

    def local_norm_matrix(self):
        return None

    def radius(self, t=None):
        return 0.0


@pytest.fixture
def default_env():
    return make_environment(5, 8, 4, seed=11)
