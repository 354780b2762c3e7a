import numpy as np
import pytest

from integrator import OdeSystem


class LinearOde(OdeSystem):
    """u' = lam u with the quadratic entropy"""

    def __init__(self, lam=-1.0, dim=1):
        self.lam = lam
        self.dim = dim

    def rhs(self, t, u):
        return self.lam * u

    def entropy(self, u):
        return np.array([0.5 * float(u @ u)])

    def entropy_rate(self, t, u, du):
        return np.array([float(u @ du)])


class SplitSquares(OdeSystem):
    """Independent scalar components, each its own partition with eta_k = u_k^2 / 2"""

    def __init__(self, K=2):
        self.dim = K
        self.n_partitions = K

    def rhs(self, t, u):
        return -u

    def entropy(self, u):
        return 0.5 * u**2

    def entropy_rate(self, t, u, du):
        return u * du

    def partition_slice(self, kappa):
        return slice(kappa, kappa + 1)

    def partition_entropy(self, u_part, kappa):
        return 0.5 * float(u_part[0]) ** 2


class NanOde(OdeSystem):
    dim = 3

    def rhs(self, t, u):
        out = -u.copy()
        out[1] = np.nan
        return out

    def entropy(self, u):
        return np.array([0.5 * float(u @ u)])

    def entropy_rate(self, t, u, du):
        return np.array([float(u @ du)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def linear_ode():
    return LinearOde()


@pytest.fixture
def split_squares():
    return SplitSquares()
