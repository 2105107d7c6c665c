import numpy as np
import pytest

from stochdom.cocycle import constant_spec

# worked examples used throughout
S_SYM = np.array([[0.75, 0.25], [0.25, 0.75]])
S_ASYM = np.array([[0.5, 0.5], [0.25, 0.75]])
V_ASYM = np.array([2.0, -1.0])

N1 = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
N2 = np.array([1.0, 1.0, -2.0]) / np.sqrt(6)


def diag_normal_matrix(d1=0.5, d2=0.125, tilt=0.0):
    """n=3 stochastic matrix with normal part ``d1 N1 N1^T + d2 N2 N2^T``.

    ``tilt`` adds ``tilt * N1`` to every row, which changes ``PSQ`` but not
    the normal part.
    """
    S = np.full((3, 3), 1 / 3) + d1 * np.outer(N1, N1) + d2 * np.outer(N2, N2)
    S += tilt * np.outer(np.ones(3), N1)
    assert S.min() > 0
    return S


def two_by_two(a, b):
    return np.array([[1 - a, a], [b, 1 - b]])


@pytest.fixture
def sym_spec():
    return constant_spec(S_SYM)


@pytest.fixture
def asym_spec():
    return constant_spec(S_ASYM)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
