"""Explicit matrices where Euclidean-norm versions of textbook bounds fail.

Each test pins the measured value so a regression in the numerics (rather
than in the bound) shows up as a change here.
"""

import numpy as np
import pytest

from stochdom.cocycle import constant_spec
from stochdom.linalg import ProjectionPair, angle, normal_part
from stochdom.lyapunov import lyapunov_periodic
from stochdom.perturbation import deform, lipschitz_check, sharp_lipschitz_bound

ABSORBING = np.array([[1.0, 0.0, 0.0], [0.5, 0.25, 0.25], [0.5, 0.25, 0.25]])
MERGE = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def test_negative_eigenvector_close_to_u():
    rep, est = lyapunov_periodic(constant_spec(ABSORBING))
    assert rep.exponents[:2] == pytest.approx([0.0, np.log(0.5)])
    u = ProjectionPair.for_dim(3).u
    # E^{log 1/2} is spanned by (0, 1, 1) - (...) with a large u component
    a = angle(u, est.subspaces[1].basis)
    assert a == pytest.approx(np.arccos(np.sqrt(2 / 3)), abs=1e-12)
    assert a < np.pi / 4


def test_angle_bound_holds_for_two_by_two():
    # for n = 2 the negative eigenvector (a, -b) has abs(Qv) >= abs(Pv)
    rng = np.random.default_rng(0)
    u = ProjectionPair.for_dim(2).u
    for _ in range(200):
        a, b = rng.random(2)
        S = np.array([[1 - a, a], [b, 1 - b]])
        rep, est = lyapunov_periodic(constant_spec(S))
        if len(rep.exponents) > 1 and rep.exponents[1] < 0 and np.isfinite(rep.exponents[1]):
            assert angle(u, est.subspaces[1].basis) >= np.pi / 4 - 1e-8


def test_normal_part_exceeds_one():
    assert np.linalg.norm(normal_part(MERGE), 2) == pytest.approx(2 / np.sqrt(3), abs=1e-12)


def test_plain_lipschitz_bound_fails():
    lhs, bound = lipschitz_check(MERGE, MERGE, 0.0, 1.0)
    assert lhs > bound
    assert lhs == pytest.approx(np.linalg.norm(MERGE - deform(MERGE, 0.0), 2))
    assert lhs <= sharp_lipschitz_bound(MERGE, MERGE, 0.0, 1.0) + 1e-12
