import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochdom.accessibility import (
    AccessNumericalError,
    Constants,
    TransportError,
    access,
    minimal_mass_realization,
    orbit_bounds,
    random_unit_normal,
    realize_orbit_point,
    sample_s_epsilon,
    transport,
)
from stochdom.linalg import ProjectionPair, random_stochastic, validate_stochastic

V2 = np.array([1.0, -1.0]) / np.sqrt(2)


def nearby_unit_normal(v, dist, rng):
    """Unit vector of N at distance about ``dist`` from ``v``."""
    n = v.size
    if n == 2:
        return v.copy()
    w = random_unit_normal(n, rng)
    w -= (w @ v) * v
    w /= np.linalg.norm(w)
    ang = 2 * np.arcsin(dist / 2)
    return np.cos(ang) * v + np.sin(ang) * w


def test_constants_n2():
    k = Constants(2)
    assert k.D == np.sqrt(2)
    assert k.C == np.sqrt(2) + 4
    for n in range(2, 7):
        k = Constants(n)
        assert k.C == pytest.approx(k.D + 2 * k.D**2, rel=1e-15)


def test_worked_example():
    res = transport(V2, V2, 0.01)
    assert res.t == pytest.approx((1 / np.sqrt(2) - 0.1) / (1 / np.sqrt(2) + 0.01), rel=1e-14)
    assert res.t == pytest.approx(0.84661, abs=1e-5)
    assert res.delta2 == pytest.approx(0.54142, abs=1e-5)
    assert np.allclose(res.T @ V2, res.t * V2, atol=1e-14)
    validate_stochastic(res.T)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31), st.floats(0.01, 1.0), st.floats(0.0, 1.0))
def test_transport_bounds(n, seed, frac, dfrac):
    rng = np.random.default_rng(seed)
    k = Constants(n)
    eps = frac / k.C**2
    v = random_unit_normal(n, rng)
    w = nearby_unit_normal(v, dfrac * eps, rng)
    for mix in ("full", "minimal"):
        res = transport(v, w, eps, mix=mix)
        validate_stochastic(res.T)
        assert np.abs(res.T @ v - res.t * w).max() <= 1e-12
        assert res.worst_row_deviation <= (k.D + 2 * k.D**2) * np.sqrt(eps) + 1e-12
        assert res.t >= 1 - k.D * (np.sqrt(eps) + eps) - 1e-12


def test_transport_preconditions():
    with pytest.raises(TransportError):
        transport(np.array([1.0, 0.0]), V2, 0.01)
    with pytest.raises(TransportError):
        transport(V2, -V2, 0.01)
    with pytest.raises(TransportError):
        transport(V2, V2, 0.5)
    with pytest.raises(ValueError):
        transport(V2, V2, 0.01, mix="other")


def test_orbit_bounds_match_samples():
    rng = np.random.default_rng(0)
    v = np.array([0.3, -0.5, 0.2])
    lo_hi = orbit_bounds(v, 0.2)
    for _ in range(200):
        y = sample_s_epsilon(3, 0.2, rng) @ v
        assert np.all(y >= lo_hi[:, 0] - 1e-15) and np.all(y <= lo_hi[:, 1] + 1e-15)


def test_realize_endpoints():
    v = np.array([0.3, -0.5, 0.2])
    bounds = orbit_bounds(v, 0.3)
    for col in (0, 1):
        T, _ = realize_orbit_point(v, bounds[:, col], 0.3)
        assert np.allclose(T @ v, bounds[:, col])
    with pytest.raises(TransportError):
        realize_orbit_point(v, bounds[:, 1] + 0.01, 0.3)
    with pytest.raises(TransportError):
        realize_orbit_point(np.ones(3), np.ones(3), 0.1)


def test_minimal_mass():
    v = np.array([0.3, -0.5, 0.2])
    y = v + np.array([-0.01, 0.0, 0.005])
    T, _, masses = minimal_mass_realization(v, y, 0.1)
    assert np.allclose(T @ v, y)
    assert masses[1] == 0 and masses.max() <= 0.1
    validate_stochastic(T)


def access_instance(n, eps, rng):
    S = random_stochastic(n, rng)
    x = random_unit_normal(n, rng)
    C = Constants(n).C
    y = nearby_unit_normal(x, 0.5 * eps**2 / C**2, rng)
    if rng.random() < 0.5:
        y = -y
    return S, x, y / np.linalg.norm(y)


def test_access_identity():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        eps = float(rng.uniform(0.05, 1.0))
        S, x, y = access_instance(n, eps, rng)
        res = access(S, x, y, eps, details=True)
        assert np.abs(S @ x - res.lam * (res.R @ y)).max() <= 1e-11
        assert res.gap <= eps
        validate_stochastic(res.R)


def test_access_tuple_and_errors():
    S = random_stochastic(3, np.random.default_rng(2))
    x = random_unit_normal(3, np.random.default_rng(3))
    R, lam = access(S, x, x, 0.5)
    assert np.allclose(S @ x, lam * R @ x)
    other = random_unit_normal(3, np.random.default_rng(4))
    with pytest.raises(TransportError):
        access(S, x, other, 0.5)
    with pytest.raises(ValueError):
        access(S, x, x, 0.0)
    assert issubclass(AccessNumericalError, ArithmeticError)


def test_sample_s_epsilon():
    rng = np.random.default_rng(5)
    for _ in range(20):
        T = sample_s_epsilon(4, 0.1, rng)
        validate_stochastic(T)
        assert np.all(np.diag(T) >= 0.9 - 1e-15)
    v = random_unit_normal(5, rng)
    assert abs(ProjectionPair.for_dim(5).u @ v) < 1e-14
