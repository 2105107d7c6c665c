import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochdom.base import (
    GOLDEN,
    BasePointError,
    CircleRotation,
    FiniteCycle,
    TorusAutomorphism,
    base_from_json,
    orbit,
    sample_mu,
)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_rotation_inverse(alpha, x):
    b = CircleRotation(alpha)
    y = b.f_inv(b.f(x))
    assert min(abs(y - x), 1 - abs(y - x)) < 1e-12
    b.validate(b.f(x))
    b.validate(b.f_inv(x))
    d = abs(b.inverse().f(x) - b.f_inv(x))
    assert min(d, 1 - d) < 1e-12


def test_rotation_validate():
    b = CircleRotation()
    assert b.alpha == pytest.approx((np.sqrt(5) - 1) / 2)
    for bad in (-0.1, 1.0, 2.5):
        with pytest.raises(BasePointError):
            b.validate(bad)


def test_torus():
    b = TorusAutomorphism()
    x = np.array([0.1, 0.7])
    assert np.allclose(b.f(x), [0.9, 0.8])
    assert np.allclose(b.f_inv(b.f(x)), x)
    assert np.allclose(b.inverse().f(b.f(x)), x)
    with pytest.raises(ValueError):
        TorusAutomorphism(((2, 0), (0, 1)))
    with pytest.raises(BasePointError):
        b.validate([0.5, 1.0])


def test_cycle():
    b = FiniteCycle(5)
    assert b.f(4) == 0 and b.f_inv(0) == 4
    assert b.inverse().f(0) == 4
    with pytest.raises(BasePointError):
        b.validate(5)
    with pytest.raises(BasePointError):
        b.validate(1.5)
    with pytest.raises(ValueError):
        FiniteCycle(0)


def test_orbit_segment():
    seg = orbit(FiniteCycle(3), 1, 3)
    assert seg.points == (1, 2, 0) and seg.closed
    assert seg.successor(2) == 0
    open_seg = orbit(CircleRotation(0.25), 0.0, 3)
    assert np.allclose(open_seg.points, [0.0, 0.25, 0.5])
    assert open_seg.successor(2) is None
    with pytest.raises(ValueError):
        orbit(FiniteCycle(3), 0, 0)


def test_sampling_reproducible():
    for b in (CircleRotation(), TorusAutomorphism(), FiniteCycle(7)):
        a = sample_mu(b, np.random.default_rng(3), 10)
        c = sample_mu(b, np.random.default_rng(3), 10)
        assert all(np.array_equal(u, v) for u, v in zip(a, c))
        for x in a:
            b.validate(x)


def test_cycle_sampling_uniform():
    xs = sample_mu(FiniteCycle(4), np.random.default_rng(0), 40000)
    counts = np.bincount(xs, minlength=4) / 40000
    assert np.allclose(counts, 0.25, atol=0.01)


def test_json_roundtrip():
    for b in (CircleRotation(0.3), TorusAutomorphism(), FiniteCycle(4, -1)):
        assert base_from_json(b.to_json()) == b
    assert base_from_json({"type": "rotation"}).alpha == GOLDEN
    with pytest.raises(ValueError):
        base_from_json({"type": "cycle", "q": 2, "bogus": 1})
    with pytest.raises(ValueError):
        base_from_json({"type": "mystery"})
