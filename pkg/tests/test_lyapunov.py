import json
import warnings

import numpy as np
import pytest

from stochdom.base import CircleRotation, FiniteCycle
from stochdom.cocycle import CocycleSpec, Constant, Tabulated, constant_spec, random_cocycle
from stochdom.linalg import Subspace, angle
from stochdom.lyapunov import (
    InvarianceError,
    LyapunovReport,
    SpectralGapError,
    check_uniform_contraction,
    estimated_splitting,
    generalized_kernel,
    group_exponents,
    lyapunov_periodic,
    lyapunov_qr,
    periodic_spectrum,
    stable_bundle,
    unstable_bundle,
)

from .conftest import S_ASYM, S_SYM, V_ASYM, diag_normal_matrix


def test_group_exponents():
    exps, mults = group_exponents([0.0, -1.0, -1.0005, -50.0, -np.inf])
    assert exps[0] == 0.0 and exps[1] == pytest.approx(-1.00025) and exps[2] == -np.inf
    assert mults == [1, 2, 2]


@pytest.mark.parametrize("S, neg", [(S_SYM, np.log(0.5)), (S_ASYM, np.log(0.25))])
def test_periodic_2x2(S, neg):
    rep, est = lyapunov_periodic(constant_spec(S))
    assert rep.exponents == pytest.approx([0.0, neg], abs=1e-13)
    assert rep.multiplicities == [1, 1]
    assert max(est.residuals) < 1e-12


def test_periodic_eigenvector_oracle():
    _, est = lyapunov_periodic(constant_spec(S_ASYM))
    assert angle(V_ASYM, est.subspaces[1].basis) < 1e-12
    assert angle(np.ones(2), est.subspaces[0].basis) < 1e-12


def test_periodic_rank_one():
    S = np.array([[0.2, 0.8], [0.2, 0.8]])
    rep, est = lyapunov_periodic(constant_spec(S))
    assert rep.exponents == [0.0, -np.inf]
    assert np.allclose(S @ est.subspaces[1].basis, 0, atol=1e-15)


def test_periodic_three_blocks():
    rep, _ = lyapunov_periodic(constant_spec(diag_normal_matrix(tilt=0.1), q=3))
    assert rep.exponents == pytest.approx([0.0, np.log(0.5), np.log(0.125)], abs=1e-12)


def test_periodic_cycle_product():
    c = CocycleSpec(FiniteCycle(2), Tabulated([S_SYM, S_ASYM]))
    rep, est = lyapunov_periodic(c)
    # 2x2: normal factors multiply, so the exponent is the mean of the logs
    assert rep.exponents[1] == pytest.approx(0.5 * np.log(0.5 * 0.25), abs=1e-13)
    assert set(est.field) == {0, 1}
    assert est.splitting_at(1).dims == [1, 1]


def test_periodic_random_corpus():
    rng = np.random.default_rng(7)
    for _ in range(100):
        c = random_cocycle(rng, int(rng.integers(2, 6)), q=int(rng.integers(1, 4)))
        rep, est = lyapunov_periodic(c)
        assert rep.exponents[0] == pytest.approx(0.0, abs=1e-10)
        assert rep.n == c.n
        assert max(est.residuals) < 1e-8


def test_periodic_needs_cycle():
    with pytest.raises(ValueError):
        lyapunov_periodic(CocycleSpec(CircleRotation(), Constant(S_SYM)))


def test_generalized_kernel_nilpotent():
    N = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert generalized_kernel(N).shape[1] == 2
    assert generalized_kernel(np.eye(2)).shape[1] == 0


def test_periodic_spectrum_complex_pair():
    R = np.array([[0.0, -1.0], [1.0, 0.0]]) * 0.5
    exps, mults, subs = periodic_spectrum([R])
    assert exps == pytest.approx([np.log(0.5)]) and mults == [2]
    assert subs[0][0].shape == (2, 2)


def test_qr_matches_periodic():
    rng = np.random.default_rng(8)
    for _ in range(10):
        c = random_cocycle(rng, 3, q=2)
        exact, _ = lyapunov_periodic(c)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = lyapunov_qr(c, 0, 4000)
        if rep.multiplicities == exact.multiplicities:
            got = np.array(rep.exponents)
            ref = np.array(exact.exponents)
            fin = np.isfinite(ref)
            assert np.allclose(got[fin], ref[fin], atol=1e-3)


def test_qr_rotation():
    c = CocycleSpec(CircleRotation(), Constant(S_SYM))
    rep = lyapunov_qr(c, 0.1, 500, stride=5)
    assert rep.exponents == pytest.approx([0.0, np.log(0.5)], abs=1e-10)
    assert rep.converged
    csv = rep.series_csv().splitlines()
    assert csv[0] == "step,lambda_1,lambda_2"
    assert len(csv) == 1 + 100


def test_qr_rank_one_and_json():
    S = np.array([[0.2, 0.8], [0.2, 0.8]])
    rep = lyapunov_qr(constant_spec(S), 0, 200)
    assert rep.exponents[1] == -np.inf
    data = json.loads(json.dumps(rep.to_json()))
    assert data["exponents"][1] == "-inf"
    assert rep.full_spectrum() == [rep.exponents[0], -np.inf]


def test_qr_short_orbit_warns():
    with pytest.warns(RuntimeWarning):
        rep = lyapunov_qr(constant_spec(S_SYM), 0, 20)
    assert not rep.converged


def test_qr_argument_check():
    with pytest.raises(ValueError):
        lyapunov_qr(constant_spec(S_SYM), 0, 5, stride=10)


def test_series_requires_data():
    with pytest.raises(ValueError):
        LyapunovReport([0.0], [1], "x").series_csv()


def test_bundles():
    c = constant_spec(S_ASYM)
    st = stable_bundle(c, 0, None, np.log(0.5))
    assert angle(V_ASYM, st.basis) < 1e-10
    un = unstable_bundle(c, 0, 1, 40)
    assert angle(np.ones(2), un.basis) < 1e-10
    with pytest.raises(SpectralGapError):
        stable_bundle(c, 0, 60, np.log(0.25))
    with pytest.raises(SpectralGapError):
        stable_bundle(c, 0, 60, np.log(0.1))


def test_estimated_splitting_matches_exact():
    c = constant_spec(diag_normal_matrix(tilt=0.1))
    rep, est = lyapunov_periodic(c)
    sp = estimated_splitting(c, 0, rep, L=60)
    for a, b in zip(sp.blocks, est.subspaces):
        assert a.distance_to(b) < 1e-8


def test_uniform_contraction():
    c = constant_spec(S_ASYM)
    V = Subspace.span(V_ASYM)
    assert check_uniform_contraction(c, V, [0], 5) == (True, 1)
    assert check_uniform_contraction(c, Subspace.span(np.ones(2)), [0], 5) == (False, None)
    with pytest.raises(InvarianceError):
        check_uniform_contraction(c, Subspace.span(np.array([1.0, 0.0])), [0], 5)
