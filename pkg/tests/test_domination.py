import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochdom.base import CircleRotation, FiniteCycle
from stochdom.cocycle import CocycleSpec, Constant, Interpolated, constant_spec
from stochdom.domination import (
    ContractionError,
    DominationError,
    KernelMeetsF1Error,
    certify_domination,
    contracting_case,
    domination_ratio,
    lift_splitting,
    solve_sigma,
    supinf_identity_check,
    zero_negative_splitting,
)
from stochdom.linalg import ProjectionPair, Splitting, Subspace, angle
from stochdom.lyapunov import lyapunov_periodic

from .conftest import N1, N2, S_ASYM, S_SYM, V_ASYM, diag_normal_matrix, two_by_two

U2 = Subspace.span(np.ones(2))


def oseledets_2x2():
    return Splitting((U2, Subspace.span(V_ASYM)))


@pytest.mark.parametrize("m", [1, 2, 5])
def test_ratio_exact(asym_spec, m):
    assert domination_ratio(asym_spec, oseledets_2x2(), 0, m) == pytest.approx(0.25**m, rel=1e-12)


def test_ratio_symmetric(sym_spec):
    sp = Splitting((U2, Subspace.span(np.array([1.0, -1.0]))))
    assert domination_ratio(sym_spec, sp, 0, 1) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        domination_ratio(sym_spec, sp, 0, 0)


def test_supinf_agree(asym_spec):
    lhs, rhs = supinf_identity_check(asym_spec, oseledets_2x2(), 0, 3)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_certificate(asym_spec):
    cert = certify_domination(asym_spec, oseledets_2x2(), [0], 10)
    assert cert.valid and cert.m == 1
    assert cert.worst_ratio == pytest.approx(0.25)
    js = cert.to_json()
    assert js["valid"] and js["splitting_dims"] == [1, 1] and js["points"] == [0]


def test_identity_not_dominated():
    c = constant_spec(np.eye(2))
    sp = Splitting((Subspace.span(np.array([1.0, 0.0])), Subspace.span(np.array([0.0, 1.0]))))
    cert = certify_domination(c, sp, [0], 8)
    assert not cert.valid
    assert cert.worst_ratio == pytest.approx(1.0)


def test_three_blocks_every_cut():
    S = diag_normal_matrix(tilt=0.1)
    c = constant_spec(S)
    _, est = lyapunov_periodic(c)
    cert = certify_domination(c, est.field, [0], 10)
    assert cert.valid and cert.m == 1
    assert cert.per_cut_ratios[1] == pytest.approx(0.5, rel=1e-10)
    # blocks are not orthogonal, so the cut-2 ratio exceeds the eigenvalue ratio 1/4
    assert 0.25 <= cert.per_cut_ratios[2] <= 0.5
    only2 = certify_domination(c, est.field, [0], 10, cuts=[2])
    assert list(only2.per_cut_ratios) == [2]


def test_kernel_meets_f1():
    S = np.array([[0.2, 0.8], [0.2, 0.8]])
    c = constant_spec(S)
    sp = Splitting((Subspace.span(np.array([4.0, -1.0])), U2))
    with pytest.raises(KernelMeetsF1Error):
        certify_domination(c, sp, [0], 3)


def test_non_invariant_rejected(asym_spec):
    sp = Splitting((U2, Subspace.span(np.array([1.0, -1.0]))))
    with pytest.raises(DominationError):
        certify_domination(asym_spec, sp, [0], 3)


def test_sigma_worked_example(asym_spec):
    N = ProjectionPair.for_dim(2).N_basis
    sig = solve_sigma(asym_spec, N, 1)
    assert sig.sigma_at(0)[0] == pytest.approx(1 / 3, abs=1e-12)
    assert angle(V_ASYM, sig.graph_basis(0)) < 1e-10
    assert sig.residual <= 1e-12
    assert sig.fixed_point_defect(0) < 1e-12 and sig.one_step_defect(0) < 1e-12


def test_sigma_on_rotation():
    c = CocycleSpec(CircleRotation(), Constant(S_ASYM))
    sig = solve_sigma(c, ProjectionPair.for_dim(2).N_basis, 1, [0.3])
    assert sig.sigma_at(0.3)[0] == pytest.approx(1 / 3, abs=1e-12)
    assert sig.sigma_at(0.7)[0] == pytest.approx(1 / 3, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.05, 0.45), st.floats(0.05, 0.45), st.floats(0.05, 0.45))
def test_sigma_invariance_varying(a0, b0, a1, b1):
    # normal factors 1 - a - b are at most 0.9, so m_hat = 7 always contracts
    mats = [two_by_two(a0, b0), two_by_two(a1, b1)]
    c = CocycleSpec(CircleRotation(), Interpolated([0.0, 0.5], mats))
    sig = solve_sigma(c, ProjectionPair.for_dim(2).N_basis, 7, [0.1, 0.6])
    assert sig.residual <= 1e-10
    for x in (0.1, 0.6):
        assert sig.invariance_defect(x) < 1e-9
        assert sig.one_step_defect(x) < 1e-9


def test_sigma_contraction_error():
    c = constant_spec(two_by_two(0.05, 0.05))
    with pytest.raises(ContractionError):
        solve_sigma(c, ProjectionPair.for_dim(2).N_basis, 1)
    with pytest.raises(DominationError):
        solve_sigma(c, np.ones(2), 7)


def test_lift_three_blocks():
    S = diag_normal_matrix(tilt=0.1)
    c = constant_spec(S)
    fld, cert = lift_splitting(c, (N1, N2), 1, [0])
    assert cert.valid
    _, est = lyapunov_periodic(c)
    assert fld(0).blocks[1].distance_to(est.subspaces[2]) < 1e-10
    assert cert.info["m_induced"] >= 1
    assert cert.info["min_angle_u_F2"] > 0


def test_contracting_case(asym_spec):
    fld, cert = contracting_case(asym_spec, [0])
    assert cert.valid and cert.m == 1
    assert cert.info["exponent_bound"] == pytest.approx(np.log(0.25))
    assert angle(V_ASYM, fld(0).blocks[1].basis) < 1e-10
    with pytest.raises(ContractionError):
        contracting_case(constant_spec(np.eye(2)), [0])


def test_zero_negative_slow():
    c = CocycleSpec(FiniteCycle(2), __import__("stochdom").cocycle.Tabulated([two_by_two(0.05, 0.05), S_SYM]))
    fld, cert = zero_negative_splitting(c, [0, 1])
    assert cert.valid
    assert cert.info["m_hat"] == 2
    with pytest.raises(ContractionError):
        zero_negative_splitting(constant_spec(np.eye(3)), [0], m_max=4)
