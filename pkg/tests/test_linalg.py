import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochdom.linalg import (
    ProjectionPair,
    RankRepairError,
    Splitting,
    StochasticityError,
    Subspace,
    angle,
    co_norm,
    householder_complement,
    in_qs_image,
    is_stochastic,
    make_invertible,
    matrix_from_json,
    matrix_to_json,
    normal_part,
    operator_norm,
    project,
    random_stochastic,
    renormalize_rows,
    restricted_norm,
    subspace_angle,
    theta,
    theta_inv,
    validate_stochastic,
)

from .conftest import S_ASYM, S_SYM


def stochastic_matrices(max_n=6):
    return st.integers(2, max_n).flatmap(
        lambda n: st.integers(0, 2**32 - 1).map(lambda s: random_stochastic(n, np.random.default_rng(s)))
    )


class TestValidation:
    def test_accepts_examples(self):
        assert np.array_equal(validate_stochastic(S_ASYM), S_ASYM)

    @pytest.mark.parametrize(
        "bad",
        [
            [[0.5, 0.6], [0.5, 0.5]],
            [[1.2, -0.2], [0.5, 0.5]],
            [[1.0]],
            [[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]],
            [[np.nan, 1.0], [0.5, 0.5]],
        ],
    )
    def test_rejects(self, bad):
        with pytest.raises(StochasticityError):
            validate_stochastic(bad)
        assert not is_stochastic(bad)

    def test_tolerance(self):
        S = S_SYM + np.array([[1e-11, -1e-11], [0, 0]])
        validate_stochastic(S)
        with pytest.raises(StochasticityError):
            validate_stochastic(S_SYM + np.array([[1e-9, 0], [0, 0]]))

    def test_renormalize(self):
        S = renormalize_rows([[1.0, 1.0], [0.0, 2.0]])
        assert np.allclose(S, [[0.5, 0.5], [0.0, 1.0]])


class TestProjections:
    @pytest.mark.parametrize("n", [2, 3, 5, 8])
    def test_pair(self, n):
        p = ProjectionPair.for_dim(n)
        assert np.allclose(p.P, np.full((n, n), 1 / n))
        assert np.allclose(p.P @ p.P, p.P)
        assert np.allclose(p.Q @ p.Q, p.Q)
        assert np.allclose(p.N_basis.T @ p.N_basis, np.eye(n - 1), atol=1e-14)
        assert np.abs(p.u @ p.N_basis).max() < 1e-14

    def test_n2_basis(self):
        assert np.allclose(householder_complement(2)[:, 0], np.array([1, -1]) / np.sqrt(2))

    def test_cached_and_read_only(self):
        p = ProjectionPair.for_dim(4)
        assert ProjectionPair.for_dim(4) is p
        with pytest.raises(ValueError):
            p.P[0, 0] = 1.0

    def test_project(self):
        p = ProjectionPair.for_dim(2)
        v = np.array([2.0, -1.0])
        assert np.allclose(project(p, "P", v), [0.5, 0.5])
        assert np.allclose(p.project("Q", v), [1.5, -1.5])
        with pytest.raises(ValueError):
            project(p, "R", v)

    @settings(max_examples=50, deadline=None)
    @given(stochastic_matrices())
    def test_u_invariance(self, S):
        p = ProjectionPair.for_dim(S.shape[0])
        assert np.allclose(S @ p.u, p.u, atol=1e-14)
        assert np.allclose(p.P @ S @ p.P, p.P, atol=1e-14)


class TestNorms:
    def test_normal_part_2x2(self):
        # normal factor of [[1-a, a], [b, 1-b]] is 1 - a - b
        assert normal_part(S_SYM)[0, 0] == pytest.approx(0.5)
        assert normal_part(S_ASYM)[0, 0] == pytest.approx(0.25)

    def test_co_norm(self):
        A = np.diag([3.0, 0.5])
        assert co_norm(A) == pytest.approx(0.5)
        assert co_norm(A, np.array([1.0, 0.0])) == pytest.approx(3.0)
        assert co_norm(np.ones((1, 2))) == 0.0

    def test_restricted_norm(self):
        A = np.diag([3.0, 0.5])
        assert restricted_norm(A, Subspace.span(np.array([0.0, 1.0]))) == pytest.approx(0.5)
        assert operator_norm(A) == pytest.approx(3.0)

    def test_normal_part_bounded_by_sqrt_n(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 8))
            S = random_stochastic(n, rng)
            assert operator_norm(normal_part(S)) <= operator_norm(S) + 1e-12 <= np.sqrt(n) + 1e-12


class TestAngles:
    def test_angle_basic(self):
        assert angle([1.0, 0.0], np.array([[0.0], [1.0]])) == pytest.approx(np.pi / 2)
        assert angle([1.0, 1.0], np.array([1.0, 0.0])) == pytest.approx(np.pi / 4)
        assert angle([1.0, 0.0], np.array([-1.0, 0.0])) == pytest.approx(0.0)

    def test_angle_errors(self):
        with pytest.raises(ValueError):
            angle([0.0, 0.0], np.array([1.0, 0.0]))

    def test_subspace_angle(self):
        a = Subspace.span(np.array([1.0, 0.0, 0.0]))
        b = Subspace.span(np.array([1.0, 1.0, 0.0]))
        assert subspace_angle(a.basis, b.basis) == pytest.approx(np.pi / 4)
        assert a.distance_to(b) == pytest.approx(np.pi / 4)


class TestSubspaces:
    def test_span_drops_dependent(self):
        s = Subspace.span(np.array([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]]))
        assert s.dim == 1 and s.ambient_dim == 3

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Subspace(np.array([[1.0], [1.0]]))

    def test_splitting(self):
        e = np.eye(3)
        sp = Splitting((Subspace(e[:, :1]), Subspace(e[:, 1:2]), Subspace(e[:, 2:])))
        assert sp.dims == [1, 1, 1] and sp.n == 3
        assert sp.condition_number() == pytest.approx(1.0)
        assert sp.coarsen(2).dims == [2, 1]
        with pytest.raises(ValueError):
            sp.coarsen(3)
        with pytest.raises(ValueError):
            Splitting((Subspace(e[:, :1]),))


class TestChart:
    @settings(max_examples=50, deadline=None)
    @given(stochastic_matrices())
    def test_roundtrip(self, S):
        A, v = theta(S)
        assert in_qs_image(A)
        assert np.allclose(theta_inv(A, v), S, atol=1e-14)

    def test_theta_inv_validation(self):
        with pytest.raises(ValueError):
            theta_inv(np.ones((2, 2)), np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            theta_inv(np.zeros((2, 2)), np.array([0.5, 0.6]))

    def test_qs_image_membership(self):
        assert not in_qs_image(np.array([[-2.0, 2.0], [2.0, -2.0]]))


class TestInvertible:
    def test_repairs_rank_one(self, rng):
        S = np.array([[0.2, 0.3, 0.5]] * 3)
        T = make_invertible(S, 0.1, rng)
        assert np.linalg.matrix_rank(T) == 3
        assert operator_norm(T - S) <= 0.1
        validate_stochastic(T)

    def test_invertible_untouched(self, rng):
        assert np.array_equal(make_invertible(S_ASYM, 0.1, rng), S_ASYM)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            make_invertible(S_ASYM, 0.0, rng)
        with pytest.raises(RankRepairError):
            make_invertible(np.array([[0.5, 0.5], [0.5, 0.5]]), 1e-300, rng, max_draws=2)


class TestRandom:
    def test_profiles(self, rng):
        S = random_stochastic(4, rng, "near_id", eps=0.05)
        assert np.abs(S - np.eye(4)).max() <= 0.05 + 1e-15
        validate_stochastic(random_stochastic(5, rng))
        with pytest.raises(ValueError):
            random_stochastic(3, rng, "bogus")

    def test_json(self):
        assert np.array_equal(matrix_from_json(matrix_to_json(S_ASYM)), S_ASYM)
        with pytest.raises(ValueError):
            matrix_from_json([1, 2])
