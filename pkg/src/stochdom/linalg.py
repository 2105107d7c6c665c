"""Dense small-n linear algebra for stochastic matrices.

Everything here is a pure function of ndarrays. Matrices act on column
vectors, so a row-stochastic ``S`` fixes ``u = (1, ..., 1)/sqrt(n)``.
All norms are Euclidean (spectral) norms computed by SVD.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

TAU_STOCH = 1e-10


class StochasticityError(ValueError):
    """Raised when a matrix fails the row-stochastic validation."""


def validate_stochastic(S, tol=TAU_STOCH):
    """Return ``S`` as a float array after checking it is row-stochastic.

    Entries must lie in ``[-tol, 1 + tol]`` and every row must sum to one
    within ``tol``. Nothing is repaired; see :func:`renormalize_rows`.
    """
    S = np.array(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise StochasticityError(f"expected a square matrix, got shape {S.shape}")
    if S.shape[0] < 2:
        raise StochasticityError("stochastic matrices need n >= 2")
    if not np.all(np.isfinite(S)):
        raise StochasticityError("matrix has non-finite entries")
    if S.min() < -tol or S.max() > 1 + tol:
        raise StochasticityError(f"entries outside [0, 1]: min={S.min():.3e}, max={S.max():.3e}")
    dev = np.abs(S.sum(axis=1) - 1.0).max()
    if dev > tol:
        raise StochasticityError(f"row sums deviate from 1 by {dev:.3e}")
    return S


def is_stochastic(S, tol=TAU_STOCH):
    try:
        validate_stochastic(S, tol)
    except StochasticityError:
        return False
    return True


def renormalize_rows(S):
    """Explicit repair: clip negatives and rescale rows to sum to one."""
    S = np.clip(np.array(S, dtype=float), 0.0, None)
    sums = S.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise StochasticityError("cannot renormalize a zero row")
    return S / sums


def householder_complement(n):
    """Orthonormal basis of ``u``'s orthogonal complement.

    Columns 2..n of the Householder reflector sending ``e_1`` to ``u``.
    For ``n = 2`` this is ``(1, -1)/sqrt(2)``.
    """
    u = np.full(n, 1.0 / np.sqrt(n))
    w = -u
    w[0] += 1.0
    H = np.eye(n) - 2.0 * np.outer(w, w) / (w @ w)
    return H[:, 1:].copy()


@dataclass(frozen=True)
class ProjectionPair:
    """The orthogonal projections ``P`` onto ``uR`` and ``Q = I - P``."""

    n: int
    u: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)
    N_basis: np.ndarray = field(repr=False)

    @classmethod
    def for_dim(cls, n):
        return _projection_pair(int(n))

    def project(self, which, v):
        return project(self, which, v)


@lru_cache(maxsize=None)
def _projection_pair(n):
    if n < 2:
        raise ValueError("n must be >= 2")
    u = np.full(n, 1.0 / np.sqrt(n))
    P = np.full((n, n), 1.0 / n)
    Q = np.eye(n) - P
    pair = ProjectionPair(n, u, P, Q, householder_complement(n))
    for a in (pair.u, pair.P, pair.Q, pair.N_basis):
        a.setflags(write=False)
    return pair


def project(p, which, v):
    v = np.asarray(v, dtype=float)
    if v.shape != (p.n,):
        raise ValueError(f"vector of length {v.shape} does not match n={p.n}")
    if which == "P":
        return p.u * (p.u @ v)
    if which == "Q":
        return v - p.u * (p.u @ v)
    raise ValueError(f"which must be 'P' or 'Q', got {which!r}")


def orthonormal_basis(vectors, tol=1e-12):
    """Orthonormal basis (columns) for the span of the given columns."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.size == 0:
        return np.zeros((V.shape[0], 0))
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((V.shape[0], 0))
    rank = int(np.sum(s > tol * s[0]))
    return U[:, :rank]


@dataclass(frozen=True)
class Subspace:
    """A subspace given by an orthonormal basis (columns)."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim != 2 or B.shape[1] < 1 or B.shape[1] > B.shape[0]:
            raise ValueError(f"basis must be ambient x k with 1 <= k <= ambient, got {B.shape}")
        if np.abs(B.T @ B - np.eye(B.shape[1])).max() > 1e-10:
            raise ValueError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", B)

    @classmethod
    def span(cls, vectors, tol=1e-12):
        """Subspace spanned by the columns of ``vectors`` (a 1-d array is one vector)."""
        V = np.asarray(vectors, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        return cls(orthonormal_basis(V, tol))

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    def projector(self):
        return self.basis @ self.basis.T

    def distance_to(self, other):
        """Largest principal angle to another subspace of the same dimension."""
        return subspace_angle(self.basis, other.basis)


@dataclass(frozen=True)
class Splitting:
    """An ordered direct sum ``F^1 + F^2 + ...`` of subspaces of ``R^n``."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, Subspace) else Subspace(b) for b in self.blocks)
        if not blocks:
            raise ValueError("empty splitting")
        n = blocks[0].ambient_dim
        if any(b.ambient_dim != n for b in blocks) or sum(b.dim for b in blocks) != n:
            raise ValueError("block dimensions must sum to the ambient dimension")
        object.__setattr__(self, "blocks", blocks)

    @property
    def dims(self):
        return [b.dim for b in self.blocks]

    @property
    def n(self):
        return self.blocks[0].ambient_dim

    def stacked(self):
        return np.hstack([b.basis for b in self.blocks])

    def condition_number(self):
        return np.linalg.cond(self.stacked())

    def coarsen(self, j):
        """The two-block splitting ``(F^1..F^j) + (F^{j+1}..F^k)``."""
        if not 1 <= j < len(self.blocks):
            raise ValueError(f"cut index {j} out of range")
        first = np.hstack([b.basis for b in self.blocks[:j]])
        second = np.hstack([b.basis for b in self.blocks[j:]])
        return Splitting((Subspace.span(first), Subspace.span(second)))


def _basis_of(W):
    if isinstance(W, Subspace):
        return W.basis
    B = np.asarray(W, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    return orthonormal_basis(B)


def normal_part(S, p=None):
    """Matrix of ``QSQ`` restricted to ``N``, in ``N_basis`` coordinates."""
    S = np.asarray(S, dtype=float)
    if p is None:
        p = ProjectionPair.for_dim(S.shape[0])
    if S.shape != (p.n, p.n):
        raise ValueError(f"matrix shape {S.shape} does not match n={p.n}")
    return p.N_basis.T @ S @ p.N_basis


def operator_norm(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def co_norm(A, basis=None):
    """Smallest singular value of ``A`` restricted to ``span(basis)``.

    Returns 0 when the restriction has a kernel. Without ``basis`` the full
    domain is used (for square invertible ``A`` this is ``1/||A^-1||``).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if basis is not None:
        A = A @ _basis_of(basis)
    if A.shape[1] > A.shape[0]:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def restricted_norm(A, basis):
    return operator_norm(np.asarray(A, dtype=float) @ _basis_of(basis))


def angle(v, W):
    """Non-oriented angle in ``[0, pi/2]`` between a vector and a subspace."""
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("angle of the zero vector is undefined")
    B = _basis_of(W)
    if B.shape[1] == 0:
        raise ValueError("angle to the trivial subspace is undefined")
    v = v / nv
    coef = B.T @ v
    cos = np.linalg.svd(coef[:, None], compute_uv=False)[0]
    sin = np.linalg.norm(v - B @ coef)
    return float(np.arctan2(sin, cos))


def subspace_angle(W1, W2):
    """Largest principal angle between two subspaces."""
    return float(np.max(sla.subspace_angles(_basis_of(W1), _basis_of(W2))))


def theta(S, p=None):
    """Affine chart ``S -> (QS, column means of S)`` on row-sum-one matrices."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("theta needs a square matrix")
    dev = np.abs(S.sum(axis=1) - 1.0).max()
    if dev > TAU_STOCH:
        raise ValueError(f"rows must sum to 1 (deviation {dev:.3e})")
    kappa = S.mean(axis=0)
    return S - kappa[None, :], kappa


def theta_inv(A, v):
    A = np.asarray(A, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.abs(A.sum(axis=0)).max() > 1e-10 or np.abs(A.sum(axis=1)).max() > 1e-10:
        raise ValueError("A must have vanishing row and column sums")
    if abs(v.sum() - 1.0) > 1e-10:
        raise ValueError("v must sum to 1")
    return A + v[None, :]


def in_qs_image(A, tol=1e-10):
    """Membership in ``{A : zero row/column sums, sum_j min_i A_ij >= -1}``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return False
    if np.abs(A.sum(axis=0)).max() > tol or np.abs(A.sum(axis=1)).max() > tol:
        return False
    return bool(A.min(axis=0).sum() >= -1.0 - tol)


def _numerical_rank(M):
    return int(np.linalg.matrix_rank(M))


class RankRepairError(RuntimeError):
    pass


def make_invertible(S, eps, rng, max_draws=100):
    """Nearby invertible stochastic matrix by repairing dependent rows one at a time.

    A row lying in the span of the others is replaced by a point of the
    simplex within ``eps / sqrt(n)`` of it and outside that span, so the
    result stays within ``eps`` in operator norm.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    S = validate_stochastic(S)
    n = S.shape[0]
    T = S.copy()
    budget = eps / np.sqrt(n)
    while _numerical_rank(T) < n:
        rank = _numerical_rank(T)
        for l in range(n):
            others = np.delete(T, l, axis=0)
            if _numerical_rank(others) == rank:
                break
        else:  # pragma: no cover - some row is always redundant when rank < n
            raise RankRepairError("no dependent row found")
        row = T[l]
        for _ in range(max_draws):
            q = rng.dirichlet(np.ones(n))
            gap = np.linalg.norm(q - row)
            if gap == 0:
                continue
            s = min(1.0, 0.5 * budget / gap)
            cand = T.copy()
            cand[l] = (1 - s) * row + s * q
            if _numerical_rank(cand) == rank + 1:
                T = cand
                break
        else:
            raise RankRepairError(
                f"row {l} stayed in the span of the others after {max_draws} draws "
                f"(eps={eps:g}); increase eps"
            )
    return T


def random_stochastic(n, rng, profile="uniform", eps=0.1):
    """Random stochastic matrix with Dirichlet(1,...,1) rows.

    ``profile="near_id"`` mixes the identity: rows ``(1-eps) e_i + eps q_i``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rows = rng.dirichlet(np.ones(n), size=n)
    if profile == "uniform":
        return rows
    if profile == "near_id":
        return (1.0 - eps) * np.eye(n) + eps * rows
    raise ValueError(f"unknown profile {profile!r}")


def matrix_to_json(A):
    return [[float(x) for x in row] for row in np.asarray(A, dtype=float)]


def matrix_from_json(rows):
    A = np.array(rows, dtype=float)
    if A.ndim != 2:
        raise ValueError("matrix JSON must be an array of arrays")
    return A
