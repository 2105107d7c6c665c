"""The isotopy ``S -> P + rho (S - P)`` toward the rank-one projection.

Its normal part scales by ``rho`` while ``u`` stays fixed, so negative
exponents shift by ``log rho`` and the zero exponent is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import FiniteCycle
from .cocycle import CocycleSpec
from .domination import ContractionError, solve_sigma
from .linalg import ProjectionPair, Subspace, orthonormal_basis, validate_stochastic
from .lyapunov import LOG_FLOOR, lyapunov_periodic, periodic_spectrum

SERIES_TOL = 1e-12
SERIES_CAP = 100_000
POWER_TOL = 1e-11


class IdentityError(ArithmeticError):
    """An algebraic identity failed beyond its tolerance."""


def _check_rho(rho, open_interval=False):
    rho = float(rho)
    if open_interval:
        if not 0.0 < rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {rho}")
    elif not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return rho


def deform(S, rho):
    """``(1 - rho) P + rho S``: the convex form of ``P + rho (PSQ + QSQ)``.

    Exact at the endpoints: ``rho = 1`` returns ``S`` and ``rho = 0`` the
    all-``1/n`` matrix.
    """
    S = validate_stochastic(S)
    rho = _check_rho(rho)
    P = ProjectionPair.for_dim(S.shape[0]).P
    return (1.0 - rho) * P + rho * S


def deform_split(S, rho):
    """The displayed form ``P + rho (PSQ + QSQ)`` (for cross-checking :func:`deform`)."""
    S = validate_stochastic(S)
    pp = ProjectionPair.for_dim(S.shape[0])
    return pp.P + _check_rho(rho) * (pp.P @ S @ pp.Q + pp.Q @ S @ pp.Q)


class Deformed:
    """Generator wrapper evaluating ``deform(S_x, rho)``."""

    kind = "deformed"

    def __init__(self, generator, rho):
        self.inner = generator
        self.rho = _check_rho(rho)
        self.n = generator.n

    def __call__(self, x, base):
        return deform(self.inner(x, base), self.rho)

    def check_base(self, base):
        check = getattr(self.inner, "check_base", None)
        if check is not None:
            check(base)


@dataclass(frozen=True)
class DeformedCocycle:
    base_spec: CocycleSpec
    rho: float

    def spec(self):
        return CocycleSpec(self.base_spec.base, Deformed(self.base_spec.generator, self.rho))


def deform_cocycle(c, rho):
    return DeformedCocycle(c, _check_rho(rho)).spec()


def lipschitz_check(S, T, rho, rho2):
    """``(lhs, bound)`` with ``lhs = ||deform(S, rho) - deform(T, rho2)||``
    and ``bound = |rho - rho2| + rho2 ||S - T||``.

    The bound uses ``||S - P|| <= 1``, which holds for the row-sum norm but
    not always for the spectral norm; see :func:`sharp_lipschitz_bound`.
    """
    lhs = np.linalg.norm(deform(S, rho) - deform(T, rho2), 2)
    bound = abs(rho - rho2) + rho2 * np.linalg.norm(np.asarray(S, float) - np.asarray(T, float), 2)
    return float(lhs), float(bound)


def sharp_lipschitz_bound(S, T, rho, rho2):
    """``|rho - rho2| ||S - P|| + rho2 ||S - T||``, valid in every norm."""
    S = validate_stochastic(S)
    T = validate_stochastic(T)
    P = ProjectionPair.for_dim(S.shape[0]).P
    return float(abs(rho - rho2) * np.linalg.norm(S - P, 2) + rho2 * np.linalg.norm(S - T, 2))


def deformation_series(S, rho, n):
    """``sum_{k<=n} rho^k P (SQ)^k + rho^n (QSQ)^n``."""
    S = validate_stochastic(S)
    rho = _check_rho(rho)
    pp = ProjectionPair.for_dim(S.shape[0])
    SQ = S @ pp.Q
    QSQ = pp.Q @ SQ
    total = pp.P.copy()
    term = pp.P.copy()
    for k in range(1, n + 1):
        term = rho * (term @ SQ)
        total += term
    # (QSQ)^0 is the identity on N, i.e. Q
    return total + rho**n * (pp.Q @ np.linalg.matrix_power(QSQ, n))


def deformed_power(S, rho, n, tol=POWER_TOL):
    """``deform(S, rho)^n`` through the series; raises if it disagrees with the direct power."""
    if n < 0:
        raise ValueError("n must be >= 0")
    series = deformation_series(S, rho, n)
    direct = np.linalg.matrix_power(deform(S, rho), n)
    defect = float(np.abs(series - direct).max())
    if defect > tol:
        raise IdentityError(f"series and direct power differ by {defect:.3e}")
    return series


@dataclass
class SeriesResult:
    value: float
    coefficients: np.ndarray
    K: int
    tail_bound: float


def default_terms(rho):
    return int(min(SERIES_CAP, np.ceil(np.log(SERIES_TOL * (1 - rho)) / np.log(rho))))


def sigma_series(S, rho, v, K=None):
    """``-sum_{k=1}^K a_k rho^k`` with ``a_k = u^T (SQ)^k v``.

    This is the ``u``-coordinate assigned to ``Qv`` by the invariant graph
    of ``deform(S, rho)``. The tail beyond ``K`` is at most
    ``max|a_k| rho^(K+1) / (1 - rho)``.
    """
    S = validate_stochastic(S)
    rho = _check_rho(rho, open_interval=True)
    pp = ProjectionPair.for_dim(S.shape[0])
    K = default_terms(rho) if K is None else int(K)
    SQ = S @ pp.Q
    w = np.asarray(v, dtype=float)
    a = np.empty(K)
    for k in range(K):
        w = SQ @ w
        a[k] = pp.u @ w
    powers = rho ** np.arange(1, K + 1)
    value = -float(a @ powers)
    tail = float(np.abs(a).max(initial=0.0) * rho ** (K + 1) / (1 - rho))
    return SeriesResult(value, a, K, tail)


def phi(S, rho, v, K=None):
    """``Qv + sigma^(rho)(Qv) u``: the image of ``v`` in the deformed bundle."""
    pp = ProjectionPair.for_dim(np.asarray(S).shape[0])
    v = np.asarray(v, dtype=float)
    return pp.Q @ v + sigma_series(S, rho, v, K).value * pp.u


def phi_displacement(S, rho, v, K=None):
    """``||Phi^rho(v) - v||``."""
    return float(np.linalg.norm(phi(S, rho, v, K) - np.asarray(v, dtype=float)))


def sigma_by_graph_transform(c, rho, N2, m_max=64):
    """Graph-transform ``sigma`` for ``deform_cocycle(c, rho)`` over ``N2``; picks the smallest ``m_hat`` that contracts."""
    d = deform_cocycle(c, rho)
    for m_hat in range(1, m_max + 1):
        try:
            return solve_sigma(d, N2, m_hat)
        except ContractionError:
            continue
    raise ContractionError(f"no m_hat <= {m_max} contracts the deformed normal cocycle")


def cycle_phi_displacement(c, rho, block, x=0):
    """``||Phi^rho(v) - v||`` for a unit ``v`` in Oseledets block ``block`` at ``x``.

    Works for any cocycle over a finite cycle whose block ``block`` is one
    dimensional with negative exponent; ``sigma`` comes from the graph
    transform of the deformed cocycle over ``Q E``.
    """
    if not isinstance(c.base, FiniteCycle):
        raise ValueError("needs a FiniteCycle base")
    rep, est = lyapunov_periodic(c)
    if not rep.exponents[block] < 0:
        raise ValueError("block must have a negative exponent")
    pp = c.projections
    qfield = {k: Subspace(orthonormal_basis(pp.Q @ blocks[block].basis)) for k, blocks in est.field.items()}
    sig = sigma_by_graph_transform(c, rho, qfield)
    v = est.field[c.base.key(x)][block].basis[:, 0]
    B = qfield[c.base.key(x)].basis
    image = pp.Q @ v + float(sig.sigma_at(x) @ (B.T @ v)) * pp.u
    return float(np.linalg.norm(image - v))


def normal_spectrum(c):
    """Exact exponents of the normal cocycle over a finite cycle."""
    pp = c.projections
    full = [c.at(x) for x in range(c.base.q)]
    mats = [pp.N_basis.T @ S @ pp.N_basis for S in full]
    scale = float(np.prod([np.linalg.norm(S, 2) for S in full]))
    exps, mults, _ = periodic_spectrum(mats, scale=scale)
    return exps, mults


def exponent_shift_check(c, rho, log_floor=LOG_FLOOR):
    """Compare the deformed spectrum with the predicted shift by ``log rho``.

    Each normal exponent ``lam`` of ``c`` should become ``lam + log rho``
    (``-inf`` stays ``-inf``) while ``u`` keeps exponent 0. Returns rows
    ``{lambda, multiplicity, expected, measured, error}`` and the E^0 check.
    """
    if not isinstance(c.base, FiniteCycle):
        raise ValueError("exponent_shift_check needs a FiniteCycle base")
    rho = _check_rho(rho)
    if rho == 0:
        raise ValueError("rho must be positive")
    lrho = np.log(rho)
    before, mult_b = normal_spectrum(c)
    d = deform_cocycle(c, rho)
    after, mult_a = normal_spectrum(d)
    rep_d, est_d = lyapunov_periodic(d)
    rows = []
    for lam, m in zip(before, mult_b):
        expected = lam + lrho if np.isfinite(lam) else -np.inf
        if expected < log_floor:
            expected = -np.inf
        cands = [a for a in after if (np.isfinite(a) == np.isfinite(expected))]
        measured = min(cands, key=lambda a: abs(a - expected) if np.isfinite(a) else 0.0) if cands else np.nan
        err = 0.0 if expected == measured == -np.inf else abs(measured - expected)
        rows.append({"lambda": lam, "multiplicity": m, "expected": expected, "measured": measured, "error": float(err)})
    top = est_d.subspaces[0].basis
    e0_ok = rep_d.exponents[0] == 0.0 or abs(rep_d.exponents[0]) < 1e-12
    u_in_e0 = float(np.linalg.norm(c.projections.u - top @ (top.T @ c.projections.u)))
    return {"rows": rows, "e0_exponent": float(rep_d.exponents[0]), "u_in_E0_defect": u_in_e0, "e0_ok": bool(e0_ok)}
