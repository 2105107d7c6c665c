"""Dominated splittings: ratios, certificates, the graph transform and lifts.

A splitting field is anything accepted by :func:`as_field`: a constant
:class:`~stochdom.linalg.Splitting`, a callable ``x -> Splitting``, or a
dict keyed by ``base.key(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import FiniteCycle, orbit
from .cocycle import iterate
from .linalg import Splitting, Subspace, angle, orthonormal_basis

RATIO_BOUND = 0.5
RATIO_SLACK = 1e-12
INVARIANCE_TOL = 1e-8
SIGMA_TOL = 1e-12
SIGMA_MAX_ITER = 10_000
KERNEL_RTOL = 1e-13


class DominationError(ValueError):
    pass


class KernelMeetsF1Error(DominationError):
    """``S^m`` is not injective on ``F^1``."""


class ContractionError(DominationError):
    """The graph-transform contraction condition fails."""


class ConvergenceError(ArithmeticError):
    pass


def as_field(c, splitting):
    """Normalise a splitting (or subspace) description to a callable of ``x``."""
    if isinstance(splitting, (Splitting, Subspace)):
        return lambda _x: splitting
    if isinstance(splitting, dict):
        table = splitting

        def lookup(x):
            try:
                val = table[c.base.key(x)]
            except KeyError:
                raise DominationError(f"splitting not defined at {x!r}") from None
            return val if isinstance(val, Splitting) else Splitting(tuple(val))

        return lookup
    if callable(splitting):
        return splitting
    raise TypeError(f"cannot interpret {type(splitting).__name__} as a splitting field")


def invariance_defect(S, B, B_next):
    img = S @ B
    return float(np.linalg.norm(img - B_next @ (B_next.T @ img), 2))


def check_invariance(c, fld, sample, tol=INVARIANCE_TOL):
    """Largest one-step invariance defect of every block over ``sample``; raises above ``tol``."""
    worst = 0.0
    for x in sample:
        here, there = fld(x), fld(c.base.f(x))
        S = c.at(x)
        for i, (a, b) in enumerate(zip(here.blocks, there.blocks)):
            d = invariance_defect(S, a.basis, b.basis)
            if d > tol:
                raise DominationError(f"block {i} not invariant at {x!r}: defect {d:.3e}")
            worst = max(worst, d)
    return worst


def _cut_bases(spl, j):
    coarse = spl.coarsen(j)
    return coarse.blocks[0].basis, coarse.blocks[1].basis


def _ratio_from_power(Sm, B1, B2):
    A1 = Sm @ B1
    A2 = Sm @ B2
    s1 = np.linalg.svd(A1, compute_uv=False)
    scale = max(np.linalg.norm(Sm, 2), 1.0)
    if s1[-1] <= KERNEL_RTOL * scale:
        raise KernelMeetsF1Error("kernel of S^m meets F^1 (expected inside F^2)")
    return float(np.linalg.svd(A2, compute_uv=False)[0] / s1[-1])


def domination_ratio(c, splitting, x, m, j=1):
    """``||S^m_x | F^2|| / m(S^m_x | F^1)`` for the cut after block ``j``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    spl = as_field(c, splitting)(x)
    B1, B2 = _cut_bases(spl, j)
    return _ratio_from_power(iterate(c, x, m), B1, B2)


def supinf_identity_check(c, splitting, x, m, j=1):
    """Two evaluations of the domination ratio.

    ``lhs`` is ``||S^m | F^2||`` times the norm of the inverse of
    ``S^m | F^1`` written on an orthonormal basis of its image; ``rhs`` is the
    sup of ``||S^m w|| / ||w||`` over ``F^2`` over the inf of the same
    quotient over ``F^1``, both read off singular values.
    """
    spl = as_field(c, splitting)(x)
    B1, B2 = _cut_bases(spl, j)
    Sm = iterate(c, x, m)
    A1, A2 = Sm @ B1, Sm @ B2
    s1 = np.linalg.svd(A1, compute_uv=False)
    if s1[-1] <= KERNEL_RTOL * max(np.linalg.norm(Sm, 2), 1.0):
        raise KernelMeetsF1Error("kernel of S^m meets F^1 (expected inside F^2)")
    _, R = np.linalg.qr(A1)
    lhs = np.linalg.norm(A2, 2) * np.linalg.norm(np.linalg.inv(R), 2)
    rhs = np.linalg.svd(A2, compute_uv=False)[0] / s1[-1]
    return float(lhs), float(rhs)


@dataclass
class DominationCertificate:
    """Outcome of a domination search.

    ``valid`` is the certificate predicate ``worst_ratio <= 1/2``. An invalid
    certificate is the failure report and carries the best ratio found.
    """

    m: int
    worst_ratio: float
    per_point_ratios: list
    splitting: object
    sample_description: str
    points: list = field(default_factory=list)
    splitting_dims: list = field(default_factory=list)
    per_cut_ratios: dict = field(default_factory=dict)
    invariance_residual: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def valid(self):
        return self.worst_ratio <= RATIO_BOUND + RATIO_SLACK

    def to_json(self):
        return {
            "m": int(self.m),
            "worst_ratio": float(self.worst_ratio),
            "valid": bool(self.valid),
            "points": [_point_json(p) for p in self.points],
            "splitting_dims": [int(d) for d in self.splitting_dims],
            "per_cut_ratios": {str(k): float(v) for k, v in sorted(self.per_cut_ratios.items())},
            "sample": self.sample_description,
        }


def _point_json(p):
    if isinstance(p, (tuple, list, np.ndarray)):
        return [float(t) for t in p]
    if isinstance(p, (int, np.integer)):
        return int(p)
    return float(p)


def certify_domination(c, splitting, sample, m_max, cuts=None, description=None):
    """Smallest ``m <= m_max`` with every cut ratio ``<= 1/2`` over ``sample``.

    Every coarsening index is checked unless ``cuts`` restricts them. The
    returned certificate is invalid when no such ``m`` exists; it then holds
    the ``m`` with the best worst-case ratio.
    """
    fld = as_field(c, splitting)
    points = list(sample)
    if not points:
        raise ValueError("empty sample")
    resid = check_invariance(c, fld, points)
    spls = [fld(x) for x in points]
    k = len(spls[0].blocks)
    if k < 2:
        raise DominationError("a splitting needs at least two blocks")
    cuts = list(range(1, k)) if cuts is None else list(cuts)
    bases = [[_cut_bases(s, j) for j in cuts] for s in spls]

    prods = [np.eye(c.n) for _ in points]
    cur = list(points)
    best = None
    for m in range(1, m_max + 1):
        per_point = []
        per_cut = {j: 0.0 for j in cuts}
        for i in range(len(points)):
            prods[i] = c.at(cur[i]) @ prods[i]
            cur[i] = c.base.f(cur[i])
            r_here = 0.0
            for j, (B1, B2) in zip(cuts, bases[i]):
                r = _ratio_from_power(prods[i], B1, B2)
                per_cut[j] = max(per_cut[j], r)
                r_here = max(r_here, r)
            per_point.append(r_here)
        worst = max(per_point)
        cert = DominationCertificate(
            m, worst, per_point, splitting,
            description or f"{len(points)} points",
            points=points, splitting_dims=spls[0].dims, per_cut_ratios=per_cut,
            invariance_residual=resid,
        )
        if cert.valid:
            return cert
        if best is None or worst < best.worst_ratio:
            best = cert
    return best


@dataclass
class SigmaField:
    """Fixed point of the graph transform over ``N^2``.

    At ``x`` the map ``sigma_x`` is the row vector ``sigma[key]`` acting on
    coordinates in the basis ``basis(x)`` of ``N^2_x``; its graph is
    ``F^2_x = {B_x a + (sigma_x a) u}``.
    """

    c: object
    basis: object
    m_hat: int
    contraction: float
    sigma: dict = field(default_factory=dict)
    residual: float = 0.0
    residual_history: list = field(default_factory=list)
    depth: int = 0

    def sigma_at(self, x):
        key = self.c.base.key(x)
        if key not in self.sigma:
            s, res = _chain_sigma(self.c, self.basis, self.m_hat, x, self.depth)
            self.sigma[key] = s
            self.residual = max(self.residual, res)
        return self.sigma[key]

    def graph_basis(self, x):
        B = self.basis(x)
        u = self.c.projections.u
        return orthonormal_basis(B + np.outer(u, self.sigma_at(x)))

    def graph(self, x):
        return Subspace(self.graph_basis(x))

    def fixed_point_defect(self, x):
        """``|sigma_x - (sigma_{f^m x} M_x - p_x)|`` for the m-step transform."""
        M, p, y = _step_data(self.c, self.basis, self.m_hat, x)
        return float(np.abs(self.sigma_at(x) - (self.sigma_at(y) @ M - p)).max(initial=0.0))

    def one_step_defect(self, x):
        """``|sigma_x + P S_x - sigma_{f(x)} Shat_x|`` on ``N^2_x`` (the invariance equation)."""
        M, p, y = _step_data(self.c, self.basis, 1, x)
        return float(np.abs(self.sigma_at(x) + p - self.sigma_at(y) @ M).max(initial=0.0))

    def invariance_defect(self, x):
        return invariance_defect(self.c.at(x), self.graph_basis(x), self.graph_basis(self.c.base.f(x)))


def _step_data(c, basis, m, x):
    """``M = B_y^T Q S^m B_x``, ``p = u^T S^m B_x`` and ``y = f^m(x)``."""
    pp = c.projections
    Sm = iterate(c, x, m)
    y = orbit(c.base, x, m + 1).points[-1]
    Bx, By = basis(x), basis(y)
    img = Sm @ Bx
    return By.T @ (pp.Q @ img), pp.u @ img, y


def _tail_depth(r, pmax, tol):
    if pmax == 0 or r == 0:
        return 1
    bound = pmax / (1 - r)
    return int(min(SIGMA_MAX_ITER, max(1, np.ceil(np.log(tol / bound) / np.log(r)) + 1)))


def _chain_sigma(c, basis, m_hat, x, depth):
    """Backward recursion from ``sigma = 0`` at ``f^{depth m_hat}(x)``.

    Returns the value at ``x`` and the change caused by the last step of
    depth, which is the fixed-point defect of the truncated solution.
    """
    pts = [x]
    for _ in range(depth + 1):
        pts.append(orbit(c.base, pts[-1], m_hat + 1).points[-1])
    data = [_step_data(c, basis, m_hat, p)[:2] for p in pts[:-1]]
    d = basis(x).shape[1]

    def pull(steps):
        s = np.zeros(d)
        for k in range(steps - 1, -1, -1):
            M, p = data[k]
            s = s @ M - p
        return s

    s_deep, s_short = pull(depth + 1), pull(depth)
    return s_deep, float(np.abs(s_deep - s_short).max(initial=0.0))


def _basis_field(c, N2):
    if isinstance(N2, Subspace):
        return lambda _x: N2.basis
    if isinstance(N2, np.ndarray):
        B = orthonormal_basis(N2[:, None] if N2.ndim == 1 else N2)
        return lambda _x: B
    if isinstance(N2, dict):
        return lambda x: _as_basis(N2[c.base.key(x)])
    return lambda x: _as_basis(N2(x))


def _as_basis(W):
    if isinstance(W, Subspace):
        return W.basis
    W = np.asarray(W, dtype=float)
    return W[:, None] if W.ndim == 1 else W


def solve_sigma(c, N2, m_hat, sample=None, tol=SIGMA_TOL, max_iter=SIGMA_MAX_ITER):
    """Solve ``sigma_x = sigma_{f^m x} M_x - p_x`` by iterating from ``sigma = 0``.

    Over a finite cycle the whole cycle is iterated jointly until successive
    iterates differ by at most ``tol``. Otherwise each sample point gets a
    backward tail deep enough for the contraction to push the truncation
    error below ``tol``.

    Raises ``ContractionError`` when ``||Shat^m | N^2|| > 1/2`` somewhere on
    the sample and ``ConvergenceError`` after ``max_iter`` iterations.
    """
    if m_hat < 1:
        raise ValueError("m_hat must be >= 1")
    basis = _basis_field(c, N2)
    pp = c.projections
    if isinstance(c.base, FiniteCycle):
        points = orbit(c.base, 0, c.base.q).points
    else:
        points = list(sample) if sample is not None else [c.base.validate(0.0)]
    data = {}
    r = 0.0
    pmax = 0.0
    for x in points:
        B = basis(x)
        if np.abs(pp.u @ B).max() > 1e-10:
            raise DominationError("N^2 is not contained in N")
        M, p, y = _step_data(c, basis, m_hat, x)
        data[c.base.key(x)] = (M, p, c.base.key(y))
        r = max(r, float(np.linalg.norm(M, 2)))
        pmax = max(pmax, float(np.abs(p).max(initial=0.0)))
    if r > RATIO_BOUND + RATIO_SLACK:
        raise ContractionError(
            f"||Shat^{m_hat} | N^2|| = {r:.6g} exceeds 1/2; increase m_hat"
        )

    out = SigmaField(c, basis, m_hat, r)
    if isinstance(c.base, FiniteCycle):
        d = basis(points[0]).shape[1]
        sig = {k: np.zeros(d) for k in data}
        for it in range(max_iter):
            new = {k: sig[yk] @ M - p for k, (M, p, yk) in data.items()}
            res = max(float(np.abs(new[k] - sig[k]).max(initial=0.0)) for k in data)
            out.residual_history.append(res)
            sig = new
            if res <= tol:
                break
        else:
            raise ConvergenceError(f"graph transform did not converge in {max_iter} iterations")
        out.sigma = sig
        out.residual = out.residual_history[-1]
        out.depth = len(out.residual_history)
    else:
        depth = _tail_depth(r, pmax, tol)
        if depth >= max_iter:
            raise ConvergenceError(f"graph transform needs more than {max_iter} iterations")
        out.depth = depth
        for x in points:
            out.sigma_at(x)
    return out


def lift_splitting(c, normal_splitting, m_hat, sample, m_max=64):
    """Lift a dominated normal splitting ``N^1 + N^2`` to ``F^1 + F^2``.

    ``F^1 = uR + N^1`` and ``F^2`` is the graph of the fixed point of the
    graph transform. ``normal_splitting`` is a field of pairs ``(N^1, N^2)``
    of bases in ``R^n`` (``N^1`` may have zero columns).

    The certificate's ``info`` records the measured angle constant ``C``
    (the inverse of the smallest sine between ``u`` and ``F^2``) and the
    induced step ``m_induced = m_hat * ceil(log2(4 C))``; the search runs up
    to ``max(m_induced, m_max)``.
    """
    pp = c.projections
    nf = normal_splitting if callable(normal_splitting) else (lambda _x: normal_splitting)
    points = list(sample)
    n1 = lambda x: _as_basis(nf(x)[0])  # noqa: E731
    n2 = lambda x: _as_basis(nf(x)[1])  # noqa: E731
    sig = solve_sigma(c, n2, m_hat, points)

    def fld(x):
        F1 = orthonormal_basis(np.column_stack([pp.u, n1(x)]))
        return Splitting((Subspace(F1), sig.graph(x)))

    # measured angle between u and F^2
    sines = [np.linalg.svd(pp.Q @ sig.graph_basis(x), compute_uv=False)[-1] for x in points]
    C = 1.0 / min(sines)
    m_induced = int(m_hat * max(1, np.ceil(np.log2(4 * C))))
    cert = certify_domination(c, fld, points, max(m_induced, m_max), description=f"{len(points)} points, lifted")
    cert.info.update(
        angle_constant=float(C),
        m_induced=m_induced,
        min_angle_u_F2=float(min(angle(pp.u, sig.graph_basis(x)) for x in points)),
        sigma_residual=float(sig.residual),
    )
    return fld, cert


def contracting_case(c, sample, m_max=64):
    """``E^0 + E^{<0}`` when ``sup ||Shat_x|| < 1`` on ``sample``.

    ``E^0 = uR`` and ``E^{<0}`` is the graph over all of ``N``. Exponents on
    ``E^{<0}`` are bounded by ``log rho`` with ``rho = sup ||Shat_x||``; the
    bound is stored in ``certificate.info["exponent_bound"]``.
    """
    pp = c.projections
    points = list(sample)
    if isinstance(c.base, FiniteCycle):
        points = sorted(set(points) | set(orbit(c.base, 0, c.base.q).points))
    rho = max(float(np.linalg.norm(pp.N_basis.T @ c.at(x) @ pp.N_basis, 2)) for x in points)
    if rho >= 1.0:
        raise ContractionError(
            f"sup ||Shat|| = {rho:.6g} >= 1 on the sample; deform the cocycle first (perturbation.deform)"
        )
    m_hat = 1 if rho <= 0.5 else int(np.ceil(np.log(0.5) / np.log(rho)))
    N = pp.N_basis
    sig = solve_sigma(c, Subspace(N), m_hat, points)
    U = Subspace(pp.u[:, None])

    def fld(x):
        return Splitting((U, sig.graph(x)))

    cert = certify_domination(c, fld, points, max(m_max, 4 * m_hat), description=f"{len(points)} points, contracting")
    cert.info.update(
        rho=rho,
        m_hat=m_hat,
        exponent_bound=float(np.log(rho)) if rho > 0 else float("-inf"),
        sigma_residual=float(sig.residual),
    )
    return fld, cert


def zero_negative_splitting(c, sample, m_max=64):
    """``uR + graph(sigma)`` over all of ``N`` for the smallest contracting ``m_hat``.

    Generalises :func:`contracting_case` to cocycles whose normal part
    contracts only after ``m_hat <= m_max`` steps on ``sample``.
    """
    pp = c.projections
    points = list(sample)
    if isinstance(c.base, FiniteCycle):
        points = sorted(set(points) | set(orbit(c.base, 0, c.base.q).points))
    N = Subspace(pp.N_basis)
    prods = [np.eye(c.n - 1) for _ in points]
    cur = list(points)
    m_hat = None
    for m in range(1, m_max + 1):
        worst = 0.0
        for i in range(len(points)):
            prods[i] = pp.N_basis.T @ c.at(cur[i]) @ pp.N_basis @ prods[i]
            cur[i] = c.base.f(cur[i])
            worst = max(worst, float(np.linalg.norm(prods[i], 2)))
        if worst <= RATIO_BOUND + RATIO_SLACK:
            m_hat = m
            break
    if m_hat is None:
        raise ContractionError(f"normal cocycle does not contract to 1/2 within {m_max} steps")
    sig = solve_sigma(c, N, m_hat, points)
    U = Subspace(pp.u[:, None])

    def fld(x):
        return Splitting((U, sig.graph(x)))

    cert = certify_domination(c, fld, points, max(m_max, 4 * m_hat), description=f"{len(points)} points, zero/negative")
    cert.info.update(m_hat=m_hat, sigma_residual=float(sig.residual))
    return fld, cert
