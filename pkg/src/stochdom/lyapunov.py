"""Lyapunov spectra and Oseledets data for stochastic cocycles.

Two routes: the discrete QR method along a long orbit, and exact
eigen-analysis of the period product over a finite cycle.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels
from .base import FiniteCycle, orbit
from .cocycle import iterate
from .linalg import Splitting, Subspace, orthonormal_basis

TAU_GAP = 1e-3
LOG_FLOOR = -40.0
DEGENERACY_RTOL = 1e-6
MIN_STEPS = 100
CHUNK = 4096


class SpectralGapError(ValueError):
    pass


class InvarianceError(ValueError):
    pass


@dataclass
class LyapunovReport:
    exponents: list
    multiplicities: list
    method: str
    finite_time_series: np.ndarray | None = None
    converged: bool = True
    warnings: list = field(default_factory=list)

    @property
    def n(self):
        return sum(self.multiplicities)

    @property
    def spectrum_size(self):
        return len(self.exponents)

    def full_spectrum(self):
        """Exponents repeated by multiplicity, descending."""
        return [lam for lam, m in zip(self.exponents, self.multiplicities) for _ in range(m)]

    def to_json(self):
        return {
            "method": self.method,
            "exponents": [_exp_json(v) for v in self.exponents],
            "multiplicities": list(self.multiplicities),
            "converged": self.converged,
            "warnings": list(self.warnings),
        }

    def series_csv(self):
        """CSV with header ``step,lambda_1,...,lambda_n`` (rows sorted descending)."""
        if self.finite_time_series is None:
            raise ValueError("report carries no finite-time series")
        buf = io.StringIO()
        n = self.finite_time_series.shape[1] - 1
        buf.write(",".join(["step"] + [f"lambda_{i + 1}" for i in range(n)]) + "\n")
        for row in self.finite_time_series:
            buf.write(",".join([str(int(row[0]))] + [_csv_float(v) for v in row[1:]]) + "\n")
        return buf.getvalue()


def _exp_json(v):
    return "-inf" if v == -np.inf else float(v)


def _csv_float(v):
    return "-inf" if v == -np.inf else repr(float(v))


@dataclass
class OseledetsEstimate:
    """Oseledets subspaces at ``point`` (one per exponent, descending).

    ``field`` maps every point of the cycle (by base key) to its subspaces.
    """

    point: object
    subspaces: list
    residuals: list
    field: dict = field(default_factory=dict)

    def condition_number(self):
        return float(np.linalg.cond(np.hstack([s.basis for s in self.subspaces])))

    def splitting_at(self, key):
        return Splitting(tuple(self.field[key]))


def group_exponents(values, tau_gap=TAU_GAP, log_floor=LOG_FLOOR):
    """Collapse a list of exponents into descending distinct values with multiplicities.

    Values below ``log_floor`` become ``-inf``; neighbours closer than
    ``tau_gap`` share a block whose exponent is their mean.
    """
    vals = sorted((-np.inf if v < log_floor else float(v) for v in values), reverse=True)
    groups = []
    for v in vals:
        if groups and (
            (v == -np.inf and groups[-1][-1] == -np.inf)
            or (v != -np.inf and groups[-1][-1] - v < tau_gap)
        ):
            groups[-1].append(v)
        else:
            groups.append([v])
    exps = [-np.inf if g[0] == -np.inf else float(np.mean(g)) for g in groups]
    return exps, [len(g) for g in groups]


def lyapunov_qr(c, x, L, stride=1, burn_in=None, tau_gap=TAU_GAP, log_floor=LOG_FLOOR, keep_series=True):
    """Discrete QR estimate of the spectrum along the orbit of ``x``.

    The first ``burn_in`` steps (default ``L // 10``) align the frame with
    the filtration and are not averaged. Complex-conjugate pairs make the
    individual column averages converge only like ``1/L``; their block mean
    is accurate much sooner.
    """
    if not L >= stride >= 1:
        raise ValueError("need L >= stride >= 1")
    burn = L // 10 if burn_in is None else int(burn_in)
    burn -= burn % stride
    n = c.n
    base = c.base
    frame = np.eye(n)
    chunk = max(stride, CHUNK - CHUNK % stride)

    y = base.validate(x)
    done = 0
    while done < burn:
        m = min(chunk, burn - done)
        seg = orbit(base, y, m + 1).points
        _, frame = kernels.qr_steps(c.matrices(seg[:-1]), frame, stride)
        y = seg[-1]
        done += m

    blocks = []
    done = 0
    while done < L:
        m = min(chunk, L - done)
        seg = orbit(base, y, m + 1).points
        logs, frame = kernels.qr_steps(c.matrices(seg[:-1]), frame, stride)
        blocks.append(logs)
        y = seg[-1]
        done += m
    logs = np.vstack(blocks)

    with np.errstate(invalid="ignore"):
        sums = np.cumsum(logs, axis=0)
    steps = np.minimum(np.arange(1, logs.shape[0] + 1) * stride, L).astype(float)
    running = sums / steps[:, None]
    final = running[-1]

    exps, mults = group_exponents(final, tau_gap, log_floor)
    report = LyapunovReport(exps, mults, "qr_orbit")
    if keep_series:
        ordered = -np.sort(-running, axis=1)
        report.finite_time_series = np.column_stack([steps, ordered])
    if L < MIN_STEPS:
        report.converged = False
        report.warnings.append(f"L={L} below the minimum of {MIN_STEPS} steps")
    half = running[(logs.shape[0] - 1) // 2]
    finite = np.isfinite(final) & np.isfinite(half)
    drift = float(np.max(np.abs(np.sort(final[finite]) - np.sort(half[finite])), initial=0.0))
    if drift > 10 * tau_gap:
        report.converged = False
        report.warnings.append(f"running averages drift by {drift:.3e} over the second half")
    if not report.converged:
        warnings.warn("lyapunov_qr: " + "; ".join(report.warnings), RuntimeWarning, stacklevel=2)
    return report


def generalized_kernel(M, rtol=None, scale=None):
    """Orthonormal basis of the generalised null space of ``M``.

    Singular values below ``rtol * scale`` count as zero; ``scale``
    defaults to ``||M||`` but should be the size of the data ``M`` was
    computed from when ``M`` itself is tiny.
    """
    n = M.shape[0]
    if scale is None:
        scale = np.linalg.norm(M, 2)
    tol = (rtol if rtol is not None else 16 * n * np.finfo(float).eps) * max(scale, np.finfo(float).tiny)
    K = np.zeros((n, 0))
    while True:
        R = M - K @ (K.T @ M) if K.shape[1] else M
        _, s, Vt = np.linalg.svd(R)
        dim = int(np.sum(s <= tol))
        if dim <= K.shape[1]:
            return K
        K = orthonormal_basis(Vt[n - dim:].T)
        if K.shape[1] == n:
            return K


def _period_products(mats):
    q = len(mats)
    return [kernels.chain_product(np.stack([mats[(k + j) % q] for j in range(q)])) for k in range(q)]


def _modulus_groups(mods, q):
    """Group descending moduli whose relative spread is below ``DEGENERACY_RTOL``."""
    groups = []
    for m in mods:
        if groups and groups[-1][-1] - m <= DEGENERACY_RTOL * groups[-1][-1]:
            groups[-1].append(m)
        else:
            groups.append([m])
    return [(float(np.log(np.mean(g)) / q), len(g), min(g), max(g)) for g in groups]


def _schur_block(Pi, lower, upper):
    """Real Schur invariant subspace of ``Pi`` for eigenvalues with ``lower < |z| <= upper``."""

    def select(re, im):
        return lower < abs(complex(re, im)) <= upper

    _, Z, sdim = sla.schur(Pi, output="real", sort=select)
    return Z[:, :sdim].copy()


def periodic_spectrum(mats, log_floor=LOG_FLOOR, scale=None):
    """Exact spectral data of a periodic cocycle given by ``q`` matrices.

    Returns ``(exponents, multiplicities, subspaces)`` where ``subspaces[k]``
    lists the Oseledets blocks (as orthonormal bases) at cycle point ``k``.
    Finite blocks are computed at point 0 by ordered real Schur and pushed
    along the cycle. The ``-inf`` block is the generalised kernel of each
    rotated period product, enlarged by the eigenvalues whose exponent lies
    below ``log_floor``. ``scale`` sets the zero threshold (default: the
    product of the factor norms).
    """
    mats = [np.asarray(M, dtype=float) for M in mats]
    q = len(mats)
    dim = mats[0].shape[0]
    if scale is None:
        scale = float(np.prod([max(np.linalg.norm(M, 2), 1e-300) for M in mats]))
    prods = _period_products(mats)
    Pi = prods[0]
    kernel0 = generalized_kernel(Pi, scale=scale)
    kdim = kernel0.shape[1]
    mods = np.sort(np.abs(np.linalg.eigvals(Pi)))[::-1]
    finite_mods = mods[: dim - kdim]
    floor_mod = np.exp(q * log_floor)
    groups = [g for g in _modulus_groups(finite_mods[finite_mods > floor_mod], q)]
    finite_dim = sum(g[1] for g in groups)
    zero_dim = dim - finite_dim

    bases0 = []
    for i, (lam, mult, lo, hi) in enumerate(groups):
        upper = np.inf if i == 0 else np.sqrt(hi * groups[i - 1][2])
        nxt = groups[i + 1][3] if i + 1 < len(groups) else (mods[finite_dim] if zero_dim else 0.0)
        lower = np.sqrt(lo * nxt) if nxt > 0 else 0.5 * lo
        B = _schur_block(Pi, lower, upper)
        if B.shape[1] != mult:
            raise ArithmeticError(f"Schur reordering selected {B.shape[1]} eigenvalues for a block of {mult}")
        bases0.append(B)
    exps = [g[0] for g in groups]
    mults = [g[1] for g in groups]
    if zero_dim:
        exps.append(-np.inf)
        mults.append(zero_dim)
    cut = np.inf
    if zero_dim and groups:
        cut = np.sqrt(groups[-1][2] * mods[finite_dim]) if mods[finite_dim] > 0 else 0.5 * groups[-1][2]

    subspaces = [None] * q
    current = bases0
    for k in range(q):
        blocks = list(current)
        if zero_dim:
            if zero_dim == kdim:
                K = kernel0 if k == 0 else generalized_kernel(prods[k], scale=scale)
            else:
                K = _schur_block(prods[k], -1.0, cut)
            if K.shape[1] != zero_dim:
                raise ArithmeticError("-inf block dimension differs along the cycle")
            blocks.append(K)
        subspaces[k] = blocks
        current = [orthonormal_basis(mats[k] @ B) for B in current]
        if any(B.shape[1] != b.shape[1] for B, b in zip(current, bases0)):
            raise ArithmeticError("finite Oseledets block collapsed under the cocycle")
    return exps, mults, subspaces


def invariance_defect(S, B, B_next):
    """``||(I - P_next) S B||``: how far ``S`` maps ``span B`` outside ``span B_next``."""
    img = S @ B
    return float(np.linalg.norm(img - B_next @ (B_next.T @ img), 2))


def lyapunov_periodic(c, x=0, log_floor=LOG_FLOOR):
    """Exact spectrum and Oseledets splitting for a cocycle over a finite cycle."""
    if not isinstance(c.base, FiniteCycle):
        raise ValueError("lyapunov_periodic needs a FiniteCycle base")
    x = c.base.validate(x)
    cyc = orbit(c.base, x, c.base.q).points
    mats = [c.at(p) for p in cyc]
    exps, mults, subspaces = periodic_spectrum(mats, log_floor)
    field_ = {}
    residuals = np.zeros(len(exps))
    for k, p in enumerate(cyc):
        field_[c.base.key(p)] = [Subspace(B) for B in subspaces[k]]
        nxt = subspaces[(k + 1) % len(cyc)]
        for i, (B, Bn) in enumerate(zip(subspaces[k], nxt)):
            residuals[i] = max(residuals[i], invariance_defect(mats[k], B, Bn))
    est = OseledetsEstimate(x, field_[c.base.key(x)], residuals.tolist(), field_)
    return LyapunovReport(exps, mults, "periodic_exact"), est


def finite_time_singular(c, x, L):
    """Singular values and right singular vectors of ``S^L_x``."""
    _, s, Vt = np.linalg.svd(iterate(c, x, L))
    with np.errstate(divide="ignore"):
        rates = np.log(s) / L
    return rates, Vt.T


def default_horizon(lam_cut):
    if lam_cut >= 0:
        return 50
    return int(np.clip(np.floor(-18.0 / lam_cut), 1, 500))


def stable_bundle(c, x, L, lam_cut, tau_gap=TAU_GAP):
    """Estimate of ``E^{<lam_cut}_x``: right singular directions of ``S^L_x`` below ``exp(L lam_cut)``.

    ``L=None`` picks a horizon long enough to separate the cut from ``-inf``
    blocks without underflow.
    """
    L = default_horizon(lam_cut) if L is None else int(L)
    rates, V = finite_time_singular(c, x, L)
    finite = rates[np.isfinite(rates)]
    if finite.size and np.min(np.abs(finite - lam_cut)) < tau_gap:
        raise SpectralGapError(f"no spectral gap at {lam_cut} (finite-time rates {rates})")
    below = rates < lam_cut
    if not below.any():
        raise SpectralGapError(f"no exponent below {lam_cut}")
    return Subspace(V[:, below])


def unstable_bundle(c, x, dim, L):
    """Estimate of ``E^{>=lam}_x`` of dimension ``dim``: dominant image directions of ``S^L_{f^{-L}(x)}``."""
    y = x
    for _ in range(L):
        y = c.base.f_inv(y)
    U, _, _ = np.linalg.svd(iterate(c, y, L))
    return Subspace(U[:, :dim])


def _intersect(U, W, dim):
    R = U - W @ (W.T @ U)
    _, _, Vt = np.linalg.svd(R)
    return orthonormal_basis(U @ Vt[U.shape[1] - dim:].T)


def estimated_splitting(c, x, report, L=80):
    """Oseledets splitting at ``x`` from forward (filtration) and backward (image) products.

    Block ``i`` is ``E^{>=lam_i} & E^{<lam_{i-1}}``; cuts sit midway between
    consecutive exponents of ``report``. ``L`` caps the horizon used per cut.
    """
    exps, mults = report.exponents, report.multiplicities
    k = len(exps)
    if k == 1:
        return Splitting((Subspace(np.eye(c.n)),))
    cuts = []
    for a, b in zip(exps, exps[1:]):
        cuts.append(a - 1.0 if b == -np.inf else 0.5 * (a + b))
    blocks = []
    prev_stable = np.eye(c.n)
    for i in range(k):
        if i < k - 1:
            # longer horizons push the lower singular values under rounding noise
            h = min(L, default_horizon(cuts[i]))
            unstable = unstable_bundle(c, x, sum(mults[: i + 1]), h).basis
            B = _intersect(unstable, prev_stable, mults[i]) if i else unstable
            prev_stable = stable_bundle(c, x, h, cuts[i], tau_gap=0.0).basis
        else:
            B = prev_stable
        if B.shape[1] != mults[i]:
            raise SpectralGapError(f"block {i} has dimension {B.shape[1]}, expected {mults[i]}")
        blocks.append(Subspace(B))
    return Splitting(tuple(blocks))


def check_uniform_contraction(c, V, sample, n_max, invariance_tol=1e-8):
    """Whether some ``n <= n_max`` gives ``sup_x ||S^n_x|V_x|| < 1`` over ``sample``.

    ``V`` is a Subspace (constant field) or a callable ``x -> Subspace``.
    Returns ``(True, n)`` for the first such ``n``, else ``(False, None)``.
    """
    field_ = (lambda _x: V) if isinstance(V, Subspace) else V
    points = list(sample)
    for p in points:
        B = field_(p).basis
        d = invariance_defect(c.at(p), B, field_(c.base.f(p)).basis)
        if d > invariance_tol:
            raise InvarianceError(f"bundle not invariant at {p}: defect {d:.3e}")
    prods = [np.eye(c.n) for _ in points]
    cur = list(points)
    for n in range(1, n_max + 1):
        worst = 0.0
        for i, p in enumerate(points):
            prods[i] = c.at(cur[i]) @ prods[i]
            cur[i] = c.base.f(cur[i])
            worst = max(worst, np.linalg.norm(prods[i] @ field_(p).basis, 2))
        if worst < 1 - 1e-10:
            return True, n
    return False, None
