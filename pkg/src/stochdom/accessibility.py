"""Near-identity stochastic matrices that steer one direction of ``N`` onto another."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import ProjectionPair, validate_stochastic

UNIT_TOL = 1e-12
THETA_TOL = 1e-10


class TransportError(ValueError):
    """A precondition of the transport construction is violated."""


class AccessNumericalError(ArithmeticError):
    """``||S - R||`` exceeds ``eps`` even with the minimal-mass carrier."""


@dataclass(frozen=True)
class Constants:
    """``D = (n-1) sqrt(n)`` and ``C = (n-1) sqrt(n) + 2 n (n-1)^2``."""

    n: int

    @property
    def D(self):
        return (self.n - 1) * np.sqrt(self.n)

    @property
    def C(self):
        return (self.n - 1) * np.sqrt(self.n) + 2 * self.n * (self.n - 1) ** 2


@dataclass
class TransportResult:
    T: np.ndarray
    t: float
    epsilon_in: float
    delta1: float
    delta2: float
    theta_row: np.ndarray
    row_mass: np.ndarray
    mix: str
    residual: float

    @property
    def worst_row_deviation(self):
        return float(np.abs(self.T - np.eye(self.T.shape[0])).max())


def orbit_bounds(v, eps):
    """Interval ``[v_i + eps (alpha - v_i), v_i + eps (beta - v_i)]`` for each ``i``.

    These are exactly the values ``(Sv)_i`` can take over ``S`` in ``S_eps``.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    v = np.asarray(v, dtype=float)
    a, b = v.min(), v.max()
    return np.column_stack([v + eps * (a - v), v + eps * (b - v)])


def _extremes(v):
    # argmin/argmax return the first index on ties
    return int(np.argmin(v)), int(np.argmax(v))


def realize_orbit_point(v, y, delta, tol=THETA_TOL):
    """``T`` in ``S_delta`` with ``T v = y``, rows ``(1-delta) e_i + delta (theta_i e_jmin + (1-theta_i) e_jmax)``.

    Returns ``(T, theta)``; raises ``TransportError`` when some ``y_i`` lies
    outside the orbit interval by more than ``tol``.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    n = v.size
    jmin, jmax = _extremes(v)
    a, b = v[jmin], v[jmax]
    if b - a <= 0:
        raise TransportError("v is constant; its orbit is a point")
    if delta <= 0:
        if np.abs(y - v).max() > tol:
            raise TransportError("delta = 0 only realizes y = v")
        return np.eye(n), np.zeros(n)
    theta = (b - (y - (1 - delta) * v) / delta) / (b - a)
    if theta.min() < -tol or theta.max() > 1 + tol:
        bad = int(np.argmax(np.maximum(-theta, theta - 1)))
        raise TransportError(f"theta_{bad} = {theta[bad]:.3e} outside [0, 1]: target leaves the orbit of v")
    theta = np.clip(theta, 0.0, 1.0)
    T = (1 - delta) * np.eye(n)
    T[:, jmin] += delta * theta
    T[:, jmax] += delta * (1 - theta)
    return T, theta


def minimal_mass_realization(v, y, delta, tol=1e-12):
    """``T v = y`` using, per row, the least off-diagonal mass (at most ``delta``).

    Row ``i`` moves mass ``delta_i`` to a single extreme coordinate of ``v``.
    Returns ``(T, theta, masses)``.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    n = v.size
    jmin, jmax = _extremes(v)
    a, b = v[jmin], v[jmax]
    T = np.eye(n)
    theta = np.zeros(n)
    masses = np.zeros(n)
    for i in range(n):
        d = y[i] - v[i]
        gap = (b - v[i]) if d >= 0 else (a - v[i])
        if abs(gap) < tol:
            # v_i is already extreme in the direction of d
            if abs(d) > tol:
                raise TransportError(f"row {i}: target outside the orbit of v")
            continue
        m = d / gap
        if m > delta + tol:
            raise TransportError(f"row {i} needs mass {m:.3e} > {delta:.3e}")
        m = min(max(m, 0.0), 1.0)
        j = jmax if d >= 0 else jmin
        theta[i] = 0.0 if d >= 0 else 1.0
        masses[i] = m
        T[i, i] -= m
        T[i, j] += m
    return T, theta, masses


def _check_unit_normal(v, name):
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise TransportError(f"{name} must be a unit vector")
    if abs(v.sum()) / np.sqrt(v.size) > UNIT_TOL:
        raise TransportError(f"{name} must lie in N (P{name} = 0)")
    return v


def transport(v, w, eps, mix="full"):
    """``T`` near the identity and ``t > 0`` with ``T v = t w``.

    ``delta1 = sqrt(eps)``, ``delta2 = C delta1`` and
    ``t = (M - delta1)/(M + eps)`` with ``M = max(beta(v), |alpha(v)|)``.
    ``mix="full"`` uses the two-point carrier with mass ``delta2`` on every
    row; ``mix="minimal"`` uses only the mass each row needs.
    """
    v = _check_unit_normal(v, "v")
    w = _check_unit_normal(w, "w")
    n = v.size
    dist = float(np.linalg.norm(v - w))
    if dist > eps + 1e-15:
        raise TransportError(f"||v - w|| = {dist:.3e} exceeds eps = {eps:.3e}")
    k = Constants(n)
    d1 = float(np.sqrt(eps))
    d2 = float(k.C * d1)
    if d2 > 1.0:
        raise TransportError(f"delta2 = {d2:.3e} > 1; eps must be at most 1/C^2 = {1 / k.C**2:.3e}")
    a, b = v.min(), v.max()
    M = max(b, abs(a))
    t = (M - d1) / (M + eps)
    if t <= 0:
        raise TransportError(f"t = {t:.3e} <= 0; eps too large")
    target = t * w
    if mix == "full":
        T, theta = realize_orbit_point(v, target, d2)
        masses = np.full(n, d2)
    elif mix == "minimal":
        T, theta, masses = minimal_mass_realization(v, target, d2)
    else:
        raise ValueError(f"unknown mix {mix!r}")
    resid = float(np.abs(T @ v - target).max())
    return TransportResult(T, float(t), float(eps), d1, d2, theta, masses, mix, resid)


@dataclass
class AccessResult:
    R: np.ndarray
    lam: float
    transport: TransportResult
    gap: float
    bound: float
    identity_residual: float


def access(S, x, y, eps, details=False):
    """``R`` with ``S x = lam R y`` and ``||S - R|| <= eps``, for ``angle(x, y) <= eps^2 / C^2``.

    ``R = S T`` where ``T`` carries ``y`` to ``t x`` (``lam = 1/t``, negated
    when ``y`` is flipped to face ``x``). If the full carrier overshoots
    ``eps`` in the spectral norm, the minimal-mass carrier is used instead.
    Returns ``(R, lam)``, or an :class:`AccessResult` with ``details=True``.
    """
    S = validate_stochastic(S)
    x = _check_unit_normal(x, "x")
    y = _check_unit_normal(y, "y")
    n = S.shape[0]
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    C = Constants(n).C
    eps_t = eps**2 / C**2
    sign = 1.0 if x @ y >= 0 else -1.0
    y_s = sign * y
    ang = float(np.arctan2(np.linalg.norm(x - (x @ y_s) * y_s), x @ y_s))
    if ang > eps_t * (1 + 1e-12):
        raise TransportError(f"angle(x, y) = {ang:.3e} exceeds eps^2/C^2 = {eps_t:.3e}")
    # chord <= arc, so the transport distance condition holds
    eps_t = max(eps_t, float(np.linalg.norm(x - y_s)))
    norm_S = float(np.linalg.norm(S, 2))
    for mix in ("full", "minimal"):
        tr = transport(y_s, x, eps_t, mix=mix)
        R = S @ tr.T
        gap = float(np.linalg.norm(S - R, 2))
        if gap <= eps:
            break
    else:
        raise AccessNumericalError(f"||S - R|| = {gap:.3e} > eps = {eps:.3e} with the minimal carrier")
    lam = sign / tr.t
    resid = float(np.abs(S @ x - lam * (R @ y)).max())
    if not details:
        return R, lam
    bound = norm_S * float(np.linalg.norm(np.eye(n) - tr.T, 2))
    return AccessResult(R, lam, tr, gap, bound, resid)


def sample_s_epsilon(n, eps, rng):
    """Random element of ``S_eps``: rows ``(1 - eta_i) e_i + eta_i q_i`` with ``eta_i <= eps``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    eta = eps * rng.random(n)
    q = rng.dirichlet(np.ones(n), size=n)
    return (1 - eta)[:, None] * np.eye(n) + eta[:, None] * q


def random_unit_normal(n, rng):
    pp = ProjectionPair.for_dim(n)
    v = pp.N_basis @ rng.standard_normal(n - 1)
    return v / np.linalg.norm(v)
