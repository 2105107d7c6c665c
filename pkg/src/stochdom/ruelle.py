"""Fibred piecewise-affine expanding maps and their relative Ruelle cocycle.

A partition family assigns to each base point ``x`` a positive ``n x n``
matrix ``ell^x`` of total mass one. Its entries are the lengths of ``n^2``
consecutive intervals ``I^x_ij`` of ``[0, 1]`` in lexicographic order, and
``I^x_i`` is the union of ``I^x_i1, ..., I^x_in``. The fibre map ``T_x``
sends ``I^x_ij`` affinely onto ``I^{f(x)}_j``; on functions constant on the
``I^x_i`` its transfer operator is the transpose of
``A^x_ij = |I^x_ij| / |I^{f(x)}_j|``.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .base import CircleRotation, FiniteCycle, base_from_json, orbit
from .cocycle import CocycleSpec
from .linalg import matrix_from_json, matrix_to_json

ELL_FLOOR = 1e-6
MASS_TOL = 1e-12
HILBERT_TOL = 1e-10
PERRON_TOL = 1e-10


class PartitionError(ValueError):
    pass


class DensityConvergenceError(ArithmeticError):
    pass


def validate_ell(L, floor=ELL_FLOOR):
    L = np.array(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] < 2:
        raise PartitionError(f"ell must be a square matrix with n >= 2, got shape {L.shape}")
    if not np.all(np.isfinite(L)) or L.min() <= floor:
        raise PartitionError(f"ell entries must exceed the floor {floor:g} (min {L.min():.3e})")
    if abs(L.sum() - 1.0) > MASS_TOL:
        raise PartitionError(f"ell entries must sum to 1 (got {L.sum():.15f})")
    return L


@dataclass(frozen=True)
class PartitionFamily:
    """``x -> ell^x`` as a constant, a table over a cycle, or a periodic interpolation on the circle."""

    base: object
    kind: str
    matrices: tuple
    anchors: tuple = ()
    floor: float = ELL_FLOOR

    def __post_init__(self):
        mats = tuple(validate_ell(M, self.floor) for M in self.matrices)
        if not mats:
            raise PartitionError("need at least one matrix")
        n = mats[0].shape[0]
        if any(M.shape[0] != n for M in mats):
            raise PartitionError("all ell matrices must have the same size")
        object.__setattr__(self, "matrices", mats)
        if self.kind == "constant":
            if len(mats) != 1:
                raise PartitionError("constant family takes one matrix")
        elif self.kind == "tabulated":
            if not isinstance(self.base, FiniteCycle) or self.base.q != len(mats):
                raise PartitionError("tabulated family needs a cycle base with q = number of matrices")
        elif self.kind == "interpolated":
            if isinstance(self.base, FiniteCycle):
                raise PartitionError("interpolated family needs a continuous base")
            a = [float(t) for t in self.anchors]
            if len(a) != len(mats) or any(not 0 <= t < 1 for t in a) or any(s >= t for s, t in zip(a, a[1:])):
                raise PartitionError("anchors must be strictly increasing in [0, 1), one per matrix")
            object.__setattr__(self, "anchors", tuple(a))
        else:
            raise PartitionError(f"unknown family type {self.kind!r}")

    @property
    def n(self):
        return self.matrices[0].shape[0]

    def ell(self, x):
        if self.kind == "constant":
            return self.matrices[0]
        if self.kind == "tabulated":
            return self.matrices[int(x)]
        s = self.base.coordinate(x)
        a, m = self.anchors, len(self.anchors)
        if m == 1:
            return self.matrices[0]
        k = bisect_right(a, s) - 1
        if k < 0:
            lo, hi, i, j = a[-1] - 1.0, a[0], m - 1, 0
        else:
            lo = a[k]
            hi = a[k + 1] if k + 1 < m else a[0] + 1.0
            i, j = k, (k + 1) % m
        w = (s - lo) / (hi - lo)
        return (1.0 - w) * self.matrices[i] + w * self.matrices[j]

    def to_json(self):
        ell = {"type": self.kind}
        if self.kind == "constant":
            ell["matrix"] = matrix_to_json(self.matrices[0])
        else:
            ell["matrices"] = [matrix_to_json(M) for M in self.matrices]
        if self.kind == "interpolated":
            ell["anchors"] = list(self.anchors)
        return {"n": self.n, "base": self.base.to_json(), "ell": ell}

    @classmethod
    def from_json(cls, obj):
        extra = set(obj) - {"n", "base", "ell", "floor"}
        if extra:
            raise PartitionError(f"unknown partition family fields: {sorted(extra)}")
        ell = obj.get("ell")
        if not isinstance(ell, dict):
            raise PartitionError("partition family needs an 'ell' object")
        kind = ell.get("type")
        allowed = {"constant": {"matrix"}, "tabulated": {"matrices"}, "interpolated": {"matrices", "anchors"}}
        if kind not in allowed:
            raise PartitionError(f"unknown ell type {kind!r}")
        extra = set(ell) - {"type"} - allowed[kind]
        if extra:
            raise PartitionError(f"unknown fields for {kind} ell: {sorted(extra)}")
        if kind == "constant":
            mats = (matrix_from_json(ell["matrix"]),)
        else:
            mats = tuple(matrix_from_json(M) for M in ell["matrices"])
        if "base" in obj:
            base = base_from_json(obj["base"])
        elif kind == "constant":
            base = FiniteCycle(1)
        elif kind == "tabulated":
            base = FiniteCycle(len(mats))
        else:
            base = CircleRotation()
        pf = cls(base, kind, mats, tuple(ell.get("anchors", ())), float(obj.get("floor", ELL_FLOOR)))
        if "n" in obj and int(obj["n"]) != pf.n:
            raise PartitionError(f"declared n={obj['n']} but ell is {pf.n}x{pf.n}")
        return pf


def constant_family(ell):
    return PartitionFamily(FiniteCycle(1), "constant", (np.asarray(ell, dtype=float),))


def random_family(rng, n, kind="tabulated", q=3, pieces=3, floor=1e-3):
    """Random positive families for tests: Dirichlet masses mixed with a uniform floor."""

    def draw():
        w = rng.dirichlet(np.ones(n * n))
        w = floor + (1 - n * n * floor) * w
        return (w / w.sum()).reshape(n, n)

    if kind == "constant":
        return PartitionFamily(FiniteCycle(1), "constant", (draw(),))
    if kind == "tabulated":
        return PartitionFamily(FiniteCycle(q), "tabulated", tuple(draw() for _ in range(q)))
    if kind == "interpolated":
        anchors = tuple(np.sort(np.concatenate([[0.0], rng.random(pieces - 1)])))
        return PartitionFamily(CircleRotation(), "interpolated", tuple(draw() for _ in range(pieces)), anchors)
    raise ValueError(f"unknown kind {kind!r}")


@dataclass(frozen=True)
class IntervalTable:
    """``ell`` with its lexicographic breakpoints.

    ``breaks[i * n + j]`` is the left end of ``I_ij``; ``level1`` holds
    ``|I_i|`` and ``starts`` the left end of ``I_i``.
    """

    ell: np.ndarray
    breaks: np.ndarray
    level1: np.ndarray
    starts: np.ndarray

    @property
    def n(self):
        return self.ell.shape[0]

    def interval(self, i, j):
        k = i * self.n + j
        return float(self.breaks[k]), float(self.breaks[k + 1])


def build_intervals(pf, x):
    ell = pf.ell(x)
    n = ell.shape[0]
    breaks = np.concatenate([[0.0], np.cumsum(ell.ravel())])
    breaks[-1] = 1.0
    return IntervalTable(ell, breaks, ell.sum(axis=1), breaks[::n][:n].copy())


def fibred_map(pf, x, omega):
    """``T_x(omega)``: the affine map of the cell ``I^x_ij`` containing ``omega`` onto ``I^{f(x)}_j``."""
    omega = float(omega)
    if not 0.0 <= omega < 1.0:
        raise ValueError("omega must lie in [0, 1)")
    here = build_intervals(pf, x)
    there = build_intervals(pf, pf.base.f(x))
    n = here.n
    cell = min(int(np.searchsorted(here.breaks, omega, side="right")) - 1, n * n - 1)
    i, j = divmod(cell, n)
    a = here.breaks[cell]
    slope = there.level1[j] / here.ell[i, j]
    out = there.starts[j] + (omega - a) * slope
    return float(out % 1.0)


def cell_slope(pf, x, i, j):
    """``|I^{f(x)}_j| / |I^x_ij|``, the derivative of ``T_x`` on ``I^x_ij``."""
    return float(build_intervals(pf, pf.base.f(x)).level1[j] / pf.ell(x)[i, j])


def ruelle_matrix(pf, x):
    ell = pf.ell(x)
    nxt = pf.ell(pf.base.f(x)).sum(axis=1)
    return ell / nxt[None, :]


def lebesgue_weights(pf, x):
    """``|I^x_i|``; conformality reads ``A^x w_{f(x)} = w_x``."""
    return pf.ell(x).sum(axis=1)


def conformality_defect(pf, x):
    """``max_i |sum_j |I^{f(x)}_j| A_ij - |I^x_i||``."""
    A = ruelle_matrix(pf, x)
    return float(np.abs(A @ lebesgue_weights(pf, pf.base.f(x)) - lebesgue_weights(pf, x)).max())


def normalize_density(pf, x, h):
    """Scale ``h`` so that ``n * sum_i |I^x_i| h_i = 1``.

    This weighted mass is preserved by ``h -> A^T h``, so the scaling is
    compatible with invariance along orbits; for equal ``|I^x_i|`` it is
    ``sum_i h_i = 1``.
    """
    h = np.asarray(h, dtype=float)
    return h / (pf.n * (lebesgue_weights(pf, x) @ h))


@dataclass
class Density:
    h: np.ndarray
    residual: float
    hilbert_diameter: float
    depth: int
    method: str


def _perron_left(pf, x):
    q = pf.base.q
    pts = orbit(pf.base, x, q).points
    Pi = kernels.chain_product(np.stack([ruelle_matrix(pf, p).T for p in pts]))
    # Pi = (A^x ... A^{f^{q-1} x})^T, so invariance makes h_x a fixed vector of Pi
    vals, vecs = np.linalg.eig(Pi)
    k = int(np.argmax(vals.real))
    if abs(vals[k] - 1.0) > PERRON_TOL:
        raise DensityConvergenceError(f"Perron root {vals[k]} differs from 1")
    h = np.abs(vecs[:, k].real)
    return normalize_density(pf, x, h)


def _pullback(pf, x, m):
    pts = [x]
    for _ in range(m):
        pts.append(pf.base.f_inv(pts[-1]))
    pts = pts[:0:-1]
    mats = np.stack([ruelle_matrix(pf, p).T for p in pts])
    G = mats[0] / mats[0].sum(axis=0, keepdims=True)
    G, diam = kernels.cone_push(mats[1:], G)
    return G, diam


def invariance_residual(pf, x, h_x, h_fx):
    return float(np.abs(ruelle_matrix(pf, x).T @ h_x - h_fx).max())


def solve_density(pf, x, m_pullback=200, exact=None, tol=HILBERT_TOL):
    """Invariant density ``h_x`` with ``h_x^T A^x = h_{f(x)}^T``.

    The image of the positive cone under ``m_pullback`` transposed Ruelle
    matrices from ``f^{-m}(x)`` has Hilbert diameter below ``tol`` or the
    call fails. On a finite cycle ``exact`` (the default there) uses the
    Perron eigenvector of the period product instead.
    """
    if m_pullback < 1:
        raise ValueError("m_pullback must be >= 1")
    x = pf.base.validate(x)
    cycle = isinstance(pf.base, FiniteCycle)
    if exact is None:
        exact = cycle
    if exact:
        if not cycle:
            raise ValueError("exact densities need a FiniteCycle base")
        h = _perron_left(pf, x)
        hf = _perron_left(pf, pf.base.f(x))
        return Density(h, invariance_residual(pf, x, h, hf), 0.0, 0, "perron")
    G, diam = _pullback(pf, x, m_pullback)
    if diam > tol:
        raise DensityConvergenceError(
            f"Hilbert diameter {diam:.3e} after {m_pullback} steps; increase m_pullback"
        )
    h = normalize_density(pf, x, G.mean(axis=1))
    G2, _ = _pullback(pf, pf.base.f(x), m_pullback)
    hf = normalize_density(pf, pf.base.f(x), G2.mean(axis=1))
    return Density(h, invariance_residual(pf, x, h, hf), float(diam), m_pullback, "pullback")


def densities_along(pf, points, m_pullback=200, exact=None):
    """Densities at ``points`` (a backward orbit ``y, f^{-1} y, ...``) plus at ``f(points[0])``.

    One deep pullback at the earliest point, then exact push-forwards, so
    the invariance identity holds to rounding between consecutive points.
    """
    pts = list(points)
    last = pts[-1]
    h = solve_density(pf, last, m_pullback, exact).h
    out = [None] * len(pts)
    out[-1] = h
    for k in range(len(pts) - 2, -1, -1):
        h = normalize_density(pf, pts[k], ruelle_matrix(pf, pts[k + 1]).T @ h)
        out[k] = h
    h_next = normalize_density(pf, pf.base.f(pts[0]), ruelle_matrix(pf, pts[0]).T @ out[0])
    return out, h_next


def b_matrix(pf, x, h_x, h_fx):
    """``B^x_ij = (h_x)_i A^x_ij / (h_{f(x)})_j``."""
    return h_x[:, None] * ruelle_matrix(pf, x) / h_fx[None, :]


class NormalizedRuelle:
    """Generator ``y -> (B^y)^T`` for a cocycle over the inverse base.

    Densities are cached by base key; ``batch`` treats its points as a
    backward orbit when they are one and shares a single pullback.
    """

    kind = "normalized_ruelle"

    def __init__(self, pf, m_pullback=200, exact=None):
        self.pf = pf
        self.n = pf.n
        self.m_pullback = m_pullback
        self.exact = exact
        self._h = {}

    def density(self, x):
        key = self.pf.base.key(x)
        if key not in self._h:
            self._h[key] = solve_density(self.pf, x, self.m_pullback, self.exact).h
        return self._h[key]

    def _bt(self, y, h_y, h_fy):
        return b_matrix(self.pf, y, h_y, h_fy).T

    def __call__(self, y, base):
        return self._bt(y, self.density(y), self.density(self.pf.base.f(y)))

    def batch(self, points, base):
        pts = list(points)
        if len(pts) > 1 and self._is_backward_orbit(pts):
            hs, h_next = densities_along(self.pf, pts, self.m_pullback, self.exact)
            out = np.empty((len(pts), self.n, self.n))
            out[0] = self._bt(pts[0], hs[0], h_next)
            for k in range(1, len(pts)):
                out[k] = self._bt(pts[k], hs[k], hs[k - 1])
            return out
        return np.stack([self(y, base) for y in pts])

    def _is_backward_orbit(self, pts):
        if isinstance(self.pf.base, FiniteCycle):
            return False
        f = self.pf.base.f
        for a, b in zip(pts, pts[1:]):
            d = np.abs(np.atleast_1d(self.pf.base.coordinate(f(b))) - np.atleast_1d(self.pf.base.coordinate(a)))
            if np.any(np.minimum(d, 1 - d) > 1e-9):
                return False
        return True


def normalized_cocycle(pf, m_pullback=200, exact=None):
    """The stochastic cocycle ``y -> (B^y)^T`` over ``f^{-1}``."""
    return CocycleSpec(pf.base.inverse(), NormalizedRuelle(pf, m_pullback, exact))


@dataclass
class RuelleReport:
    spectrum: object
    zero_negative: object
    full_splitting: object
    point_count: int
    info: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "spectrum": self.spectrum.to_json(),
            "point_count": self.point_count,
            "two_point": self.point_count == 2,
            "zero_negative_certificate": None if self.zero_negative is None else self.zero_negative.to_json(),
            "full_splitting_certificate": None if self.full_splitting is None else self.full_splitting.to_json(),
            "info": self.info,
        }


def analyze_ruelle(pf, sample, m_max=32, L=2000, m_pullback=200):
    """Spectrum and domination data of the normalized cocycle.

    Reports whether ``E^0 + E^{<0}`` carries a certificate at some
    ``m <= m_max`` over ``sample``, how many spectrum points there are and,
    when there are at least three, whether the full Oseledets splitting is
    certified (only over finite cycles, where it is computed exactly).
    """
    from .domination import DominationError, certify_domination, zero_negative_splitting
    from .lyapunov import lyapunov_periodic, lyapunov_qr

    c = normalized_cocycle(pf, m_pullback)
    sample = list(sample)
    info = {}
    if isinstance(c.base, FiniteCycle):
        rep, est = lyapunov_periodic(c)
    else:
        rep, est = lyapunov_qr(c, sample[0], L), None
    try:
        _, zn = zero_negative_splitting(c, sample, m_max)
    except DominationError as exc:
        zn = None
        info["zero_negative_reason"] = str(exc)
    full = None
    if len(rep.exponents) >= 3:
        if est is not None:
            try:
                full = certify_domination(c, est.field, sample, m_max)
            except DominationError as exc:
                info["full_splitting_reason"] = str(exc)
        else:
            info["full_splitting_reason"] = "full splitting only computed over finite cycles"
    return RuelleReport(rep, zn, full, len(rep.exponents), info)
