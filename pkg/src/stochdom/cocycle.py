"""Stochastic-matrix cocycles over a base driver and their normal factor."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from . import kernels
from .base import CircleRotation, FiniteCycle, base_from_json, orbit
from .linalg import (
    ProjectionPair,
    matrix_from_json,
    matrix_to_json,
    random_stochastic,
    validate_stochastic,
)


class Constant:
    """The same matrix at every base point."""

    kind = "constant"

    def __init__(self, matrix):
        self.matrix = validate_stochastic(matrix)
        self.n = self.matrix.shape[0]

    def __call__(self, x, base):
        return self.matrix

    def check_base(self, base):
        pass

    def to_json(self):
        return {"type": "constant", "matrix": matrix_to_json(self.matrix)}


class Tabulated:
    """One matrix per point of a finite cycle."""

    kind = "tabulated"

    def __init__(self, matrices):
        self.matrices = [validate_stochastic(S) for S in matrices]
        if not self.matrices:
            raise ValueError("tabulated generator needs at least one matrix")
        self.n = self.matrices[0].shape[0]
        if any(S.shape[0] != self.n for S in self.matrices):
            raise ValueError("all matrices must have the same size")

    def __call__(self, x, base):
        return self.matrices[int(x)]

    def check_base(self, base):
        if not isinstance(base, FiniteCycle) or base.q != len(self.matrices):
            raise ValueError("tabulated generator needs a cycle base with q = number of matrices")

    def to_json(self):
        return {"type": "tabulated", "matrices": [matrix_to_json(S) for S in self.matrices]}


def _check_circle_nodes(nodes, count, what):
    nodes = [float(b) for b in nodes]
    if len(nodes) != count or not nodes:
        raise ValueError(f"{what}: need one matrix per node")
    if nodes[0] != 0.0 and what == "locally_constant":
        raise ValueError("locally_constant breakpoints must start at 0")
    if any(not 0.0 <= b < 1.0 for b in nodes) or any(b >= c for b, c in zip(nodes, nodes[1:])):
        raise ValueError(f"{what}: nodes must be strictly increasing in [0, 1)")
    return nodes


class LocallyConstant:
    """Matrix ``k`` on the half-open cell ``[b_k, b_{k+1})`` of the circle coordinate."""

    kind = "locally_constant"

    def __init__(self, breakpoints, matrices):
        self.matrices = [validate_stochastic(S) for S in matrices]
        self.breakpoints = _check_circle_nodes(breakpoints, len(self.matrices), "locally_constant")
        self.n = self.matrices[0].shape[0]

    def __call__(self, x, base):
        return self.matrices[bisect_right(self.breakpoints, base.coordinate(x)) - 1]

    def check_base(self, base):
        if isinstance(base, FiniteCycle):
            raise ValueError("locally_constant generator needs a continuous base")

    def to_json(self):
        return {
            "type": "locally_constant",
            "breakpoints": list(self.breakpoints),
            "matrices": [matrix_to_json(S) for S in self.matrices],
        }


class Interpolated:
    """Periodic piecewise-linear (convex) interpolation between anchor matrices."""

    kind = "interpolated"

    def __init__(self, anchors, matrices):
        self.matrices = [validate_stochastic(S) for S in matrices]
        self.anchors = _check_circle_nodes(anchors, len(self.matrices), "interpolated")
        self.n = self.matrices[0].shape[0]

    def __call__(self, x, base):
        s = base.coordinate(x)
        a = self.anchors
        m = len(a)
        if m == 1:
            return self.matrices[0]
        k = bisect_right(a, s) - 1
        if k < 0:
            lo, hi = a[-1] - 1.0, a[0]
            i, j = m - 1, 0
        else:
            lo = a[k]
            hi = a[k + 1] if k + 1 < m else a[0] + 1.0
            i, j = k, (k + 1) % m
        w = (s - lo) / (hi - lo)
        return (1.0 - w) * self.matrices[i] + w * self.matrices[j]

    def check_base(self, base):
        if isinstance(base, FiniteCycle):
            raise ValueError("interpolated generator needs a continuous base")

    def to_json(self):
        return {
            "type": "interpolated",
            "anchors": list(self.anchors),
            "matrices": [matrix_to_json(S) for S in self.matrices],
        }


_GENERATORS = {
    "constant": lambda o: Constant(matrix_from_json(o["matrix"])),
    "tabulated": lambda o: Tabulated([matrix_from_json(m) for m in o["matrices"]]),
    "locally_constant": lambda o: LocallyConstant(o["breakpoints"], [matrix_from_json(m) for m in o["matrices"]]),
    "interpolated": lambda o: Interpolated(o["anchors"], [matrix_from_json(m) for m in o["matrices"]]),
}
_GENERATOR_FIELDS = {
    "constant": {"matrix"},
    "tabulated": {"matrices"},
    "locally_constant": {"breakpoints", "matrices"},
    "interpolated": {"anchors", "matrices"},
}


@dataclass(frozen=True)
class CocycleSpec:
    """A base driver ``f`` together with a generator ``x -> S_x``.

    ``generator`` is called as ``generator(x, base)``; generators may also
    provide ``batch(points, base)`` returning an ``(L, n, n)`` stack.
    """

    base: object
    generator: object

    def __post_init__(self):
        check = getattr(self.generator, "check_base", None)
        if check is not None:
            check(self.base)

    @property
    def n(self):
        return self.generator.n

    @property
    def projections(self):
        return ProjectionPair.for_dim(self.n)

    def at(self, x):
        return np.asarray(self.generator(x, self.base), dtype=float)

    def matrices(self, points):
        batch = getattr(self.generator, "batch", None)
        if batch is not None:
            return np.ascontiguousarray(batch(list(points), self.base), dtype=float)
        points = list(points)
        out = np.empty((len(points), self.n, self.n))
        for i, x in enumerate(points):
            out[i] = self.generator(x, self.base)
        return out

    def orbit_matrices(self, x, L):
        """Stack ``S_x, S_{f(x)}, ..., S_{f^{L-1}(x)}``."""
        if L == 0:
            return np.empty((0, self.n, self.n))
        return self.matrices(orbit(self.base, x, L).points)

    def to_json(self):
        if not hasattr(self.generator, "to_json"):
            raise TypeError("generator is not serialisable")
        return {"base": self.base.to_json(), "generator": self.generator.to_json()}

    @classmethod
    def from_json(cls, obj):
        extra = set(obj) - {"base", "generator"}
        if extra:
            raise ValueError(f"unknown cocycle fields: {sorted(extra)}")
        if "base" not in obj or "generator" not in obj:
            raise ValueError("cocycle spec needs 'base' and 'generator'")
        gen = obj["generator"]
        kind = gen.get("type")
        if kind not in _GENERATORS:
            raise ValueError(f"unknown generator type {kind!r}")
        extra = set(gen) - {"type"} - _GENERATOR_FIELDS[kind]
        if extra:
            raise ValueError(f"unknown fields for {kind} generator: {sorted(extra)}")
        missing = _GENERATOR_FIELDS[kind] - set(gen)
        if missing:
            raise ValueError(f"{kind} generator is missing {sorted(missing)}")
        return cls(base_from_json(obj["base"]), _GENERATORS[kind](gen))


def constant_spec(S, q=1):
    """Constant generator over a finite cycle of length ``q``."""
    S = validate_stochastic(S)
    return CocycleSpec(FiniteCycle(q), Tabulated([S] * q))


def iterate(c, x, k):
    """``S^k_x = S_{f^{k-1}(x)} ... S_x``; the identity for ``k = 0``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return np.eye(c.n)
    return kernels.chain_product(c.orbit_matrices(x, k))


def iterate_normal(c, p, x, k):
    """Composition of the one-step normal parts along the orbit (``N_basis`` coordinates)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return np.eye(c.n - 1)
    mats = c.orbit_matrices(x, k)
    normals = np.einsum("ia,tij,jb->tab", p.N_basis, mats, p.N_basis)
    return kernels.chain_product(normals)


def decompose(c, p, x, k):
    """The three terms ``P``, ``P S^k Q`` and ``Q S^k Q`` summing to ``S^k_x``."""
    Sk = iterate(c, x, k)
    return p.P.copy(), p.P @ Sk @ p.Q, p.Q @ Sk @ p.Q


def random_cocycle(rng, n, kind="tabulated", q=None, profile="uniform", pieces=3):
    """Random spec for test corpora: ``tabulated`` over a cycle, or a
    ``locally_constant`` / ``interpolated`` generator over a golden rotation."""
    if kind == "tabulated":
        q = int(q if q is not None else rng.integers(1, 5))
        return CocycleSpec(FiniteCycle(q), Tabulated([random_stochastic(n, rng, profile) for _ in range(q)]))
    mats = [random_stochastic(n, rng, profile) for _ in range(pieces)]
    nodes = np.sort(np.concatenate([[0.0], rng.random(pieces - 1)]))
    if kind == "locally_constant":
        return CocycleSpec(CircleRotation(), LocallyConstant(nodes, mats))
    if kind == "interpolated":
        return CocycleSpec(CircleRotation(), Interpolated(nodes, mats))
    raise ValueError(f"unknown kind {kind!r}")
