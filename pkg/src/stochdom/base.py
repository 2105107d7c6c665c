"""Invertible ergodic base drivers: circle rotations, torus automorphisms, finite cycles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class BasePointError(ValueError):
    pass


def _wrap(x):
    # float modulo can round up to exactly 1.0 for tiny negative inputs
    y = np.mod(x, 1.0)
    return np.where(y >= 1.0, 0.0, y)


@dataclass(frozen=True)
class CircleRotation:
    alpha: float = GOLDEN

    def validate(self, x):
        x = float(x)
        if not 0.0 <= x < 1.0:
            raise BasePointError(f"circle point must lie in [0, 1), got {x}")
        return x

    def f(self, x):
        return float(_wrap(x + self.alpha))

    def f_inv(self, x):
        return float(_wrap(x - self.alpha))

    def inverse(self):
        return CircleRotation(float(_wrap(-self.alpha)))

    def sample(self, rng, count):
        return [float(v) for v in rng.random(count)]

    def key(self, x):
        return float(x)

    def coordinate(self, x):
        return float(x)

    def to_json(self):
        return {"type": "rotation", "alpha": float(self.alpha)}


@dataclass(frozen=True)
class TorusAutomorphism:
    matrix: tuple = ((2, 1), (1, 1))

    def __post_init__(self):
        M = np.array(self.matrix)
        if M.shape != (2, 2) or not np.all(M == np.round(M)):
            raise ValueError("torus automorphism needs a 2x2 integer matrix")
        M = M.astype(int)
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        if abs(det) != 1:
            raise ValueError(f"determinant must be +-1, got {det}")
        object.__setattr__(self, "matrix", tuple(tuple(int(v) for v in row) for row in M))

    @property
    def _M(self):
        return np.array(self.matrix, dtype=float)

    @property
    def _Minv(self):
        (a, b), (c, d) = self.matrix
        det = a * d - b * c
        return det * np.array([[d, -b], [-c, a]], dtype=float)

    def validate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (2,) or np.any(x < 0) or np.any(x >= 1):
            raise BasePointError(f"torus point must lie in [0, 1)^2, got {x}")
        return x

    def f(self, x):
        return _wrap(self._M @ np.asarray(x, dtype=float))

    def f_inv(self, x):
        return _wrap(self._Minv @ np.asarray(x, dtype=float))

    def inverse(self):
        return TorusAutomorphism(tuple(tuple(int(v) for v in row) for row in self._Minv))

    def sample(self, rng, count):
        return [np.asarray(p) for p in rng.random((count, 2))]

    def key(self, x):
        return tuple(float(v) for v in x)

    def coordinate(self, x):
        return float(x[0])

    def to_json(self):
        return {"type": "torus", "matrix": [list(r) for r in self.matrix]}


@dataclass(frozen=True)
class FiniteCycle:
    """The cyclic shift ``k -> k + step (mod q)`` with ``step = +-1``."""

    q: int
    step: int = 1

    def __post_init__(self):
        if int(self.q) < 1:
            raise ValueError("cycle length must be >= 1")
        if self.step not in (1, -1):
            raise ValueError("step must be +1 or -1")
        object.__setattr__(self, "q", int(self.q))

    def validate(self, x):
        if isinstance(x, (bool, np.bool_)) or int(x) != x or not 0 <= int(x) < self.q:
            raise BasePointError(f"cycle point must be an integer in [0, {self.q}), got {x}")
        return int(x)

    def f(self, x):
        return (int(x) + self.step) % self.q

    def f_inv(self, x):
        return (int(x) - self.step) % self.q

    def inverse(self):
        return FiniteCycle(self.q, -self.step)

    def sample(self, rng, count):
        return [int(v) for v in rng.integers(0, self.q, size=count)]

    def key(self, x):
        return int(x)

    def coordinate(self, x):
        return int(x)

    def to_json(self):
        out = {"type": "cycle", "q": self.q}
        if self.step != 1:
            out["step"] = self.step
        return out


@dataclass(frozen=True)
class OrbitSegment:
    base: object
    points: tuple

    @property
    def origin(self):
        return self.points[0]

    @property
    def length(self):
        return len(self.points)

    @property
    def closed(self):
        """True when the segment is one full period of a finite cycle."""
        return isinstance(self.base, FiniteCycle) and self.length == self.base.q

    def successor(self, i, k=1):
        """Index of ``f^k`` of point ``i`` within the segment, or None if it leaves it."""
        if self.closed:
            return (i + k) % self.length
        j = i + k
        return j if j < self.length else None

    def __len__(self):
        return self.length

    def __iter__(self):
        return iter(self.points)


def orbit(b, x, L):
    """Forward orbit ``x, f(x), ..., f^{L-1}(x)``."""
    if L < 1:
        raise ValueError("orbit length must be >= 1")
    x = b.validate(x)
    pts = [x]
    for _ in range(L - 1):
        x = b.f(x)
        pts.append(x)
    return OrbitSegment(b, tuple(pts))


def sample_mu(b, rng, count):
    """I.i.d. samples from the invariant measure (Lebesgue, Haar or uniform counting)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return b.sample(rng, count)


def base_from_json(obj):
    kind = obj.get("type")
    keys = set(obj) - {"type"}
    if kind == "rotation":
        _reject_unknown(keys, {"alpha"}, "rotation")
        return CircleRotation(float(obj.get("alpha", GOLDEN)))
    if kind == "torus":
        _reject_unknown(keys, {"matrix"}, "torus")
        return TorusAutomorphism(tuple(tuple(r) for r in obj.get("matrix", ((2, 1), (1, 1)))))
    if kind == "cycle":
        _reject_unknown(keys, {"q", "step"}, "cycle")
        if "q" not in obj:
            raise ValueError("cycle base needs 'q'")
        return FiniteCycle(int(obj["q"]), int(obj.get("step", 1)))
    raise ValueError(f"unknown base type {kind!r}")


def _reject_unknown(keys, allowed, what):
    extra = keys - allowed
    if extra:
        raise ValueError(f"unknown fields for {what}: {sorted(extra)}")
