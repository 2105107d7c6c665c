"""Lyapunov spectra, dominated splittings and perturbations of stochastic-matrix cocycles."""

from .base import CircleRotation, FiniteCycle, TorusAutomorphism, orbit, sample_mu
from .cocycle import CocycleSpec, constant_spec, decompose, iterate, iterate_normal, random_cocycle
from .kernels import BACKEND
from .linalg import ProjectionPair, Splitting, Subspace, normal_part, validate_stochastic

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CircleRotation",
    "CocycleSpec",
    "FiniteCycle",
    "ProjectionPair",
    "Splitting",
    "Subspace",
    "TorusAutomorphism",
    "constant_spec",
    "decompose",
    "iterate",
    "iterate_normal",
    "normal_part",
    "orbit",
    "random_cocycle",
    "sample_mu",
    "validate_stochastic",
]
