"""Kernels on spheres given by spherical-harmonic coefficient schemes.

Harmonic bases and quadrature live in :mod:`sphkern.sphere_basis`, kernel
schemes in :mod:`sphkern.kernel_model`, positive definiteness certificates
in :mod:`sphkern.pd_certify` and Gram matrices, interpolation and
refutation witnesses in :mod:`sphkern.interp_engine`.
"""

from .exceptions import (
    DivergentTailError,
    DomainError,
    DuplicatePointsError,
    InsufficientQuadratureError,
    NotApplicableError,
    SingularGramError,
    SpecFileError,
    SphKernError,
)
from .interp_engine import (
    GramSystem,
    Witness,
    assemble_gram,
    eval_interpolant,
    probe_spd,
    solve_interpolation,
)
from .kernel_model import CoefficientScheme, Structure, TailDescriptor, kernel_matrix
from .pd_certify import Certificate, Verdict, certify
from .sphere_basis import HarmonicIndex, SpherePoint, build_quadrature, harmonics

__version__ = "0.1.0"

_LAZY = {"SphericalKernelInterpolator", "KernelGramTransformer"}


def __getattr__(name):
    # scikit-learn is slow to import; load the estimator wrappers on first use
    if name in _LAZY:
        from . import estimators

        return getattr(estimators, name)
    raise AttributeError(f"module 'sphkern' has no attribute {name!r}")


__all__ = [
    "CoefficientScheme",
    "Structure",
    "TailDescriptor",
    "kernel_matrix",
    "HarmonicIndex",
    "SpherePoint",
    "harmonics",
    "build_quadrature",
    "GramSystem",
    "Witness",
    "assemble_gram",
    "solve_interpolation",
    "eval_interpolant",
    "probe_spd",
    "Certificate",
    "Verdict",
    "certify",
    "SphericalKernelInterpolator",
    "KernelGramTransformer",
    "SphKernError",
    "DomainError",
    "NotApplicableError",
    "DivergentTailError",
    "InsufficientQuadratureError",
    "DuplicatePointsError",
    "SingularGramError",
    "SpecFileError",
]
