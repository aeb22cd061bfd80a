"""Input validation shared by the estimator wrappers."""

import warnings

import numpy as np
from sklearn.utils import check_array

from . import sphere_basis as sb
from .exceptions import DomainError
from .kernel_model import CoefficientScheme


def check_scheme(scheme):
    if not isinstance(scheme, CoefficientScheme):
        raise TypeError(f"expected a CoefficientScheme, got {type(scheme).__name__}")
    return scheme


def check_sphere_points(X, d, coords="polar", norm_tol=1e-6):
    """Return polar angles for ``X`` given as polar angles or Cartesian rows.

    Cartesian rows are normalized; a warning is issued when any row is off
    the sphere by more than ``norm_tol``.
    """
    if coords not in ("polar", "cartesian"):
        raise DomainError(f"coords must be 'polar' or 'cartesian', got {coords!r}")
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    width = d - 1 if coords == "polar" else d
    if X.shape[1] != width:
        raise DomainError(f"expected {width} columns of {coords} coordinates, got {X.shape[1]}")
    if coords == "polar":
        return X
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise DomainError("zero vector is not a point of the sphere")
    if np.abs(norms - 1).max() > norm_tol:
        warnings.warn("Cartesian points normalized onto the sphere", UserWarning, stacklevel=3)
    return sb.cartesian_to_polar(X / norms[:, None])


def check_values(y, n):
    y = np.asarray(y)
    if y.ndim != 1:
        y = y.reshape(-1)
    if y.shape[0] != n:
        raise DomainError(f"{y.shape[0]} values for {n} points")
    if np.iscomplexobj(y):
        y = y.astype(np.complex128)
    else:
        y = check_array(y.reshape(-1, 1), dtype=np.float64).ravel()
    if not np.all(np.isfinite(y)):
        raise DomainError("values must be finite")
    return y
