"""scikit-learn compatible wrappers around the interpolation engine."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import interp_engine as ie
from .kernel_model import check_structure, kernel_matrix
from .validation import check_scheme, check_sphere_points, check_values


class SphericalKernelInterpolator(RegressorMixin, BaseEstimator):
    """Exact kernel interpolant ``s(x) = sum_i c_i K(x, x_i)``.

    Parameters
    ----------
    scheme : CoefficientScheme
        Kernel on the sphere; its ambient dimension fixes the input width.
    coords : {"polar", "cartesian"}
        Layout of ``X`` rows.
    singular_rtol : float
        Gram matrices with ``lambda_min <= singular_rtol * trace`` are refused
        with :class:`~sphkern.exceptions.SingularGramError`.
    """

    def __init__(self, scheme=None, coords="polar", singular_rtol=1e-12):
        self.scheme = scheme
        self.coords = coords
        self.singular_rtol = singular_rtol

    def fit(self, X, y):
        scheme = check_scheme(self.scheme)
        P = check_sphere_points(X, scheme.ambient_dim, self.coords)
        vals = check_values(y, P.shape[0])
        gs = ie.solve_interpolation(ie.assemble_gram(scheme, P), vals, self.singular_rtol)
        self.points_ = P
        self.dual_coef_ = gs.coefficients
        self.residual_ = gs.residual
        self.lambda_min_ = gs.lambda_min
        self.complex_output_ = bool(np.iscomplexobj(vals))
        self.n_features_in_ = P.shape[1] if self.coords == "polar" else P.shape[1] + 1
        return self

    def predict(self, X):
        check_is_fitted(self, "dual_coef_")
        P = check_sphere_points(X, self.scheme.ambient_dim, self.coords)
        out = kernel_matrix(self.scheme, P, self.points_) @ self.dual_coef_
        return out if self.complex_output_ else out.real


class KernelGramTransformer(TransformerMixin, BaseEstimator):
    """Maps points to their kernel values against the fitted sites: ``K(Z, X_fit)``.

    The features are real when the kernel is real-valued, complex otherwise.
    """

    def __init__(self, scheme=None, coords="polar"):
        self.scheme = scheme
        self.coords = coords

    def fit(self, X, y=None):
        scheme = check_scheme(self.scheme)
        self.points_ = check_sphere_points(X, scheme.ambient_dim, self.coords)
        self.n_features_in_ = self.points_.shape[1] + (self.coords == "cartesian")
        self.real_valued_ = bool(check_structure(scheme).flags["real_valued"])
        return self

    def transform(self, X):
        check_is_fitted(self, "points_")
        P = check_sphere_points(X, self.scheme.ambient_dim, self.coords)
        G = kernel_matrix(self.scheme, P, self.points_)
        return G.real if self.real_valued_ else G
