"""scikit-learn compatible wrappers around the fit-shaped procedures."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fieldcal import fit_depth_scale, fit_nakagami, nakagami_mode, sample_nakagami
from .geometry import apply_rt, robust_procrustes
from .models import DEFAULT_N_POINTS, diameter, subsample


def _check_points(X, name="X"):
    X = check_array(X, ensure_min_samples=1, input_name=name)
    if X.shape[1] != 3:
        raise ValueError(f"{name} must have 3 columns, got {X.shape[1]}")
    return X


class FarthestPointSampler(TransformerMixin, BaseEstimator):
    """Pick ``n_points`` rows of a point array by farthest-point sampling.

    ``fit`` stores the chosen row indices in ``indices_``; ``transform`` returns
    those rows of any array with the same number of rows (the points themselves,
    per-vertex colors, ...).
    """

    def __init__(self, n_points=DEFAULT_N_POINTS):
        self.n_points = n_points

    def fit(self, X, y=None):
        X = _check_points(X)
        self.n_features_in_ = X.shape[1]
        self.n_source_ = X.shape[0]
        self.indices_ = subsample(X, self.n_points)
        self.diameter_ = diameter(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "indices_")
        X = check_array(X, ensure_2d=False, allow_nd=True)
        if X.shape[0] != self.n_source_:
            raise ValueError(f"expected {self.n_source_} rows, got {X.shape[0]}")
        return X[self.indices_]


class RigidAligner(TransformerMixin, BaseEstimator):
    """Robust rigid registration of corresponded point sets.

    ``fit(src, dst)`` estimates the pose mapping ``src`` onto ``dst`` (see
    :func:`poseval.geometry.robust_procrustes`); ``transform`` applies it.
    With ``trim_fraction=0`` this is plain Kabsch alignment.
    """

    def __init__(self, trim_fraction=0.2, max_iter=20, min_threshold=1e-6):
        self.trim_fraction = trim_fraction
        self.max_iter = max_iter
        self.min_threshold = min_threshold

    def fit(self, X, y):
        X = _check_points(X)
        y = _check_points(y, "y")
        fit = robust_procrustes(X, y, self.trim_fraction, self.max_iter, self.min_threshold)
        self.n_features_in_ = 3
        self.pose_ = fit.pose
        self.inlier_mask_ = fit.inliers
        self.residual_rms_ = fit.residual_rms
        self.n_iter_ = fit.n_iter
        return self

    def transform(self, X):
        check_is_fitted(self, "pose_")
        return apply_rt(self.pose_.R, self.pose_.t, _check_points(X))

    def predict(self, X):
        return self.transform(X)


class DepthScaleCalibrator(RegressorMixin, BaseEstimator):
    """Single multiplicative depth correction, fit on (measured, reference) pairs.

    ``X`` holds measured depths (one column), ``y`` the reference depths.
    ``predict`` returns the corrected depths ``scale_ * X``.
    """

    def fit(self, X, y):
        X = check_array(X, ensure_2d=False).reshape(-1)
        y = check_array(y, ensure_2d=False).reshape(-1)
        cal = fit_depth_scale(y, X)
        self.n_features_in_ = 1
        self.scale_ = cal.scale
        self.mae_before_ = cal.mae_before
        self.mae_after_ = cal.mae_after
        return self

    def predict(self, X):
        check_is_fitted(self, "scale_")
        X = check_array(X, ensure_2d=False)
        return self.scale_ * X.reshape(-1)


class NakagamiEstimator(BaseEstimator):
    """Method-of-moments Nakagami fit of positive samples (e.g. ADD errors)."""

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False).reshape(-1)
        fit = fit_nakagami(X)
        self.m_ = fit.m
        self.omega_ = fit.omega
        self.sample_mean_ = fit.sample_mean
        self.mode_ = fit.mode
        self.mean_ = fit.mean
        return self

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "m_")
        return sample_nakagami(self.m_, self.omega_, n_samples, random_state)

    def mode(self):
        check_is_fitted(self, "m_")
        return nakagami_mode(self.m_, self.omega_)

    def score_samples(self, X):
        """Log density of each sample under the fitted distribution."""
        from scipy.special import gammaln

        check_is_fitted(self, "m_")
        x = np.asarray(X, dtype=float).reshape(-1)
        m, w = self.m_, self.omega_
        with np.errstate(divide="ignore"):
            return (np.log(2.0) + m * np.log(m / w) - gammaln(m)
                    + (2 * m - 1) * np.log(x) - m * x * x / w)
