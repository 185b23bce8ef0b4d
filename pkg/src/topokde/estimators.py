"""scikit-learn compatible estimators wrapping the bandwidth selectors.

>>> import numpy as np
>>> rng = np.random.default_rng(0)
>>> X = np.r_[rng.normal(0, 1, 200), rng.normal(6, 1, 200)].reshape(-1, 1)
>>> tde = TopologicalKDE().fit(X)
>>> tde.ucat_
2
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_bandwidth, check_sample
from .bandwidth import cv_select, tde_select, tde_select_stable_modes
from .kernels import KernelKind, kde_on_grid, kernel_matrix
from .unimodal import sweep_decompose

__all__ = ["TopologicalKDE", "LSCVKernelDensity", "UnimodalDecomposer"]


class _KDEMixin:
    """Density evaluation shared by the fitted estimators."""

    def evaluate(self, x):
        """Density of the fitted KDE at the points ``x`` (1-D)."""
        check_is_fitted(self, "bandwidth_")
        x = np.asarray(x, dtype=float).ravel()
        if self.bandwidth_ == 0:
            return np.where(x == self.sample_[0], np.inf, 0.0)
        K = kernel_matrix(self.sample_, self.bandwidth_, np.sort(x), self.kernel)
        order = np.argsort(x)
        out = np.empty_like(x)
        out[order] = K.mean(axis=0)
        return out

    def score_samples(self, X):
        """Log-density at each row of ``X``."""
        x = check_sample(X)
        with np.errstate(divide="ignore"):
            return np.log(self.evaluate(x))

    def score(self, X, y=None):
        """Total log-likelihood of ``X``."""
        return float(np.sum(self.score_samples(X)))

    def sample(self, n_samples=1, random_state=None):
        """Draw from the fitted KDE: pick a data point, add kernel noise."""
        check_is_fitted(self, "bandwidth_")
        rng = np.random.default_rng(random_state)
        centres = rng.choice(self.sample_, size=n_samples)
        kind = KernelKind.parse(self.kernel)
        if kind is KernelKind.GAUSSIAN:
            noise = rng.standard_normal(n_samples)
        else:
            # median of three uniforms has the Epanechnikov density
            noise = np.median(rng.uniform(-1, 1, size=(n_samples, 3)), axis=1)
        return (centres + self.bandwidth_ * noise).reshape(-1, 1)

    def density_on(self, grid):
        check_is_fitted(self, "bandwidth_")
        return kde_on_grid(self.sample_, check_bandwidth(self.bandwidth_), grid, self.kernel)


class TopologicalKDE(_KDEMixin, BaseEstimator):
    """Kernel density estimator with topologically selected bandwidth.

    Parameters
    ----------
    kernel : {'gaussian', 'epanechnikov'}
    n_bandwidths : int or None
        Candidate count; ``None`` means ``min(n, 100)``.
    grid_size : int or None
        Internal grid size; ``None`` means ``n_bandwidths``.
    full_bandwidth_set : bool
        Use all ``n`` candidates ``range(X)/j``.
    measure : {'counting', 'lebesgue'}
        Measure on the bandwidth axis used for prevalence and median.
    selection : {'median', 'stable_modes'}
        ``'median'`` takes the central bandwidth with the prevalent
        category; ``'stable_modes'`` the one with the most central mode loci.

    Attributes
    ----------
    bandwidth_ : float
    ucat_ : int
        Estimated unimodal category.
    profile_ : UcatProfile
    estimate_ : DensityGrid
        Estimate at ``bandwidth_`` on the internal grid.
    bands_ : ConfidenceBands or None
    sample_ : ndarray
    """

    def __init__(self, kernel="gaussian", n_bandwidths=None, grid_size=None,
                 full_bandwidth_set=False, measure="counting", selection="median"):
        self.kernel = kernel
        self.n_bandwidths = n_bandwidths
        self.grid_size = grid_size
        self.full_bandwidth_set = full_bandwidth_set
        self.measure = measure
        self.selection = selection

    def fit(self, X, y=None):
        X = check_sample(X)
        if self.selection not in ("median", "stable_modes"):
            raise ValueError(f"unknown selection {self.selection!r}")
        res = tde_select(X, self.kernel, self.n_bandwidths, self.grid_size,
                         self.full_bandwidth_set, self.measure)
        profile = res.profile
        estimate, bands = res.estimate, res.bands
        if self.selection == "stable_modes" and not profile.degenerate:
            profile = tde_select_stable_modes(X, self.kernel, self.n_bandwidths,
                                              self.grid_size, self.full_bandwidth_set,
                                              self.measure)
            estimate = kde_on_grid(X, profile.h_hat, res.estimate.x, self.kernel)
            bands = None
        self.sample_ = X
        self.profile_ = profile
        self.bandwidth_ = profile.h_hat
        self.ucat_ = profile.m_hat
        self.estimate_ = estimate
        self.bands_ = bands
        return self


class LSCVKernelDensity(_KDEMixin, BaseEstimator):
    """Kernel density estimator with least-squares cross-validated bandwidth."""

    def __init__(self, kernel="gaussian", n_bandwidths=None, grid_size=None,
                 full_bandwidth_set=False):
        self.kernel = kernel
        self.n_bandwidths = n_bandwidths
        self.grid_size = grid_size
        self.full_bandwidth_set = full_bandwidth_set

    def fit(self, X, y=None):
        X = check_sample(X)
        res = cv_select(X, self.kernel, self.n_bandwidths, self.grid_size,
                        self.full_bandwidth_set)
        self.sample_ = X
        self.bandwidth_ = res.bandwidth
        self.estimate_ = res.estimate
        self.bands_ = res.bands
        return self


class UnimodalDecomposer(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping curves (rows) to their unimodal category.

    ``transform`` returns an ``(n_curves, 1)`` array of categories;
    ``decompose`` gives the full decomposition of one curve.
    """

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([[sweep_decompose(row).ucat] for row in X])

    @staticmethod
    def decompose(f):
        return sweep_decompose(f)
