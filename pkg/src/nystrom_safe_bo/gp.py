"""Exact Gaussian-process regression with an additive kernel."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .kernels import KernelSpec, kernel_diag, kernel_matrix


class FactorizationError(np.linalg.LinAlgError):
    """Covariance matrix stayed indefinite through every jitter level."""

    def __init__(self, jitters):
        self.jitters = tuple(jitters)
        levels = ", ".join(f"{j:g}" for j in self.jitters)
        super().__init__(f"Cholesky factorization failed at jitter levels: {levels}")


class Prediction(NamedTuple):
    mean: np.ndarray
    variance: np.ndarray


def _cholesky_with_jitter(K, start=1e-10, factor=10.0, retries=5):
    tried = []
    for jitter in [0.0] + [start * factor**i for i in range(retries)]:
        tried.append(jitter)
        try:
            A = K if jitter == 0.0 else K + jitter * np.eye(K.shape[0])
            return linalg.cholesky(A, lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            continue
    raise FactorizationError(tried)


class AdditiveGP(RegressorMixin, BaseEstimator):
    """Zero-mean GP regressor with fixed additive-kernel hyperparameters.

    ``K + noise_variance * I`` is factorized once in :meth:`fit`; if that
    fails, a diagonal jitter starting at ``jitter_start`` is added and grown
    tenfold for up to ``jitter_retries`` attempts.

    Parameters
    ----------
    kernel : KernelSpec
    noise_variance : float
        Observation noise variance added to the diagonal.
    jitter_start : float
    jitter_retries : int

    Attributes
    ----------
    X_train_, y_train_ : ndarray
    L_ : ndarray
        Lower Cholesky factor of the (jittered) training covariance.
    alpha_ : ndarray
        ``(K + noise I)^{-1} y``.
    jitter_ : float
        Jitter that was actually needed (0 when none).
    """

    def __init__(self, kernel: KernelSpec = None, noise_variance: float = 1e-4,
                 jitter_start: float = 1e-10, jitter_retries: int = 5):
        self.kernel = kernel
        self.noise_variance = noise_variance
        self.jitter_start = jitter_start
        self.jitter_retries = jitter_retries

    def fit(self, X, y):
        if self.kernel is None:
            raise ValueError("AdditiveGP needs a kernel")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != self.kernel.n_dims:
            raise ValueError(f"X has {X.shape[1]} columns, kernel expects {self.kernel.n_dims}")
        K = kernel_matrix(X, self.kernel)
        K[np.diag_indices_from(K)] += self.noise_variance
        self.L_, self.jitter_ = _cholesky_with_jitter(
            K, self.jitter_start, 10.0, self.jitter_retries
        )
        self.alpha_ = linalg.cho_solve((self.L_, True), y, check_finite=False)
        self.X_train_, self.y_train_ = X, y
        self.n_features_in_ = X.shape[1]
        return self

    def posterior(self, X) -> Prediction:
        """Posterior mean and (clamped, nonnegative) variance at rows of ``X``."""
        check_is_fitted(self, "alpha_")
        X = check_array(X)
        Ks = kernel_matrix(X, self.kernel, self.X_train_)
        mean = Ks @ self.alpha_
        v = linalg.solve_triangular(self.L_, Ks.T, lower=True, check_finite=False)
        var = kernel_diag(X, self.kernel) - np.einsum("ij,ij->j", v, v)
        return Prediction(mean, np.maximum(var, 0.0))

    def predict(self, X, return_std: bool = False):
        mean, var = self.posterior(X)
        return (mean, np.sqrt(var)) if return_std else mean

    def confidence_bounds(self, X, beta: float):
        """``(mean - beta * std, mean + beta * std)``."""
        if beta < 0:
            raise ValueError("beta must be >= 0")
        mean, var = self.posterior(X)
        half = beta * np.sqrt(var)
        return mean - half, mean + half

    def reconstruction_error(self) -> float:
        """Relative Frobenius error of ``L L^T`` against ``K + noise I``."""
        check_is_fitted(self, "L_")
        K = kernel_matrix(self.X_train_, self.kernel)
        K[np.diag_indices_from(K)] += self.noise_variance + self.jitter_
        return float(np.linalg.norm(self.L_ @ self.L_.T - K) / np.linalg.norm(K))


def fit_gp(X, y, spec: KernelSpec, noise_variance: float = 1e-4) -> AdditiveGP:
    return AdditiveGP(spec, noise_variance).fit(X, y)


def predict(model: AdditiveGP, x) -> Prediction:
    """Posterior at a single point; scalars in the returned tuple."""
    mean, var = model.posterior(np.atleast_2d(x))
    return Prediction(float(mean[0]), float(var[0]))


def confidence_bounds(model: AdditiveGP, x, beta: float):
    lo, hi = model.confidence_bounds(np.atleast_2d(x), beta)
    return float(lo[0]), float(hi[0])
