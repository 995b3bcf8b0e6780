"""Pick additive-kernel orders and input dimensions from prior observations.

Each candidate order is scored by the regularized empirical error of a
Nystrom-approximated kernel ridge fit (lower is better), averaged over many
random column subsets.  A random forest ranks input dimensions, and the two
rankings are combined into the reduced kernel used for optimization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.ensemble import RandomForestRegressor
from sklearn.utils.validation import check_is_fitted, check_X_y

from .kernels import BaseKernelParams, KernelSpec, kernel_matrix
from .sampling import RngStream

SPECTRAL_CUTOFF = 1e-12


class RankCollapseError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class NystromConfig:
    """Column count ``c``, kept rank ``k``, ridge ``mu`` and trial count.

    ``c`` and ``k`` may be left as ``None`` and resolved per dataset with
    :meth:`resolve`: ``c = ceil(0.7 l)`` and ``k = c``.
    """

    c: int | None = None
    k: int | None = None
    mu: float = 0.1
    trials: int = 1000

    def resolve(self, l: int) -> "NystromConfig":
        c = self.c if self.c is not None else math.ceil(0.7 * l)
        k = self.k if self.k is not None else c
        cfg = NystromConfig(c, k, self.mu, self.trials)
        cfg.validate(l)
        return cfg

    def validate(self, l: int) -> None:
        if self.c is None or self.k is None:
            raise ValueError("c and k must be resolved before use")
        if self.c > l:
            raise ValueError(f"c={self.c} exceeds the dataset size {l}")
        if not 1 <= self.k <= self.c:
            raise ValueError(f"need 1 <= k <= c, got k={self.k}, c={self.c}")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def cree_from_gram(K, y, index, k: int, mu: float) -> float:
    """Regularized empirical error for a given column subset of ``K``.

    ``C = K[:, index]`` and ``W = K[index][:, index]``; ``W``'s ``k``
    leading eigenpairs give ``V = C U_k S_k^{-1/2}``, the ridge system
    ``(mu I + V^T V) t = V^T y`` is solved and the error is
    ``mu * y^T (y - V t) / (mu * l)``.
    """
    y = np.asarray(y, dtype=float)
    l = y.shape[0]
    C = K[:, index]
    W = C[index]
    evals, evecs = linalg.eigh(W, check_finite=False)
    evals, evecs = evals[::-1][:k], evecs[:, ::-1][:, :k]
    top = evals[0] if evals.size else 0.0
    if not top > 0:
        raise RankCollapseError("Nystrom core matrix has no positive eigenvalue")
    keep = evals > SPECTRAL_CUTOFF * top
    inv_sqrt = np.zeros_like(evals)
    inv_sqrt[keep] = 1.0 / np.sqrt(evals[keep])
    V = C @ (evecs * inv_sqrt)
    A = mu * np.eye(V.shape[1]) + V.T @ V
    t = linalg.solve(A, V.T @ y, assume_a="pos", check_finite=False)
    u = (y - V @ t) / (mu * l)
    return float(mu * (y @ u))


def nystrom_cree(X, y, spec: KernelSpec, cfg: NystromConfig, rng: RngStream) -> float:
    """One randomized evaluation of the regularized empirical error."""
    X = np.asarray(X, dtype=float)
    l = X.shape[0]
    cfg = cfg.resolve(l) if cfg.c is None or cfg.k is None else cfg
    cfg.validate(l)
    index = np.sort(rng.generator().choice(l, size=cfg.c, replace=False))
    return cree_from_gram(kernel_matrix(X, spec), y, index, cfg.k, cfg.mu)


def cree_dense(K, y, mu: float) -> float:
    """Exact counterpart: ``(mu / l) * y^T (K + mu I)^{-1} y``."""
    y = np.asarray(y, dtype=float)
    l = y.shape[0]
    return float(mu / l * (y @ np.linalg.solve(K + mu * np.eye(l), y)))


@dataclass
class KernelRanking:
    orders: tuple
    average_cree: tuple
    trials: int
    top_m: int
    ranked: tuple = field(init=False)
    selected: tuple = field(init=False)

    def __post_init__(self):
        pairs = sorted(zip(self.average_cree, self.orders))
        self.ranked = tuple(n for _, n in pairs)
        self.selected = tuple(sorted(self.ranked[: self.top_m]))

    def to_dict(self) -> dict:
        return {
            "average_cree": {str(n): v for n, v in zip(self.orders, self.average_cree)},
            "ranked_orders": list(self.ranked),
            "selected_orders": list(self.selected),
            "trials": self.trials,
        }


def rank_additive_kernels(X, y, D: int, base: BaseKernelParams, cfg: NystromConfig,
                          top_m: int, rng: RngStream, n_jobs: int = 1) -> KernelRanking:
    """Average the empirical error of every single-order kernel ``1..D``.

    Trial ``t`` draws its column subset from ``rng.child(t)``, and the same
    subset is used for every order so that orders are compared on common
    random numbers.  Averages use exactly rounded summation, so the result
    does not depend on ``n_jobs`` (orders are scored in parallel).
    """
    X, y = check_X_y(X, y, y_numeric=True)
    if X.shape[1] != D:
        raise ValueError(f"X has {X.shape[1]} columns, expected {D}")
    if not 1 <= top_m <= D:
        raise ValueError("top_m must lie in 1..D")
    l = X.shape[0]
    cfg = cfg.resolve(l)
    indices = [np.sort(rng.child(t).generator().choice(l, size=cfg.c, replace=False))
               for t in range(cfg.trials)]
    orders = tuple(range(1, D + 1))

    def average(n):
        K = kernel_matrix(X, KernelSpec.full(D, (n,), base))
        return math.fsum(cree_from_gram(K, y, idx, cfg.k, cfg.mu) for idx in indices) / cfg.trials

    if n_jobs == 1:
        averages = tuple(average(n) for n in orders)
    else:
        averages = tuple(Parallel(n_jobs=n_jobs)(delayed(average)(n) for n in orders))
    return KernelRanking(orders, averages, cfg.trials, top_m)


@dataclass
class Forest:
    """Fitted random forest and its normalized per-dimension importance."""

    estimator: RandomForestRegressor
    importances: np.ndarray

    @property
    def n_trees(self) -> int:
        return len(self.estimator.estimators_)

    @property
    def trees(self):
        return [est.tree_ for est in self.estimator.estimators_]

    def ranked_dims(self) -> tuple:
        # stable: ties keep the lower index first
        return tuple(int(i) for i in np.argsort(-self.importances, kind="stable"))


def fit_forest(X, y, n_trees: int = 200, min_leaf: int = 2,
               rng: RngStream = RngStream(0)) -> Forest:
    """Bootstrap forest with ``ceil(D / 3)`` candidate features per split.

    A target without variance gives uniform importance.
    """
    X, y = check_X_y(X, y, y_numeric=True)
    if X.shape[0] < 2 * min_leaf:
        raise ValueError("dataset smaller than 2 * min_leaf")
    D = X.shape[1]
    est = RandomForestRegressor(
        n_estimators=n_trees,
        min_samples_leaf=min_leaf,
        max_features=max(1, math.ceil(D / 3)),
        bootstrap=True,
        random_state=rng.int_seed(),
    ).fit(X, y)
    imp = np.asarray(est.feature_importances_, dtype=float)
    if not np.all(np.isfinite(imp)) or imp.sum() <= 0:
        imp = np.full(D, 1.0 / D)
    else:
        imp = imp / imp.sum()
    return Forest(est, imp)


def build_reduced_kernel(ranking: KernelRanking, forest: Forest, D: int,
                         base: BaseKernelParams, dim_keep: int,
                         variance: float = 1.0) -> KernelSpec:
    """High-order terms on the most important dimensions, order 1 on all.

    Selected orders are capped at ``dim_keep``.  When every dimension is
    kept the result is a single group with orders ``selected | {1}``.
    """
    if not 1 <= dim_keep <= D:
        raise ValueError("dim_keep must lie in 1..D")
    dims = tuple(sorted(forest.ranked_dims()[:dim_keep]))
    orders = {min(n, dim_keep) for n in ranking.selected}
    if dim_keep == D:
        return KernelSpec(dims, tuple(orders | {1}), base, variance=variance)
    first = KernelSpec(tuple(range(D)), (1,), base, variance=variance)
    return KernelSpec(dims, tuple(orders), base, variance=variance, extra=(first,))


class NystromKernelSelector(BaseEstimator):
    """Estimator wrapper around the whole selection pipeline.

    ``fit(X, y)`` ranks kernel orders, fits the importance forest and stores
    the reduced kernel in ``kernel_``.
    """

    def __init__(self, lengthscale: float = 0.2, signal_variance: float = 1.0,
                 c=None, k=None, mu: float = 0.1, trials: int = 1000, top_m: int = 3,
                 n_trees: int = 200, min_leaf: int = 2, dim_keep=None,
                 variance: float = 1.0, random_state: int = 0):
        self.lengthscale = lengthscale
        self.signal_variance = signal_variance
        self.c = c
        self.k = k
        self.mu = mu
        self.trials = trials
        self.top_m = top_m
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.dim_keep = dim_keep
        self.variance = variance
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        D = X.shape[1]
        base = BaseKernelParams.isotropic(D, self.lengthscale, self.signal_variance)
        stream = RngStream(self.random_state)
        cfg = NystromConfig(self.c, self.k, self.mu, self.trials)
        self.ranking_ = rank_additive_kernels(X, y, D, base, cfg, min(self.top_m, D),
                                              stream.child(0))
        self.forest_ = fit_forest(X, y, self.n_trees, self.min_leaf, stream.child(1))
        keep = D if self.dim_keep is None else self.dim_keep
        self.kernel_ = build_reduced_kernel(self.ranking_, self.forest_, D, base, keep,
                                            self.variance)
        self.n_features_in_ = D
        return self

    @property
    def feature_importances_(self):
        check_is_fitted(self, "forest_")
        return self.forest_.importances

    def get_support(self):
        check_is_fitted(self, "kernel_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[list(self.kernel_.dims)] = True
        return mask
