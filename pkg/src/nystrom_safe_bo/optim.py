"""Safe Bayesian optimization loops and baselines.

Every loop works on the unit box, keeps the whole evaluation history and
returns a :class:`BoTrace`.  The safe variants only ever evaluate candidates
whose GP lower confidence bound clears ``p_min``; when no candidate does,
the incumbent is re-evaluated instead (a *stall*).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.stats import norm

from .gp import AdditiveGP
from .kernels import BaseKernelParams, KernelSpec
from .sampling import RngStream, candidate_batch

log = logging.getLogger(__name__)

ACQUISITIONS = ("safe-ucb", "safe-ei")


@dataclass(frozen=True)
class BoConfig:
    beta: float = 2.0
    beta_schedule: str = "constant"
    delta: float = 0.1
    p_min: float = 0.0
    iterations: int = 150
    n_uniform: int = 5000
    n_local: int = 2000
    local_sigma: float = 0.01
    noise_variance: float = 1e-4
    acquisition: str = "safe-ucb"
    line_points: int = 200
    line_evals: int = 5

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.acquisition not in ACQUISITIONS:
            raise ValueError(f"acquisition must be one of {ACQUISITIONS}")
        if self.beta_schedule not in ("constant", "srinivas"):
            raise ValueError("beta_schedule must be 'constant' or 'srinivas'")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")

    def beta_at(self, n: int, n_candidates: int) -> float:
        """Confidence scale for iteration ``n`` (1-based)."""
        if self.beta_schedule == "constant":
            return self.beta
        return math.sqrt(2.0 * math.log(n_candidates * n**2 * math.pi**2 / (6.0 * self.delta)))


@dataclass
class IterationRecord:
    iteration: int
    x: np.ndarray
    P: float
    safe: bool
    lb_at_selection: float
    best_so_far: float
    stalled: bool = False


@dataclass
class BoTrace:
    method: str
    p_min: float
    prior_x: np.ndarray
    prior_y: np.ndarray
    records: list = field(default_factory=list)

    @property
    def best_so_far(self) -> np.ndarray:
        return np.array([r.best_so_far for r in self.records])

    @property
    def values(self) -> np.ndarray:
        return np.array([r.P for r in self.records])

    @property
    def unsafe_count(self) -> int:
        return sum(1 for r in self.records if r.P < self.p_min)

    @property
    def stall_count(self) -> int:
        return sum(1 for r in self.records if r.stalled)

    def best(self):
        """Best observed point (prior included) and its value."""
        xs = np.vstack([self.prior_x] + [r.x[None, :] for r in self.records])
        ys = np.concatenate([self.prior_y, self.values])
        i = int(np.argmax(ys))
        return xs[i], float(ys[i])


def safe_set(model: AdditiveGP, candidates, beta: float, p_min: float):
    """Boolean mask of candidates whose lower bound is at least ``p_min``."""
    lower, _ = model.confidence_bounds(candidates, beta)
    return lower >= p_min


def _scores(model: AdditiveGP, X, beta: float, acquisition: str, best_y: float):
    mean, var = model.posterior(X)
    std = np.sqrt(var)
    lower = mean - beta * std
    if acquisition == "safe-ucb":
        return mean + beta * std, lower
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = mean - best_y
        zscore = np.where(std > 0, gap / std, 0.0)
        ei = np.where(std > 0, gap * norm.cdf(zscore) + std * norm.pdf(zscore),
                      np.maximum(gap, 0.0))
    return ei, lower


def acquire_next(model: AdditiveGP, safe, acquisition: str = "safe-ucb",
                 beta: float = 2.0):
    """Best candidate among ``safe`` (first index wins ties)."""
    safe = np.atleast_2d(np.asarray(safe, dtype=float))
    if safe.shape[0] == 0:
        raise ValueError("safe set is empty")
    score, _ = _scores(model, safe, beta, acquisition, float(np.max(model.y_train_)))
    return safe[int(np.argmax(score))]


def _check_prior(prior_x, prior_y, p_min, need_safe=True):
    X = np.atleast_2d(np.asarray(prior_x, dtype=float))
    y = np.asarray(prior_y, dtype=float).ravel()
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("prior must contain at least one observation")
    if need_safe and not np.any(y >= p_min):
        raise ValueError("prior contains no safe observation (P >= p_min)")
    return X, y


def _evaluate(objective, x, p_min):
    try:
        P = float(objective(x))
        if not math.isfinite(P):
            raise FloatingPointError("non-finite performance")
        return P
    except Exception as exc:  # noqa: BLE001 - any failed run counts as unsafe
        log.warning("objective failed at %s: %s", np.array2string(x, precision=4), exc)
        return p_min - 1.0


def _run(objective, prior_x, prior_y, spec: KernelSpec, cfg: BoConfig,
         rng: RngStream, constrained: bool, method: str) -> BoTrace:
    X, y = _check_prior(prior_x, prior_y, cfg.p_min)
    trace = BoTrace(method, cfg.p_min, X.copy(), y.copy())
    best = float(np.max(y))
    for it in range(1, cfg.iterations + 1):
        model = AdditiveGP(spec, cfg.noise_variance).fit(X, y)
        incumbent = X[int(np.argmax(y))]
        cands = candidate_batch(incumbent, cfg.n_uniform, cfg.n_local, cfg.local_sigma,
                                rng.child(it))
        beta = cfg.beta_at(it, cands.shape[0])
        score, lower = _scores(model, cands, beta, cfg.acquisition, best)
        if constrained:
            mask = lower >= cfg.p_min
            stalled = not mask.any()
            score = np.where(mask, score, -np.inf)
        else:
            stalled = False
        if stalled:
            x = incumbent
            lb, _ = model.confidence_bounds(x[None, :], beta)
            lb = float(lb[0])
        else:
            i = int(np.argmax(score))
            x, lb = cands[i], float(lower[i])
        P = _evaluate(objective, x, cfg.p_min)
        X = np.vstack([X, x])
        y = np.append(y, P)
        best = max(best, P)
        trace.records.append(IterationRecord(it, x.copy(), P, P >= cfg.p_min, lb, best, stalled))
    return trace


def run_safe_bo(objective, prior_x, prior_y, spec: KernelSpec, cfg: BoConfig,
                rng: RngStream, method: str = "safe") -> BoTrace:
    """Safe BO: acquisition restricted to the lower-bound safe set."""
    return _run(objective, prior_x, prior_y, spec, cfg, rng, True, method)


def run_unconstrained_bo(objective, prior_x, prior_y, spec: KernelSpec, cfg: BoConfig,
                         rng: RngStream) -> BoTrace:
    """Same loop with the safety filter switched off."""
    return _run(objective, prior_x, prior_y, spec, cfg, rng, False, "unconstrained")


def _chord(center, direction):
    """Parameter range ``[lo, hi]`` keeping ``center + s * direction`` in the box."""
    lo, hi = -np.inf, np.inf
    for c, d in zip(center, direction):
        if d > 0:
            lo, hi = max(lo, -c / d), min(hi, (1.0 - c) / d)
        elif d < 0:
            lo, hi = max(lo, (1.0 - c) / d), min(hi, -c / d)
    return lo, hi


def run_linebo(objective, prior_x, prior_y, base_1d: BaseKernelParams, cfg: BoConfig,
               rng: RngStream) -> BoTrace:
    """Safe BO along random lines through the incumbent.

    Each line gets ``cfg.line_evals`` evaluations of safe-UCB on a grid of
    ``cfg.line_points`` points, using a one-dimensional GP over the line
    coordinate fitted to the incumbent and this line's evaluations.
    """
    X, y = _check_prior(prior_x, prior_y, cfg.p_min)
    D = X.shape[1]
    if base_1d.n_dims != 1:
        raise ValueError("run_linebo needs one-dimensional base-kernel parameters")
    spec = KernelSpec((0,), (1,), base_1d, order_weights=(1.0,))
    trace = BoTrace("linebo", cfg.p_min, X.copy(), y.copy())
    best = float(np.max(y))
    it, line = 0, 0
    while it < cfg.iterations:
        line += 1
        gen = rng.child(line).generator()
        incumbent = X[int(np.argmax(y))]
        if D == 1:
            direction = np.ones(1)
        else:
            direction = gen.standard_normal(D)
            direction /= np.linalg.norm(direction)
        lo, hi = _chord(incumbent, direction)
        grid = np.union1d(np.linspace(lo, hi, cfg.line_points), [0.0])
        grid = grid[:, None]
        s_obs, y_obs = [0.0], [float(np.max(y))]
        for _ in range(cfg.line_evals):
            if it >= cfg.iterations:
                break
            it += 1
            model = AdditiveGP(spec, cfg.noise_variance).fit(np.array(s_obs)[:, None],
                                                             np.array(y_obs))
            beta = cfg.beta_at(it, grid.shape[0])
            score, lower = _scores(model, grid, beta, cfg.acquisition, best)
            mask = lower >= cfg.p_min
            stalled = not mask.any()
            if stalled:
                s, lb = 0.0, float(model.confidence_bounds([[0.0]], beta)[0][0])
            else:
                i = int(np.argmax(np.where(mask, score, -np.inf)))
                s, lb = float(grid[i, 0]), float(lower[i])
            x = np.clip(incumbent + s * direction, 0.0, 1.0)
            P = _evaluate(objective, x, cfg.p_min)
            s_obs.append(s)
            y_obs.append(P)
            X = np.vstack([X, x])
            y = np.append(y, P)
            best = max(best, P)
            trace.records.append(IterationRecord(it, x.copy(), P, P >= cfg.p_min, lb, best,
                                                 stalled))
    return trace


def standard_kernel_baseline(D: int, base: BaseKernelParams | None = None,
                             variance: float = 1.0) -> KernelSpec:
    """First- plus highest-order additive kernel over all dimensions."""
    if D < 1:
        raise ValueError("D must be >= 1")
    return KernelSpec.full(D, sorted({1, D}), base, variance=variance)


def trace_rows(trace: BoTrace):
    """Flat rows for CSV export: iter, p1..pD, P, safe, lb, best, stalled."""
    for r in trace.records:
        yield [r.iteration, *map(float, r.x), r.P, int(r.safe), r.lb_at_selection,
               r.best_so_far, int(r.stalled)]


def config_dict(cfg: BoConfig) -> dict:
    return asdict(cfg)
