"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (also gathered in the
terminal summary) and then asserts.  Tolerances and counts are pinned below.
"""
import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from nystrom_safe_bo import cli
from nystrom_safe_bo.config import Config
from nystrom_safe_bo.gp import AdditiveGP, predict
from nystrom_safe_bo.kernels import (BaseKernelParams, KernelSpec, additive_kernel_bruteforce,
                                     additive_kernel_eval, kernel_diag, kernel_matrix,
                                     newton_girard, elementary_symmetric_bruteforce)
from nystrom_safe_bo.optim import run_linebo, run_safe_bo, run_unconstrained_bo, \
    standard_kernel_baseline
from nystrom_safe_bo.quad import QuadParams, QuadState, dynamics_step, performance
from nystrom_safe_bo.sampling import RngStream, latin_hypercube
from nystrom_safe_bo.selection import NystromConfig, cree_dense, nystrom_cree, \
    rank_additive_kernels

# 1
KERNEL_DIMS = range(2, 9)
KERNEL_PAIRS = 100
KERNEL_RTOL = 1e-12
KERNEL_BUDGET_S = 5.0
# 2
GP_SIZES = range(2, 21)
GP_TOL = 1e-10
GP_BUDGET_S = 5.0
# 3
NYSTROM_MAX_L = 40
NYSTROM_RTOL = 1e-8
NYSTROM_BUDGET_S = 10.0
# 4
RANK_D, RANK_L, RANK_TRIALS, RANK_REPS, RANK_MIN_WINS = 5, 40, 1000, 20, 16
RANK_BUDGET_S = 120.0
# 5
LHS_N, LHS_D, LHS_SEEDS, LHS_BUDGET_S = 36, 9, 100, 1.0
# 6
HOVER_STEPS, HOVER_DRIFT = 1000, 1e-12
FALL_TIME, FALL_TOL = 1.0, 1e-8
RK4_RATIO = (12.0, 20.0)
# 7
SWEEP_POINTS = 200
# 8
SAFETY_SEEDS = 10
UNCONSTRAINED_MIN_SEEDS = 7
SAFETY_BUDGET_S = 15 * 60.0
# 9
IMPROVE_MIN = 0.25
IMPROVE_ITERS = 100
IMPROVE_MIN_SEEDS = 8
IMPROVE_BUDGET_S = 20 * 60.0
# 10
BASELINE_ITERS = 150
BASELINE_BUDGET_S = 45 * 60.0


def report(n, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {n:>2}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert passed, line


def test_01_additive_kernel_oracle():
    t0 = time.perf_counter()
    gen = np.random.default_rng(101)
    worst = worst_ng = 0.0
    for D in KERNEL_DIMS:
        spec = KernelSpec.full(D, range(1, D + 1), BaseKernelParams.isotropic(D))
        for _ in range(KERNEL_PAIRS):
            a, b = gen.uniform(size=(2, D))
            ref = additive_kernel_bruteforce(a, b, spec)
            worst = max(worst, abs(additive_kernel_eval(a, b, spec) - ref) / abs(ref))
            z = np.exp(-0.5 * ((a - b) / 0.2) ** 2)
            ng = newton_girard(z, D)[-1]
            exact = elementary_symmetric_bruteforce(z, D)
            worst_ng = max(worst_ng, abs(ng - exact) / exact)
    dt = time.perf_counter() - t0
    report(1, worst <= KERNEL_RTOL and dt < KERNEL_BUDGET_S,
           f"max rel err {worst:.2e} <= {KERNEL_RTOL:g}, {dt:.2f}s < {KERNEL_BUDGET_S:g}s "
           f"(power-sum identities alone: {worst_ng:.2e})")


def test_02_gp_oracle():
    t0 = time.perf_counter()
    gen = np.random.default_rng(202)
    worst = 0.0
    for n in GP_SIZES:
        D = 3
        spec = KernelSpec.full(D, (1, 2, 3))
        X = gen.uniform(size=(n, D))
        y = gen.standard_normal(n)
        Xs = gen.uniform(size=(10, D))
        noise = 1e-3
        K = kernel_matrix(X, spec) + noise * np.eye(n)
        Ks = kernel_matrix(Xs, spec, X)
        mean_ref = Ks @ np.linalg.solve(K, y)
        var_ref = kernel_diag(Xs, spec) - np.sum(Ks * np.linalg.solve(K, Ks.T).T, axis=1)
        mean, var = AdditiveGP(spec, noise).fit(X, y).posterior(Xs)
        worst = max(worst, np.max(np.abs(mean - mean_ref)), np.max(np.abs(var - var_ref)))
    spec = KernelSpec.full(2, (1,))
    one = AdditiveGP(spec, 0.0).fit([[0.25, 0.75]], [3.5])
    p = predict(one, [0.25, 0.75])
    interp = p.mean == 3.5 and p.variance == 0.0
    far = predict(one, [1e3, 1e3])
    prior = far.mean == 0.0 and far.variance == kernel_diag([[1e3, 1e3]], spec)[0]
    dt = time.perf_counter() - t0
    report(2, worst <= GP_TOL and interp and prior and dt < GP_BUDGET_S,
           f"max abs err {worst:.2e} <= {GP_TOL:g}, interpolation exact={interp}, "
           f"prior recovery exact={prior}, {dt:.2f}s")


def test_03_nystrom_exactness():
    t0 = time.perf_counter()
    gen = np.random.default_rng(303)
    worst = 0.0
    zero_ok = True
    for l in (3, 8, 15, 25, NYSTROM_MAX_L):
        D = 4
        spec = KernelSpec.full(D, (2,))
        X = gen.uniform(size=(l, D))
        y = gen.standard_normal(l)
        mu = 0.1
        cfg = NystromConfig(c=l, k=l, mu=mu, trials=1)
        got = nystrom_cree(X, y, spec, cfg, RngStream(l))
        ref = cree_dense(kernel_matrix(X, spec), y, mu)
        worst = max(worst, abs(got - ref) / abs(ref))
        zero_ok &= nystrom_cree(X, np.zeros(l), spec, cfg, RngStream(l)) == 0.0
    dt = time.perf_counter() - t0
    report(3, worst <= NYSTROM_RTOL and zero_ok and dt < NYSTROM_BUDGET_S,
           f"max rel err {worst:.2e} <= {NYSTROM_RTOL:g}, y=0 -> 0: {zero_ok}, {dt:.2f}s")


def _order2_sample(seed):
    gen = np.random.default_rng(seed)
    X = gen.uniform(size=(RANK_L, RANK_D))
    K = kernel_matrix(X, KernelSpec.full(RANK_D, (2,)))
    y = np.linalg.cholesky(K + 1e-8 * np.eye(RANK_L)) @ gen.standard_normal(RANK_L)
    return X, y


def test_04_ranking_self_consistency():
    t0 = time.perf_counter()
    base = BaseKernelParams.isotropic(RANK_D)
    cfg = NystromConfig(trials=RANK_TRIALS)
    firsts = []
    for r in range(RANK_REPS):
        X, y = _order2_sample(40_000 + r)
        ranking = rank_additive_kernels(X, y, RANK_D, base, cfg, 1, RngStream(r))
        firsts.append(ranking.ranked[0])
    wins = firsts.count(2)
    dt = time.perf_counter() - t0
    report(4, wins >= RANK_MIN_WINS and dt < RANK_BUDGET_S,
           f"order 2 ranked first in {wins}/{RANK_REPS} (need >= {RANK_MIN_WINS}), "
           f"firsts={firsts}, {dt:.1f}s < {RANK_BUDGET_S:g}s")


def test_05_lhs_stratification():
    t0 = time.perf_counter()
    ok = True
    for seed in range(LHS_SEEDS):
        X = latin_hypercube(LHS_N, LHS_D, RngStream(seed))
        cells = np.floor(X * LHS_N).astype(int)
        ok &= all(np.array_equal(np.sort(cells[:, d]), np.arange(LHS_N)) for d in range(LHS_D))
    dt = time.perf_counter() - t0
    report(5, ok and dt < LHS_BUDGET_S,
           f"one sample per stratum for n={LHS_N}, D={LHS_D} over {LHS_SEEDS} seeds: {ok}, "
           f"{dt:.2f}s < {LHS_BUDGET_S:g}s")


def test_06_dynamics():
    p = QuadParams()
    s = QuadState(0.2, 0.0, 1.0, 0.0, 0.0, 0.0)
    drift = 0.0
    for _ in range(HOVER_STEPS):
        nxt = dynamics_step(s, p.hover_thrust, p.hover_thrust, p)
        drift = max(drift, max(abs(a - b) for a, b in zip(nxt, s)))
        s = nxt
    s = QuadState(0.0, 0.4, 3.0, 1.0, 0.0, 0.0)
    steps = int(round(FALL_TIME / p.dt))
    for _ in range(steps):
        s = dynamics_step(s, 0.0, 0.0, p)
    t = steps * p.dt
    fall_err = max(abs(s.x - 0.4 * t), abs(s.z - (3.0 + t - 0.5 * p.g * t * t)),
                   abs(s.z_dot - (1.0 - p.g * t)))

    def integrate(h, horizon=0.4):
        q = QuadState(0.0, 0.0, 1.0, 0.0, 0.0, 0.0)
        for _ in range(int(round(horizon / h))):
            q = dynamics_step(q, 0.13, 0.135, p, dt=h)
        return np.array(q)

    ref = integrate(p.dt / 64)
    ratio = (np.linalg.norm(integrate(p.dt) - ref) / np.linalg.norm(integrate(p.dt / 2) - ref))
    ok = drift <= HOVER_DRIFT and fall_err <= FALL_TOL and RK4_RATIO[0] <= ratio <= RK4_RATIO[1]
    report(6, ok, f"hover drift {drift:.1e}/step <= {HOVER_DRIFT:g}, free-fall err "
                  f"{fall_err:.1e} <= {FALL_TOL:g}, step-halving ratio {ratio:.2f} in {RK4_RATIO}")


def test_07_performance_sign_contract():
    env = Config().benchmark()
    U = np.random.default_rng(707).uniform(size=(SWEEP_POINTS, 9))
    early_bad = complete_bad = n_early = n_pos = 0
    for u in U:
        res = env.episode_result(u)
        P = performance(res, env.episode)
        scaled = env.episode.reward_scale * (-res.J_Q) + env.episode.reward_offset
        if res.terminated_early:
            n_early += 1
            early_bad += P >= 0
        elif scaled > 0:
            n_pos += 1
            complete_bad += P <= 0
    report(7, early_bad == 0 and complete_bad == 0,
           f"{n_early} early terminations all P<0 (violations {early_bad}); {n_pos} completed "
           f"with positive scaled reward all P>0 (violations {complete_bad})")


class Campaign:
    """Prior, selection and all four optimizers for one seed on the default benchmark."""

    def __init__(self, seed, cfg):
        self.seed = seed
        env = cfg.benchmark()
        self.env = env
        self.X = latin_hypercube(cfg.cli.n_prior, 9, RngStream(seed, (cli.STAGES["prior"],)))
        self.y = np.array([env(u) for u in self.X])
        t0 = time.perf_counter()
        _, _, self.spec = cli.select_kernel(self.X, self.y, cfg, seed)
        self.select_s = time.perf_counter() - t0
        self.traces, self.seconds = {}, {}
        for method in ("ours", "unconstrained", "standard", "linebo"):
            spec = standard_kernel_baseline(9, cli._base(cfg), cfg.kernel.variance) \
                if method == "standard" else self.spec
            t0 = time.perf_counter()
            self.traces[method] = cli.run_method(method, env, self.X, self.y, spec, cfg, seed)
            self.seconds[method] = time.perf_counter() - t0


@pytest.fixture(scope="module")
def campaigns():
    cfg = Config().replace("bo", iterations=BASELINE_ITERS)
    return [Campaign(seed, cfg) for seed in range(SAFETY_SEEDS)]


def test_08_safety(campaigns):
    safe_unsafe = [c.traces["ours"].unsafe_count for c in campaigns]
    unc_unsafe = [c.traces["unconstrained"].unsafe_count for c in campaigns]
    hits = sum(u >= 1 for u in unc_unsafe)
    secs = sum(c.seconds["ours"] + c.seconds["unconstrained"] + c.select_s for c in campaigns)
    ok = sum(safe_unsafe) == 0 and hits >= UNCONSTRAINED_MIN_SEEDS and secs < SAFETY_BUDGET_S
    report(8, ok, f"safe runs unsafe evals per seed {safe_unsafe} (need all 0); unconstrained "
                  f"{unc_unsafe} -> {hits}/{SAFETY_SEEDS} seeds with >= 1 (need >= "
                  f"{UNCONSTRAINED_MIN_SEEDS}); {secs:.0f}s < {SAFETY_BUDGET_S:g}s")


def test_09_improvement(campaigns):
    env = campaigns[0].env
    J0 = env.episode_result(env.default_unit).J_Q
    JR0 = -J0
    gains = []
    for c in campaigns:
        recs = [r for r in c.traces["ours"].records[:IMPROVE_ITERS]]
        best = max(recs, key=lambda r: r.P)
        res = env.episode_result(best.x)
        JR = -res.J_Q if not res.terminated_early else -math.inf
        gains.append((JR - JR0) / abs(JR0))
    hits = sum(g >= IMPROVE_MIN for g in gains)
    secs = sum(c.seconds["ours"] * IMPROVE_ITERS / BASELINE_ITERS + c.select_s for c in campaigns)
    report(9, hits >= IMPROVE_MIN_SEEDS and secs < IMPROVE_BUDGET_S,
           f"J^R default {JR0:.3f}; relative improvement per seed "
           f"{[round(g, 3) for g in gains]} -> {hits}/{len(gains)} >= {IMPROVE_MIN:.0%} "
           f"(need >= {IMPROVE_MIN_SEEDS}); ~{secs:.0f}s")


def test_10_baseline_ordering(campaigns):
    finals = {m: [c.traces[m].best_so_far[-1] for c in campaigns]
              for m in ("ours", "standard", "linebo")}
    med = {m: float(np.median(v)) for m, v in finals.items()}
    secs = sum(c.select_s + c.seconds["ours"] + c.seconds["standard"] + c.seconds["linebo"]
               for c in campaigns)
    ok = med["ours"] >= med["standard"] and med["ours"] >= med["linebo"] \
        and secs < BASELINE_BUDGET_S
    report(10, ok, f"median final best after {BASELINE_ITERS} iters: ours {med['ours']:.3f}, "
                   f"orders-{{1,9}} {med['standard']:.3f}, line search {med['linebo']:.3f}; "
                   f"{secs:.0f}s < {BASELINE_BUDGET_S:g}s")


def _pipeline(root):
    c = ["--seed", "11", "--threads", "1"]
    assert cli.main(["prior", *c, "--out", str(root / "prior")]) == 0
    assert cli.main(["select", *c, "--prior", str(root / "prior/prior.csv"),
                     "--out", str(root / "select")]) == 0
    assert cli.main(["tune", *c, "--prior", str(root / "prior/prior.csv"), "--iterations", "10",
                     "--selection", str(root / "select/selection.json"),
                     "--out", str(root / "tune")]) == 0
    assert cli.main(["simulate", *c, "--gains-file", str(root / "tune/best.json"),
                     "--out", str(root / "simulate")]) == 0
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "manifest.json"}


def test_11_determinism(tmp_path):
    a = _pipeline(tmp_path / "a")
    b = _pipeline(tmp_path / "b")
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    diff = [k for k in a if a.get(k) != b.get(k)]
    report(11, same and len(a) == 6,
           f"{len(a)} artifacts byte-identical across two runs: {same} "
           f"(manifests carry timestamps and are excluded){' differ: ' + str(diff) if diff else ''}")
