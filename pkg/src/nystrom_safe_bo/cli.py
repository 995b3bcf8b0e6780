"""``tuner`` command line: prior, select, tune, simulate, report.

Exit codes: 0 success, 2 config/argument error, 3 I/O error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .config import Config, ConfigError, config_from_dict, load_config
from .kernels import BaseKernelParams, KernelSpec
from .optim import (BoTrace, run_linebo, run_safe_bo, run_unconstrained_bo,
                    standard_kernel_baseline, trace_rows)
from .quad import GAIN_NAMES, TRACE_COLUMNS, PidGains, objective, performance, run_episode
from .sampling import RngStream, latin_hypercube
from .selection import build_reduced_kernel, fit_forest, rank_additive_kernels

log = logging.getLogger("tuner")

STAGES = {"prior": 1, "select": 2, "tune": 3, "simulate": 4}
METHODS = ("ours", "standard", "linebo", "unconstrained")
D = 9


class ParseError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_prior(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse ``p1..p9,P`` rows; errors carry the offending row number."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = [f"p{i}" for i in range(1, D + 1)] + ["P"]
        if header != expected:
            raise ParseError(f"{path}: header must be {','.join(expected)}")
        X, y = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != D + 1:
                raise ParseError(f"{path}: row {lineno}: expected {D + 1} fields")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ParseError(f"{path}: row {lineno}: non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}: row {lineno}: non-finite value")
            if any(v < 0 or v > 1 for v in vals[:D]):
                raise ParseError(f"{path}: row {lineno}: parameters outside [0, 1]")
            X.append(vals[:D])
            y.append(vals[D])
    if not X:
        raise ParseError(f"{path}: no data rows")
    return np.array(X), np.array(y)


def read_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


class Run:
    """Collects artifacts and writes ``manifest.json`` for one command."""

    def __init__(self, command: str, cfg: Config, out_dir, seed: int, argv=None):
        self.command = command
        self.cfg = cfg
        self.out = Path(out_dir)
        self.seed = seed
        self.argv = list(argv or [])
        self.artifacts: list[str] = []
        self.extra: dict = {}
        self.started = time.time()
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {self.out}: {exc}") from exc

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def finish(self) -> dict:
        config = self.cfg.to_dict()
        key = json.dumps([self.command, config, self.seed, self.argv], sort_keys=True)
        manifest = {
            "run_id": hashlib.sha256(key.encode()).hexdigest()[:16],
            "command": self.command,
            "argv": self.argv,
            "config": config,
            "master_seed": self.seed,
            "stream_ids": {k: [self.seed, v] for k, v in STAGES.items()},
            "started": self.started,
            "finished": time.time(),
            "wall_clock_s": time.time() - self.started,
            "artifacts": sorted(self.artifacts),
            "version": __version__,
            **self.extra,
        }
        write_json(self.out / "manifest.json", manifest)
        return manifest


def _stream(seed: int, stage: str) -> RngStream:
    return RngStream(seed, (STAGES[stage],))


def _base(cfg: Config) -> BaseKernelParams:
    return BaseKernelParams.isotropic(D, cfg.kernel.lengthscale, cfg.kernel.signal_variance)


def _evaluate_all(points, env, threads: int) -> np.ndarray:
    if threads > 1:
        vals = Parallel(n_jobs=threads)(delayed(objective)(u, env) for u in points)
    else:
        vals = [objective(u, env) for u in points]
    return np.array(vals, dtype=float)


def cmd_prior(cfg: Config, out_dir, seed: int, threads: int = 1, argv=None) -> dict:
    run = Run("prior", cfg, out_dir, seed, argv)
    env = cfg.benchmark()
    X = latin_hypercube(cfg.cli.n_prior, D, _stream(seed, "prior"))
    y = _evaluate_all(X, env, threads)
    write_csv(run.path("prior.csv"), [f"p{i}" for i in range(1, D + 1)] + ["P"],
              (list(x) + [p] for x, p in zip(X, y)))
    run.extra["n_safe"] = int(np.sum(y >= cfg.bo.p_min))
    return run.finish()


def select_kernel(X, y, cfg: Config, seed: int, threads: int = 1):
    base = _base(cfg)
    stream = _stream(seed, "select")
    ranking = rank_additive_kernels(X, y, D, base, cfg.nystrom.nystrom(), cfg.kernel.top_m,
                                    stream.child(0), n_jobs=threads)
    forest = fit_forest(X, y, cfg.nystrom.n_trees, cfg.nystrom.min_leaf, stream.child(1))
    spec = build_reduced_kernel(ranking, forest, D, base, cfg.kernel.dim_keep,
                                cfg.kernel.variance)
    return ranking, forest, spec


def cmd_select(prior_path, cfg: Config, out_dir, seed: int, threads: int = 1,
               argv=None) -> dict:
    X, y = read_prior(prior_path)
    run = Run("select", cfg, out_dir, seed, argv)
    ranking, forest, spec = select_kernel(X, y, cfg, seed, threads)
    report = ranking.to_dict()
    report["dim_importances"] = [float(v) for v in forest.importances]
    report["kernel"] = spec.to_dict()
    write_json(run.path("selection.json"), report)
    return run.finish()


def _kernel_for(method, cfg: Config, selection_path, kernel_orders) -> KernelSpec | None:
    if method == "linebo":
        return None
    if method == "standard":
        return standard_kernel_baseline(D, _base(cfg), cfg.kernel.variance)
    if kernel_orders:
        return KernelSpec.full(D, kernel_orders, _base(cfg), variance=cfg.kernel.variance)
    if selection_path is None:
        raise ParseError(f"--method {method} needs --selection or --kernel-orders")
    with open(selection_path) as fh:
        return KernelSpec.from_dict(json.load(fh)["kernel"])


def run_method(method, env, X, y, spec, cfg: Config, seed: int) -> BoTrace:
    stream = _stream(seed, "tune")
    if method in ("ours", "standard"):
        return run_safe_bo(env, X, y, spec, cfg.bo, stream, method=method)
    if method == "unconstrained":
        return run_unconstrained_bo(env, X, y, spec, cfg.bo, stream)
    if method == "linebo":
        base = BaseKernelParams((cfg.kernel.lengthscale,), (cfg.kernel.variance,))
        return run_linebo(env, X, y, base, cfg.bo, stream)
    raise ParseError(f"unknown method {method!r}")


def cmd_tune(prior_path, cfg: Config, out_dir, seed: int, method: str = "ours",
             selection_path=None, kernel_orders=None, argv=None) -> dict:
    X, y = read_prior(prior_path)
    if not np.any(y >= cfg.bo.p_min):
        raise ParseError(
            f"{prior_path}: no observation with P >= {cfg.bo.p_min}; a safe seed is required"
        )
    spec = _kernel_for(method, cfg, selection_path, kernel_orders)
    run = Run("tune", cfg, out_dir, seed, argv)
    env = cfg.benchmark()
    trace = run_method(method, env, X, y, spec, cfg, seed)
    header = ["iter"] + [f"p{i}" for i in range(1, D + 1)] + [
        "P", "safe", "lb_at_selection", "best_so_far", "stalled"]
    write_csv(run.path("trace.csv"), header, trace_rows(trace))
    best_x, best_P = trace.best()
    write_json(run.path("best.json"), {
        "normalized": [float(v) for v in best_x],
        "gains": env.gains(best_x).as_dict(),
        "P": best_P,
    })
    run.extra.update(method=method, kernel=None if spec is None else spec.to_dict(),
                     unsafe_count=trace.unsafe_count, stall_count=trace.stall_count)
    return run.finish()


def _load_gains(gains_path, gains_arg, env) -> PidGains:
    if gains_path is not None:
        with open(gains_path) as fh:
            data = json.load(fh)
        data = data.get("gains", data)
        try:
            vals = [float(data[name]) for name in GAIN_NAMES]
        except KeyError as exc:
            raise ParseError(f"{gains_path}: missing gain {exc.args[0]!r}") from None
    elif gains_arg is not None:
        vals = [float(v) for v in gains_arg.split(",")]
    else:
        vals = list(env.default_gains)
    env.bounds.check(vals)
    return PidGains(tuple(vals))


def cmd_simulate(cfg: Config, out_dir, gains_path=None, gains_arg=None, argv=None) -> dict:
    env = cfg.benchmark()
    gains = _load_gains(gains_path, gains_arg, env)
    run = Run("simulate", cfg, out_dir, cfg.episode.seed, argv)
    res = run_episode(gains, env.params, env.episode)
    write_csv(run.path("trajectory.csv"), TRACE_COLUMNS, res.trace)
    write_json(run.path("summary.json"), {
        "J_Q": res.J_Q,
        "J_R": -res.J_Q,
        "L": res.L,
        "L_expected": res.L_expected,
        "P": performance(res, env.episode),
        "terminated_early": res.terminated_early,
        "cause": res.cause,
        "gains": gains.as_dict(),
    })
    return run.finish()


def summarize_trace(rows, p_min: float) -> dict:
    best = [r["best_so_far"] for r in rows]
    final = best[-1] if best else float("nan")
    start = best[0] if best else float("nan")
    target = start + 0.9 * (final - start)
    hit = next((int(r["iter"]) for r in rows if r["best_so_far"] >= target), None)
    return {
        "final_best": final,
        "iterations_to_90pct": hit,
        "unsafe_count": sum(1 for r in rows if r["P"] < p_min),
        "iterations": len(rows),
    }


def cmd_report(run_dirs, out_path) -> dict:
    out_path = Path(out_path)
    merged, summary, warnings, configs = [], [], [], {}
    for d in map(Path, run_dirs):
        with open(d / "manifest.json") as fh:
            manifest = json.load(fh)
        if "trace.csv" not in manifest.get("artifacts", []):
            raise OSError(f"{d}: manifest lists no trace.csv")
        cfg = manifest["config"]
        p_min = cfg["bo"]["p_min"]
        rows = read_trace(d / "trace.csv")
        method = manifest.get("method", d.name)
        unsafe = 0
        for r in rows:
            unsafe += r["P"] < p_min
            merged.append([method, int(r["iter"]), r["best_so_far"], unsafe])
        s = summarize_trace(rows, p_min)
        s.update(method=method, run_dir=str(d), seed=manifest["master_seed"])
        summary.append(s)
        comparable = {k: v for k, v in cfg.items() if k not in ("cli", "bo")}
        configs[str(d)] = json.dumps(comparable, sort_keys=True)
    if len(set(configs.values())) > 1:
        warnings.append("runs were produced with differing benchmark/kernel configurations")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out_path, ["method", "iteration", "best_so_far", "unsafe_count"], merged)
    lines = [f"{'method':<14} {'final_best':>12} {'iters_to_90%':>13} {'unsafe':>7} {'iters':>6}"]
    for s in summary:
        lines.append(f"{s['method']:<14} {s['final_best']:>12.4f} "
                     f"{str(s['iterations_to_90pct']):>13} {s['unsafe_count']:>7d} "
                     f"{s['iterations']:>6d}")
    lines += [f"WARNING: {w}" for w in warnings]
    text = "\n".join(lines) + "\n"
    out_path.with_suffix(".txt").write_text(text)
    return {"summary": summary, "warnings": warnings, "text": text}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tuner", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", type=Path, default=None)
        if out:
            sp.add_argument("--out", type=Path, required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)

    sp = sub.add_parser("prior", help="Latin hypercube prior evaluated on the benchmark")
    common(sp)
    sp.add_argument("--n-prior", type=int, default=None)

    sp = sub.add_parser("select", help="rank kernel orders and build the reduced kernel")
    common(sp)
    sp.add_argument("--prior", type=Path, required=True)
    sp.add_argument("--trials", type=int, default=None)

    sp = sub.add_parser("tune", help="run a tuning campaign")
    common(sp)
    sp.add_argument("--prior", type=Path, required=True)
    sp.add_argument("--selection", type=Path, default=None)
    sp.add_argument("--kernel-orders", type=str, default=None)
    sp.add_argument("--method", choices=METHODS, default="ours")
    sp.add_argument("--iterations", type=int, default=None)

    sp = sub.add_parser("simulate", help="run one episode and dump the trajectory")
    common(sp)
    sp.add_argument("--gains-file", type=Path, default=None)
    sp.add_argument("--gains", type=str, default=None, help="9 comma-separated gains")

    sp = sub.add_parser("report", help="compare finished tuning runs")
    sp.add_argument("run_dirs", nargs="+", type=Path)
    sp.add_argument("--out", type=Path, required=True)
    return p


def _resolve(args) -> tuple[Config, int, int]:
    cfg = load_config(args.config)
    if getattr(args, "n_prior", None) is not None:
        cfg = cfg.replace("cli", n_prior=args.n_prior)
    if getattr(args, "trials", None) is not None:
        cfg = cfg.replace("nystrom", trials=args.trials)
    if getattr(args, "iterations", None) is not None:
        cfg = cfg.replace("bo", iterations=args.iterations)
    seed = cfg.cli.seed if args.seed is None else args.seed
    threads = cfg.cli.threads if args.threads is None else args.threads
    if seed < 0 or threads < 1:
        raise ConfigError("--seed must be >= 0 and --threads >= 1")
    cfg = cfg.replace("cli", seed=seed, threads=threads)
    # re-validate the merged document
    return config_from_dict(cfg.to_dict()), seed, threads


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            res = cmd_report(args.run_dirs, args.out)
            sys.stdout.write(res["text"])
            return 0
        cfg, seed, threads = _resolve(args)
        if args.command == "prior":
            cmd_prior(cfg, args.out, seed, threads, argv)
        elif args.command == "select":
            cmd_select(args.prior, cfg, args.out, seed, threads, argv)
        elif args.command == "tune":
            orders = None
            if args.kernel_orders:
                try:
                    orders = [int(v) for v in args.kernel_orders.split(",")]
                except ValueError:
                    raise ParseError("--kernel-orders must be a comma list of integers") from None
            cmd_tune(args.prior, cfg, args.out, seed, args.method, args.selection, orders, argv)
        elif args.command == "simulate":
            cmd_simulate(cfg, args.out, args.gains_file, args.gains, argv)
    except (ConfigError, ParseError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return 2
    except np.linalg.LinAlgError as exc:
        log.error("numerical failure: %s", exc)
        return 4
    except FloatingPointError as exc:
        log.error("numerical failure: %s", exc)
        return 4
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
