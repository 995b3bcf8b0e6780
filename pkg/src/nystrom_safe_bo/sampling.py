"""Reproducible random streams, Latin hypercube designs and candidate sets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    The pair ``(seed, stream_id)`` fully determines the sample sequence;
    :meth:`child` derives independent sub-streams (per trial, per iteration).
    """

    seed: int
    stream_id: tuple = (0,)

    def __post_init__(self):
        sid = self.stream_id
        sid = (int(sid),) if np.isscalar(sid) else tuple(int(s) for s in sid)
        if int(self.seed) < 0:
            raise ValueError("seed must be nonnegative")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream_id", sid)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(int(k) for k in key))

    def int_seed(self) -> int:
        """A 32-bit integer for APIs that only take ``random_state``."""
        return int(self.generator().integers(0, 2**31 - 1))


def latin_hypercube(n: int, D: int, rng: RngStream) -> np.ndarray:
    """``n`` points in ``[0, 1)^D`` with one point per stratum in every axis."""
    if n < 1 or D < 1:
        raise ValueError("need n >= 1 and D >= 1")
    return qmc.LatinHypercube(d=D, seed=rng.generator()).random(n)


def candidate_batch(center, n_uniform: int, n_local: int, local_sigma: float,
                    rng: RngStream) -> np.ndarray:
    """Uniform points in the unit box plus Gaussian perturbations of ``center``.

    Local points are clipped to the box; uniform points come first.
    """
    center = np.asarray(center, dtype=float)
    if not local_sigma > 0:
        raise ValueError("local_sigma must be positive")
    gen = rng.generator()
    D = center.shape[0]
    uniform = gen.uniform(size=(n_uniform, D))
    local = center + local_sigma * gen.standard_normal(size=(n_local, D))
    return np.vstack([uniform, np.clip(local, 0.0, 1.0)])
