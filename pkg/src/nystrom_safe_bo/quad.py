"""Planar quadrotor with a cascaded PID position controller.

The vehicle moves in the xz-plane and is driven by two thrust pairs
``T1`` (left) and ``T2`` (right)::

    x''     = sin(theta) * (T1 + T2) / m
    z''     = cos(theta) * (T1 + T2) / m - g
    theta'' = (T2 - T1) * d / I_yy

The controller is the usual planar cascade: the x-loop commands a pitch
reference, the z-loop commands total thrust and the pitch loop commands the
thrust difference.  Nine gains, ``(P, I, D)`` for each of the ``x``, ``z`` and
``theta`` loops, are the tuning parameters.

An episode tracks a horizontal figure-8 for a number of laps; the quadratic
tracking cost over the post-warmup part is turned into a performance value
that is negative whenever the run leaves the safety box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

GAIN_NAMES = (
    "x_p", "x_i", "x_d",
    "z_p", "z_i", "z_d",
    "theta_p", "theta_i", "theta_d",
)

TRACE_COLUMNS = ("t", "x", "z", "theta", "x_ref", "z_ref", "theta_ref", "T1", "T2")


@dataclass(frozen=True)
class QuadParams:
    """Physical constants (Crazyflie-class defaults, SI units)."""

    m: float = 0.027
    g: float = 9.81
    arm_l: float = 0.0397
    I_yy: float = 1.4e-5
    T_max: float = 0.25
    dt: float = 0.02

    def __post_init__(self):
        for name in ("m", "g", "arm_l", "I_yy", "T_max", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"QuadParams.{name} must be positive")

    @property
    def d(self) -> float:
        """Effective moment arm."""
        return self.arm_l / math.sqrt(2.0)

    @property
    def hover_thrust(self) -> float:
        return 0.5 * self.m * self.g


class QuadState(NamedTuple):
    x: float = 0.0
    x_dot: float = 0.0
    z: float = 0.0
    z_dot: float = 0.0
    theta: float = 0.0
    theta_dot: float = 0.0

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self)


class PidState(NamedTuple):
    """Integrator memory of the three loops plus the last commanded pitch."""

    int_x: float = 0.0
    int_z: float = 0.0
    int_theta: float = 0.0
    theta_ref: float = 0.0


@dataclass(frozen=True)
class GainBounds:
    """Per-gain box used to map between physical and unit-box gains."""

    low: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    high: tuple = (1.5, 0.5, 0.6, 20.0, 2.0, 10.0, 0.8, 0.05, 0.05)

    def __post_init__(self):
        low = np.asarray(self.low, dtype=float)
        high = np.asarray(self.high, dtype=float)
        if low.shape != (9,) or high.shape != (9,):
            raise ValueError("gain bounds need exactly 9 entries")
        if np.any(high <= low):
            bad = GAIN_NAMES[int(np.argmax(high <= low))]
            raise ValueError(f"empty bound interval for gain {bad!r}")

    def to_unit(self, gains) -> np.ndarray:
        low, high = np.asarray(self.low), np.asarray(self.high)
        return (np.asarray(gains, dtype=float) - low) / (high - low)

    def from_unit(self, u) -> np.ndarray:
        low, high = np.asarray(self.low), np.asarray(self.high)
        return low + np.asarray(u, dtype=float) * (high - low)

    def check(self, gains, tol: float = 1e-12) -> None:
        """Raise ``ValueError`` naming the first gain outside the box."""
        g = np.asarray(gains, dtype=float)
        if g.shape != (9,):
            raise ValueError(f"expected 9 gains, got shape {g.shape}")
        for i, name in enumerate(GAIN_NAMES):
            if not (self.low[i] - tol <= g[i] <= self.high[i] + tol):
                raise ValueError(
                    f"gain {name}={g[i]!r} outside [{self.low[i]}, {self.high[i]}]"
                )


@dataclass(frozen=True)
class PidGains:
    """Nine physical gains ordered as :data:`GAIN_NAMES`."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != 9:
            raise ValueError("PidGains needs exactly 9 values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_unit(cls, u, bounds: GainBounds) -> "PidGains":
        return cls(tuple(bounds.from_unit(u)))

    def to_unit(self, bounds: GainBounds) -> np.ndarray:
        return bounds.to_unit(self.values)

    def as_dict(self) -> dict:
        return dict(zip(GAIN_NAMES, self.values))


@dataclass(frozen=True)
class EpisodeConfig:
    """Reference, cost, safety box and reward scaling for one episode.

    ``L_expected`` defaults to ``laps * period / dt`` steps when left at 0.
    The first ``warmup_steps`` (default: one lap) are simulated but not
    charged.
    """

    Q: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 0.1))
    R: tuple = ((1.0, 0.0), (0.0, 1.0))
    L_expected: int = 0
    warmup_steps: int = -1
    lam: float = 1.0
    penalty_weight: float = 200.0
    reward_scale: float = 3.0
    reward_offset: float = 84.5
    x_max: float = 2.0
    z_max: float = 2.5
    theta_max: float = 1.2
    A: float = 0.75
    B: float = 0.35
    z_c: float = 1.0
    period: float = 6.0
    laps: int = 2
    theta_ref_max: float = 0.5
    dT_max: float = 0.05
    integral_limit: float = 1.0
    init_speed_max: float = 0.05
    seed: int = 0
    dt: float = 0.02

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if Q.shape != (3, 3) or R.shape != (2, 2):
            raise ValueError("Q must be 3x3 and R must be 2x2")
        for name, M in (("Q", Q), ("R", R)):
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be symmetric positive semidefinite")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")
        if self.period <= 0 or self.laps < 1:
            raise ValueError("period must be positive and laps >= 1")
        steps_per_lap = int(round(self.period / self.dt))
        if self.L_expected <= 0:
            object.__setattr__(self, "L_expected", steps_per_lap * self.laps)
        if self.warmup_steps < 0:
            object.__setattr__(
                self, "warmup_steps", min(steps_per_lap, self.L_expected - 1)
            )
        if self.L_expected < 1:
            raise ValueError("L_expected must be >= 1")


@dataclass
class EpisodeResult:
    J_Q: float
    L: int
    L_expected: int
    cause: str | None = None
    trace: np.ndarray = field(default_factory=lambda: np.empty((0, len(TRACE_COLUMNS))))

    @property
    def terminated_early(self) -> bool:
        return self.L < self.L_expected


def _accel(s, T1, T2, m, g, k_theta):
    f = (T1 + T2) / m
    return (
        s[1],
        math.sin(s[4]) * f,
        s[3],
        math.cos(s[4]) * f - g,
        s[5],
        (T2 - T1) * k_theta,
    )


def dynamics_step(state: QuadState, T1: float, T2: float, params: QuadParams,
                  dt: float | None = None) -> QuadState:
    """Advance one step with classical RK4, thrusts held over the step."""
    h = params.dt if dt is None else dt
    m, g, k_theta = params.m, params.g, params.d / params.I_yy
    s = tuple(state)
    k1 = _accel(s, T1, T2, m, g, k_theta)
    k2 = _accel(tuple(a + 0.5 * h * b for a, b in zip(s, k1)), T1, T2, m, g, k_theta)
    k3 = _accel(tuple(a + 0.5 * h * b for a, b in zip(s, k2)), T1, T2, m, g, k_theta)
    k4 = _accel(tuple(a + h * b for a, b in zip(s, k3)), T1, T2, m, g, k_theta)
    return QuadState(*(
        a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(s, k1, k2, k3, k4)
    ))


def _clip(v, lo, hi):
    return lo if v < lo else hi if v > hi else v


def pid_controller(gains: PidGains, state: QuadState, ref, ctl: PidState,
                   params: QuadParams, config: EpisodeConfig):
    """One control update of the x/z/theta cascade.

    Returns ``(T1, T2, new_ctl)``; ``new_ctl.theta_ref`` holds the pitch
    command produced by the x-loop.  Derivative terms act on measured rates.
    """
    xp, xi, xd, zp, zi, zd, tp, ti, td = gains.values
    dt, lim = config.dt, config.integral_limit
    x_ref, z_ref = ref

    e_z = z_ref - state.z
    int_z = _clip(ctl.int_z + e_z * dt, -lim, lim)
    F = params.m * (params.g + zp * e_z + zi * int_z - zd * state.z_dot)
    F = _clip(F, 0.0, 2.0 * params.T_max)

    e_x = x_ref - state.x
    int_x = _clip(ctl.int_x + e_x * dt, -lim, lim)
    theta_ref = xp * e_x + xi * int_x - xd * state.x_dot
    theta_ref = _clip(theta_ref, -config.theta_ref_max, config.theta_ref_max)

    e_t = theta_ref - state.theta
    int_t = _clip(ctl.int_theta + e_t * dt, -lim, lim)
    dT = tp * e_t + ti * int_t - td * state.theta_dot
    dT = _clip(dT, -config.dT_max, config.dT_max)

    T1 = _clip(0.5 * (F - dT), 0.0, params.T_max)
    T2 = _clip(0.5 * (F + dT), 0.0, params.T_max)
    return T1, T2, PidState(int_x, int_z, int_t, theta_ref)


def figure8_reference(t: float, config: EpisodeConfig):
    """Lemniscate ``(A sin wt, z_c + B sin 2wt)`` with ``w = 2 pi / period``."""
    w = 2.0 * math.pi / config.period
    return config.A * math.sin(w * t), config.z_c + config.B * math.sin(2.0 * w * t)


def initial_state(config: EpisodeConfig) -> QuadState:
    """Hover at the trajectory start with a small seeded random velocity."""
    rng = np.random.default_rng(config.seed)
    speed = config.init_speed_max * rng.uniform()
    heading = rng.uniform(0.0, 2.0 * math.pi)
    x0, z0 = figure8_reference(0.0, config)
    return QuadState(x0, speed * math.cos(heading), z0, speed * math.sin(heading), 0.0, 0.0)


def _out_of_box(s: QuadState, cfg: EpisodeConfig) -> bool:
    return abs(s.x) > cfg.x_max or s.z < 0.0 or s.z > cfg.z_max or abs(s.theta) > cfg.theta_max


def run_episode(gains: PidGains, params: QuadParams, config: EpisodeConfig,
                initial: QuadState | None = None, reference=None) -> EpisodeResult:
    """Simulate one tracking run.

    ``reference`` overrides the figure-8 with any callable ``t -> (x, z)``.
    """
    if abs(config.dt - params.dt) > 1e-15:
        raise ValueError("EpisodeConfig.dt and QuadParams.dt differ")
    ref_fn = reference or (lambda t: figure8_reference(t, config))
    state = initial_state(config) if initial is None else QuadState(*initial)
    Q = np.asarray(config.Q, dtype=float)
    R = np.asarray(config.R, dtype=float)
    u_ref = params.hover_thrust
    dt = params.dt

    ctl = PidState()
    cost = 0.0
    rows = []
    L = 0
    cause = None
    for k in range(config.L_expected):
        t = k * dt
        ref = ref_fn(t)
        T1, T2, ctl = pid_controller(gains, state, ref, ctl, params, config)
        rows.append((t, state.x, state.z, state.theta, ref[0], ref[1], ctl.theta_ref, T1, T2))
        if k >= config.warmup_steps:
            e = np.array([state.x - ref[0], state.z - ref[1], state.theta - ctl.theta_ref])
            du = np.array([T1 - u_ref, T2 - u_ref])
            cost += 0.5 * (e @ Q @ e) + 0.5 * (du @ R @ du)
        state = dynamics_step(state, T1, T2, params)
        if not state.is_finite():
            cause = "non-finite"
            break
        if _out_of_box(state, config):
            cause = "boundary"
            break
        L = k + 1
    if cause is None:
        # terminal state term, charged against the last commanded pitch
        t = L * dt
        ref = ref_fn(t)
        if L > config.warmup_steps:
            e = np.array([state.x - ref[0], state.z - ref[1], state.theta - ctl.theta_ref])
            cost += 0.5 * (e @ Q @ e)
    return EpisodeResult(J_Q=float(cost), L=L, L_expected=config.L_expected,
                         cause=cause, trace=np.array(rows, dtype=float))


def performance(result: EpisodeResult, config: EpisodeConfig) -> float:
    """Scaled reward minus the incompletion penalty."""
    J_R = -result.J_Q
    scaled = config.reward_scale * J_R + config.reward_offset
    frac = result.L / config.L_expected
    return scaled - config.penalty_weight * (1.0 - config.lam * frac * frac)


@dataclass(frozen=True)
class QuadrotorBenchmark:
    """Everything needed to turn a unit-box gain vector into a performance."""

    params: QuadParams = QuadParams()
    episode: EpisodeConfig = EpisodeConfig()
    bounds: GainBounds = GainBounds()
    default_gains: tuple = (0.5, 0.0, 0.3, 10.0, 0.5, 4.0, 0.3, 0.0, 0.01)

    def gains(self, u) -> PidGains:
        return PidGains.from_unit(np.clip(np.asarray(u, dtype=float), 0.0, 1.0), self.bounds)

    def episode_result(self, u) -> EpisodeResult:
        return run_episode(self.gains(u), self.params, self.episode)

    def __call__(self, u) -> float:
        return objective(u, self)

    @property
    def default_unit(self) -> np.ndarray:
        return self.bounds.to_unit(self.default_gains)


def objective(gains_normalized, env: QuadrotorBenchmark) -> float:
    """Performance of the unit-box gain vector under ``env``."""
    u = np.asarray(gains_normalized, dtype=float)
    if u.shape != (9,):
        raise ValueError(f"expected a 9-vector, got shape {u.shape}")
    if np.any(u < -1e-12) or np.any(u > 1 + 1e-12):
        raise ValueError("normalized gains must lie in the unit box")
    return performance(env.episode_result(u), env.episode)
