"""Ornstein-Uhlenbeck process with zero long-term mean.

    dS_t = theta * (0 - S_t) dt + sigma dB_t

Time is measured in minutes of game clock throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OUParams:
    """Drift (mean-reversion rate per minute) and diffusion of the form process."""

    theta: float
    sigma: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.theta) and self.theta > 0.0):
            raise ValueError(f"theta must be a positive finite number, got {self.theta!r}")
        if not (math.isfinite(self.sigma) and self.sigma > 0.0):
            raise ValueError(f"sigma must be a positive finite number, got {self.sigma!r}")

    @property
    def mu(self) -> float:
        # long-term mean is pinned at zero, never estimated
        return 0.0

    @property
    def stationary_variance(self) -> float:
        return self.sigma**2 / (2.0 * self.theta)


@dataclass(frozen=True)
class GaussianLaw:
    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mean):
            raise ValueError(f"mean must be finite, got {self.mean!r}")
        if not (self.variance >= 0.0):
            raise ValueError(f"variance must be nonnegative, got {self.variance!r}")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)


def conditional_law(params: OUParams, s_prev: float, delta: float) -> GaussianLaw:
    """Law of S_{t+delta} given S_t = s_prev.

    Mean ``exp(-theta*delta) * s_prev`` and variance
    ``sigma^2 / (2 theta) * (1 - exp(-2 theta delta))``. A zero gap gives a
    point mass at ``s_prev``.
    """
    if not math.isfinite(s_prev):
        raise ValueError(f"s_prev must be finite, got {s_prev!r}")
    if not (delta >= 0.0):
        raise ValueError(f"delta must be nonnegative, got {delta!r}")
    if delta == 0.0:
        return GaussianLaw(float(s_prev), 0.0)
    decay = math.exp(-params.theta * delta)
    variance = params.stationary_variance * -math.expm1(-2.0 * params.theta * delta)
    return GaussianLaw(decay * s_prev, variance)


def stationary_law(params: OUParams) -> GaussianLaw:
    return GaussianLaw(0.0, params.stationary_variance)


def _n_steps(t_end: float, dt: float) -> int:
    # guard against 48 / 0.01 = 4800.000000000001
    ratio = t_end / dt
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return int(nearest)
    return math.ceil(ratio)


def simulate_paths(
    params: OUParams,
    s0: float,
    t_end: float,
    dt: float,
    n_paths: int,
    seed: int,
    sigma_override: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Euler-Maruyama paths, vectorized over paths.

    Returns ``(times, states)`` with ``states`` of shape
    ``(n_paths, n_steps + 1)``. ``sigma_override`` lets callers run the
    noiseless limit (sigma = 0), which ``OUParams`` itself rejects.
    """
    if not (dt > 0.0) or not math.isfinite(dt):
        raise ValueError(f"dt must be positive, got {dt!r}")
    if not (t_end > 0.0) or not math.isfinite(t_end):
        raise ValueError(f"t_end must be positive, got {t_end!r}")
    if dt > t_end:
        raise ValueError(f"dt ({dt}) must not exceed t_end ({t_end})")
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    sigma = params.sigma if sigma_override is None else float(sigma_override)
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")

    n = _n_steps(t_end, dt)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, n_paths))
    keep = 1.0 - params.theta * dt
    scale = sigma * math.sqrt(dt)

    states = np.empty((n + 1, n_paths))
    states[0] = s0
    for k in range(n):
        states[k + 1] = keep * states[k] + scale * z[k]
    times = np.arange(n + 1) * dt
    return times, states.T.copy()


def simulate_trajectory(
    params: OUParams,
    s0: float,
    t_end: float,
    dt: float,
    seed: int,
    sigma_override: float | None = None,
) -> list[tuple[float, float]]:
    """Single seeded Euler-Maruyama path as ``[(time, state), ...]``.

    Has ``ceil(t_end / dt) + 1`` points, starting at ``(0, s0)``.
    """
    times, states = simulate_paths(params, s0, t_end, dt, 1, seed, sigma_override)
    return list(zip(times.tolist(), states[0].tolist()))
