"""Bernoulli emission law with a logit link.

    logit(pi) = state + intercept[player] + beta . (home, scorediff, last30, ft2, ft3)

Slopes are shared across players; only the intercept is player-specific.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import expit

COVARIATE_NAMES = ("home", "scorediff", "last30", "ft2", "ft3")
N_COVARIATES = len(COVARIATE_NAMES)
SCOREDIFF_BOUND = 100
# linear predictor clamp; keeps log-emissions finite under wild optimizer proposals
ETA_CLAMP = 35.0


@dataclass(frozen=True)
class Covariates:
    home: int = 0
    scorediff: int = 0
    last30: int = 0
    ft2: int = 0
    ft3: int = 0

    def __post_init__(self) -> None:
        for name in ("home", "last30", "ft2", "ft3"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1, got {getattr(self, name)!r}")
        if self.ft2 and self.ft3:
            raise ValueError("ft2 and ft3 cannot both be 1")
        if int(self.scorediff) != self.scorediff or abs(self.scorediff) > SCOREDIFF_BOUND:
            raise ValueError(f"scorediff must be an integer within +-{SCOREDIFF_BOUND}, got {self.scorediff!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.home, self.scorediff, self.last30, self.ft2, self.ft3], dtype=float)


def validate_covariate_matrix(X: np.ndarray) -> None:
    """Row-wise checks equivalent to constructing a ``Covariates`` per row."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_COVARIATES:
        raise ValueError(f"covariate matrix must have shape (T, {N_COVARIATES})")
    for col in (0, 2, 3, 4):
        bad = ~np.isin(X[:, col], (0.0, 1.0))
        if bad.any():
            raise ValueError(f"{COVARIATE_NAMES[col]} must be 0 or 1 (row {int(np.argmax(bad))})")
    both = (X[:, 3] == 1) & (X[:, 4] == 1)
    if both.any():
        raise ValueError(f"ft2 and ft3 cannot both be 1 (row {int(np.argmax(both))})")
    sd = X[:, 1]
    if (sd != np.round(sd)).any() or (np.abs(sd) > SCOREDIFF_BOUND).any():
        raise ValueError(f"scorediff must be an integer within +-{SCOREDIFF_BOUND}")


@dataclass
class RegressionParams:
    intercepts: dict[str, float]
    beta: np.ndarray

    def __post_init__(self) -> None:
        self.intercepts = {str(k): float(v) for k, v in self.intercepts.items()}
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if self.beta.shape != (N_COVARIATES,):
            raise ValueError(f"beta must have {N_COVARIATES} entries, got {self.beta.shape[0]}")
        if not np.isfinite(self.beta).all():
            raise ValueError("beta must be finite")
        for player, value in self.intercepts.items():
            if not math.isfinite(value):
                raise ValueError(f"intercept for player {player!r} is not finite")

    @classmethod
    def zeros(cls, players) -> "RegressionParams":
        return cls({p: 0.0 for p in players}, np.zeros(N_COVARIATES))

    def intercept(self, player: str) -> float:
        try:
            return self.intercepts[str(player)]
        except KeyError:
            raise KeyError(f"no intercept for player {player!r}") from None

    def offsets(self, player: str, X: np.ndarray) -> np.ndarray:
        """State-free part of the linear predictor for each row of ``X``."""
        return self.intercept(player) + np.asarray(X, dtype=float) @ self.beta


def logistic(eta):
    return expit(np.clip(eta, -ETA_CLAMP, ETA_CLAMP))


def success_probability(state: float, cov: Covariates, reg: RegressionParams, player: str) -> float:
    eta = state + reg.intercept(player) + float(cov.as_array() @ reg.beta)
    return float(logistic(eta))


def emission_probability(y: int, state: float, cov: Covariates, reg: RegressionParams, player: str) -> float:
    if y not in (0, 1):
        raise ValueError(f"y must be 0 or 1, got {y!r}")
    pi = success_probability(state, cov, reg, player)
    return pi if y == 1 else 1.0 - pi


def log_emissions(y: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Log Bernoulli probabilities and d/d(eta) of them, eta already broadcast.

    The derivative is zero where the clamp is active.
    """
    clipped = np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
    # log(expit(x)) = -log1p(exp(-x)), computed stably on both sides
    log_p = -np.logaddexp(0.0, -clipped)
    log_q = -np.logaddexp(0.0, clipped)
    y = np.asarray(y, dtype=float)
    logp = np.where(y == 1.0, log_p, log_q)
    score = (y - expit(clipped)) * (np.abs(eta) < ETA_CLAMP)
    return logp, score


def as_mapping(reg: RegressionParams) -> Mapping[str, float]:
    out = {f"intercept[{p}]": v for p, v in sorted(reg.intercepts.items())}
    out.update({f"beta_{n}": float(b) for n, b in zip(COVARIATE_NAMES, reg.beta)})
    return out
