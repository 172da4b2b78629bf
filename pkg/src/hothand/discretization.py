"""Finite-grid approximation of the continuous state space.

Cell probabilities are exact Gaussian CDF differences over the cell
boundaries; mass outside ``[lower, upper]`` is folded into the two edge
cells so every vector and every transition row sums to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from hothand.ou import GaussianLaw, OUParams, conditional_law, stationary_law

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class StateGrid:
    lower: float = -2.0
    upper: float = 2.0
    m: int = 100
    boundaries: np.ndarray = field(init=False, repr=False, compare=False)
    midpoints: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("grid bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        b = np.linspace(self.lower, self.upper, int(self.m) + 1)
        b.setflags(write=False)
        mid = 0.5 * (b[:-1] + b[1:])
        mid.setflags(write=False)
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "midpoints", mid)

    @property
    def width(self) -> float:
        return (self.upper - self.lower) / self.m


def build_grid(lower: float = -2.0, upper: float = 2.0, m: int = 100) -> StateGrid:
    return StateGrid(lower, upper, m)


@dataclass(frozen=True)
class TransitionMatrix:
    matrix: np.ndarray
    delta: float


def _cell_mass(cdf: np.ndarray) -> np.ndarray:
    """Differences of CDF values at the m+1 boundaries, edge tails folded in."""
    p = np.diff(cdf, axis=-1)
    p[..., 0] += cdf[..., 0]
    p[..., -1] += 1.0 - cdf[..., -1]
    return p


def discretize_gaussian(grid: StateGrid, law: GaussianLaw) -> np.ndarray:
    """Probability of each grid cell under a Gaussian law.

    A zero-variance law puts all mass in the cell containing its mean; a mean
    sitting exactly on a boundary belongs to the cell above it.
    """
    if not math.isfinite(law.mean):
        raise ValueError("mean must be finite")
    if law.variance == 0.0:
        idx = int(np.searchsorted(grid.boundaries, law.mean, side="right")) - 1
        idx = min(max(idx, 0), grid.m - 1)
        out = np.zeros(grid.m)
        out[idx] = 1.0
        return out
    z = (grid.boundaries - law.mean) / law.sd
    p = _cell_mass(ndtr(z))
    return p / p.sum()


def initial_distribution(grid: StateGrid, params: OUParams) -> np.ndarray:
    return discretize_gaussian(grid, stationary_law(params))


def transition_matrix(grid: StateGrid, params: OUParams, delta: float) -> TransitionMatrix:
    """Row i is the discretized law of the next state given the midpoint of cell i."""
    if not (delta >= 0.0):
        raise ValueError(f"delta must be nonnegative, got {delta!r}")
    if delta == 0.0:
        return TransitionMatrix(np.eye(grid.m), 0.0)
    rows = [discretize_gaussian(grid, conditional_law(params, float(x), delta)) for x in grid.midpoints]
    return TransitionMatrix(np.vstack(rows), float(delta))


# -- batched kernels used by the likelihood engine -------------------------


def initial_with_derivatives(
    grid: StateGrid, theta: float, sigma: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stationary cell masses and their derivatives in (log theta, log sigma)."""
    sd = sigma / math.sqrt(2.0 * theta)
    z = grid.boundaries / sd
    p = _cell_mass(ndtr(z))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    # d z / d log(theta) = z / 2 ; d z / d log(sigma) = -z
    dz = pdf * z
    d_log_theta = np.diff(0.5 * dz)
    d_log_sigma = np.diff(-dz)
    # edge folding: the -inf / +inf boundaries carry zero density
    d_log_theta[0] += 0.5 * dz[0]
    d_log_theta[-1] -= 0.5 * dz[-1]
    d_log_sigma[0] -= dz[0]
    d_log_sigma[-1] += dz[-1]
    s = p.sum()
    return p / s, d_log_theta, d_log_sigma


def transition_stack(
    grid: StateGrid,
    theta: float,
    sigma: float,
    gaps: np.ndarray,
    derivatives: bool = False,
):
    """Transition matrices for an array of strictly positive gaps.

    Returns an array of shape ``(len(gaps), m, m)``; with ``derivatives``
    also the elementwise derivatives with respect to log theta and log sigma.
    """
    gaps = np.asarray(gaps, dtype=float)
    decay = np.exp(-theta * gaps)
    var = sigma**2 / (2.0 * theta) * -np.expm1(-2.0 * theta * gaps)
    sd = np.sqrt(var)
    x = grid.midpoints
    mean = decay[:, None] * x[None, :]  # (U, m)
    z = (grid.boundaries[None, None, :] - mean[:, :, None]) / sd[:, None, None]  # (U, m, m+1)
    cdf = ndtr(z)
    T = _cell_mass(cdf)
    T /= T.sum(axis=-1, keepdims=True)
    if not derivatives:
        return T

    pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    # d mean / d log theta = -theta * gap * mean ; d log sd / d log theta below
    dmean = (-theta * gaps)[:, None] * mean
    dlogsd = (-var + sigma**2 * gaps * decay**2) / (2.0 * var)
    dz_theta = -dmean[:, :, None] / sd[:, None, None] - z * dlogsd[:, None, None]
    dcdf_theta = pdf * dz_theta
    dcdf_sigma = -pdf * z
    dT_theta = _fold_derivative(dcdf_theta)
    dT_sigma = _fold_derivative(dcdf_sigma)
    return T, dT_theta, dT_sigma


def _fold_derivative(dcdf: np.ndarray) -> np.ndarray:
    d = np.diff(dcdf, axis=-1)
    d[..., 0] += dcdf[..., 0]
    d[..., -1] -= dcdf[..., -1]
    return d
