import itertools
import math

import numpy as np
import pytest
from scipy.stats import norm

from hothand.inference import ThrowSequence
from hothand.observation import RegressionParams


def cell_probs(boundaries, mean, sd):
    """Independent cell-mass oracle (scipy.stats) with folded tails."""
    c = norm.cdf((np.asarray(boundaries) - mean) / sd)
    p = np.diff(c)
    p[0] += c[0]
    p[-1] += 1.0 - c[-1]
    return p


def oracle_matrices(grid, theta, sigma, gaps):
    """Initial vector and per-gap transition matrices built without the package kernels."""
    b, mid = grid.boundaries, grid.midpoints
    init = cell_probs(b, 0.0, sigma / math.sqrt(2 * theta))
    mats = []
    for gap in gaps:
        if gap == 0:
            mats.append(np.eye(grid.m))
            continue
        a = math.exp(-theta * gap)
        v = sigma**2 / (2 * theta) * (1 - a * a)
        mats.append(np.array([cell_probs(b, a * x, math.sqrt(v)) for x in mid]))
    return init, mats


def oracle_emissions(seq, reg, grid):
    eta = reg.offsets(seq.player, seq.X)[:, None] + grid.midpoints[None, :]
    pi = 1.0 / (1.0 + np.exp(-eta))
    return np.where(seq.y[:, None] == 1, pi, 1.0 - pi)


def brute_force_paths(seq, theta, sigma, reg, grid):
    """Joint probability of every cell path, by explicit enumeration."""
    init, mats = oracle_matrices(grid, theta, sigma, np.diff(seq.t))
    E = oracle_emissions(seq, reg, grid)
    out = {}
    for path in itertools.product(range(grid.m), repeat=len(seq)):
        p = init[path[0]] * E[0, path[0]]
        for k in range(1, len(seq)):
            p *= mats[k - 1][path[k - 1], path[k]] * E[k, path[k]]
        out[path] = p
    return out


def random_sequence(rng, length, player="a", game="g", zero_prob=0.4):
    gaps = np.where(rng.random(length - 1) < zero_prob, 0.0, rng.exponential(3.0, length - 1))
    t = np.cumsum(np.concatenate([[rng.uniform(0, 10)], gaps]))
    X = np.zeros((length, 5))
    X[:, 0] = rng.integers(0, 2)
    X[:, 1] = rng.integers(-15, 16, length)
    X[:, 2] = rng.integers(0, 2, length)
    pos = rng.integers(0, 3, length)
    X[:, 3] = pos == 1
    X[:, 4] = pos == 2
    return ThrowSequence(player, game, t, rng.integers(0, 2, length), X)


def random_instance(rng, length=5):
    theta = float(rng.uniform(0.05, 1.5))
    sigma = float(rng.uniform(0.2, 1.5))
    reg = RegressionParams({"a": float(rng.normal(0.8, 0.5))}, rng.normal(0, 0.15, 5))
    return random_sequence(rng, length), theta, sigma, reg


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance outcomes, echoed in the terminal summary so they show without -s
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
