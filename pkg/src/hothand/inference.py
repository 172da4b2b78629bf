"""Forward-algorithm likelihood and Viterbi decoding on the state grid.

Sequences are evaluated in batches sorted by length, so at each step the
still-active sequences form a prefix of the batch. Transition matrices are
built once per distinct positive gap within a batch step; zero gaps (throws
inside one free-throw set) use the identity and skip the matrix product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from hothand.discretization import StateGrid, initial_with_derivatives, transition_stack
from hothand.observation import (
    N_COVARIATES,
    Covariates,
    RegressionParams,
    log_emissions,
    validate_covariate_matrix,
)
from hothand.ou import OUParams

# per-batch memory budgets, in float64 elements
_STEP_BUDGET = 2_000_000
_STORE_BUDGET = 20_000_000


@dataclass(frozen=True, eq=False)
class ThrowSequence:
    """One player's free throws in one game, ordered by time."""

    player: str
    game: str
    t: np.ndarray
    y: np.ndarray
    X: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float).reshape(-1)
        y = np.asarray(self.y).reshape(-1)
        X = np.asarray(self.X, dtype=float).reshape(len(t), N_COVARIATES) if len(t) else np.zeros((0, N_COVARIATES))
        if len(t) == 0:
            raise ValueError(f"sequence ({self.player}, {self.game}) is empty")
        if len(y) != len(t):
            raise ValueError(f"sequence ({self.player}, {self.game}): t and y lengths differ")
        if not np.isfinite(t).all() or (t < 0).any():
            raise ValueError(f"sequence ({self.player}, {self.game}): times must be finite and >= 0")
        if (np.diff(t) < 0).any():
            raise ValueError(f"sequence ({self.player}, {self.game}): times must be nondecreasing")
        if not np.isin(y, (0, 1)).all():
            raise ValueError(f"sequence ({self.player}, {self.game}): outcomes must be 0 or 1")
        try:
            validate_covariate_matrix(X)
        except ValueError as exc:
            raise ValueError(f"sequence ({self.player}, {self.game}): {exc}") from None
        for name, arr in (("t", t), ("y", y.astype(np.int8)), ("X", X)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "player", str(self.player))
        object.__setattr__(self, "game", str(self.game))

    @classmethod
    def from_records(cls, player, game, records: Iterable[tuple[float, int, Covariates]]) -> "ThrowSequence":
        records = list(records)
        return cls(
            player,
            game,
            np.array([r[0] for r in records], dtype=float),
            np.array([r[1] for r in records], dtype=np.int8),
            np.array([r[2].as_array() for r in records]).reshape(len(records), N_COVARIATES),
        )

    def __len__(self) -> int:
        return len(self.t)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.t)

    @property
    def records(self) -> list[tuple[float, int, Covariates]]:
        out = []
        for t, y, x in zip(self.t, self.y, self.X):
            cov = Covariates(int(x[0]), int(x[1]), int(x[2]), int(x[3]), int(x[4]))
            out.append((float(t), int(y), cov))
        return out

    def shifted(self, offset: float) -> "ThrowSequence":
        return ThrowSequence(self.player, self.game, self.t + offset, self.y, self.X)


@dataclass(frozen=True)
class DecodedSequence:
    player: str
    game: str
    t: np.ndarray
    y: np.ndarray
    cells: np.ndarray
    states: np.ndarray
    log_joint: float

    def __len__(self) -> int:
        return len(self.cells)


class PackedData:
    """Padded arrays for a list of sequences, reusable across evaluations."""

    def __init__(self, seqs: Sequence[ThrowSequence], players: Sequence[str] | None = None):
        self.seqs = list(seqs)
        if players is None:
            players = sorted({s.player for s in self.seqs})
        self.players = list(players)
        index = {p: i for i, p in enumerate(self.players)}
        for s in self.seqs:
            if s.player not in index:
                raise KeyError(f"sequence ({s.player}, {s.game}): unknown player {s.player!r}")

        n = len(self.seqs)
        lengths = np.array([len(s) for s in self.seqs], dtype=int)
        # longest first, input order as tiebreak
        self.order = np.argsort(-lengths, kind="stable")
        self.lengths = lengths[self.order]
        T = int(self.lengths.max()) if n else 0
        self.gaps = np.zeros((n, T))
        self.y = np.zeros((n, T))
        self.X = np.zeros((n, T, N_COVARIATES))
        self.pidx = np.zeros(n, dtype=int)
        for row, k in enumerate(self.order):
            s = self.seqs[k]
            L = len(s)
            self.gaps[row, 1:L] = np.diff(s.t)
            self.y[row, :L] = s.y
            self.X[row, :L] = s.X
            self.pidx[row] = index[s.player]
        self.n_obs = int(lengths.sum())

    def __len__(self) -> int:
        return len(self.seqs)

    def offsets(self, intercepts: np.ndarray, beta: np.ndarray) -> np.ndarray:
        return intercepts[self.pidx][:, None] + self.X @ beta

    def batches(self, m: int, store: bool) -> Iterable[tuple[int, int]]:
        start, n = 0, len(self.seqs)
        while start < n:
            T = int(self.lengths[start])
            size = _STEP_BUDGET // (m * m)
            if store:
                size = min(size, _STORE_BUDGET // (T * m * m))
            size = max(1, size)
            yield start, min(n, start + size)
            start += size

    def intercept_vector(self, reg: RegressionParams) -> np.ndarray:
        return np.array([reg.intercept(p) for p in self.players])


@dataclass
class EngineResult:
    loglik: np.ndarray  # per sequence, input order
    d_log_theta: float = 0.0
    d_log_sigma: float = 0.0
    d_intercepts: np.ndarray | None = None
    d_beta: np.ndarray | None = None


def forward_engine(
    packed: PackedData,
    grid: StateGrid,
    theta: float,
    sigma: float,
    intercepts: np.ndarray,
    beta: np.ndarray,
    gradient: bool = False,
) -> EngineResult:
    """Scaled forward recursion over all sequences, optionally with the exact gradient.

    The gradient comes from a scaled backward pass: with normalized forward
    vectors a_t, backward vectors b_t and scale factors c_t,
    d logL / d T_t[i, j] = a_{t-1}[i] e_t[j] b_t[j] / c_t and
    d logL / d eta_t[j] = a_t[j] b_t[j] (y_t - pi_t[j]).
    """
    m = grid.m
    mid = grid.midpoints
    n = len(packed)
    ll_sorted = np.zeros(n)
    init, dinit_t, dinit_s = initial_with_derivatives(grid, theta, sigma)
    offsets = packed.offsets(intercepts, beta)
    g_eta = np.zeros_like(offsets) if gradient else None
    g_theta = 0.0
    g_sigma = 0.0

    for lo, hi in packed.batches(m, store=gradient):
        lengths = packed.lengths[lo:hi]
        T = int(lengths[0])
        # active[tau] = number of sequences with length > tau
        active = [int((lengths > tau).sum()) for tau in range(T)]
        eta = offsets[lo:hi, :T, None] + mid[None, None, :]
        logE, score = log_emissions(packed.y[lo:hi, :T, None], eta)
        E = np.exp(logE)
        gaps = packed.gaps[lo:hi]

        a = init[None, :] * E[:, 0]
        c = a.sum(axis=1)
        a /= c[:, None]
        ll = np.log(c)
        if gradient:
            alphas = [a.copy()]
            scales = [c]
            steps = [None]
        for tau in range(1, T):
            k = active[tau]
            prev = a[:k]
            g = gaps[:k, tau]
            pos = g > 0.0
            pred = prev.copy()
            step = None
            if pos.any():
                u, inv = np.unique(g[pos], return_inverse=True)
                if gradient:
                    Tu, dTt, dTs = transition_stack(grid, theta, sigma, u, derivatives=True)
                    A = prev[pos][:, None, :]
                    r_t = np.matmul(A, dTt[inv])[:, 0, :]
                    r_s = np.matmul(A, dTs[inv])[:, 0, :]
                    step = (pos, Tu, inv, r_t, r_s)
                else:
                    Tu = transition_stack(grid, theta, sigma, u)
                pred[pos] = np.matmul(prev[pos][:, None, :], Tu[inv])[:, 0, :]
            new = pred * E[:k, tau]
            c = new.sum(axis=1)
            a[:k] = new / c[:, None]
            ll[:k] += np.log(c)
            if gradient:
                alphas.append(a.copy())
                scales.append(c)
                steps.append(step)
        ll_sorted[lo:hi] = ll

        if not gradient:
            continue
        b = np.ones_like(a)
        for tau in range(T - 1, 0, -1):
            k = active[tau]
            gamma = alphas[tau][:k] * b[:k]
            g_eta[lo : lo + k, tau] = (gamma * score[:k, tau]).sum(axis=1)
            w = E[:k, tau] * b[:k] / scales[tau][:, None]
            nb = w.copy()
            step = steps[tau]
            if step is not None:
                pos, Tu, inv, r_t, r_s = step
                wp = w[pos]
                g_theta += float((r_t * wp).sum())
                g_sigma += float((r_s * wp).sum())
                nb[pos] = np.matmul(Tu[inv], wp[:, :, None])[:, :, 0]
            b[:k] = nb
        gamma = alphas[0] * b
        g_eta[lo:hi, 0] = (gamma * score[:, 0]).sum(axis=1)
        w0 = E[:, 0] * b / scales[0][:, None]
        g_theta += float((w0 @ dinit_t).sum())
        g_sigma += float((w0 @ dinit_s).sum())

    loglik = np.empty(n)
    loglik[packed.order] = ll_sorted
    if not gradient:
        return EngineResult(loglik)
    d_int = np.bincount(packed.pidx, weights=g_eta.sum(axis=1), minlength=len(packed.players))
    d_beta = np.einsum("st,stk->k", g_eta, packed.X)
    return EngineResult(loglik, g_theta, g_sigma, d_int, d_beta)


def _check_known(seqs: Sequence[ThrowSequence], reg: RegressionParams) -> None:
    for s in seqs:
        if s.player not in reg.intercepts:
            raise KeyError(f"sequence ({s.player}, {s.game}): unknown player {s.player!r}")


def sequence_logliks(
    data: Sequence[ThrowSequence], ou: OUParams, reg: RegressionParams, grid: StateGrid
) -> np.ndarray:
    """Per-sequence log-likelihoods, in input order."""
    data = list(data)
    if not data:
        return np.zeros(0)
    _check_known(data, reg)
    packed = PackedData(data)
    res = forward_engine(packed, grid, ou.theta, ou.sigma, packed.intercept_vector(reg), reg.beta)
    return res.loglik


def sequence_loglik(seq: ThrowSequence, ou: OUParams, reg: RegressionParams, grid: StateGrid) -> float:
    return float(sequence_logliks([seq], ou, reg, grid)[0])


def total_loglik(data: Sequence[ThrowSequence], ou: OUParams, reg: RegressionParams, grid: StateGrid) -> float:
    """Sum of sequence log-likelihoods; exactly rounded, so independent of order."""
    return math.fsum(sequence_logliks(data, ou, reg, grid).tolist())


def benchmark_logliks(data: Sequence[ThrowSequence], reg: RegressionParams) -> np.ndarray:
    data = list(data)
    _check_known(data, reg)
    out = np.empty(len(data))
    for i, s in enumerate(data):
        logp, _ = log_emissions(s.y, reg.offsets(s.player, s.X))
        out[i] = math.fsum(logp.tolist())
    return out


def benchmark_loglik(data: Sequence[ThrowSequence], reg: RegressionParams) -> float:
    """Logistic-regression log-likelihood, i.e. the model with the state fixed at 0."""
    return math.fsum(benchmark_logliks(data, reg).tolist())


def viterbi_decode(seq: ThrowSequence, ou: OUParams, reg: RegressionParams, grid: StateGrid) -> DecodedSequence:
    """Most probable cell path given the observations.

    Runs in log space. Ties go to the lower cell index, both when choosing
    a predecessor and when choosing the final cell.
    """
    _check_known([seq], reg)
    init, _, _ = initial_with_derivatives(grid, ou.theta, ou.sigma)
    eta = reg.offsets(seq.player, seq.X)[:, None] + grid.midpoints[None, :]
    logE, _ = log_emissions(seq.y[:, None], eta)
    gaps = seq.gaps
    log_T = {}
    pos = np.unique(gaps[gaps > 0])
    with np.errstate(divide="ignore"):
        log_init = np.log(init)
        if len(pos):
            for gap, mat in zip(pos.tolist(), transition_stack(grid, ou.theta, ou.sigma, pos)):
                log_T[gap] = np.log(mat)
        log_eye = np.log(np.eye(grid.m))

    n = len(seq)
    back = np.zeros((n, grid.m), dtype=int)
    delta = log_init + logE[0]
    for tau in range(1, n):
        gap = float(gaps[tau - 1])
        lt = log_T[gap] if gap > 0 else log_eye
        cand = delta[:, None] + lt
        back[tau] = np.argmax(cand, axis=0)
        delta = cand[back[tau], np.arange(grid.m)] + logE[tau]
    cells = np.empty(n, dtype=int)
    cells[-1] = int(np.argmax(delta))
    best = float(delta[cells[-1]])
    for tau in range(n - 1, 0, -1):
        cells[tau - 1] = back[tau, cells[tau]]
    return DecodedSequence(seq.player, seq.game, seq.t.copy(), seq.y.copy(), cells, grid.midpoints[cells], best)
