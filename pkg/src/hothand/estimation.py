"""Maximum-likelihood fitting, Wald intervals and information criteria.

Both models are optimized over an unconstrained working vector:

    SSM:        (log theta, log sigma, intercept_1..intercept_P, beta_1..beta_5)
    benchmark:  (intercept_1..intercept_P, beta_1..beta_5)

Players are ordered by sorted id.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logit

from hothand.discretization import StateGrid
from hothand.inference import PackedData, ThrowSequence, forward_engine
from hothand.observation import COVARIATE_NAMES, N_COVARIATES, RegressionParams, log_emissions
from hothand.ou import OUParams

log = logging.getLogger(__name__)

Z_95 = 1.959963984540054


@dataclass
class OptimizerConfig:
    tol_grad: float = 1e-5
    tol_rel: float = 1e-8
    max_iter: int = 500
    n_starts: int = 1
    seed: int = 0
    start_jitter: float = 0.5
    polish: bool = True

    def __post_init__(self) -> None:
        if not self.tol_grad > 0 or not self.tol_rel > 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.n_starts < 1:
            raise ValueError("max_iter and n_starts must be >= 1")
        if self.start_jitter < 0:
            raise ValueError("start_jitter must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitResult:
    kind: str  # "ssm" or "benchmark"
    ou: OUParams | None
    reg: RegressionParams
    loglik: float
    k: int
    n: int
    names: list[str]
    x: np.ndarray
    iterations: int = 0
    converged: bool = False
    grad_norm: float = math.nan
    message: str = ""
    history: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    se: np.ndarray | None = None
    ci: dict[str, tuple[float, float]] | None = None
    ci_status: str = "not computed"
    grid: tuple[float, float, int] | None = None

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.k

    @property
    def bic(self) -> float:
        return -2.0 * self.loglik + self.k * math.log(self.n)

    def estimates(self) -> dict[str, float]:
        """Natural-scale estimates keyed like the confidence intervals."""
        out: dict[str, float] = {}
        if self.ou is not None:
            out["theta"] = self.ou.theta
            out["sigma"] = self.ou.sigma
        for p in sorted(self.reg.intercepts):
            out[f"intercept[{p}]"] = self.reg.intercepts[p]
        for name, b in zip(COVARIATE_NAMES, self.reg.beta):
            out[f"beta_{name}"] = float(b)
        return out

    @property
    def players(self) -> list[str]:
        return sorted(self.reg.intercepts)


def _sequences(data) -> list[ThrowSequence]:
    return list(getattr(data, "sequences", data))


def parameter_names(players: Sequence[str], ssm: bool) -> list[str]:
    names = ["log_theta", "log_sigma"] if ssm else []
    names += [f"intercept[{p}]" for p in players]
    names += [f"beta_{n}" for n in COVARIATE_NAMES]
    return names


def separated_players(data) -> list[str]:
    """Players whose outcomes are all makes or all misses (no finite intercept MLE)."""
    made: dict[str, set] = {}
    for s in _sequences(data):
        made.setdefault(s.player, set()).update(np.unique(s.y).tolist())
    return sorted(p for p, v in made.items() if len(v) == 1)


def starting_values(data, players: Sequence[str], ssm: bool) -> np.ndarray:
    hits = dict.fromkeys(players, 0.0)
    tries = dict.fromkeys(players, 0)
    for s in _sequences(data):
        hits[s.player] += float(s.y.sum())
        tries[s.player] += len(s)
    rates = np.array([hits[p] / tries[p] if tries[p] else 0.5 for p in players])
    with np.errstate(divide="ignore"):
        icpt = np.clip(logit(rates), -3.0, 3.0)
    head = [math.log(0.1), math.log(0.1)] if ssm else []
    return np.concatenate([head, icpt, np.zeros(N_COVARIATES)])


_LOG_SCALE_LIMIT = 30.0


class _Objective:
    """Negative log-likelihood and gradient on the working scale, memoized on x."""

    def __init__(self, fn: Callable[[np.ndarray], tuple[float, np.ndarray]]):
        self.fn = fn
        self._x = None
        self._val = None
        self.n_calls = 0

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if self._x is None or not np.array_equal(x, self._x):
            self.n_calls += 1
            ll, grad = self.fn(x)
            self._x = x.copy()
            self._val = (-ll, -grad)
        return self._val


def ssm_loglik_and_grad(packed: PackedData, grid: StateGrid) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    P = len(packed.players)

    def fn(x: np.ndarray) -> tuple[float, np.ndarray]:
        if max(abs(x[0]), abs(x[1])) > _LOG_SCALE_LIMIT:
            # far outside any usable range; report as infeasible so line searches back off
            return -math.inf, np.zeros_like(x)
        theta, sigma = math.exp(x[0]), math.exp(x[1])
        res = forward_engine(packed, grid, theta, sigma, x[2 : 2 + P], x[2 + P :], gradient=True)
        grad = np.concatenate([[res.d_log_theta, res.d_log_sigma], res.d_intercepts, res.d_beta])
        return math.fsum(res.loglik.tolist()), grad

    return fn


def benchmark_loglik_and_grad(packed: PackedData) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    P = len(packed.players)
    mask = np.arange(packed.y.shape[1])[None, :] < packed.lengths[:, None]

    def fn(x: np.ndarray) -> tuple[float, np.ndarray]:
        eta = packed.offsets(x[:P], x[P:])
        logp, score = log_emissions(packed.y, eta)
        score = score * mask
        d_int = np.bincount(packed.pidx, weights=score.sum(axis=1), minlength=P)
        d_beta = np.einsum("st,stk->k", score, packed.X)
        return math.fsum(logp[mask].tolist()), np.concatenate([d_int, d_beta])

    return fn


def numerical_hessian(
    fun: Callable[[np.ndarray], float],
    x: np.ndarray,
    grad: Callable[[np.ndarray], np.ndarray] | None = None,
    rel_step: float | None = None,
) -> np.ndarray:
    """Symmetrized central-difference Hessian.

    Differences the gradient when one is supplied, otherwise uses second
    differences of ``fun``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    H = np.empty((n, n))
    if grad is not None:
        rel = 1e-5 if rel_step is None else rel_step
        for i in range(n):
            h = rel * max(1.0, abs(x[i]))
            e = np.zeros(n)
            e[i] = h
            H[i] = (grad(x + e) - grad(x - e)) / (2.0 * h)
        return 0.5 * (H + H.T)

    rel = 1e-4 if rel_step is None else rel_step
    steps = rel * np.maximum(1.0, np.abs(x))
    f0 = fun(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = steps[i]
        H[i, i] = (fun(x + ei) - 2.0 * f0 + fun(x - ei)) / steps[i] ** 2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = steps[j]
            H[i, j] = H[j, i] = (
                fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
    return H


def standard_errors(hess: np.ndarray) -> np.ndarray | None:
    """Square roots of the diagonal of the inverse Hessian; None unless positive definite."""
    hess = np.asarray(hess, dtype=float)
    if not np.isfinite(hess).all():
        return None
    try:
        L = np.linalg.cholesky(hess)
    except np.linalg.LinAlgError:
        return None
    Linv = np.linalg.solve(L, np.eye(len(hess)))
    cov = Linv.T @ Linv
    return np.sqrt(np.diag(cov))


def _newton_polish(obj: _Objective, x: np.ndarray, tol: float, max_steps: int = 4) -> tuple[np.ndarray, int]:
    """Newton steps on the gradient for when line-search BFGS stalls on rounding noise."""
    steps = 0
    f, g = obj(x)
    for _ in range(max_steps):
        if np.abs(g).max() < tol:
            break
        H = numerical_hessian(None, x, grad=lambda z: obj(z)[1])
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            break
        cand = x - np.linalg.solve(H, g)
        f_new, g_new = obj(cand)
        if not (np.abs(g_new).max() < np.abs(g).max() and f_new <= f + 1e-9 * max(1.0, abs(f))):
            break
        x, f, g = cand, f_new, g_new
        steps += 1
    return x, steps


def _optimize(obj: _Objective, x0: np.ndarray, config: OptimizerConfig):
    history: list[float] = []

    def callback(intermediate_result):
        ll = -float(intermediate_result.fun)
        history.append(max(ll, history[-1]) if history else ll)

    f0, g0 = obj(x0)
    history.append(-f0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(
            lambda z: obj(z),
            x0,
            jac=True,
            method="BFGS",
            callback=callback,
            options={"gtol": config.tol_grad, "norm": np.inf, "maxiter": config.max_iter},
        )
    x = res.x
    iterations = int(res.nit)
    message = str(res.message)
    f, g = obj(x)
    if config.polish and np.abs(g).max() >= config.tol_grad and np.isfinite(f):
        x, extra = _newton_polish(obj, x, config.tol_grad)
        if extra:
            iterations += extra
            f, g = obj(x)
            history.append(max(-f, history[-1]))
            message += f"; {extra} Newton polishing step(s)"
    grad_norm = float(np.abs(g).max())
    rel_change = abs(history[-1] - history[-2]) / max(1.0, abs(history[-1])) if len(history) > 1 else 0.0
    converged = bool(np.isfinite(f) and grad_norm < config.tol_grad and rel_change < config.tol_rel)
    return x, -f, iterations, converged, grad_norm, message, history


def _multistart(obj: _Objective, x0: np.ndarray, config: OptimizerConfig):
    best = _optimize(obj, x0, config)
    if config.n_starts > 1:
        rng = np.random.default_rng(config.seed)
        for _ in range(config.n_starts - 1):
            jitter = rng.uniform(-config.start_jitter, config.start_jitter, size=len(x0))
            # slopes get a smaller spread than the log-scale and intercept entries
            jitter[-N_COVARIATES:] *= 0.2
            cand = _optimize(obj, x0 + jitter, config)
            if cand[1] > best[1]:
                best = cand
    return best


def fit_ssm(data, grid: StateGrid, config: OptimizerConfig | None = None, start: np.ndarray | None = None) -> FitResult:
    """Fit the latent-OU model by quasi-Newton maximization of the grid likelihood."""
    config = config or OptimizerConfig()
    seqs = _sequences(data)
    if not seqs:
        raise ValueError("cannot fit an empty dataset")
    packed = PackedData(seqs)
    players = packed.players
    obj = _Objective(ssm_loglik_and_grad(packed, grid))
    x0 = starting_values(seqs, players, ssm=True) if start is None else np.asarray(start, dtype=float)
    x, ll, nit, conv, gnorm, msg, hist = _multistart(obj, x0, config)

    P = len(players)
    ou = OUParams(math.exp(x[0]), math.exp(x[1]))
    reg = RegressionParams(dict(zip(players, x[2 : 2 + P])), x[2 + P :])
    fit = FitResult(
        "ssm", ou, reg, ll, len(x), packed.n_obs, parameter_names(players, True), x,
        nit, conv, gnorm, msg, hist, grid=(grid.lower, grid.upper, grid.m),
    )
    _attach_warnings(fit, seqs)
    boundary = boundary_warning(ou, grid)
    if boundary:
        fit.warnings.append(boundary)
    for w in fit.warnings:
        log.warning(w)
    return fit


def fit_benchmark(data, config: OptimizerConfig | None = None, start: np.ndarray | None = None) -> FitResult:
    """Fit the state-free logistic regression."""
    config = config or OptimizerConfig()
    seqs = _sequences(data)
    if not seqs:
        raise ValueError("cannot fit an empty dataset")
    packed = PackedData(seqs)
    players = packed.players
    obj = _Objective(benchmark_loglik_and_grad(packed))
    x0 = starting_values(seqs, players, ssm=False) if start is None else np.asarray(start, dtype=float)
    x, ll, nit, conv, gnorm, msg, hist = _multistart(obj, x0, config)
    P = len(players)
    reg = RegressionParams(dict(zip(players, x[:P])), x[P:])
    fit = FitResult(
        "benchmark", None, reg, ll, len(x), packed.n_obs, parameter_names(players, False), x,
        nit, conv, gnorm, msg, hist,
    )
    _attach_warnings(fit, seqs)
    for w in fit.warnings:
        log.warning(w)
    return fit


def boundary_warning(ou: OUParams, grid: StateGrid) -> str | None:
    """Flag a latent process too small for the grid to resolve (sigma -> 0 or theta -> inf)."""
    sd = math.sqrt(ou.stationary_variance)
    if sd < grid.width:
        return (
            f"boundary: stationary state sd {sd:.3g} is below the grid cell width {grid.width:.3g}; "
            "the latent process is indistinguishable from zero"
        )
    return None


def _attach_warnings(fit: FitResult, seqs) -> None:
    sep = separated_players(seqs)
    if sep:
        fit.warnings.append("separation: all-identical outcomes for player(s) " + ", ".join(sep))
    if not fit.converged:
        fit.warnings.append(f"not converged: max |gradient| {fit.grad_norm:.3g} ({fit.message})")


def confidence_intervals(fit: FitResult, data, grid: StateGrid | None = None) -> FitResult:
    """Wald 95% intervals from a numerical Hessian on the working scale.

    theta and sigma intervals are the exponentiated log-scale endpoints. An
    indefinite or singular Hessian leaves ``ci`` as None with the reason in
    ``ci_status``.
    """
    if not fit.converged:
        raise ValueError("confidence intervals need a converged fit")
    packed = PackedData(_sequences(data))
    if packed.players != fit.players or packed.n_obs != fit.n:
        raise ValueError("data do not match the fitted dataset")
    if fit.kind == "ssm":
        if grid is None:
            raise ValueError("an SSM fit needs its state grid")
        fn = ssm_loglik_and_grad(packed, grid)
    else:
        fn = benchmark_loglik_and_grad(packed)
    hess = numerical_hessian(None, fit.x, grad=lambda z: -fn(z)[1])
    se = standard_errors(hess)
    if se is None or not np.isfinite(se).all():
        fit.se = None
        fit.ci = None
        fit.ci_status = "unavailable: Hessian not positive definite"
        return fit

    fit.se = se
    lo = fit.x - Z_95 * se
    hi = fit.x + Z_95 * se
    ci: dict[str, tuple[float, float]] = {}
    for name, a, b in zip(fit.names, lo, hi):
        if name.startswith("log_"):
            ci[name[4:]] = (math.exp(a), math.exp(b))
        else:
            ci[name] = (float(a), float(b))
    fit.ci = ci
    fit.ci_status = "ok"
    return fit


@dataclass(frozen=True)
class Comparison:
    delta_aic: float  # benchmark minus SSM; positive favours the SSM
    delta_bic: float
    preferred_aic: str
    preferred_bic: str
    n: int
    k_ssm: int
    k_benchmark: int
    loglik_ssm: float
    loglik_benchmark: float


def compare(fit_ssm: FitResult, fit_benchmark: FitResult) -> Comparison:
    if fit_ssm.n != fit_benchmark.n:
        raise ValueError(f"fits use different numbers of observations ({fit_ssm.n} vs {fit_benchmark.n})")
    if fit_ssm.k != fit_benchmark.k + 2:
        raise ValueError(f"SSM should have exactly 2 more parameters ({fit_ssm.k} vs {fit_benchmark.k})")
    d_aic = fit_benchmark.aic - fit_ssm.aic
    d_bic = fit_benchmark.bic - fit_ssm.bic
    return Comparison(
        d_aic,
        d_bic,
        "ssm" if d_aic > 0 else "benchmark",
        "ssm" if d_bic > 0 else "benchmark",
        fit_ssm.n,
        fit_ssm.k,
        fit_benchmark.k,
        fit_ssm.loglik,
        fit_benchmark.loglik,
    )
