"""Command-line entry point: ``hothand {fit,decode,simulate,compare}``.

Exit codes: 0 success, 2 input/parse error, 3 non-convergence,
4 internal numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from hothand.data_io import (
    DataError,
    SyntheticSpec,
    atomic_write_text,
    comparison_to_text,
    dataset_to_csv,
    decoded_to_csv,
    fit_result_to_text,
    generate_synthetic,
    parse_csv,
    read_fit_result,
)
from hothand.discretization import StateGrid
from hothand.estimation import OptimizerConfig, compare, confidence_intervals, fit_benchmark, fit_ssm
from hothand.inference import viterbi_decode
from hothand.observation import RegressionParams, logistic
from hothand.ou import OUParams, simulate_paths
from hothand.svg import decoded_svg, trajectories_svg

log = logging.getLogger("hothand")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_NUMERICAL = 4

DEFAULTS = {
    "grid_lower": -2.0,
    "grid_upper": 2.0,
    "grid_m": 100,
    "grid_range": None,
    "tol_grad": 1e-5,
    "tol_rel": 1e-8,
    "max_iter": 500,
    "n_starts": 1,
    "seed": None,
    "min_length": 4,
    "ci": True,
    "svg": False,
    "theta": 0.042,
    "sigma": 0.101,
    "n_traj": 5,
    "t_end": 48.0,
    "dt": 0.01,
    "s0": 0.0,
    "intercept": None,
}


class InputError(Exception):
    pass


def _resolve(args: argparse.Namespace) -> dict:
    """Merge settings with precedence flags > config file > defaults."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(from_file, dict):
            raise InputError("config file must hold a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in from_file.items()})
    cfg.update({k: v for k, v in vars(args).items() if v is not None})
    return cfg


def _grid(cfg: dict, fallback: tuple | None = None) -> StateGrid:
    lower, upper, m = cfg["grid_lower"], cfg["grid_upper"], cfg["grid_m"]
    if fallback is not None and not cfg.get("_grid_given"):
        lower, upper, m = fallback
    if cfg.get("grid_range") is not None:
        r = abs(float(cfg["grid_range"]))
        lower, upper = -r, r
    try:
        return StateGrid(float(lower), float(upper), int(m))
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid grid: {exc}") from None


def _optimizer(cfg: dict) -> OptimizerConfig:
    if cfg.get("n_starts") not in (None, 1) and cfg.get("seed") is None:
        raise InputError("--seed is required with --n-starts > 1 (jittered starts are random)")
    try:
        return OptimizerConfig(
            tol_grad=float(cfg["tol_grad"]),
            tol_rel=float(cfg["tol_rel"]),
            max_iter=int(cfg["max_iter"]),
            n_starts=int(cfg["n_starts"]),
            seed=int(cfg["seed"] or 0),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid optimizer settings: {exc}") from None


def _load_data(cfg: dict):
    path = cfg.get("input")
    if not path:
        raise InputError("--input is required")
    if not Path(path).is_file():
        raise InputError(f"input file not found: {path}")
    return parse_csv(path, min_length=int(cfg["min_length"]))


def _outdir(cfg: dict) -> Path:
    out = Path(cfg.get("outdir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(cfg: dict) -> int:
    grid = _grid(cfg)
    opt = _optimizer(cfg)
    if not opt.tol_grad > 0 or opt.max_iter < 1 or opt.n_starts < 1:
        raise InputError("tolerances and iteration counts must be positive")
    data = _load_data(cfg)
    if len(data) == 0:
        raise InputError("no sequences left after filtering")
    log.info("fitting %d sequences (%d throws), grid [%g, %g] x %d", len(data), data.n_obs, grid.lower, grid.upper, grid.m)

    ssm = fit_ssm(data, grid, opt)
    bench = fit_benchmark(data, opt)
    if not (math.isfinite(ssm.loglik) and math.isfinite(bench.loglik)):
        raise FloatingPointError("non-finite log-likelihood at the optimum")
    if cfg["ci"]:
        if ssm.converged:
            confidence_intervals(ssm, data, grid)
        if bench.converged:
            confidence_intervals(bench, data)
    report = compare(ssm, bench)

    out = _outdir(cfg)
    atomic_write_text(out / "fit_ssm.txt", fit_result_to_text(ssm))
    atomic_write_text(out / "fit_benchmark.txt", fit_result_to_text(bench))
    atomic_write_text(out / "comparison.txt", comparison_to_text(report))
    print(f"delta_aic={report.delta_aic:.6g} preferred_aic={report.preferred_aic}")
    print(f"delta_bic={report.delta_bic:.6g} preferred_bic={report.preferred_bic}")
    if not (ssm.converged and bench.converged):
        for f in (ssm, bench):
            if not f.converged:
                log.error("%s fit did not converge: %s", f.kind, f.message)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _fallback_intercept(reg: RegressionParams, cfg: dict, players) -> RegressionParams:
    missing = [p for p in players if p not in reg.intercepts]
    if not missing:
        return reg
    if cfg.get("intercept") is None:
        raise InputError(f"parameter file has no intercept for player(s) {', '.join(sorted(missing))}; pass --intercept")
    icpt = dict(reg.intercepts)
    icpt.update({p: float(cfg["intercept"]) for p in missing})
    return RegressionParams(icpt, reg.beta)


def cmd_decode(cfg: dict) -> int:
    if not cfg.get("params"):
        raise InputError("--params is required")
    try:
        fit = read_fit_result(cfg["params"])
    except OSError as exc:
        raise InputError(f"cannot read parameter file: {exc}") from None
    if fit.kind != "ssm" or fit.ou is None:
        raise InputError("decode needs an SSM parameter file (kind=ssm)")
    grid = _grid(cfg, fallback=fit.grid)
    data = _load_data(cfg)
    reg = _fallback_intercept(fit.reg, cfg, {s.player for s in data})

    decoded = [viterbi_decode(s, fit.ou, reg, grid) for s in data]
    out = _outdir(cfg)
    atomic_write_text(out / "decoded.csv", decoded_to_csv(decoded))
    if cfg["svg"]:
        for d in decoded:
            title = f"Decoded states: {d.player}, game {d.game}"
            svg = decoded_svg(d.t, d.states, d.y, title, (grid.lower, grid.upper))
            atomic_write_text(out / f"decoded_{_safe(d.player)}_{_safe(d.game)}.svg", svg)
    print(f"decoded {len(decoded)} sequence(s), {sum(len(d) for d in decoded)} throw(s)")
    return EXIT_OK


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def cmd_simulate(cfg: dict) -> int:
    if cfg.get("seed") is None:
        raise InputError("--seed is required for simulate")
    seed = int(cfg["seed"])
    out = _outdir(cfg)

    if cfg.get("spec"):
        try:
            with open(cfg["spec"], encoding="utf-8") as fh:
                raw = json.load(fh)
            raw.setdefault("seed", seed)
            spec = SyntheticSpec.from_dict(raw)
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise InputError(f"invalid synthetic spec: {exc}") from None
        ds, truth = generate_synthetic(spec)
        atomic_write_text(out / "synthetic.csv", dataset_to_csv(ds))
        lines = [f"theta={truth.ou.theta!r}", f"sigma={truth.ou.sigma!r}"]
        lines += [f"intercept[{p}]={v!r}" for p, v in sorted(truth.reg.intercepts.items())]
        lines += [f"beta[{i}]={float(b)!r}" for i, b in enumerate(truth.reg.beta)]
        atomic_write_text(out / "synthetic_truth.txt", "\n".join(lines) + "\n")
        print(f"wrote {len(ds)} sequences ({ds.n_obs} throws)")
        return EXIT_OK

    theta, sigma = float(cfg["theta"]), float(cfg["sigma"])
    if not theta > 0 or sigma < 0:
        raise InputError("need theta > 0 and sigma >= 0")
    n_traj = int(cfg["n_traj"])
    intercept = cfg.get("intercept")
    if intercept is None and cfg.get("params"):
        fit = read_fit_result(cfg["params"])
        intercept = float(np.median(list(fit.reg.intercepts.values())))
    intercept = 0.0 if intercept is None else float(intercept)
    try:
        # OUParams insists on sigma > 0; the noiseless path goes through the override
        params = OUParams(theta, sigma if sigma > 0 else 1.0)
        times, paths = simulate_paths(params, float(cfg["s0"]), float(cfg["t_end"]), float(cfg["dt"]), n_traj, seed, sigma)
    except ValueError as exc:
        raise InputError(str(exc)) from None

    rows = ["trajectory_id,t,state,implied_probability"]
    probs = logistic(paths + intercept)
    t_txt = [f"{t:.10g}" for t in times]
    for i in range(n_traj):
        rows.extend(f"{i},{t},{s!r},{p!r}" for t, s, p in zip(t_txt, paths[i].tolist(), probs[i].tolist()))
    atomic_write_text(out / "trajectories.csv", "\n".join(rows) + "\n")
    if np.abs(paths).max() >= 2.0:
        log.warning("some simulated states leave [-2, 2] (max |state| %.3f)", float(np.abs(paths).max()))
    if cfg["svg"]:
        atomic_write_text(out / "trajectories.svg", trajectories_svg(times, list(paths)))
    print(f"wrote {n_traj} trajectories x {len(times)} points")
    return EXIT_OK


def cmd_compare(cfg: dict) -> int:
    try:
        ssm = read_fit_result(cfg["ssm"])
        bench = read_fit_result(cfg["benchmark"])
    except OSError as exc:
        raise InputError(f"cannot read fit file: {exc}") from None
    if ssm.kind != "ssm" or bench.kind != "benchmark":
        raise InputError("compare expects --ssm <kind=ssm file> --benchmark <kind=benchmark file>")
    try:
        report = compare(ssm, bench)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    text = comparison_to_text(report)
    if cfg.get("outdir"):
        atomic_write_text(_outdir(cfg) / "comparison.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of settings; flags override it")
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid-lower", type=float)
    p.add_argument("--grid-upper", type=float)
    p.add_argument("--grid-m", type=int)
    p.add_argument("--grid-range", type=float, help="symmetric grid [-R, R]; overrides lower/upper")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hothand", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the state-space and benchmark models and compare them")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--input", help="throw CSV")
    p.add_argument("--tol-grad", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--n-starts", type=int)
    p.add_argument("--min-length", type=int)
    p.add_argument("--no-ci", dest="ci", action="store_const", const=False)

    p = sub.add_parser("decode", help="Viterbi-decode latent states with fitted parameters")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--input", help="throw CSV")
    p.add_argument("--params", help="fit_ssm.txt from `hothand fit`")
    p.add_argument("--intercept", type=float, help="intercept for players missing from the parameter file")
    p.add_argument("--min-length", type=int)
    p.add_argument("--svg", action="store_const", const=True)

    p = sub.add_parser("simulate", help="Euler-Maruyama trajectories, or a synthetic dataset with --spec")
    _add_common(p)
    p.add_argument("--spec", help="JSON synthetic-data spec")
    p.add_argument("--theta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--n-traj", type=int)
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--s0", type=float)
    p.add_argument("--intercept", type=float, help="intercept for the implied probability column")
    p.add_argument("--params", help="fit_ssm.txt; its median intercept is the default --intercept")
    p.add_argument("--svg", action="store_const", const=True)

    p = sub.add_parser("compare", help="AIC/BIC comparison of two saved fits")
    _add_common(p)
    p.add_argument("--ssm", required=True)
    p.add_argument("--benchmark", required=True)
    return parser


COMMANDS = {"fit": cmd_fit, "decode": cmd_decode, "simulate": cmd_simulate, "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    command = args.command
    try:
        cfg = _resolve(args)
        cfg["_grid_given"] = any(getattr(args, k, None) is not None for k in ("grid_lower", "grid_upper", "grid_m", "grid_range"))
        return COMMANDS[command](cfg)
    except (InputError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
