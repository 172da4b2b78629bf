"""Reading, validating, synthesizing and writing throw data.

CSV layout, one row per throw:

    player_id,game_id,t_min,made,home,scorediff,last30,ft2,ft3

Rows are grouped into sequences by (player_id, game_id) and sorted by
t_min, keeping input order among equal times.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from hothand.inference import DecodedSequence, ThrowSequence
from hothand.observation import COVARIATE_NAMES, N_COVARIATES, RegressionParams, logistic
from hothand.ou import OUParams

log = logging.getLogger(__name__)

COLUMNS = ("player_id", "game_id", "t_min", "made", *COVARIATE_NAMES)
DECODED_COLUMNS = ("player_id", "game_id", "t_min", "made", "decoded_state")
DEFAULT_MIN_LENGTH = 4


class DataError(ValueError):
    """Malformed input data; carries the 1-based file line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class Dataset:
    sequences: list[ThrowSequence]
    players: dict[str, str | None] = field(default_factory=dict)
    provenance: str = ""
    dropped: int = 0

    def __post_init__(self) -> None:
        keys = [(s.player, s.game) for s in self.sequences]
        if len(set(keys)) != len(keys):
            raise DataError("duplicate (player, game) sequence")
        for s in self.sequences:
            self.players.setdefault(s.player, None)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    @property
    def n_obs(self) -> int:
        return sum(len(s) for s in self.sequences)


@dataclass
class ModelParams:
    ou: OUParams
    reg: RegressionParams


# -- CSV ingest ---------------------------------------------------------------


def _open_text(source) -> tuple[TextIO, bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    return source, False


def _binary(value: str, name: str, line: int) -> int:
    try:
        v = float(value)
    except ValueError:
        raise DataError(f"{name} is not numeric: {value!r}", line) from None
    if v not in (0.0, 1.0):
        raise DataError(f"{name} must be 0 or 1, got {value!r}", line)
    return int(v)


def parse_csv(source, min_length: int = DEFAULT_MIN_LENGTH, provenance: str | None = None) -> Dataset:
    """Read throws from a path or text stream into per-game sequences.

    Games with fewer than ``min_length`` throws are dropped; the count is
    kept in ``Dataset.dropped``.
    """
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("missing header row", 1) from None
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise DataError(f"missing column(s): {', '.join(missing)}", 1)
        col = {c: header.index(c) for c in COLUMNS}
        name_col = header.index("player_name") if "player_name" in header else None

        groups: dict[tuple[str, str], list[tuple[float, int, list[float], int]]] = {}
        names: dict[str, str | None] = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise DataError(f"expected {len(header)} fields, got {len(row)}", line)
            player = row[col["player_id"]].strip()
            game = row[col["game_id"]].strip()
            if not player or not game:
                raise DataError("empty player_id or game_id", line)
            try:
                t = float(row[col["t_min"]])
            except ValueError:
                raise DataError(f"t_min is not numeric: {row[col['t_min']]!r}", line) from None
            if not math.isfinite(t) or t < 0:
                raise DataError(f"t_min must be finite and >= 0, got {t}", line)
            made = _binary(row[col["made"]], "made", line)
            home = _binary(row[col["home"]], "home", line)
            last30 = _binary(row[col["last30"]], "last30", line)
            ft2 = _binary(row[col["ft2"]], "ft2", line)
            ft3 = _binary(row[col["ft3"]], "ft3", line)
            if ft2 and ft3:
                raise DataError("ft2 and ft3 are both 1", line)
            raw = row[col["scorediff"]]
            try:
                sd = float(raw)
            except ValueError:
                raise DataError(f"scorediff is not numeric: {raw!r}", line) from None
            if not math.isfinite(sd) or sd != round(sd) or abs(sd) > 100:
                raise DataError(f"scorediff must be an integer within +-100, got {raw!r}", line)
            groups.setdefault((player, game), []).append((t, made, [home, sd, last30, ft2, ft3], line))
            if name_col is not None and row[name_col].strip():
                names[player] = row[name_col].strip()
            else:
                names.setdefault(player, None)
    finally:
        if owned:
            fh.close()

    sequences = []
    dropped = 0
    for (player, game), rows in groups.items():
        if len(rows) < min_length:
            dropped += 1
            continue
        rows.sort(key=lambda r: r[0])  # stable: ties keep input order
        sequences.append(
            ThrowSequence(
                player,
                game,
                np.array([r[0] for r in rows]),
                np.array([r[1] for r in rows], dtype=np.int8),
                np.array([r[2] for r in rows], dtype=float),
            )
        )
    if dropped:
        log.info("dropped %d sequence(s) shorter than %d throws", dropped, min_length)
    kept = {s.player for s in sequences}
    src = provenance if provenance is not None else (str(source) if isinstance(source, (str, os.PathLike)) else "stream")
    return Dataset(sequences, {p: n for p, n in names.items() if p in kept}, src, dropped)


def _fmt_exact(x: float) -> str:
    return repr(float(x))


def dataset_to_csv(dataset: Dataset | Sequence[ThrowSequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for s in getattr(dataset, "sequences", dataset):
        for t, y, x in zip(s.t, s.y, s.X):
            w.writerow([s.player, s.game, _fmt_exact(t), int(y), int(x[0]), int(x[1]), int(x[2]), int(x[3]), int(x[4])])
    return buf.getvalue()


def atomic_write_text(destination, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    dest = Path(destination)
    fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=f".{dest.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, dest)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(dataset, destination) -> None:
    atomic_write_text(destination, dataset_to_csv(dataset))


# -- synthetic data -----------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Recipe for simulated free-throw data with known parameters.

    Covariates mimic the marginal shapes of real NBA free throws: home is
    drawn per game, scorediff and last30 per free-throw set, and ft2/ft3
    follow the position of a throw within a run of zero gaps.
    """

    n_players: int = 10
    intercept_range: tuple[float, float] = (0.5, 2.0)
    intercepts: list[float] | None = None
    theta: float = 0.042
    sigma: float = 0.101
    beta: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)
    sequences_per_player: int = 20
    length: int | None = None
    min_length: int = DEFAULT_MIN_LENGTH
    extra_length_mean: float = 2.5
    zero_gap_prob: float = 0.45
    gap_mean: float = 8.0
    seed: int = 0

    def __post_init__(self) -> None:
        self.intercept_range = tuple(float(v) for v in self.intercept_range)
        self.beta = tuple(float(b) for b in self.beta)
        if self.n_players < 1 or self.sequences_per_player < 1:
            raise ValueError("player and sequence counts must be positive")
        if len(self.beta) != N_COVARIATES:
            raise ValueError(f"beta needs {N_COVARIATES} entries")
        if self.intercepts is not None and len(self.intercepts) != self.n_players:
            raise ValueError("need one intercept per player")
        if self.intercept_range[0] > self.intercept_range[1]:
            raise ValueError("intercept_range must be (low, high)")
        if not (self.theta > 0 and self.sigma > 0):
            raise ValueError("theta and sigma must be positive")
        if self.length is not None and self.length < 1:
            raise ValueError("length must be positive")
        if self.min_length < 1 or self.extra_length_mean < 0:
            raise ValueError("invalid length distribution")
        if not 0.0 <= self.zero_gap_prob <= 1.0:
            raise ValueError("zero_gap_prob must be a probability")
        if not self.gap_mean > 0:
            raise ValueError("gap_mean must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synthetic spec field(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["intercept_range"] = list(self.intercept_range)
        d["beta"] = list(self.beta)
        return d


def _player_ids(n: int) -> list[str]:
    width = len(str(n - 1))
    return [f"p{i:0{width}d}" for i in range(n)]


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, ModelParams]:
    """Simulate a dataset; states follow the exact OU transition law."""
    players = _player_ids(spec.n_players)
    if spec.intercepts is not None:
        icpt = np.asarray(spec.intercepts, dtype=float)
    else:
        icpt = np.random.default_rng([spec.seed, 0xA11]).uniform(*spec.intercept_range, size=spec.n_players)
    ou = OUParams(spec.theta, spec.sigma)
    reg = RegressionParams(dict(zip(players, icpt)), np.array(spec.beta))
    stat_sd = math.sqrt(ou.stationary_variance)

    sequences = []
    idx = 0
    for p, player in enumerate(players):
        for g in range(spec.sequences_per_player):
            rng = np.random.default_rng([spec.seed, idx])
            idx += 1
            L = spec.length if spec.length is not None else spec.min_length + int(rng.poisson(spec.extra_length_mean))
            zero = rng.random(L - 1) < spec.zero_gap_prob
            gaps = np.where(zero, 0.0, rng.exponential(spec.gap_mean, L - 1))
            t = np.cumsum(np.concatenate([[rng.uniform(0.0, 12.0)], gaps]))

            X = np.zeros((L, N_COVARIATES))
            X[:, 0] = float(rng.random() < 0.514)
            pos = 0
            for k in range(L):
                if k == 0 or not zero[k - 1]:
                    pos = 0
                    score = float(np.clip(np.rint(rng.normal(0.576, 9.86)), -45, 49))
                    last30 = float(rng.random() < 0.093)
                else:
                    pos += 1
                X[k, 1] = score
                X[k, 2] = last30
                X[k, 3] = float(pos % 3 == 1)
                X[k, 4] = float(pos % 3 == 2)

            s = np.empty(L)
            s[0] = rng.normal(0.0, stat_sd)
            for k in range(1, L):
                d = gaps[k - 1]
                if d == 0.0:
                    s[k] = s[k - 1]
                    continue
                decay = math.exp(-ou.theta * d)
                var = ou.stationary_variance * -math.expm1(-2.0 * ou.theta * d)
                s[k] = decay * s[k - 1] + math.sqrt(var) * rng.standard_normal()
            pi = logistic(s + icpt[p] + X @ reg.beta)
            y = (rng.random(L) < pi).astype(np.int8)
            sequences.append(ThrowSequence(player, f"g{g:04d}", t, y, X))

    prov = f"synthetic seed={spec.seed} theta={spec.theta} sigma={spec.sigma}"
    return Dataset(sequences, {p: None for p in players}, prov), ModelParams(ou, reg)


# -- results ------------------------------------------------------------------


def _g6(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return f"{float(x):.6g}"


def fit_result_to_text(fit) -> str:
    """Flat ``key=value`` rendering; missing values are written as NA."""
    lines = [
        f"kind={fit.kind}",
        f"n={fit.n}",
        f"k={fit.k}",
        f"loglik={_g6(fit.loglik)}",
        f"aic={_g6(fit.aic)}",
        f"bic={_g6(fit.bic)}",
        f"converged={str(bool(fit.converged)).lower()}",
        f"iterations={fit.iterations}",
        f"grad_norm={_g6(fit.grad_norm)}",
        f"grid_lower={_g6(fit.grid[0]) if fit.grid else 'NA'}",
        f"grid_upper={_g6(fit.grid[1]) if fit.grid else 'NA'}",
        f"grid_m={fit.grid[2] if fit.grid else 'NA'}",
        f"ci_status={fit.ci_status}",
    ]
    se_by_name = {}
    if fit.se is not None:
        for wname, se in zip(fit.names, fit.se):
            se_by_name[wname[4:] if wname.startswith("log_") else wname] = se
    for name, value in fit.estimates().items():
        lines.append(f"estimate.{name}={_g6(value)}")
        se = se_by_name.get(name)
        # theta and sigma standard errors live on the log scale
        key = f"se_log.{name}" if name in ("theta", "sigma") else f"se.{name}"
        lines.append(f"{key}={_g6(se)}")
        lo, hi = fit.ci[name] if fit.ci and name in fit.ci else (None, None)
        lines.append(f"ci_lower.{name}={_g6(lo)}")
        lines.append(f"ci_upper.{name}={_g6(hi)}")
    for i, w in enumerate(fit.warnings, start=1):
        lines.append(f"warning.{i}={w}")
    return "\n".join(lines) + "\n"


def comparison_to_text(cmp) -> str:
    """Comparison report; likelihoods and deltas keep full precision."""
    return "\n".join(
        [
            f"n={cmp.n}",
            f"k_ssm={cmp.k_ssm}",
            f"k_benchmark={cmp.k_benchmark}",
            f"loglik_ssm={_fmt_exact(cmp.loglik_ssm)}",
            f"loglik_benchmark={_fmt_exact(cmp.loglik_benchmark)}",
            f"delta_aic={_fmt_exact(cmp.delta_aic)}",
            f"delta_bic={_fmt_exact(cmp.delta_bic)}",
            f"preferred_aic={cmp.preferred_aic}",
            f"preferred_bic={cmp.preferred_bic}",
        ]
    ) + "\n"


def decoded_to_csv(decoded: Iterable[DecodedSequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DECODED_COLUMNS)
    for d in decoded:
        for t, y, s in zip(d.t, d.y, d.states):
            w.writerow([d.player, d.game, _fmt_exact(t), int(y), _fmt_exact(s)])
    return buf.getvalue()


def write_results(result, destination) -> None:
    """Persist a FitResult (key=value text) or a list of DecodedSequence (CSV)."""
    from hothand.estimation import Comparison, FitResult

    if isinstance(result, FitResult):
        text = fit_result_to_text(result)
    elif isinstance(result, Comparison):
        text = comparison_to_text(result)
    else:
        text = decoded_to_csv(result)
    atomic_write_text(destination, text)


def read_key_values(source) -> dict[str, str]:
    out = {}
    with open(source, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "=" not in line:
                raise DataError(f"expected key=value, got {line!r}", n)
            key, value = line.split("=", 1)
            out[key] = value
    return out


def _num(value: str) -> float | None:
    return None if value == "NA" else float(value)


def read_fit_result(source):
    """Inverse of ``fit_result_to_text`` (values carry 6 significant digits)."""
    from hothand.estimation import FitResult, parameter_names

    kv = read_key_values(source)
    try:
        kind = kv["kind"]
        if kind not in ("ssm", "benchmark"):
            raise DataError(f"unknown fit kind {kind!r}")
        est = {k[len("estimate."):]: float(v) for k, v in kv.items() if k.startswith("estimate.")}
        players = sorted(k[len("intercept["):-1] for k in est if k.startswith("intercept["))
        beta = np.array([est[f"beta_{n}"] for n in COVARIATE_NAMES])
        reg = RegressionParams({p: est[f"intercept[{p}]"] for p in players}, beta)
        ou = OUParams(est["theta"], est["sigma"]) if kind == "ssm" else None
        head = [math.log(ou.theta), math.log(ou.sigma)] if ou else []
        x = np.concatenate([head, [reg.intercepts[p] for p in players], beta])
        grid = None
        if kv.get("grid_m", "NA") != "NA":
            grid = (float(kv["grid_lower"]), float(kv["grid_upper"]), int(kv["grid_m"]))
        ci = {}
        for name in est:
            lo, hi = _num(kv.get(f"ci_lower.{name}", "NA")), _num(kv.get(f"ci_upper.{name}", "NA"))
            if lo is not None and hi is not None:
                ci[name] = (lo, hi)
        fit = FitResult(
            kind, ou, reg, float(kv["loglik"]), int(kv["k"]), int(kv["n"]),
            parameter_names(players, kind == "ssm"), x,
            iterations=int(kv["iterations"]),
            converged=kv["converged"] == "true",
            grad_norm=_num(kv["grad_norm"]) or math.nan,
            ci=ci or None,
            ci_status=kv.get("ci_status", "not computed"),
            grid=grid,
            warnings=[kv[k] for k in sorted((k for k in kv if k.startswith("warning.")), key=lambda k: int(k.split(".")[1]))],
        )
    except KeyError as exc:
        raise DataError(f"fit result file lacks field {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"fit result file has a malformed value: {exc}") from None
    return fit


def read_decoded_csv(source) -> list[tuple[str, str, float, int, float]]:
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != DECODED_COLUMNS:
            raise DataError(f"unexpected decoded header {header!r}", 1)
        return [(r[0], r[1], float(r[2]), int(r[3]), float(r[4])) for r in reader if r]
    finally:
        if owned:
            fh.close()


def bundled(name: str) -> Path:
    """Path of a fixture shipped in ``hothand/data``.

    ``lebron_2012_2014.csv`` holds five published LeBron James sequences
    (scorediff unknown, recorded as 0); ``synthetic_200.csv`` is a
    200-sequence simulated dataset generated from ``synthetic_200_spec.json``.
    """
    from importlib.resources import files

    path = Path(str(files("hothand.data") / name))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return path
