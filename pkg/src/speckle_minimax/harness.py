"""Monte Carlo risk sweeps, log-log slope fits and the shared-operator comparison.

A sweep visits every cell of the grid m x n x L x sigma_z x k. Trial t of any
cell draws its signal, operators, speckle and noise from streams keyed by
``(seed, trial, look, role)``, so cells share random numbers trial by trial
(common random numbers) and output never depends on scheduling.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml
from scipy import stats

from .errors import NonPositiveInput, ParseError, SpeckleError, ValidationError
from .estimators import NetSpec, OptimizerConfig, mle_net_search, mle_projected_ascent, sufficient_statistic_estimate
from .model import RandomStream, generate_instance, make_signal, mse, sample_signal_class

CSV_COLUMNS = (
    "m", "n", "L", "sigma_z", "k", "estimator", "trials",
    "mean_mse", "ci_half_width", "predicted_rate", "mean_runtime_ms", "error",
)
ESTIMATORS = ("mle_ascent", "net_search", "sufficient_statistic")
# estimator that returns the true signal; exercises the pipeline in tests
TRUTH_HOOK = "truth"
Z95 = 1.959963984540054


class RegimeWarning(UserWarning):
    """A configured cell lies outside the regime where the rate theory applies."""


def predicted_rate(m, n, L, sigma_z, k) -> float:
    """max(sigma_z^4, m^2, n^2) k log(n) / (m^2 n L)."""
    return max(sigma_z**4, m * m, n * n) * k * math.log(n) / (m * m * n * L)


def _as_list(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return list(v)
    return [v]


@dataclass(frozen=True)
class SweepConfig:
    m: Sequence[int]
    n: Sequence[int]
    L: Sequence[int]
    k: Sequence[int]
    trials: int
    sigma_z: Sequence[float] = (0.1,)
    estimator: str = "mle_ascent"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    output: Optional[str] = None
    shared_operators: bool = False
    workers: int = 1
    x_min: float = 0.25
    x_max: float = 2.0
    net_levels: int = 9
    fixed_signal: Optional[Sequence[float]] = None
    trial_log: Optional[str] = None
    timing: bool = False

    def __post_init__(self):
        for name in ("m", "n", "L", "k", "sigma_z"):
            object.__setattr__(self, name, tuple(_as_list(getattr(self, name))))
        problems = self.violations()
        if problems:
            raise ValidationError(problems)

    def violations(self) -> list:
        out = []
        for name in ("m", "n", "L", "k", "sigma_z"):
            grid = getattr(self, name)
            if len(grid) == 0:
                out.append(f"{name}: grid is empty")
        for name in ("m", "n", "L", "k"):
            for v in getattr(self, name):
                if not (isinstance(v, (int, np.integer)) and not isinstance(v, bool)) or v < 1:
                    out.append(f"{name}: {v!r} is not a positive integer")
        for s in self.sigma_z:
            if not (isinstance(s, (int, float)) and s >= 0):
                out.append(f"sigma_z: {s!r} must be a nonnegative number")
        if not isinstance(self.trials, int) or self.trials < 1:
            out.append(f"trials: {self.trials!r} must be >= 1")
        if not isinstance(self.workers, int) or self.workers < 1:
            out.append(f"workers: {self.workers!r} must be >= 1")
        if self.estimator not in ESTIMATORS + (TRUTH_HOOK,):
            out.append(f"estimator: {self.estimator!r} not one of {', '.join(ESTIMATORS)}")
        if not (isinstance(self.x_min, (int, float)) and isinstance(self.x_max, (int, float)) and 0 < self.x_min < self.x_max):
            out.append(f"x_min/x_max: need 0 < x_min < x_max, got {self.x_min!r}, {self.x_max!r}")
        if not isinstance(self.net_levels, int) or self.net_levels < 1:
            out.append("net_levels: must be a positive integer")
        ints = all(isinstance(v, (int, np.integer)) for v in self.n + self.k + self.m)
        if ints and self.n and self.k and max(self.k) > min(self.n):
            bad = sorted({(k, n) for k in self.k for n in self.n if k > n})
            out.append("k: " + ", ".join(f"k={k} > n={n}" for k, n in bad))
        if ints and self.estimator == "sufficient_statistic":
            bad = sorted({(m, n) for m in self.m for n in self.n if m < n})
            if bad:
                out.append("estimator: sufficient_statistic needs m >= n, violated by " + ", ".join(f"m={m}, n={n}" for m, n in bad))
        if self.fixed_signal is not None and ints:
            if len(self.n) != 1 or len(self.fixed_signal) != self.n[0]:
                out.append("fixed_signal: needs a single n equal to its length")
        return out

    def cells(self):
        return list(itertools.product(self.m, self.n, self.L, self.sigma_z, self.k))


@dataclass(frozen=True)
class SweepRecord:
    m: int
    n: int
    L: int
    sigma_z: float
    k: int
    estimator: str
    trials: int
    mean_mse: float  # nan when the cell failed
    ci_half_width: float
    predicted_rate: float
    mean_runtime_ms: Optional[float] = None
    error: str = ""
    trial_mse: tuple = field(default=(), compare=False, repr=False)

    @property
    def ci_reliable(self) -> bool:
        return self.trials >= 30


# ---------------------------------------------------------------------------
# one trial

def _estimate(cfg: SweepConfig, cell, trial):
    m, n, L, sigma_z, k = cell
    if cfg.fixed_signal is not None:
        x_o = make_signal(cfg.fixed_signal, cfg.x_min, cfg.x_max, k_budget=k)
    else:
        x_o = sample_signal_class(RandomStream(cfg.seed, trial, 0, "signal"), n, k, cfg.x_min, cfg.x_max)
    inst, obs = generate_instance(cfg.seed, m, n, L, sigma_z, x_o, cfg.shared_operators, trial)
    if cfg.estimator == "mle_ascent":
        xh = mle_projected_ascent(inst, obs, k, cfg.x_min, cfg.x_max, cfg.optimizer)
    elif cfg.estimator == "net_search":
        xh = mle_net_search(inst, obs, NetSpec.uniform(cfg.x_min, cfg.x_max, cfg.net_levels, k))
    elif cfg.estimator == "sufficient_statistic":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            xh = sufficient_statistic_estimate(inst, obs, k, cfg.x_min, cfg.x_max)
    else:
        xh = x_o
    return mse(xh, x_o)


def _run_trial(args):
    cfg, index, cell, trial = args
    start = time.perf_counter()
    try:
        value, err = _estimate(cfg, cell, trial), ""
    except (SpeckleError, np.linalg.LinAlgError) as exc:
        value, err = float("nan"), type(exc).__name__
    return index, trial, value, err, 1e3 * (time.perf_counter() - start)


def _aggregate(cfg, cell, results) -> SweepRecord:
    m, n, L, sigma_z, k = cell
    results = sorted(results, key=lambda r: r[1])
    errors = sorted({r[3] for r in results if r[3]})
    rate = predicted_rate(m, n, L, sigma_z, k)
    runtime = float(np.mean([r[4] for r in results])) if cfg.timing else None
    vals = np.array([r[2] for r in results])
    if errors:
        return SweepRecord(m, n, L, sigma_z, k, cfg.estimator, cfg.trials, float("nan"), float("nan"), rate, runtime, ";".join(errors), tuple(vals))
    mean = float(np.mean(vals))
    ci = Z95 * float(np.std(vals, ddof=1)) / math.sqrt(vals.size) if vals.size > 1 else 0.0
    return SweepRecord(m, n, L, sigma_z, k, cfg.estimator, cfg.trials, mean, ci, rate, runtime, "", tuple(vals))


def run_sweep(config: SweepConfig, write: bool = True) -> list:
    """Run every (cell, trial), aggregate per cell in grid order and write the CSV.

    Cells whose estimator raises get an empty mean and the exception name in
    the error column; the rest of the sweep continues.
    """
    cells = config.cells()
    tasks = [(config, i, cell, t) for i, cell in enumerate(cells) for t in range(config.trials)]
    if config.workers == 1:
        results = [_run_trial(a) for a in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunk = max(1, len(tasks) // (4 * config.workers))
            results = list(pool.map(_run_trial, tasks, chunksize=chunk))
    by_cell = {i: [] for i in range(len(cells))}
    for r in results:
        by_cell[r[0]].append(r)
    records = [_aggregate(config, cells[i], by_cell[i]) for i in range(len(cells))]
    if write and config.output:
        write_csv(records, config.output)
    if write and config.trial_log:
        write_trial_log(records, config.trial_log)
    return records


# ---------------------------------------------------------------------------
# output

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(records, path) -> None:
    Path(path).write_text(records_to_csv(records))


def write_trial_log(records, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("m", "n", "L", "sigma_z", "k", "trial", "mse"))
    for r in records:
        for t, v in enumerate(r.trial_mse):
            w.writerow((r.m, r.n, r.L, _fmt(float(r.sigma_z)), r.k, t, _fmt(float(v))))
    Path(path).write_text(buf.getvalue())


def gnuplot_script(csv_path: str, x_column: str = "L") -> str:
    """Log-log plot of mean_mse and predicted_rate against one grid column."""
    col = CSV_COLUMNS.index(x_column) + 1
    return (
        "set datafile separator ','\n"
        "set logscale xy\n"
        f"set xlabel '{x_column}'\nset ylabel 'mean MSE'\n"
        f"plot '{csv_path}' skip 1 using {col}:8:9 with yerrorbars title 'mean MSE', \\\n"
        f"     '' skip 1 using {col}:10 with lines title 'predicted rate (unscaled)'\n"
    )


# ---------------------------------------------------------------------------
# analysis

def fit_loglog_slope(points) -> tuple:
    """Least-squares line through (log x, log y): returns (slope, intercept, stderr).

    ``points`` is a sequence of (x, y) pairs.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (x, y) pairs")
    if pts.shape[0] < 3:
        raise ValueError("need at least 3 points")
    if not np.all(pts > 0):
        raise NonPositiveInput("log-log fit needs positive x and y")
    res = stats.linregress(np.log(pts[:, 0]), np.log(pts[:, 1]))
    return float(res.slope), float(res.intercept), float(res.stderr)


@dataclass(frozen=True)
class ComparisonReport:
    L: tuple
    varying: tuple  # SweepRecords, one per L
    unvarying: tuple
    plateau_L: Optional[int]  # first L where the shared-operator curve stalls


def _gain_per_doubling(records):
    out = []
    for a, b in zip(records[:-1], records[1:]):
        out.append((math.log(a.mean_mse) - math.log(b.mean_mse)) / math.log2(b.L / a.L))
    return out


def compare_varying_unvarying(config: SweepConfig) -> ComparisonReport:
    """Matched sweeps over L with fresh versus shared operators.

    The plateau is the first L at which the shared-operator improvement per
    doubling of L drops below half that of fresh operators.
    """
    others = (config.m, config.n, config.sigma_z, config.k)
    if any(len(g) != 1 for g in others):
        raise ValidationError(["compare: m, n, sigma_z and k must each be a single value"])
    Ls = tuple(sorted(config.L))
    vary = run_sweep(replace(config, L=Ls, shared_operators=False, output=None, trial_log=None))
    same = run_sweep(replace(config, L=Ls, shared_operators=True, output=None, trial_log=None))
    plateau = None
    usable = all(r.mean_mse > 0 for r in vary + same)
    if len(Ls) > 1 and usable:
        for i, (gv, gs) in enumerate(zip(_gain_per_doubling(vary), _gain_per_doubling(same))):
            if gs < 0.5 * gv:
                plateau = Ls[i + 1]
                break
    return ComparisonReport(Ls, tuple(vary), tuple(same), plateau)


# ---------------------------------------------------------------------------
# config files

_KEYS = {f.name for f in fields(SweepConfig)}
_REQUIRED = ("n", "m", "L", "k", "trials")
_OPTIMIZER_KEYS = {f.name for f in fields(OptimizerConfig)}


def _scalar(node):
    return yaml.safe_load(yaml.serialize(node))


def parse_config(path) -> SweepConfig:
    """Read a YAML sweep config, fill defaults and validate.

    Raises ParseError (with key and line) for malformed files and unknown
    keys, and ValidationError listing every violated constraint. Cells
    outside the theorem's regime produce :class:`RegimeWarning`.
    """
    text = Path(path).read_text()
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"malformed config: {getattr(exc, 'problem', exc)}", line=mark.line + 1 if mark else None) from None
    if root is None:
        raise ParseError("config file is empty")
    if not isinstance(root, yaml.MappingNode):
        raise ParseError("config must be a mapping of keys to values", line=root.start_mark.line + 1)
    raw, lines = {}, {}
    for knode, vnode in root.value:
        key = knode.value
        line = knode.start_mark.line + 1
        if key not in _KEYS:
            raise ParseError(f"unknown key {key!r}", key=key, line=line)
        if key in raw:
            raise ParseError(f"duplicate key {key!r}", key=key, line=line)
        lines[key] = line
        raw[key] = _scalar(vnode)
    if "optimizer" in raw:
        opt = raw["optimizer"]
        if not isinstance(opt, dict):
            raise ParseError("optimizer must be a mapping", key="optimizer", line=lines["optimizer"])
        unknown = sorted(set(opt) - _OPTIMIZER_KEYS)
        if unknown:
            raise ParseError(f"unknown optimizer key {unknown[0]!r}", key=f"optimizer.{unknown[0]}", line=lines["optimizer"])
        try:
            raw["optimizer"] = OptimizerConfig(**opt)
        except (TypeError, ValueError) as exc:
            raise ValidationError([f"optimizer: {exc}"]) from None
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ValidationError([f"{k}: required key missing" for k in missing])
    for key in ("m", "n", "L", "k", "sigma_z"):
        if key in raw:
            raw[key] = _as_list(raw[key])
    if "sigma_z" in raw:
        raw["sigma_z"] = [float(s) if isinstance(s, int) and not isinstance(s, bool) else s for s in raw["sigma_z"]]
    for key in ("x_min", "x_max"):
        if isinstance(raw.get(key), int) and not isinstance(raw.get(key), bool):
            raw[key] = float(raw[key])
    cfg = SweepConfig(**raw)
    for msg in regime_warnings(cfg):
        warnings.warn(msg, RegimeWarning, stacklevel=2)
    return cfg


def regime_warnings(cfg: SweepConfig) -> list:
    """Messages for cells violating L <= n^4 k log n or max(s^4, m^2, n^2) k log n <= m^2 n L."""
    out = []
    for m, n, L, s, k in cfg.cells():
        if n > 1 and L > n**4 * k * math.log(n):
            out.append(f"cell m={m} n={n} L={L} sigma_z={s} k={k}: L exceeds n^4 k log n")
        if max(s**4, m * m, n * n) * k * math.log(n) > m * m * n * L:
            out.append(f"cell m={m} n={n} L={L} sigma_z={s} k={k}: too few looks for the rate regime")
    if cfg.trials < 30:
        out.append(f"trials={cfg.trials} < 30: normal-approximation CIs are unreliable")
    return out
