"""Monte Carlo checks of the random-matrix and quadratic-form tail bounds.

Each check draws its randomness from per-trial streams keyed by the trial
index, so results do not depend on chunking or evaluation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, stats

from .model import RandomStream, as_array

_CHUNK = 4096


@dataclass(frozen=True)
class TailReport:
    thresholds: np.ndarray
    empirical_frequencies: np.ndarray
    theoretical_bounds: np.ndarray
    trials: int
    violations: int
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (len(self.thresholds) == len(self.empirical_frequencies) == len(self.theoretical_bounds)):
            raise ValueError("TailReport sequences must have equal length")

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.thresholds, kind="stable")
        return bool(np.all(np.diff(self.empirical_frequencies[order]) <= 0))


def _binomial_flags(freq, bound, trials):
    p = np.clip(bound, 0.0, 1.0)
    se = np.sqrt(p * (1 - p) / trials)
    return int(np.count_nonzero(freq > bound + 3 * se))


def _check_trials(trials):
    if trials < 1:
        raise ValueError("trials must be >= 1")


# ---------------------------------------------------------------------------

def singular_value_tail_check(m: int, n: int, t_values: Sequence[float], trials: int, seed: int = 0) -> TailReport:
    """Deviation frequencies of the extreme singular values of an m x n Gaussian matrix.

    The event at threshold t is {s_max > sqrt(n) + sqrt(m) + t}, joined (when
    m < n) with {s_min < sqrt(n) - sqrt(m) - t}; its probability is at most
    2 exp(-t^2 / 2). ``extras`` holds the raw singular values.
    """
    _check_trials(trials)
    t = np.asarray(t_values, dtype=float)
    smax = np.empty(trials)
    smin = np.empty(trials)
    for s in range(0, trials, _CHUNK):
        A = _normals_range(seed, s, min(trials, s + _CHUNK), (m, n), "operator")
        sv = np.linalg.svd(A, compute_uv=False)
        smax[s : s + len(A)] = sv[:, 0]
        smin[s : s + len(A)] = sv[:, -1]
    upper = smax[None, :] > (math.sqrt(n) + math.sqrt(m) + t)[:, None]
    event = upper.copy()
    if m < n:
        event |= smin[None, :] < (math.sqrt(n) - math.sqrt(m) - t)[:, None]
    freq = event.mean(axis=1)
    bound = 2.0 * np.exp(-(t**2) / 2.0)
    extras = {"s_max": smax, "s_min": smin, "upper_frequencies": upper.mean(axis=1)}
    return TailReport(t, freq, bound, trials, _binomial_flags(freq, bound, trials), extras)


def _normals_range(seed, start, stop, shape, role):
    """Standard normal draws for trials start..stop-1, one stream per trial."""
    out = np.empty((stop - start,) + tuple(shape))
    for i, t in enumerate(range(start, stop)):
        out[i] = RandomStream(seed, t, 0, role).normal(shape)
    return out


# ---------------------------------------------------------------------------

def gaussian_chaos_tail_bound(eigenvalues, t: float) -> float:
    """Chernoff bound on P(|sum_i lam_i (g_i^2 - 1)| > t) for i.i.d. standard normal g.

    Uses the exact log-moment generating function
    psi(s) = sum_i [-log(1 - 2 s lam_i)/2 - s lam_i], valid for 2 s max(lam) < 1,
    optimized separately for each tail. This is a Hanson-Wright type bound
    with explicit constants for Gaussian vectors.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    scale = np.abs(lam).max() if lam.size else 0.0
    if scale == 0.0:
        return 0.0 if t >= 0 else 1.0
    # the bound is scale-free: work with lam / max|lam| and drop rounding-level entries
    lam = lam / scale
    with np.errstate(over="ignore"):
        t = t / scale
    if np.isinf(t):
        return 0.0 if t > 0 else 1.0
    lam = lam[np.abs(lam) > 1e-12]
    total = 0.0
    for sign in (1.0, -1.0):
        mu = sign * lam
        top = mu.max()
        if top <= 0 and t >= -mu.sum():
            # the sum is bounded above by sum(-mu)
            continue
        # the MGF is finite for 2 s top < 1; with top <= 0 any s works
        s_hi = 0.5 / top * (1 - 1e-12) if top > 0 else 1e3

        def exponent(s):
            return -s * t + np.sum(-0.5 * np.log1p(-2.0 * s * mu) - s * mu)

        res = optimize.minimize_scalar(exponent, bounds=(0.0, s_hi), method="bounded", options={"xatol": 1e-12 * s_hi})
        total += math.exp(min(0.0, res.fun))
    return min(1.0, total)


def hanson_wright_check(A_q, trials: int, t_values: Sequence[float], seed: int = 0) -> TailReport:
    """Tails of S = xi^T A_q xi - tr(A_q) for standard normal xi.

    ``extras`` records the sample mean and variance of S with their Gaussian
    values 0 and 2 ||A_sym||_HS^2 (+ (E xi^4 - 3) sum A_ii^2 = 0), the
    standard errors, and whether the tails are nonincreasing in t.
    """
    _check_trials(trials)
    A = np.atleast_2d(np.asarray(A_q, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("A_q must be square")
    t = np.asarray(t_values, dtype=float)
    S = np.empty(trials)
    for s in range(0, trials, _CHUNK):
        xi = _normals_range(seed, s, min(trials, s + _CHUNK), (n,), "aux")
        S[s : s + len(xi)] = np.einsum("ti,ij,tj->t", xi, A, xi) - np.trace(A)
    freq = (np.abs(S)[None, :] > t[:, None]).mean(axis=1)
    A_sym = 0.5 * (A + A.T)
    lam = np.linalg.eigvalsh(A_sym)
    bound = np.array([gaussian_chaos_tail_bound(lam, ti) for ti in t])
    excess_kurtosis = 0.0  # E xi^4 - 3 for a standard normal
    var_theory = 2.0 * np.sum(A_sym**2) + excess_kurtosis * np.sum(np.diag(A) ** 2)
    mean = S.mean()
    var = S.var(ddof=1) if trials > 1 else 0.0
    # SE of the sample variance for S, from its fourth central moment
    m4 = np.mean((S - mean) ** 4)
    extras = {
        "sample_mean": float(mean),
        "mean_se": float(math.sqrt(var / trials)),
        "sample_variance": float(var),
        "variance_theory": float(var_theory),
        "variance_se": float(math.sqrt(max(m4 - var**2, 0.0) / trials)),
    }
    return TailReport(t, freq, bound, trials, _binomial_flags(freq, bound, trials), extras)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecouplingReport:
    sample_mean: float
    standard_error: float
    closed_form: float
    passed: bool
    lower_tail: TailReport

    @property
    def z(self) -> float:
        if self.standard_error == 0:
            return 0.0 if self.sample_mean == self.closed_form else math.inf
        return (self.sample_mean - self.closed_form) / self.standard_error


def decoupling_closed_form(d, m: int, L: int) -> float:
    """E sum_l ||A_l D A_l^T||_HS^2 = L m [(tr D)^2 + (m + 1) ||d||^2]."""
    d = np.asarray(d, dtype=float)
    return float(L * m * (d.sum() ** 2 + (m + 1) * np.sum(d * d)))


def decoupling_mean_check(d, m: int, L: int, trials: int, seed: int = 0, t_values: Optional[Sequence[float]] = None, n_se: float = 4.0) -> DecouplingReport:
    """Monte Carlo mean of S = sum_l ||A_l D A_l^T||_HS^2 against its closed form.

    Passes when the sample mean is within ``n_se`` standard errors. The lower
    tail reports the frequency of {S < L m (m - 1) ||d||^2 - t}.
    """
    _check_trials(trials)
    d = np.asarray(d, dtype=float)
    n = d.size
    S = np.empty(trials)
    for s in range(0, trials, _CHUNK):
        A = _normals_range(seed, s, min(trials, s + _CHUNK), (L, m, n), "operator")
        B = (A * d) @ np.swapaxes(A, -1, -2)
        S[s : s + len(A)] = np.sum(B * B, axis=(1, 2, 3))
    closed = decoupling_closed_form(d, m, L)
    mean = float(S.mean())
    se = float(S.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    passed = (mean == closed) if se == 0 else abs(mean - closed) <= n_se * se
    centre = L * m * (m - 1) * float(np.sum(d * d))
    if t_values is None:
        t_values = centre * np.array([0.0, 0.25, 0.5, 0.75])
    t = np.asarray(t_values, dtype=float)
    freq = (S[None, :] < centre - t[:, None]).mean(axis=1)
    # the tail constants are unspecified; bounds are reported as NaN
    tail = TailReport(t, freq, np.full(t.size, np.nan), trials, 0, {"centre": centre})
    return DecouplingReport(mean, se, closed, bool(passed), tail)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InequalityReport:
    trials: int
    violations: int
    max_ratio: float  # largest lhs / rhs seen


def inverse_difference_bound(B, C) -> tuple:
    """Both sides of ||B^-1 - C^-1||_2 <= s_max(B - C) / (s_min(B) s_min(C))."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    lhs = np.linalg.norm(np.linalg.inv(B) - np.linalg.inv(C), 2)
    sB = np.linalg.svd(B, compute_uv=False)
    sC = np.linalg.svd(C, compute_uv=False)
    rhs = np.linalg.norm(B - C, 2) / (sB[-1] * sC[-1])
    return float(lhs), float(rhs)


def inverse_difference_bound_check(n: int, trials: int, seed: int = 0, rtol: float = 1e-10) -> InequalityReport:
    """Check the inverse-difference bound on random shifted Wishart pairs.

    A trial counts as a violation when lhs > rhs (1 + rtol); rtol absorbs
    rounding in the two inverses.
    """
    _check_trials(trials)
    worst = 0.0
    bad = 0
    for t in range(trials):
        G = RandomStream(seed, t, 0, "aux").normal((2, n, n))
        shift = RandomStream(seed, t, 1, "aux").generator().uniform(0.01, 1.0, 2)
        B = G[0] @ G[0].T / n + shift[0] * np.eye(n)
        C = G[1] @ G[1].T / n + shift[1] * np.eye(n)
        lhs, rhs = inverse_difference_bound(B, C)
        worst = max(worst, lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf))
        bad += lhs > rhs * (1 + rtol)
    return InequalityReport(trials, int(bad), worst)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservationNormReport:
    threshold: float
    frequency: float
    sample_mean: float
    conditional_mean: float  # average over trials of E[||y||^2 | A]
    standard_error: float  # of the mean difference ||y||^2 - E[||y||^2 | A]
    trials: int

    @property
    def z(self) -> float:
        if self.standard_error == 0:
            return 0.0 if self.sample_mean == self.conditional_mean else math.inf
        return (self.sample_mean - self.conditional_mean) / self.standard_error


def observation_norm_threshold(m, n, L, sigma_z, x_max) -> float:
    """mL[(9/4)(sqrt n + sqrt m)^2 x_max^2 + sigma_z^2] + t with t equal to the same quantity."""
    base = m * L * (sigma_z**2 + x_max**2 * 2.25 * (math.sqrt(n) + math.sqrt(m)) ** 2)
    return 2.0 * base


def observation_norm_check(m: int, n: int, L: int, sigma_z: float, x_o, trials: int, seed: int = 0, operators=None) -> ObservationNormReport:
    """Frequency of ||y||^2 exceeding its high-probability bound, and its mean.

    Operators are redrawn per trial unless fixed ``operators`` (L, m, n) are given.
    """
    _check_trials(trials)
    x = as_array(x_o)
    if x.shape != (n,):
        raise ValueError(f"x_o must have length {n}")
    x_max = float(np.max(np.abs(x))) if x.size else 0.0
    thr = observation_norm_threshold(m, n, L, sigma_z, x_max)
    fixed = None if operators is None else np.asarray(operators, dtype=float).reshape(L, m, n)
    sq = np.empty(trials)
    cond = np.empty(trials)
    for t in range(trials):
        A = fixed if fixed is not None else np.stack([RandomStream(seed, t, l, "operator").normal((m, n)) for l in range(L)])
        w = RandomStream(seed, t, 0, "speckle").normal((L, n))
        z = RandomStream(seed, t, 0, "additive").normal((L, m)) * sigma_z
        y = np.einsum("lmn,ln->lm", A, x * w) + z
        sq[t] = np.sum(y * y)
        cond[t] = np.sum((A * x) ** 2) + m * L * sigma_z**2
    diff = sq - cond
    se = float(diff.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return ObservationNormReport(thr, float(np.mean(sq >= thr)), float(sq.mean()), float(cond.mean()), se, trials)


# ---------------------------------------------------------------------------

def scalar_normal_tail(t: float) -> float:
    """P(|g| > t) for standard normal g."""
    return float(2.0 * stats.norm.sf(t))


def run_suite(seed: int = 0, scale: float = 1.0) -> list:
    """Run every check at desk scale; returns ``(name, passed, detail)`` rows.

    ``scale`` multiplies trial counts (use < 1 for a quick smoke run).
    """
    def n_(k):
        return max(10, int(k * scale))

    rows = []
    sv = singular_value_tail_check(10, 100, [0.0, 1.0, 2.0, 5.0], n_(10_000), seed)
    rows.append(("singular values", sv.violations == 0 and sv.monotone, f"violations={sv.violations}"))
    hw = hanson_wright_check(np.diag([1.0, 2.0, -1.0, 0.5]), n_(100_000), [1, 2, 4, 8, 16], seed)
    ok = hw.violations == 0 and hw.monotone and abs(hw.extras["sample_mean"]) <= 4 * hw.extras["mean_se"]
    rows.append(("Hanson-Wright", ok, f"violations={hw.violations} mean={hw.extras['sample_mean']:.4f}"))
    dc = decoupling_mean_check([1.0, 2.0, 0.0, -1.0], 3, 5, n_(100_000), seed)
    rows.append(("decoupling mean", dc.passed, f"z={dc.z:.2f}"))
    inv = inverse_difference_bound_check(8, n_(1000), seed)
    rows.append(("inverse difference", inv.violations == 0, f"max ratio={inv.max_ratio:.4f}"))
    x = np.linspace(0.5, 2.0, 32)
    ob = observation_norm_check(8, 32, 4, 0.1, x, n_(10_000), seed)
    rows.append(("observation norm", ob.frequency == 0.0 and abs(ob.z) <= 4, f"freq={ob.frequency} z={ob.z:.2f}"))
    return rows
