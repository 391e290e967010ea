"""Finite two-level signal families, greedy separated sets and the generalized Fano bound.

Signals here are constant on each of ``N_div`` balanced integer intervals of
[n] and take the values x_bar or x_bar + delta_r, with x_bar the box midpoint.
A separated set keeps members that pairwise disagree on at least k' intervals;
pairwise KL divergences of the induced observation laws then feed

    (alpha / 2) * (1 - (beta + log 2) / log r).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import SearchSpaceTooLarge, TooFewPoints
from .likelihood import _factor, kl_from_factors
from .model import Signal, draw_operators, make_signal

DEFAULT_CLASS_CAP = 2**20
DEFAULT_KL_CAP = 10**9


def interval_bounds(n: int, n_div: int) -> np.ndarray:
    """Boundaries of ``n_div`` balanced intervals of [n]; sizes differ by at most one."""
    sizes = np.full(n_div, n // n_div)
    sizes[: n % n_div] += 1
    return np.concatenate(([0], np.cumsum(sizes)))


@dataclass(frozen=True)
class SeparatedSetSpec:
    n: int
    k: int
    n_div: int
    delta_r: float
    x_min: float
    x_max: float
    k_prime: Optional[int] = None
    cap: int = field(default=DEFAULT_CLASS_CAP, compare=False)

    def __post_init__(self):
        if min(self.n, self.k, self.n_div) < 1:
            raise ValueError("n, k and n_div must be positive")
        if self.n_div < self.k:
            raise ValueError(f"need n_div >= k, got n_div={self.n_div}, k={self.k}")
        if self.n_div > self.n:
            raise ValueError(f"need n_div <= n, got n_div={self.n_div}, n={self.n}")
        if not 0 < self.x_min < self.x_max:
            raise ValueError("need 0 < x_min < x_max")
        if not 0 < self.delta_r < (self.x_max - self.x_min) / 2:
            raise ValueError(f"delta_r must lie in (0, {(self.x_max - self.x_min) / 2}), got {self.delta_r}")
        kp = max(1, self.k // 4) if self.k_prime is None else self.k_prime
        if kp < 1:
            raise ValueError("k_prime must be positive")
        object.__setattr__(self, "k_prime", kp)

    @property
    def x_bar(self) -> float:
        return 0.5 * (self.x_min + self.x_max)

    @property
    def epsilon(self) -> float:
        """Exponent with n_div = k n^epsilon."""
        return math.log(self.n_div / self.k) / math.log(self.n) if self.n > 1 else 0.0

    @classmethod
    def from_epsilon(cls, n, k, epsilon, delta_r, x_min, x_max, **kw) -> "SeparatedSetSpec":
        n_div = int(min(n, max(k, round(k * n**epsilon))))
        return cls(n, k, n_div, delta_r, x_min, x_max, **kw)

    def with_delta(self, delta_r: float) -> "SeparatedSetSpec":
        return SeparatedSetSpec(self.n, self.k, self.n_div, delta_r, self.x_min, self.x_max, self.k_prime, self.cap)


@dataclass(frozen=True)
class FanoInputs:
    alpha_r: float
    beta_r: float
    r: int

    def __post_init__(self):
        if self.r < 2:
            raise ValueError("the Fano bound needs r >= 2")
        if not self.alpha_r > 0:
            raise ValueError("alpha_r must be positive")
        if not self.beta_r >= 0:
            raise ValueError("beta_r must be nonnegative")


def _pattern_pieces(patterns: np.ndarray) -> np.ndarray:
    return 1 + np.count_nonzero(patterns[:, 1:] != patterns[:, :-1], axis=1)


def _all_patterns(n_div: int) -> np.ndarray:
    # lexicographic over {0, 1}^n_div, 0 = low level
    return np.array(list(itertools.product((0, 1), repeat=n_div)), dtype=np.int8).reshape(-1, n_div)


def _to_signals(patterns, spec: SeparatedSetSpec) -> list:
    widths = np.diff(interval_bounds(spec.n, spec.n_div))
    out = []
    for p in patterns:
        values = spec.x_bar + spec.delta_r * np.repeat(p.astype(float), widths)
        out.append(make_signal(values, spec.x_min, spec.x_max, k_budget=spec.k))
    return out


def finite_class_patterns(spec: SeparatedSetSpec) -> np.ndarray:
    """Interval patterns (rows in {0,1}^n_div) of the finite class, lexicographic order."""
    if 2**spec.n_div > spec.cap:
        raise SearchSpaceTooLarge(f"2^{spec.n_div} patterns exceed cap {spec.cap}")
    pats = _all_patterns(spec.n_div)
    return pats[_pattern_pieces(pats) <= spec.k]


def finite_class_size(n_div: int, k: int) -> int:
    """Exact size: two starting levels times the ways to place < k switches."""
    return 2 * sum(math.comb(n_div - 1, j) for j in range(min(k, n_div)))


def build_finite_class(spec: SeparatedSetSpec) -> list:
    """All two-level signals constant on the intervals with at most k pieces on [n]."""
    return _to_signals(finite_class_patterns(spec), spec)


def separated_patterns(spec: SeparatedSetSpec) -> np.ndarray:
    """Greedy maximal set of patterns with exactly k high intervals, pairwise
    disagreeing on at least k' intervals.

    Candidates are restricted to the k-piece class and scanned in lexicographic
    order of their high-interval subsets, starting from the pattern whose first
    k intervals are high.
    """
    if math.comb(spec.n_div, spec.k) > spec.cap:
        raise SearchSpaceTooLarge(f"C({spec.n_div}, {spec.k}) candidates exceed cap {spec.cap}")
    pool = np.zeros((math.comb(spec.n_div, spec.k), spec.n_div), dtype=np.int8)
    for row, subset in enumerate(itertools.combinations(range(spec.n_div), spec.k)):
        pool[row, list(subset)] = 1
    pool = pool[_pattern_pieces(pool) <= spec.k]
    # the first subset in lexicographic order is {0..k-1}, the required seed
    chosen = np.empty_like(pool)
    chosen[0] = pool[0]
    r = 1
    for cand in pool[1:]:
        if np.all(np.count_nonzero(chosen[:r] != cand, axis=1) >= spec.k_prime):
            chosen[r] = cand
            r += 1
    return chosen[:r]


def build_separated_set(spec: SeparatedSetSpec, finite_class: Optional[Sequence[Signal]] = None) -> list:
    """Signals of :func:`separated_patterns`; members of ``finite_class`` when it is given."""
    signals = _to_signals(separated_patterns(spec), spec)
    if finite_class is not None:
        members = set(finite_class)
        missing = [s for s in signals if s not in members]
        if missing:
            raise ValueError("separated set is not contained in the given finite class")
    return signals


def separation_radius(signals: Sequence, spec: Optional[SeparatedSetSpec] = None) -> float:
    """Minimum pairwise Euclidean distance.

    With ``spec`` the construction guarantee sqrt(k' (n/N_div - 2)) delta_r is
    checked whenever n/N_div >= 3.
    """
    if len(signals) < 2:
        raise TooFewPoints("separation radius needs at least two signals")
    X = np.stack([np.asarray(s, dtype=float) for s in signals])
    radius = float(pdist(X).min())
    if spec is not None and spec.n / spec.n_div >= 3:
        guarantee = math.sqrt(spec.k_prime * (spec.n / spec.n_div - 2)) * spec.delta_r
        if radius < guarantee * (1 - 1e-12):
            raise ValueError(f"separation {radius} below the construction guarantee {guarantee}")
    return radius


def fano_bound(inputs: FanoInputs) -> float:
    """(alpha/2) (1 - (beta + log 2)/log r), floored at zero."""
    bracket = 1.0 - (inputs.beta_r + math.log(2.0)) / math.log(inputs.r)
    return max(0.0, 0.5 * inputs.alpha_r * bracket)


def _delta_factor(m, n, sigma_z, x_min, x_max) -> float:
    # singular-value surrogates (3/2)(sqrt n + sqrt m) and (1/2)|sqrt n - sqrt m|
    hi2 = 2.25 * (math.sqrt(n) + math.sqrt(m)) ** 2
    lo2 = 0.25 * (math.sqrt(n) - math.sqrt(m)) ** 2
    return (sigma_z**2 + x_max**2 * hi2) * hi2 / (sigma_z**2 + x_min**2 * lo2) ** 2 * 2.0 * x_max


def default_delta_r(m, n, L, sigma_z, k, n_div, r, x_min, x_max, c_delta: float = 0.01) -> float:
    """delta_r^2 = c_delta Delta^-2 n log r / (m^2 L) * N_div / k.

    Returns 0 when r < 2. For sigma_z = 0 and m = n the factor Delta is
    infinite and the result is 0.
    """
    if r < 2:
        return 0.0
    delta = _delta_factor(m, n, sigma_z, x_min, x_max) if (sigma_z > 0 or m != n) else math.inf
    return math.sqrt(c_delta * n * math.log(r) / (m * m * L) * n_div / k) / delta


@dataclass(frozen=True)
class LowerBoundReport:
    alpha_r: float
    beta_r: float
    r: int
    bound: float  # MSE lower bound alpha^2/(4n) (1 - (beta + log 2)/log r)_+^2
    kl_condition: bool  # beta_r <= log(r) / 10
    delta_r: float


def evaluate_instance_lower_bound(
    seed: int, m: int, n: int, L: int, sigma_z: float, spec: SeparatedSetSpec, cap: int = DEFAULT_KL_CAP, trial: int = 0
) -> LowerBoundReport:
    """Fano lower bound on the normalized MSE for one operator draw.

    beta_r is the largest exact KL divergence between the observation laws of
    any ordered pair in the separated set.
    """
    if spec.n != n:
        raise ValueError(f"spec is for n={spec.n}, got n={n}")
    pats = separated_patterns(spec)
    r = len(pats)
    if r < 2:
        raise TooFewPoints(f"the separated set has {r} member(s); the Fano bound needs two")
    if r * r * L * m**3 > cap:
        raise SearchSpaceTooLarge(f"pairwise KL cost {r * r * L * m**3} exceeds cap {cap}")
    signals = _to_signals(pats, spec)
    alpha = separation_radius(signals, spec)
    ops = draw_operators(seed, m, n, L, trial=trial)
    facs = [_factor(s.values, ops, sigma_z) for s in signals]
    beta = 0.0
    for i, j in itertools.permutations(range(r), 2):
        beta = max(beta, kl_from_factors(facs[i], facs[j]))
    bracket = max(0.0, 1.0 - (beta + math.log(2.0)) / math.log(r))
    return LowerBoundReport(alpha, beta, r, alpha**2 / (4 * n) * bracket**2, beta <= math.log(r) / 10, spec.delta_r)


def covering_bounds(R: float, delta: float, n: int) -> tuple:
    """Covering-number bounds ((R/delta)^n, (2R/delta + 1)^n) for a radius-R ball in R^n."""
    if not (R > 0 and delta > 0):
        raise ValueError("R and delta must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    return (R / delta) ** n, (2 * R / delta + 1) ** n
