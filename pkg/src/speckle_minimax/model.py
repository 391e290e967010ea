"""Signals, the multilook speckle observation model and seeded instance generation.

Observations follow

    y_l = A_l diag(x_o) w_l + z_l,    l = 1..L,

with A_l an m x n standard Gaussian matrix, w_l ~ N(0, I_n) speckle and
z_l ~ N(0, sigma_z^2 I_m) additive noise. Every random draw comes from a
:class:`RandomStream` keyed by ``(seed, trial, look, role)``, so an instance
can be regenerated bit-exactly and trials can run in any order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import BudgetExceeded, DimensionMismatch, InvalidDims, OutOfBox

ROLES = {
    "operator": 0,
    "speckle": 1,
    "additive": 2,
    "signal": 3,
    "restart": 4,
    "aux": 5,
}


@dataclass(frozen=True)
class RandomStream:
    """Deterministic normal/uniform stream for one ``(trial, look, role)`` key."""

    seed: int
    trial: int = 0
    look: int = 0
    role: str = "aux"

    def generator(self) -> np.random.Generator:
        if self.role not in ROLES:
            raise ValueError(f"unknown stream role {self.role!r}")
        key = (int(self.trial), int(self.look), ROLES[self.role])
        ss = np.random.SeedSequence(int(self.seed) & (2**64 - 1), spawn_key=key)
        return np.random.Generator(np.random.PCG64(ss))

    def normal(self, size) -> np.ndarray:
        return self.generator().standard_normal(size)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def count_pieces(values: np.ndarray) -> int:
    values = np.asarray(values)
    if values.size == 0:
        return 0
    return 1 + int(np.count_nonzero(values[1:] != values[:-1]))


@dataclass(frozen=True, eq=False)
class Signal:
    """A length-n amplitude vector, optionally certified to have <= k_budget pieces.

    Use :func:`make_signal` to build a validated instance.
    """

    values: np.ndarray
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    k_budget: Optional[int] = None
    change_points: tuple = field(default=())

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def pieces(self) -> int:
        return len(self.change_points) + 1

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, Signal):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


def _change_points(values: np.ndarray) -> tuple:
    return tuple(int(i) for i in np.flatnonzero(values[1:] != values[:-1]) + 1)


def make_signal(
    values, x_min: float, x_max: float, k_budget: Optional[int] = None, require_positive: bool = True
) -> Signal:
    """Validate ``values`` against the box ``[x_min, x_max]`` and the piece budget.

    The signal class needs ``x_min > 0``; ``require_positive=False`` relaxes
    that for generic box-constrained vectors such as projections.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise InvalidDims("signal must be nonempty")
    if not x_min < x_max:
        raise ValueError(f"need x_min < x_max, got [{x_min}, {x_max}]")
    if require_positive and x_min <= 0:
        raise OutOfBox(f"the signal class requires x_min > 0, got {x_min}")
    bad = np.flatnonzero((v < x_min) | (v > x_max) | ~np.isfinite(v))
    if bad.size:
        raise OutOfBox(f"value {v[bad[0]]!r} at index {bad[0]} outside [{x_min}, {x_max}]")
    cps = _change_points(v)
    if k_budget is not None:
        if k_budget < 1:
            raise InvalidDims("k_budget must be positive")
        if len(cps) >= k_budget:
            raise BudgetExceeded(f"{len(cps) + 1} pieces exceed budget k={k_budget}")
    return Signal(_readonly(v), float(x_min), float(x_max), k_budget, cps)


def unchecked_signal(values) -> Signal:
    """Build a Signal without box validation (e.g. the all-zero signal in tests)."""
    v = np.asarray(values, dtype=float).ravel()
    return Signal(_readonly(v), None, None, None, _change_points(v))


def zero_signal(n: int) -> Signal:
    return unchecked_signal(np.zeros(n))


def as_array(x: Union[Signal, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(x, Signal):
        return x.values
    return np.asarray(x, dtype=float)


def sample_signal_class(stream: RandomStream, n: int, k: int, x_min: float, x_max: float) -> Signal:
    """Draw a random member of the k-piece class.

    The k-1 breakpoints are distinct and uniform on {1..n-1}; the k levels are
    i.i.d. uniform on [x_min, x_max].
    """
    if not 1 <= k <= n:
        raise InvalidDims(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = stream.generator()
    cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False)) if k > 1 else np.array([], int)
    levels = rng.uniform(x_min, x_max, size=k)
    bounds = np.concatenate(([0], cuts, [n]))
    values = np.repeat(levels, np.diff(bounds))
    return make_signal(values, x_min, x_max, k_budget=k)


@dataclass(frozen=True, eq=False)
class ModelInstance:
    m: int
    n: int
    L: int
    sigma_z: float
    operators: np.ndarray  # shape (L, m, n)
    shared_operators: bool = False
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        ops = self.operators
        if ops.shape != (self.L, self.m, self.n):
            raise DimensionMismatch(f"operators shape {ops.shape} != {(self.L, self.m, self.n)}")
        if self.shared_operators and self.L > 1 and not all(np.array_equal(ops[0], o) for o in ops[1:]):
            raise ValueError("shared_operators=True but operators differ")


@dataclass(frozen=True, eq=False)
class ObservationSet:
    looks: np.ndarray  # shape (L, m)
    speckle: Optional[np.ndarray] = None  # shape (L, n)
    additive: Optional[np.ndarray] = None  # shape (L, m)

    @property
    def L(self) -> int:
        return self.looks.shape[0]


def make_instance(operators, sigma_z: float, shared_operators: bool = False, seed: int = 0) -> ModelInstance:
    """Wrap explicit operators (array-like of shape (L, m, n) or (m, n))."""
    ops = np.asarray(operators, dtype=float)
    if ops.ndim == 2:
        ops = ops[None]
    if ops.ndim != 3:
        raise InvalidDims("operators must have shape (L, m, n)")
    if sigma_z < 0:
        raise ValueError("sigma_z must be nonnegative")
    L, m, n = ops.shape
    return ModelInstance(m, n, L, float(sigma_z), _readonly(ops), shared_operators, seed)


def draw_operators(seed: int, m: int, n: int, L: int, shared_operators: bool = False, trial: int = 0) -> np.ndarray:
    ops = np.empty((L, m, n))
    for look in range(L):
        key = 0 if shared_operators else look
        if shared_operators and look > 0:
            ops[look] = ops[0]
        else:
            ops[look] = RandomStream(seed, trial, key, "operator").normal((m, n))
    return ops


def observe(instance: ModelInstance, x_o, speckle: np.ndarray, additive: np.ndarray) -> ObservationSet:
    """Apply the forward model to given speckle and additive draws."""
    x = as_array(x_o)
    speckle = np.asarray(speckle, dtype=float)
    additive = np.asarray(additive, dtype=float)
    looks = np.einsum("lmn,ln->lm", instance.operators, x * speckle) + additive
    return ObservationSet(_readonly(looks), _readonly(speckle), _readonly(additive))


def generate_instance(
    seed: int,
    m: int,
    n: int,
    L: int,
    sigma_z: float,
    x_o,
    shared_operators: bool = False,
    trial: int = 0,
) -> tuple[ModelInstance, ObservationSet]:
    """Draw operators, speckle and additive noise and form the L looks.

    The result is a pure function of the arguments.
    """
    if min(m, n, L) < 1:
        raise InvalidDims(f"m, n, L must be >= 1, got {(m, n, L)}")
    if sigma_z < 0:
        raise ValueError("sigma_z must be nonnegative")
    x = as_array(x_o)
    if x.shape != (n,):
        raise DimensionMismatch(f"x_o has shape {x.shape}, expected ({n},)")
    ops = draw_operators(seed, m, n, L, shared_operators, trial)
    instance = ModelInstance(m, n, L, float(sigma_z), _readonly(ops), shared_operators, seed, trial)
    speckle = np.stack([RandomStream(seed, trial, look, "speckle").normal(n) for look in range(L)])
    additive = np.stack([RandomStream(seed, trial, look, "additive").normal(m) for look in range(L)]) * sigma_z
    return instance, observe(instance, x, speckle, additive)


def mse(estimate, truth) -> float:
    """Normalized squared error ||estimate - truth||^2 / n."""
    a = as_array(estimate)
    b = as_array(truth)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d) / d.size
