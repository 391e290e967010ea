"""Least-squares projection onto box-bounded piecewise-constant signals."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import InvalidDims
from .model import Signal, make_signal


def _segment_tables(V, W, lo, hi):
    """Cost and level of every segment [a, b) under clamped weighted means.

    ``V`` and ``W`` have shape (B, n); both tables have shape (B, n+1, n+1)
    and invalid segments (b <= a) cost +inf.
    """
    n = V.shape[-1]
    zero = np.zeros(V.shape[:-1] + (1,))
    S0 = np.concatenate((zero, np.cumsum(W, axis=-1)), axis=-1)
    S1 = np.concatenate((zero, np.cumsum(W * V, axis=-1)), axis=-1)
    S2 = np.concatenate((zero, np.cumsum(W * V * V, axis=-1)), axis=-1)
    w = S0[..., None, :] - S0[..., :, None]
    sv = S1[..., None, :] - S1[..., :, None]
    svv = S2[..., None, :] - S2[..., :, None]
    valid = np.triu(np.ones((n + 1, n + 1), bool), 1)
    pos = w > 0
    level = np.where(pos, sv / np.where(pos, w, 1.0), 0.5 * (lo + hi))
    level = np.clip(level, lo, hi)
    cost = svv - 2.0 * level * sv + w * level * level
    cost = np.where(valid, np.maximum(cost, 0.0), np.inf)
    return cost, level


def _check_k(n, k):
    if n == 0:
        raise InvalidDims("cannot project an empty vector")
    if k < 1:
        raise InvalidDims("k must be >= 1")
    if k > n:
        raise InvalidDims(f"k={k} exceeds n={n}")


def _dp(V, W, k, lo, hi):
    """Exactly-k segmentation for each row; returns bounds (B, k+1), levels (B, k), cost (B,)."""
    B, n = V.shape
    cost, level = _segment_tables(V, W, lo, hi)
    # D[:, b]: best cost of covering [0, b) with j segments. Using exactly k
    # segments is optimal since splitting a segment never increases the cost.
    D = cost[:, 0, :]
    back = []
    rows = np.arange(B)[:, None]
    cols = np.arange(n + 1)[None, :]
    for _ in range(1, k):
        tot = D[:, :, None] + cost
        arg = np.argmin(tot, axis=1)
        D = tot[rows, arg, cols]
        back.append(arg)
    bounds = np.empty((B, k + 1), dtype=int)
    bounds[:, k] = n
    bounds[:, 0] = 0
    b = np.full(B, n)
    for j, arg in zip(range(k - 1, 0, -1), reversed(back)):
        b = arg[np.arange(B), b]
        bounds[:, j] = b
    levels = level[np.arange(B)[:, None], bounds[:, :-1], bounds[:, 1:]]
    return bounds, levels, D[:, n]


def segment_levels(v, k: int, x_min: float, x_max: float, weights=None):
    """Optimal breakpoints and levels: returns ``(bounds, levels, cost)``.

    ``bounds`` has length k+1 and runs from 0 to n; adjacent levels may coincide.
    """
    v = np.asarray(v, dtype=float).ravel()
    _check_k(v.size, k)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float).ravel()
    bounds, levels, cost = _dp(v[None], w[None], k, x_min, x_max)
    return bounds[0], levels[0], float(cost[0])


def project_many(V, k: int, x_min: float, x_max: float, weights=None, chunk: int = 20_000):
    """Row-wise projection of a stack ``V`` of shape (B, n).

    Returns the projected values (B, n) and the residual sums of squares (B,).
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    B, n = V.shape
    _check_k(n, k)
    W = np.ones_like(V) if weights is None else np.broadcast_to(np.asarray(weights, dtype=float), V.shape)
    out = np.empty_like(V)
    costs = np.empty(B)
    for s in range(0, B, chunk):
        bounds, levels, cost = _dp(V[s : s + chunk], W[s : s + chunk], k, x_min, x_max)
        # piece index of every coordinate: number of interior bounds at or below it
        idx = (np.arange(n)[None, :, None] >= bounds[:, None, 1:-1]).sum(axis=-1)
        out[s : s + chunk] = np.take_along_axis(levels, idx, axis=1)
        costs[s : s + chunk] = cost
    return out, costs


def project_piecewise_constant(v, k: int, x_min: float, x_max: float, weights: Optional[np.ndarray] = None) -> Signal:
    """Closest signal with at most k pieces and levels in [x_min, x_max].

    Exact O(n^2 k) dynamic program over segment boundaries; each segment takes
    its clamped (weighted) mean, the exact constrained minimizer.
    """
    values, _ = project_many(np.asarray(v, dtype=float).ravel()[None], k, x_min, x_max, weights)
    return make_signal(values[0], x_min, x_max, k_budget=k, require_positive=False)


def projection_cost(v, s, weights=None) -> float:
    v = np.asarray(v, dtype=float)
    s = np.asarray(s, dtype=float)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(w * (v - s) ** 2))
