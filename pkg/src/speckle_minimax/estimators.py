"""Estimators of x_o: likelihood ascent, exhaustive net search, sufficient statistic.

``mle_projected_ascent`` is the practical maximizer of the log-likelihood over
box-bounded k-piece signals. ``mle_net_search`` enumerates a finite net of the
same class and serves as its correctness oracle on tiny problems.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidDims, NotPositiveDefinite, SearchSpaceTooLarge, SingularNormalMatrix
from .likelihood import _factor, back_substitute, factor_covariances, forward_substitute, loglik_and_grad
from .model import ModelInstance, ObservationSet, RandomStream, Signal, make_signal, sample_signal_class
from .projection import project_piecewise_constant, segment_levels

DEFAULT_SEARCH_CAP = 10**7


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 200
    step_init: float = 1.0
    step_shrink: float = 0.5
    tol_grad: float = 1e-8
    restarts: int = 3
    project_every: int = 1

    def __post_init__(self):
        for name in ("max_iters", "step_init", "tol_grad", "restarts", "project_every"):
            if not getattr(self, name) > 0:
                raise ValueError(f"OptimizerConfig.{name} must be positive")
        if not 0 < self.step_shrink < 1:
            raise ValueError("OptimizerConfig.step_shrink must lie in (0, 1)")


@dataclass(frozen=True)
class NetSpec:
    level_grid: np.ndarray
    max_pieces: int

    def __post_init__(self):
        g = np.asarray(self.level_grid, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("level_grid must be a nonempty 1-D sequence")
        if np.any(np.diff(g) <= 0):
            raise ValueError("level_grid must be strictly increasing")
        if self.max_pieces < 1:
            raise ValueError("max_pieces must be >= 1")
        object.__setattr__(self, "level_grid", g)

    @classmethod
    def uniform(cls, x_min: float, x_max: float, levels: int = 33, max_pieces: int = 1) -> "NetSpec":
        return cls(np.linspace(x_min, x_max, levels), max_pieces)


@dataclass(frozen=True)
class AscentInfo:
    loglik: float
    grad_norm: float
    iterations: int
    start_index: int


# ---------------------------------------------------------------------------
# projection onto the class and piece-level refinement

class _Problem:
    """Log-likelihood bound to one instance, with evaluation counting."""

    def __init__(self, instance: ModelInstance, obs: ObservationSet):
        self.ops = np.asarray(instance.operators)
        self.sigma_z = instance.sigma_z
        self.looks = np.asarray(obs.looks)
        self.L = self.looks.shape[0]
        self.evals = 0

    def value(self, x) -> float:
        self.evals += 1
        try:
            return loglik_and_grad(x, self.ops, self.sigma_z, self.looks, grad=False)[0]
        except NotPositiveDefinite:
            return -np.inf

    def value_grad_fisher(self, x, full: bool = True):
        """Value, gradient and expected negative Hessian of l in x (its diagonal unless ``full``).

        E[-d2 l / dx_i dx_j] = 4 x_i x_j sum_l (a_i^T M_l^{-1} a_j)^2, twice the Fisher
        information of one observation set because l is twice its log-density.
        """
        self.evals += 1
        fac = _factor(x, self.ops, self.sigma_z)
        rhs = np.concatenate([self.ops, self.looks[..., None]], axis=-1)
        W = fac.whiten(rhs)
        WA, wy = W[..., :-1], W[..., -1]
        value = float(-fac.logdets.sum() - np.sum(wy * wy))
        proj = np.einsum("lij,li->lj", WA, wy)
        gdiag = np.einsum("lij,lij->lj", WA, WA)  # a_j^T M^{-1} a_j per look
        g = 2.0 * x * (np.sum(proj * proj, axis=0) - gdiag.sum(axis=0))
        if full:
            G = np.swapaxes(WA, -1, -2) @ WA
            fisher = 4.0 * np.outer(x, x) * np.einsum("lij,lij->ij", G, G)
        else:
            fisher = 4.0 * x * x * np.sum(gdiag * gdiag, axis=0)
        return value, g, fisher


def _expand(bounds, levels):
    return np.repeat(levels, np.diff(bounds))


class _PieceModel:
    """The log-likelihood as a function of the piece levels of a fixed segmentation.

    With x equal to c_p on piece p, M_l = sigma^2 I + sum_p c_p^2 P_lp where
    P_lp = A_lp A_lp^T sums the outer products of that piece's columns, so an
    evaluation costs O(L k m^2) to assemble instead of O(L m^2 n).
    """

    def __init__(self, prob: _Problem, bounds):
        self.prob = prob
        A = prob.ops
        self.P = np.stack([A[:, :, a:b] @ np.swapaxes(A[:, :, a:b], -1, -2) for a, b in zip(bounds[:-1], bounds[1:])], axis=1)
        self.noise = prob.sigma_z**2 * np.eye(A.shape[1])

    def _factor(self, c):
        return factor_covariances(self.noise + np.einsum("p,lpij->lij", c * c, self.P))

    def value(self, c) -> float:
        self.prob.evals += 1
        try:
            fac = self._factor(c)
        except NotPositiveDefinite:
            return -np.inf
        wy = fac.whiten(self.prob.looks)
        return float(-fac.logdets.sum() - np.sum(wy * wy))

    def value_grad_fisher(self, c):
        """Value, gradient and expected negative Hessian of l in the levels c."""
        self.prob.evals += 1
        fac = self._factor(c)
        wy = fac.whiten(self.prob.looks)
        value = float(-fac.logdets.sum() - np.sum(wy * wy))
        C = fac.factors[:, None]
        half = forward_substitute(C, self.P)  # C^{-1} P_p
        Q = forward_substitute(C, np.swapaxes(half, -1, -2))  # C^{-1} P_p C^{-T}
        quad = np.einsum("li,lpij,lj->p", wy, Q, wy)
        trace = np.einsum("lpii->p", Q)
        grad = 2.0 * c * (quad - trace)
        fisher = 4.0 * np.outer(c, c) * np.einsum("lpij,lqij->pq", Q, Q)
        return value, grad, fisher


def _refine_levels(prob: _Problem, bounds, levels, lo, hi, cfg: OptimizerConfig, iters: int = 40):
    """Fisher-scoring ascent over piece levels with the segmentation held fixed.

    Iterates until the level update is at rounding scale, so that equivalent
    objectives (e.g. a duplicated look set) land on the same maximizer.
    Returns the levels with the value, coordinate gradient and diagonal
    information at the final point.
    """
    levels = np.clip(np.asarray(levels, float), lo, hi)
    k = levels.size
    model = _PieceModel(prob, bounds)
    f, G, F = model.value_grad_fisher(levels)
    step = 1.0
    for _ in range(iters):
        # levels pinned at a bound with the ascent direction pointing out stay put
        free = ~(((levels <= lo) & (G < 0)) | ((levels >= hi) & (G > 0)))
        if not np.any(free):
            break
        H = F[np.ix_(free, free)]
        H[np.diag_indices_from(H)] += 1e-12 * max(np.trace(H), 1e-300)
        d = np.zeros(k)
        try:
            d[free] = np.linalg.solve(H, G[free])
        except np.linalg.LinAlgError:
            d[free] = G[free] / np.maximum(np.diag(H), 1e-300)
        # a predicted gain below the rounding of f cannot be confirmed by a line search
        if G @ d <= 64 * np.finfo(float).eps * abs(f):
            break
        improved = False
        t = min(1.0, step / cfg.step_shrink)
        while t > 1e-10:
            cand = np.clip(levels + t * d, lo, hi)
            fc = model.value(cand)
            if fc > f:
                improved = True
                break
            t *= cfg.step_shrink
        if not improved:
            break
        step = t
        moved = np.max(np.abs(cand - levels))
        levels = cand
        f, G, F = model.value_grad_fisher(levels)
        if moved <= 1e-11 * hi:
            break
    f, g, fdiag = prob.value_grad_fisher(_expand(bounds, levels), full=False)
    return levels, f, g, fdiag


def _moment_start(prob: _Problem, lo, hi):
    """Least-squares fit of diag(x^2) to the per-look second moments y y^T."""
    A, y, s2 = prob.ops, prob.looks, prob.sigma_z**2
    AtA = np.swapaxes(A, -1, -2) @ A
    G = np.sum(AtA * AtA, axis=0)
    Aty = np.einsum("lmn,lm->ln", A, y)
    b = np.sum(Aty**2, axis=0) - s2 * np.sum(A * A, axis=(0, 1))
    G[np.diag_indices_from(G)] += 1e-9 * np.trace(G) / G.shape[0]
    s = np.linalg.solve(G, b)
    return np.sqrt(np.clip(s, lo * lo, hi * hi))


def _run_start(prob: _Problem, x0, k, lo, hi, cfg: OptimizerConfig):
    bounds, levels, _ = segment_levels(x0, k, lo, hi)
    levels, f, g, fdiag = _refine_levels(prob, bounds, levels, lo, hi, cfg)
    best = (f, bounds, levels, g)
    x = _expand(bounds, levels)
    t = cfg.step_init
    it = 0
    stall = 0
    while it < cfg.max_iters:
        # free, diagonally preconditioned ascent in the box
        fdiag = np.maximum(fdiag, 1e-300)
        for _ in range(cfg.project_every):
            it += 1
            d = g / fdiag
            accepted = False
            while t > 1e-8:
                xn = np.clip(x + t * d, lo, hi)
                fn = prob.value(xn)
                if fn > f:
                    accepted = True
                    break
                t *= cfg.step_shrink
            if not accepted:
                t = cfg.step_init
                break
            x = xn
            f, g, fdiag = prob.value_grad_fisher(x, full=False)
            fdiag = np.maximum(fdiag, 1e-300)
            t = min(cfg.step_init, t / cfg.step_shrink)
            if it >= cfg.max_iters:
                break
        # project back onto the class, weighting coordinates by their information
        bounds, levels, _ = segment_levels(x, k, lo, hi, weights=fdiag)
        levels, fp, gp, fdp = _refine_levels(prob, bounds, levels, lo, hi, cfg)
        if fp > best[0] + cfg.tol_grad * prob.L:
            best = (fp, bounds, levels, gp)
            stall = 0
        else:
            stall += 1
            if stall >= 2:
                break
        x = _expand(best[1], best[2])
        f, g, fdiag = fp, gp, fdp
        if not np.array_equal(x, _expand(bounds, levels)):
            f, g, fdiag = prob.value_grad_fisher(x, full=False)
    return best, it


def _piece_gradient_norm(bounds, levels, g, lo, hi):
    G = np.add.reduceat(g, bounds[:-1])
    pinned = ((levels <= lo) & (G < 0)) | ((levels >= hi) & (G > 0))
    return float(np.linalg.norm(np.where(pinned, 0.0, G)))


def _lex_better(fa, xa, fb, xb) -> bool:
    if fa != fb:
        return fa > fb
    return tuple(xa) < tuple(xb)


def mle_projected_ascent(
    instance: ModelInstance,
    obs: ObservationSet,
    k: int,
    x_min: float,
    x_max: float,
    cfg: Optional[OptimizerConfig] = None,
    level_grid=None,
    seed: Optional[int] = None,
    full_output: bool = False,
):
    """Multi-start projected ascent of the log-likelihood over k-piece signals.

    Each start alternates ``project_every`` box-clamped, diagonally
    preconditioned gradient steps with a projection onto the k-piece class
    followed by Fisher-scoring refinement of the piece levels. The first start
    is a method-of-moments fit; the others are random class members drawn from
    ``RandomStream(seed, instance.trial, r, "restart")``. The best feasible
    point visited is returned.

    With ``level_grid`` the result is snapped to the grid and polished by a
    discrete local search over levels and breakpoints.
    """
    cfg = cfg or OptimizerConfig()
    n = instance.n
    if not 1 <= k <= n:
        raise InvalidDims(f"need 1 <= k <= n, got k={k}, n={n}")
    lo, hi = float(x_min), float(x_max)
    prob = _Problem(instance, obs)
    seed = instance.seed if seed is None else seed

    # the whole box is infeasible iff the top corner is (M grows with x^2)
    try:
        _factor(np.full(n, hi), prob.ops, prob.sigma_z)
    except NotPositiveDefinite:
        raise NotPositiveDefinite("likelihood undefined on the box: covariances are singular") from None

    starts = [_moment_start(prob, lo, hi)]
    for r in range(1, cfg.restarts):
        starts.append(sample_signal_class(RandomStream(seed, instance.trial, r, "restart"), n, k, lo, hi).values)

    best = None
    total_iters = 0
    for i, x0 in enumerate(starts):
        (f, bounds, levels, g), iters = _run_start(prob, x0, k, lo, hi, cfg)
        total_iters += iters
        if not np.isfinite(f):
            continue
        x = _expand(bounds, levels)
        if best is None or _lex_better(f, x, best[0], best[1]):
            best = (f, x, bounds, levels, g, i)
    if best is None:
        raise NotPositiveDefinite("likelihood undefined at every start")
    f, x, bounds, levels, g, i = best
    gnorm = _piece_gradient_norm(bounds, levels, g, lo, hi)

    if level_grid is not None:
        grid = np.asarray(level_grid, dtype=float)
        x, f = _grid_local_search(prob, x, k, grid)
        gnorm = float("nan")

    sig = make_signal(x, lo, hi, k_budget=k)
    if full_output:
        return sig, AscentInfo(f, gnorm, total_iters, i)
    return sig


# ---------------------------------------------------------------------------
# discrete search on a level grid

def _pieces_of(x):
    cps = np.flatnonzero(x[1:] != x[:-1]) + 1
    bounds = np.concatenate(([0], cps, [x.size]))
    return bounds, x[bounds[:-1]]


def _neighbours(x, k, grid):
    """All grid signals one move away: relevel, move a breakpoint, split or merge."""
    bounds, levels = _pieces_of(x)
    p = levels.size
    for i in range(p):
        for g in grid:
            if g != levels[i]:
                lv = levels.copy()
                lv[i] = g
                yield _expand(bounds, lv)
    for i in range(1, p):
        for b in range(bounds[i - 1] + 1, bounds[i + 1]):
            if b != bounds[i]:
                bd = bounds.copy()
                bd[i] = b
                yield _expand(bd, levels)
    if p < k:
        for i in range(p):
            for b in range(bounds[i] + 1, bounds[i + 1]):
                bd = np.insert(bounds, i + 1, b)
                for g in grid:
                    for side in (0, 1):
                        lv = np.insert(levels, i + side, g)
                        yield _expand(bd, lv)
    if p > 1:
        for i in range(p - 1):
            for keep in (levels[i], levels[i + 1]):
                lv = np.delete(levels, i + 1)
                lv[i] = keep
                yield _expand(np.delete(bounds, i + 1), lv)


def _grid_local_search(prob: _Problem, x, k, grid):
    x = grid[np.argmin(np.abs(x[:, None] - grid[None, :]), axis=1)]
    # snapping can merge pieces but never create new ones
    f = prob.value(x)
    while True:
        best_f, best_x = f, x
        for cand in _neighbours(x, k, grid):
            fc = prob.value(cand)
            if _lex_better(fc, cand, best_f, best_x):
                best_f, best_x = fc, cand
        if best_x is x:
            return x, f
        x, f = best_x, best_f


def _compositions(n, parts):
    """Breakpoint tuples splitting [0, n) into ``parts`` nonempty segments."""
    for cuts in itertools.combinations(range(1, n), parts - 1):
        yield (0,) + cuts + (n,)


def net_candidate_count(n: int, k: int, g: int) -> int:
    return sum(math.comb(n - 1, j - 1) * g**j for j in range(1, min(k, n) + 1))


def mle_net_search(instance: ModelInstance, obs: ObservationSet, net: NetSpec, cap: int = DEFAULT_SEARCH_CAP, full_output: bool = False):
    """Exhaustive log-likelihood maximization over k-piece signals with grid levels.

    Every composition of [n] into at most ``net.max_pieces`` segments is paired
    with every assignment of grid levels; ties go to the lexicographically
    smallest value sequence.
    """
    n = instance.n
    grid = net.level_grid
    total = net_candidate_count(n, net.max_pieces, grid.size)
    if total > cap:
        raise SearchSpaceTooLarge(f"{total} candidates exceed cap {cap}")
    prob = _Problem(instance, obs)
    best_f, best_x = -np.inf, None
    count = 0
    for parts in range(1, min(net.max_pieces, n) + 1):
        for bounds in _compositions(n, parts):
            widths = np.diff(bounds)
            for levels in itertools.product(grid, repeat=parts):
                x = np.repeat(levels, widths)
                f = prob.value(x)
                count += 1
                if best_x is None or _lex_better(f, x, best_f, best_x):
                    best_f, best_x = f, x
    if not np.isfinite(best_f):
        raise NotPositiveDefinite("likelihood undefined at every net point")
    sig = make_signal(best_x, grid[0], grid[-1] if grid[-1] > grid[0] else grid[0] + 1.0, k_budget=net.max_pieces, require_positive=False)
    if full_output:
        return sig, best_f, count
    return sig


# ---------------------------------------------------------------------------
# oversampled, noiseless regime

def sufficient_statistic_estimate(instance: ModelInstance, obs: ObservationSet, k: int, x_min: float, x_max: float) -> Signal:
    """Estimate x_o from u_l = (A_l^T A_l)^{-1} A_l^T y_l.

    In the noiseless regime u_l = X_o w_l, so sqrt(mean_l u_l^2) estimates x_o
    coordinatewise; the result is projected onto the k-piece class.
    """
    m, n = instance.m, instance.n
    if m < n:
        raise InvalidDims(f"sufficient statistic needs m >= n, got m={m}, n={n}")
    if instance.sigma_z > 0:
        warnings.warn("sufficient_statistic_estimate is intended for sigma_z = 0", RuntimeWarning, stacklevel=2)
    A = np.asarray(instance.operators)
    AtA = np.swapaxes(A, -1, -2) @ A
    try:
        C = np.linalg.cholesky(AtA)
    except np.linalg.LinAlgError as exc:
        raise SingularNormalMatrix("A_l^T A_l is singular") from exc
    piv = np.diagonal(C, axis1=-2, axis2=-1) ** 2
    scale = np.max(np.diagonal(AtA, axis1=-2, axis2=-1), axis=-1, keepdims=True)
    if np.any(piv <= 1e-12 * np.maximum(scale, np.finfo(float).tiny)):
        raise SingularNormalMatrix("A_l^T A_l is numerically singular")
    Aty = np.einsum("lmn,lm->ln", A, obs.looks)[..., None]
    u = back_substitute(C, forward_substitute(C, Aty))[..., 0]
    raw = np.sqrt(np.mean(u * u, axis=0))
    return project_piecewise_constant(raw, k, x_min, x_max)
