"""Multilook Gaussian log-likelihood, its gradient and exact KL divergences.

Conditional on the operators, look l is distributed as N(0, M_l(x)) with

    M_l(x) = sigma_z^2 I_m + A_l diag(x)^2 A_l^T.

All quantities go through a batched Cholesky factorization of the M_l; no
matrix is ever inverted explicitly and a failed factorization is reported,
never regularized away.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .model import ModelInstance, ObservationSet, as_array

# relative pivot threshold below which M_l is treated as singular
_PIVOT_RTOL = 1e-12


def forward_substitute(C: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve C_l X_l = B_l for stacked lower-triangular C, shapes (L, m, m) and (L, m, k).

    Row-by-row substitution vectorized over looks and right-hand sides; about
    twice as fast as a batched LU solve for the small m used here.
    """
    m = C.shape[-1]
    X = np.empty(np.broadcast_shapes(C.shape[:-2], B.shape[:-2]) + B.shape[-2:])
    X[..., 0, :] = B[..., 0, :] / C[..., 0, 0, None]
    for i in range(1, m):
        acc = (C[..., i : i + 1, :i] @ X[..., :i, :])[..., 0, :]
        X[..., i, :] = (B[..., i, :] - acc) / C[..., i, i, None]
    return X


def back_substitute(C: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve C_l^T X_l = B_l for stacked lower-triangular C."""
    flip = C[..., ::-1, ::-1]
    return forward_substitute(np.swapaxes(flip, -1, -2), B[..., ::-1, :])[..., ::-1, :]


@dataclass(frozen=True, eq=False)
class CovarianceFactorization:
    """Lower Cholesky factors of every M_l(x) and their log-determinants."""

    factors: np.ndarray  # (L, m, m), lower triangular
    logdets: np.ndarray  # (L,)

    def covariance(self) -> np.ndarray:
        C = self.factors
        return C @ np.swapaxes(C, -1, -2)

    def whiten(self, b: np.ndarray) -> np.ndarray:
        """Return C_l^{-1} b_l for a stacked right-hand side of shape (L, m) or (L, m, k)."""
        vec = b.ndim == 2
        rhs = b[..., None] if vec else b
        out = forward_substitute(self.factors, rhs)
        return out[..., 0] if vec else out

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Return M_l^{-1} b_l via two triangular solves."""
        vec = b.ndim == 2
        rhs = b[..., None] if vec else b
        out = back_substitute(self.factors, forward_substitute(self.factors, rhs))
        return out[..., 0] if vec else out


def covariances(x, operators: np.ndarray, sigma_z: float) -> np.ndarray:
    """Dense M_l(x) for every look, shape (L, m, m)."""
    x = np.asarray(x, dtype=float)
    AX = operators * x
    M = AX @ np.swapaxes(AX, -1, -2)
    m = operators.shape[1]
    M[..., np.arange(m), np.arange(m)] += sigma_z**2
    return M


def _factor(x, operators: np.ndarray, sigma_z: float) -> CovarianceFactorization:
    return factor_covariances(covariances(x, operators, sigma_z))


def factor_covariances(M: np.ndarray) -> CovarianceFactorization:
    """Cholesky factors and log-determinants of a stack of covariances."""
    try:
        C = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("a per-look covariance is not positive definite") from exc
    piv = np.diagonal(C, axis1=-2, axis2=-1)
    scale = np.max(np.diagonal(M, axis1=-2, axis2=-1), axis=-1, keepdims=True)
    if np.any(piv**2 <= _PIVOT_RTOL * np.maximum(scale, np.finfo(float).tiny)) or not np.all(np.isfinite(piv)):
        raise NotPositiveDefinite("a per-look covariance is numerically singular")
    logdets = 2.0 * np.log(piv).sum(axis=-1)
    return CovarianceFactorization(C, logdets)


def _check(x: np.ndarray, instance: ModelInstance):
    if x.shape != (instance.n,):
        raise DimensionMismatch(f"signal length {x.shape} does not match n={instance.n}")


def factorize(x, instance: ModelInstance) -> CovarianceFactorization:
    xa = as_array(x)
    _check(xa, instance)
    return _factor(xa, instance.operators, instance.sigma_z)


def loglik_and_grad(x: np.ndarray, operators: np.ndarray, sigma_z: float, looks: np.ndarray, grad: bool = True):
    """Array-level log-likelihood and (optionally) its gradient in x.

    ``l(x) = sum_l [-log det M_l - y_l^T M_l^{-1} y_l]`` and
    ``dl/dx_j = 2 x_j sum_l [(a_lj^T M_l^{-1} y_l)^2 - a_lj^T M_l^{-1} a_lj]``.
    """
    fac = _factor(x, operators, sigma_z)
    if not grad:
        wy = fac.whiten(looks)
        return float(-fac.logdets.sum() - np.sum(wy * wy)), None
    rhs = np.concatenate([operators, looks[..., None]], axis=-1)
    W = fac.whiten(rhs)
    WA, wy = W[..., :-1], W[..., -1]
    value = float(-fac.logdets.sum() - np.sum(wy * wy))
    diag = np.einsum("lij,lij->j", WA, WA)
    proj = np.einsum("lij,li->lj", WA, wy)
    g = 2.0 * x * (np.sum(proj * proj, axis=0) - diag)
    return value, g


def log_likelihood(x, instance: ModelInstance, obs: ObservationSet) -> float:
    xa = as_array(x)
    _check(xa, instance)
    return loglik_and_grad(xa, instance.operators, instance.sigma_z, obs.looks, grad=False)[0]


def log_likelihood_gradient(x, instance: ModelInstance, obs: ObservationSet) -> np.ndarray:
    xa = as_array(x)
    _check(xa, instance)
    return loglik_and_grad(xa, instance.operators, instance.sigma_z, obs.looks)[1]


def kl_from_factors(fi: CovarianceFactorization, fj: CovarianceFactorization) -> float:
    """sum_l KL(N(0, M_l^i) || N(0, M_l^j))."""
    m = fi.factors.shape[-1]
    T = forward_substitute(fj.factors, fi.factors)  # C_j^{-1} C_i
    trace = np.einsum("lab,lab->l", T, T)
    return float(0.5 * np.sum(fj.logdets - fi.logdets - m + trace))


def gaussian_kl(x_i, x_j, instance: ModelInstance) -> float:
    """Exact KL divergence between the observation laws at x_i and x_j."""
    return kl_from_factors(factorize(x_i, instance), factorize(x_j, instance))
