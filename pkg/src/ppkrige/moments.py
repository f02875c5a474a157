"""Regression-spline estimators of mean and second-moment functions at observed sites.

With ``beta(t)`` the temporal basis and ``G`` its Gram matrix, the mean at site
``j`` is ``beta(t)^T a_j`` with ``a_j = G^{-1} (1/n) sum_i sum_{u in X_i^j} beta(u)``
and the second moment ``R_jk(t, t')`` is ``beta(t)^T R[j, k] beta(t')`` with

    R[j, k] = G^{-1} {(1/n) sum_i sum_{u in X_i^j} sum_{v in X_i^k} beta(u) beta(v)^T} G^{-1},

where the pairs ``v = u`` are left out when ``j == k``. The double sum
factorizes into per-replicate sums ``S_ij = sum_u beta(u)``, so the
estimator costs ``O(events * p + n d^2 p^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .basis import SplineBasis, gram_matrix
from .data import PointPattern


@dataclass(frozen=True, eq=False)
class MomentEstimates:
    A: np.ndarray        # (p, d) mean coefficients
    Rcoef: np.ndarray    # (d, d, p, p) second-moment inner matrices
    M: np.ndarray        # (d, d)
    Sigma: np.ndarray    # (d, d)
    G: np.ndarray        # (p, p)
    basis: SplineBasis
    n: int

    def mean_curves(self, t) -> np.ndarray:
        """``mu_j(t)`` for all sites, shape ``t.shape + (d,)``."""
        return self.basis.evaluate(t) @ self.A

    def second_moment(self, j: int, k: int, t, s) -> np.ndarray:
        """``R_jk(t, s)`` on the tensor grid ``t x s``."""
        return self.basis.evaluate(t) @ self.Rcoef[j, k] @ self.basis.evaluate(s).T


def _check_domain(pattern: PointPattern, basis: SplineBasis):
    if pattern.domain != basis.domain:
        raise ValueError(
            f"pattern domain [{pattern.domain.a}, {pattern.domain.b}] differs from "
            f"basis domain [{basis.domain.a}, {basis.domain.b}]"
        )


def replicate_sums(pattern: PointPattern, basis: SplineBasis):
    """Per-replicate basis sums and per-site diagonal outer products.

    Returns ``S`` of shape (n, d, p) with ``S[i, j] = sum_{u in X_i^j} beta(u)``
    and ``D`` of shape (d, p, p) with ``D[j] = sum_i sum_u beta(u) beta(u)^T``.
    """
    _check_domain(pattern, basis)
    n, d, p = pattern.n, pattern.d, basis.dim
    rep, site, t = pattern.flat()
    B = basis.evaluate(t) if t.size else np.zeros((0, p))
    cell = rep * d + site
    S = np.empty((n * d, p))
    for c in range(p):
        S[:, c] = np.bincount(cell, weights=B[:, c], minlength=n * d)
    order = np.argsort(site, kind="stable")
    bounds = np.searchsorted(site[order], np.arange(d + 1))
    Bs = B[order]
    D = np.empty((d, p, p))
    for j in range(d):
        blk = Bs[bounds[j]:bounds[j + 1]]
        D[j] = blk.T @ blk
    return S.reshape(n, d, p), D


def _gram_factor(basis: SplineBasis, G=None):
    G = gram_matrix(basis) if G is None else G
    return G, linalg.cho_factor(G)


def mean_coefficients(pattern: PointPattern, basis: SplineBasis, G=None) -> np.ndarray:
    """``A = [a_1, ..., a_d]``, the (p, d) matrix of mean coefficients."""
    S, _ = replicate_sums(pattern, basis)
    G, fac = _gram_factor(basis, G)
    return linalg.cho_solve(fac, S.mean(axis=0).T)


def second_moment_coefficients(pattern: PointPattern, basis: SplineBasis, G=None) -> np.ndarray:
    """Inner matrices ``R[j, k]`` (shape (d, d, p, p)) of the second-moment estimators."""
    S, D = replicate_sums(pattern, basis)
    G, fac = _gram_factor(basis, G)
    return _rcoef_from_sums(S, D, fac)


def _rcoef_from_sums(S, D, fac):
    n, d, p = S.shape
    raw = np.tensordot(S, S, axes=([0], [0])) / n        # (d, p, d, p)
    raw = raw.transpose(0, 2, 1, 3).copy()               # (d, d, p, p)
    idx = np.arange(d)
    raw[idx, idx] -= D / n
    # G^{-1} X G^{-1} for every block
    left = linalg.cho_solve(fac, raw.transpose(2, 0, 1, 3).reshape(p, -1)).reshape(p, d, d, p)
    left = left.transpose(1, 2, 0, 3)                    # (d, d, p, p), G^{-1} X
    # (G^{-1} X) G^{-1}, solving along the last axis
    right = linalg.cho_solve(fac, left.transpose(3, 0, 1, 2).reshape(p, -1)).reshape(p, d, d, p)
    return right.transpose(1, 2, 3, 0)


def m_matrix(A: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``M_jk = a_j^T G a_k = int mu_j mu_k``."""
    M = A.T @ G @ A
    return 0.5 * (M + M.T)


def sigma_matrix(A: np.ndarray, Rcoef: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``Sigma_jk = int rho_jk(t, t) dt = tr((R[j,k] - a_j a_k^T) G)``.

    Not forced to be positive semi-definite.
    """
    trRG = np.einsum("jkab,ba->jk", Rcoef, G)
    aGa = A.T @ G @ A
    return trRG - aGa


def estimate_moments(pattern: PointPattern, basis: SplineBasis) -> MomentEstimates:
    """All site-level moment estimates in one pass over the events."""
    S, D = replicate_sums(pattern, basis)
    G, fac = _gram_factor(basis)
    A = linalg.cho_solve(fac, S.mean(axis=0).T)
    R = _rcoef_from_sums(S, D, fac)
    return MomentEstimates(A, R, m_matrix(A, G), sigma_matrix(A, R, G), G, basis, pattern.n)
