"""Functional kriging weights with spectrally truncated moment matrices.

The weights minimize ``c^T Sigma c - 2 c^T sigma0`` subject to the mean
constraint ``M c = m0``. Both ``M`` and ``Sigma`` are replaced by their
leading eigen-pairs, which keeps the block system well posed when ``M`` is
(nearly) rank deficient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .data import CountFunction, PointPattern


class KrigingError(np.linalg.LinAlgError):
    """The reduced kriging system has no unique solution."""


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray    # kept eigenvalues, decreasing
    vectors: np.ndarray   # (d, rank)
    rank: int
    total: float          # sum of all eigenvalues, negatives included


def _sym(S, name):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"{name} must be square, got shape {S.shape}")
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    if np.abs(S - S.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (S + S.T)


def truncate_spectrum(S, threshold: float = 0.9, rtol: float = 0.0) -> Spectrum:
    """Leading eigen-pairs of ``S`` holding a ``threshold`` share of its trace.

    Eigenvalues are sorted in decreasing order (ties keep the solver's order)
    and each eigenvector is signed so its largest-magnitude entry is positive.
    Negative eigenvalues count toward the trace but are never kept, nor are
    eigenvalues at or below ``rtol`` times the largest one.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    S = _sym(S, "matrix")
    w, V = np.linalg.eigh(S)
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    pivot = np.abs(V).argmax(axis=0)
    V = V * np.where(V[pivot, np.arange(V.shape[1])] < 0, -1.0, 1.0)
    total = float(w.sum())
    wmax = w[0] if w.size else 0.0
    usable = int(((w > 0) & (w > rtol * wmax)).sum()) if wmax > 0 else 0
    if usable == 0 or total <= 0:
        return Spectrum(w[:0], V[:, :0], 0, total)
    frac = np.cumsum(w[:usable]) / total
    hit = np.flatnonzero(frac >= threshold * (1.0 - 1e-12))
    r = int(hit[0]) + 1 if hit.size else usable
    return Spectrum(w[:r], V[:, :r], r, total)


@dataclass(frozen=True)
class KrigingSolution:
    c_star: np.ndarray
    lagrange: np.ndarray
    rank_M: int
    rank_Sigma: int
    spe_estimate: float
    truncation_threshold: float
    threshold_Sigma: float
    M_tilde: np.ndarray       # (r, d)
    m0_tilde: np.ndarray      # (r,)
    V_s: np.ndarray           # (d, s)
    H_s: np.ndarray           # (s,)

    def constraint_residual(self) -> float:
        """``||M~ c - m~0|| / (1 + ||m~0||)``."""
        res = self.M_tilde @ self.c_star - self.m0_tilde
        return float(np.linalg.norm(res) / (1.0 + np.linalg.norm(self.m0_tilde)))

    def kkt_residual(self, sigma0) -> float:
        """Stationarity of the reduced Lagrangian, max-norm."""
        cs = self.V_s.T @ self.c_star
        g = self.H_s * cs + (self.M_tilde @ self.V_s).T @ self.lagrange - self.V_s.T @ np.asarray(sigma0)
        return float(np.abs(g).max(initial=0.0))


def solve_kriging(Sigma, M, sigma0, m0, threshold_M: float = 0.9, threshold_Sigma: float = 0.9,
                  sigma00: float = 0.0, rtol_M: float = 0.0, rtol_Sigma: float = 0.0) -> KrigingSolution:
    """Kriging weights from (possibly estimated) moment matrices.

    ``sigma00`` only shifts ``spe_estimate``. The ``rtol`` arguments drop
    numerically zero eigenvalues; use them with a threshold of 1 to solve the
    untruncated problem for exact moments.
    """
    Sigma = _sym(Sigma, "Sigma")
    M = _sym(M, "M")
    d = Sigma.shape[0]
    sigma0 = np.asarray(sigma0, dtype=float).ravel()
    m0 = np.asarray(m0, dtype=float).ravel()
    if M.shape != (d, d) or sigma0.shape != (d,) or m0.shape != (d,):
        raise ValueError(
            f"inconsistent shapes: Sigma {Sigma.shape}, M {M.shape}, sigma0 {sigma0.shape}, m0 {m0.shape}"
        )
    specM = truncate_spectrum(M, threshold_M, rtol_M)
    specS = truncate_spectrum(Sigma, threshold_Sigma, rtol_Sigma)
    r, s = specM.rank, specS.rank
    if r == 0:
        raise KrigingError("M has no positive eigenvalue; the mean constraint is empty")
    if s < r:
        raise KrigingError(f"rank of Sigma ({s}) below number of constraints ({r}); lower threshold_M")
    Ur, Vs, h = specM.vectors, specS.vectors, specS.values
    delta = specM.values
    # rows of M~ c = m~0 divided by delta; the multiplier is rescaled on return
    Acon = Ur.T @ Vs
    sv = np.linalg.svd(Acon, compute_uv=False)
    if sv[-1] <= 1e-10 * max(sv[0], 1.0):
        raise KrigingError(
            f"constraint block is rank deficient (rank_M={r}, rank_Sigma={s}, "
            f"smallest singular value {sv[-1]:.3g}); lower the thresholds"
        )
    K = np.zeros((s + r, s + r))
    K[:s, :s] = np.diag(h)
    K[:s, s:] = Acon.T
    K[s:, :s] = Acon
    rhs = np.concatenate([Vs.T @ sigma0, (Ur.T @ m0) / delta])
    try:
        sol = linalg.solve(K, rhs, assume_a="sym")
    except linalg.LinAlgError as exc:
        raise KrigingError(f"kriging block system is singular (rank_M={r}, rank_Sigma={s})") from exc
    cs, ell_scaled = sol[:s], sol[s:]
    c = Vs @ cs
    spe = float(c @ Sigma @ c - 2.0 * c @ sigma0 + sigma00)
    return KrigingSolution(
        c_star=c,
        lagrange=ell_scaled / delta,
        rank_M=r,
        rank_Sigma=s,
        spe_estimate=spe,
        truncation_threshold=threshold_M,
        threshold_Sigma=threshold_Sigma,
        M_tilde=delta[:, None] * Ur.T,
        m0_tilde=Ur.T @ m0,
        V_s=Vs,
        H_s=h,
    )


def predict_intensity(c_star, curves, clamp: bool = False) -> np.ndarray:
    """Apply weights to site-indexed curves (site axis last).

    ``curves`` may be a (p, d) coefficient matrix or (T, d) sampled values.
    """
    out = np.asarray(curves, dtype=float) @ np.asarray(c_star, dtype=float)
    return np.maximum(out, 0.0) if clamp else out


def predict_counts(pattern: PointPattern, c_star, i: int) -> CountFunction:
    """``sum_j c_j N_i^j(t)`` as a real-valued step function."""
    if not 0 <= i < pattern.n:
        raise IndexError(f"replicate {i} out of range 0..{pattern.n - 1}")
    c = np.asarray(c_star, dtype=float).ravel()
    if c.shape != (pattern.d,):
        raise ValueError(f"expected {pattern.d} weights, got {c.shape[0]}")
    events = pattern.events[i]
    times = np.concatenate([np.asarray(e, dtype=float) for e in events]) if events else np.empty(0)
    weights = np.concatenate([np.full(len(e), c[j]) for j, e in enumerate(events)]) if events else np.empty(0)
    return CountFunction(pattern.domain, times, weights)


def _l2_distance_sq(f: CountFunction, g: CountFunction) -> float:
    a, b = f.domain.a, f.domain.b
    cuts = np.unique(np.concatenate([[a, b], f.times, g.times]))
    cuts = cuts[(cuts >= a) & (cuts <= b)]
    left = cuts[:-1]
    diff = f(left) - g(left)
    return float((diff ** 2 * np.diff(cuts)).sum())


def count_prediction_error(observed: Sequence[CountFunction], predicted: Sequence[CountFunction]) -> float:
    """Root average squared L2 distance between paired step functions, computed exactly."""
    if len(observed) != len(predicted):
        raise ValueError(f"{len(observed)} observed vs {len(predicted)} predicted count functions")
    if not observed:
        raise ValueError("no count functions to compare")
    total = 0.0
    for f, g in zip(observed, predicted):
        if f.domain != g.domain:
            raise ValueError("count functions live on different domains")
        total += _l2_distance_sq(f, g)
    return float(np.sqrt(total / len(observed)))
