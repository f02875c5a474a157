"""Penalized tensor-spline smoothing of site-level moments over space.

Mean surface
    ``B = argmin sum_j |a_j - B gamma(s_j)|^2 + xi_B tr(B^T B J)``, i.e.
    ``B = A Gamma (Gamma^T Gamma + xi_B J)^{-1}``.

Covariance surface
    ``C = argmin sum_{j != k} (Sigma_jk - gamma_j^T C gamma_k)^2 + xi_C tr((C J)^2)``,
    whose normal equations read ``Omega vec(C) = (Gamma^T (x) Gamma^T) vec(Sigma - diag Sigma)``
    with ``Omega = (Gamma^T (x) Gamma^T)(I - E^T E)(Gamma (x) Gamma) + xi_C (J (x) J)``.

When the spatial basis has more functions than there are sites, ``Omega``
is singular: any ``C = Z X O^T + O X^T Z^T`` with ``Gamma Z = 0`` and
``J O = 0`` changes neither the data fit nor the penalty. Fitted values at
the sites and the hat-matrix trace do not depend on that freedom, but the
extrapolated covariances at a new site do. Given the spatial Gram matrix, the
minimizer with the least one-sided roughness ``tr(C J C Gs)`` is returned;
otherwise the minimum-norm solution ``Omega^+ rhs``.

Computation avoids the ``q^2 x q^2`` system. A generalized eigenbasis ``T``
with ``T^T Gamma^T Gamma T = diag(lam)`` and ``T^T J T = diag(omega)``, omega in {0, 1}
makes the penalty diagonal and confines the data term to the ``m = rank(Gamma)``
directions with ``lam > 0``; there ``Omega`` is a diagonal matrix minus a
rank-``d`` correction and is inverted with the Woodbury identity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .basis import SpatialBasis, spatial_gram


class SingularSystemError(np.linalg.LinAlgError):
    """A penalized normal-equation system could not be solved."""


def default_xi_grid(lo: float = 1e-6, hi: float = 1e6, per_decade: int = 25) -> np.ndarray:
    """Log-spaced penalty grid, ``per_decade`` points per decade, end points included."""
    decades = np.log10(hi) - np.log10(lo)
    num = int(round(decades * per_decade)) + 1
    return np.logspace(np.log10(lo), np.log10(hi), num)


def design_matrix(sb: SpatialBasis, coords) -> np.ndarray:
    """``Gamma`` with rows ``gamma(s_j)^T``."""
    return sb.evaluate(coords)


@dataclass
class GcvResult:
    xi: float
    df: float
    score: float
    grid: np.ndarray
    scores: np.ndarray
    dfs: np.ndarray

    def curve(self) -> np.ndarray:
        """Columns ``xi, df, gcv`` (excluded grid points carry ``nan`` scores)."""
        return np.column_stack([self.grid, self.dfs, self.scores])


def _select(grid, scores, dfs) -> GcvResult:
    grid = np.asarray(grid, dtype=float)
    valid = np.isfinite(scores)
    if not np.any(valid):
        raise SingularSystemError("no admissible penalty on the grid (all df >= number of data)")
    best = np.nanmin(scores)
    # ties go to the larger (smoother) penalty
    idx = int(np.flatnonzero(scores == best)[-1])
    return GcvResult(float(grid[idx]), float(dfs[idx]), float(best), grid, scores, dfs)


# -- mean surface -------------------------------------------------------------

class _MeanSystem:
    """``Gamma^T Gamma + xi J`` in the joint eigenbasis, shared across penalties."""

    def __init__(self, Gamma, J, rank_tol=1e-10):
        T, lam, omega = _joint_diagonalization(Gamma, J)
        self.data = lam > rank_tol * lam.max()
        self.lam = np.where(self.data, lam, 0.0)
        self.T, self.omega = T, omega
        self.HT = Gamma @ T[:, self.data]              # columns h_a with ||h_a||^2 = lam_a
        self.Gamma, self.J = Gamma, J

    def _denominators(self, xi):
        den = self.lam + xi * self.omega
        if np.any(den <= 0):
            cond = np.linalg.cond(self.Gamma.T @ self.Gamma + xi * self.J)
            raise SingularSystemError(
                f"Gamma^T Gamma + xi J is singular for xi={xi:g} (condition estimate {cond:.3g}); "
                f"{int((den <= 0).sum())} coefficient directions carry neither data nor penalty"
            )
        return den

    def coefficients(self, A, xi):
        den = self._denominators(xi)[self.data]
        return ((A @ self.HT) / den) @ self.T[:, self.data].T

    def hat(self, xi):
        den = self._denominators(xi)[self.data]
        H = (self.HT / den) @ self.HT.T
        return 0.5 * (H + H.T)

    def df(self, xi):
        den = self._denominators(xi)
        return float((self.lam / den).sum())


def fit_mean_surface(A: np.ndarray, Gamma: np.ndarray, J: np.ndarray, xi: float) -> np.ndarray:
    """Penalized mean-surface coefficients ``B`` (p x q)."""
    if xi < 0:
        raise ValueError("penalty must be non-negative")
    return _MeanSystem(Gamma, J).coefficients(np.asarray(A, dtype=float), xi)


def mean_hat_matrix(Gamma: np.ndarray, J: np.ndarray, xi: float) -> np.ndarray:
    """``H_B = Gamma (Gamma^T Gamma + xi J)^{-1} Gamma^T``."""
    return _MeanSystem(Gamma, J).hat(xi)


def cv_mean(A, Gamma, J, xi) -> float:
    """Leave-one-site-out score from the linear-smoother shortcut."""
    H = mean_hat_matrix(Gamma, J, xi)
    resid = A - A @ H          # A - B Gamma^T, since B Gamma^T = A H
    rss = (resid ** 2).sum(axis=0)
    return float(np.mean(rss / (1.0 - np.diag(H)) ** 2))


def gcv_mean(A, Gamma, J, xi_grid: Optional[Sequence[float]] = None) -> GcvResult:
    """Choose ``xi_B`` by generalized cross-validation over ``xi_grid``."""
    grid = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0):
        raise ValueError("penalty grid must be non-empty and non-negative")
    d = Gamma.shape[0]
    system = _MeanSystem(Gamma, J)
    scores = np.full(grid.size, np.nan)
    dfs = np.full(grid.size, np.nan)
    for i, xi in enumerate(grid):
        try:
            H = system.hat(xi)
        except SingularSystemError as exc:
            warnings.warn(f"GCV: grid point xi={xi:g} skipped ({exc})", RuntimeWarning)
            continue
        df = system.df(xi)
        dfs[i] = df
        if df >= d * (1.0 - 1e-8):
            warnings.warn(f"GCV: df_B={df:.4g} >= d={d} at xi={xi:g}; grid point excluded", RuntimeWarning)
            continue
        rss = ((A - A @ H) ** 2).sum()
        scores[i] = rss / d / (1.0 - df / d) ** 2
    return _select(grid, scores, dfs)


# -- covariance surface ---------------------------------------------------------

def _penalty_split(J, tol=1e-10):
    """Orthonormal null space ``O`` of ``J`` and range eigen-pairs (eigenvalues below ``tol * max`` count as zero)."""
    w, V = np.linalg.eigh(0.5 * (J + J.T))
    null = w <= tol * max(w.max(), 0.0)
    return V[:, null], V[:, ~null], w[~null]


def _joint_diagonalization(Gamma, J):
    """Basis ``T`` with ``T^T Gamma^T Gamma T = diag(lam)`` and ``T^T J T = diag(omega)``.

    ``omega`` is exactly 0 on the null space of ``J`` and 1 elsewhere, so a
    large penalty never leaks into the unpenalized directions.
    """
    O, R, w = _penalty_split(J)
    R = R / np.sqrt(w)
    GO, GR = Gamma @ O, Gamma @ R
    Goo = GO.T @ GO
    if O.shape[1]:
        so, Uo = np.linalg.eigh(Goo)
        if so.min() <= 1e-12 * max(so.max(), 1e-300):
            raise SingularSystemError(
                "Gamma^T Gamma + J is singular: the penalty null space is not identified by the sites"
            )
        coef = linalg.solve(Goo, GO.T @ GR, assume_a="pos")
        R = R - O @ coef                    # data-orthogonal to the null block; J R unchanged
        GR = GR - GO @ coef
    else:
        so, Uo = np.empty(0), np.empty((0, 0))
    s, U = np.linalg.eigh(GR.T @ GR)
    T = np.hstack([O @ Uo, R @ U])
    lam = np.concatenate([so, np.clip(s, 0.0, None)])
    omega = np.concatenate([np.zeros(so.size), np.ones(s.size)])
    return T, lam, omega


class CovarianceSmoother:
    """Reusable solver for the covariance-surface fit on fixed ``Gamma`` and ``J``."""

    def __init__(self, Gamma: np.ndarray, J: np.ndarray, Gs: Optional[np.ndarray] = None,
                 rank_tol: float = 1e-10):
        Gamma = np.asarray(Gamma, dtype=float)
        J = np.asarray(J, dtype=float)
        self.Gamma, self.J = Gamma, J
        self.Gs = None if Gs is None else np.asarray(Gs, dtype=float)
        d, q = Gamma.shape
        if d < 2:
            raise ValueError("covariance smoothing needs at least two sites")
        T, lam, omega = _joint_diagonalization(Gamma, J)
        keep = lam > rank_tol * lam.max()
        self.T = T[:, keep]
        self.lam = lam[keep]
        self.omega = omega[keep]
        self.H = Gamma @ self.T                    # (d, m); H^T H = diag(lam)
        self.LL = np.outer(self.lam, self.lam)
        m = self.H.shape[1]
        self.Q = (self.H[:, None, :] * self.H[None, :, :]).reshape(d * d, m)
        self._null = None
        self._svd_cache = None

    @property
    def d(self) -> int:
        return self.Gamma.shape[0]

    def _diag(self, xi):
        return self.LL + xi * np.outer(self.omega, self.omega)

    def _qform(self, E):
        # (W^T E W)_{jk} = sum_ab H_ja H_ka E_ab H_jb H_kb
        return ((self.Q @ E) * self.Q).sum(axis=1).reshape(self.d, self.d)

    def _woodbury(self, Dg):
        K = np.eye(self.d) - self._qform(1.0 / Dg)
        if np.linalg.cond(K) > 1e12:
            return None
        return linalg.lu_factor(K)

    def _stacked_svd(self, xi):
        # singular case: SVD of the least-squares design [W_off; sqrt(xi) diag(omega omega)]
        # instead of a pseudo-inverse of its normal matrix, which would square the conditioning
        if self._svd_cache is not None and self._svd_cache[0] == xi:
            return self._svd_cache[1]
        d, m = self.H.shape
        off = ~np.eye(d, dtype=bool)
        top = (self.H[:, None, :, None] * self.H[None, :, None, :])[off].reshape(-1, m * m)
        pen = np.sqrt(xi) * np.outer(self.omega, self.omega).ravel()
        rows = np.flatnonzero(pen > 0)
        bottom = np.zeros((rows.size, m * m))
        bottom[np.arange(rows.size), rows] = pen[rows]
        U, sv, Vt = np.linalg.svd(np.vstack([top, bottom]), full_matrices=False)
        r = int((sv > 1e-10 * sv[0]).sum())
        out = (U[: top.shape[0], :r], sv[:r], Vt[:r])
        self._svd_cache = (xi, out)
        return out

    def solve_reduced(self, R: np.ndarray, xi: float) -> np.ndarray:
        """Solve the reduced normal equations for right-hand side ``R`` (m x m)."""
        if xi < 0:
            raise ValueError("penalty must be non-negative")
        Dg = self._diag(xi)
        fac = self._woodbury(Dg)
        if fac is None:
            _, sv, Vt = self._stacked_svd(xi)
            return (Vt.T @ ((Vt @ R.ravel()) / sv ** 2)).reshape(R.shape)
        Y0 = R / Dg
        u = np.einsum("ja,ab,jb->j", self.H, Y0, self.H)
        z = linalg.lu_solve(fac, u)
        return Y0 + (self.H.T * z) @ self.H / Dg

    def fitted(self, Sigma_hat: np.ndarray, xi: float) -> np.ndarray:
        """``Gamma C Gamma^T`` for the penalized fit."""
        X = self.solve_reduced(self._rhs(Sigma_hat), xi)
        return self.H @ X @ self.H.T

    def _rhs(self, Sigma_hat):
        S = np.array(Sigma_hat, dtype=float)
        np.fill_diagonal(S, 0.0)
        return self.H.T @ S @ self.H

    def df(self, xi: float) -> float:
        """Trace of the hat operator restricted to the off-diagonal positions.

        The diagonal entries carry no data, so their leverages are left out;
        this keeps ``df`` in ``[0, d(d-1)]`` and independent of which
        generalized inverse is used when the system is singular.
        """
        Dg = self._diag(xi)
        fac = self._woodbury(Dg)
        d = self.d
        if fac is None:
            Ut = self._stacked_svd(xi)[0]
            return float((Ut ** 2).sum())
        total = (self.LL / Dg).sum() + np.trace(linalg.lu_solve(fac, self._qform(self.LL / Dg ** 2)))
        # sum_j w_j^T Omega^{-1} w_j = tr(K^{-1}) - d with K = I - W^T Dg^{-1} W
        diag = np.trace(linalg.lu_solve(fac, np.eye(d))) - d
        return float(total - diag)

    def hat_apply(self, Z: np.ndarray, xi: float) -> np.ndarray:
        """Off-diagonal fitted values produced by off-diagonal data ``Z``."""
        Z = np.array(Z, dtype=float)
        np.fill_diagonal(Z, 0.0)
        X = self.solve_reduced(self.H.T @ Z @ self.H, xi)
        F = self.H @ X @ self.H.T
        np.fill_diagonal(F, 0.0)
        return F

    def gcv_score(self, Sigma_hat, xi) -> tuple:
        d = self.d
        N = d * (d - 1)
        F = self.fitted(Sigma_hat, xi)
        resid = np.asarray(Sigma_hat) - F
        np.fill_diagonal(resid, 0.0)
        df = self.df(xi)
        if df >= N * (1.0 - 1e-8):
            return df, np.nan
        return df, float((resid ** 2).sum() / N / (1.0 - df / N) ** 2)

    def gcv(self, Sigma_hat, xi_grid: Optional[Sequence[float]] = None) -> GcvResult:
        grid = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
        if grid.size == 0 or np.any(grid <= 0):
            raise ValueError("covariance penalty grid must be non-empty and positive")
        scores = np.full(grid.size, np.nan)
        dfs = np.full(grid.size, np.nan)
        for i, xi in enumerate(grid):
            dfs[i], scores[i] = self.gcv_score(Sigma_hat, xi)
            if np.isnan(scores[i]):
                warnings.warn(
                    f"GCV: df_C={dfs[i]:.4g} >= d(d-1) at xi={xi:g}; grid point excluded", RuntimeWarning
                )
        return _select(grid, scores, dfs)

    def fit(self, Sigma_hat: np.ndarray, xi: float, null_rule: Optional[str] = None) -> np.ndarray:
        """Covariance-surface coefficients ``C`` (q x q, symmetric).

        ``null_rule`` picks among the equally good minimizers when ``Omega``
        is singular: ``"roughness"`` (default when a spatial Gram matrix was
        given) takes the one with least one-sided roughness ``tr(C J C Gs)``,
        ``"min_norm"`` the one of least Frobenius norm; ``"none"`` returns the
        particular solution from the reduced system. Ties left by the
        roughness rule are resolved by minimum norm.
        """
        rule = null_rule or ("roughness" if self.Gs is not None else "min_norm")
        if rule not in ("roughness", "min_norm", "none"):
            raise ValueError(f"unknown null_rule {rule!r}")
        if rule == "roughness" and self.Gs is None:
            raise ValueError("the roughness rule needs the spatial Gram matrix")
        X = self.solve_reduced(self._rhs(Sigma_hat), xi)
        C = self.T @ X @ self.T.T
        C = 0.5 * (C + C.T)
        if rule != "none":
            C = C + self._null_correction(C, rule)
        return 0.5 * (C + C.T)

    def _null_setup(self):
        # symmetric null space of Omega: S(A) = O A + A^T O^T with A (o x q) constrained
        # so that Gamma S(A) Gamma^T has zero off-diagonal
        Gamma, J = self.Gamma, self.J
        d, q = Gamma.shape
        w, V = np.linalg.eigh(J)
        O = V[:, w <= 1e-10 * max(w.max(), 1.0)]
        o = O.shape[1]
        if o == 0 or q <= d:
            return None
        VO = Gamma @ O                                                 # (d, o)
        full = np.einsum("ja,kb->jkab", VO, Gamma)                     # d/dA_ab of V A Gamma^T
        full = full + full.transpose(1, 0, 2, 3)
        iu = np.triu_indices(d, 1)
        L = full[iu].reshape(len(iu[0]), o * q)
        _, sv, Vt = np.linalg.svd(L, full_matrices=True)
        rank = int((sv > 1e-10 * max(sv.max(), 1.0)).sum())
        NA = Vt[rank:].T                                               # (o q, k)
        if NA.shape[1] == 0:
            return None
        # Frobenius Gram of S in A-coordinates: vec(A) -> vec(2 A + 2 O^T A^T O^T)
        G4 = 2.0 * np.einsum("ca,be->abec", O, O).reshape(o * q, o * q)
        G4 += 2.0 * np.eye(o * q)
        Gy = NA.T @ G4 @ NA
        setup = {"O": O, "NA": NA, "Gy": Gy}
        if self.Gs is not None:
            # tr(S J S Gs) = tr(A J A^T O^T Gs O) since J O = 0
            P = O.T @ self.Gs @ O
            Qy = NA.T @ np.kron(P, J) @ NA
            qv, Wq = np.linalg.eigh(0.5 * (Qy + Qy.T))
            big = qv > 1e-10 * max(qv.max(), 1e-300)
            setup["rough"] = (Wq[:, big], qv[big], Wq[:, ~big])
        return setup

    def _S(self, O, y_vec, NA):
        A = (NA @ y_vec).reshape(O.shape[1], -1)
        return O @ A + A.T @ O.T

    def _null_correction(self, C, rule):
        if self._null is None:
            self._null = self._null_setup() or False
        if self._null is False:
            return np.zeros_like(C)
        O, NA, Gy = self._null["O"], self._null["NA"], self._null["Gy"]
        if rule == "roughness":
            Wr, qr, Wn = self._null["rough"]
            g = NA.T @ (O.T @ self.Gs @ C @ self.J).ravel()
            y = -Wr @ ((Wr.T @ g) / qr)
            C = C + self._S(O, y, NA)
            basis = Wn
        else:
            y = np.zeros(NA.shape[1])
            basis = None
        # least-norm step within the remaining free directions
        h = NA.T @ (2.0 * O.T @ C).ravel()
        if basis is None:
            z = -np.linalg.pinv(Gy, rcond=1e-12, hermitian=True) @ h
        elif basis.shape[1]:
            z = -basis @ (np.linalg.pinv(basis.T @ Gy @ basis, rcond=1e-12, hermitian=True) @ (basis.T @ h))
        else:
            z = np.zeros_like(y)
        return self._S(O, y + z, NA)


def fit_cov_surface(Sigma_hat, Gamma, J, xi: float, Gs: Optional[np.ndarray] = None,
                    null_rule: Optional[str] = None) -> np.ndarray:
    """Penalized covariance-surface coefficients ``C`` (q x q); see ``CovarianceSmoother.fit``."""
    if xi <= 0:
        raise ValueError("covariance penalty must be positive")
    return CovarianceSmoother(Gamma, J, Gs).fit(Sigma_hat, xi, null_rule=null_rule)


def gcv_cov(Sigma_hat, Gamma, J, xi_grid: Optional[Sequence[float]] = None) -> GcvResult:
    """Choose ``xi_C`` by generalized cross-validation over ``xi_grid``."""
    return CovarianceSmoother(Gamma, J).gcv(Sigma_hat, xi_grid)


def hutchinson_trace(apply, dim_shape, probes: int = 256, seed: int = 0) -> float:
    """Randomized trace estimate with Rademacher probes of shape ``dim_shape``."""
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(probes):
        z = rng.choice([-1.0, 1.0], size=dim_shape)
        total += float((z * apply(z)).sum())
    return total / probes


# -- prediction at a new site ----------------------------------------------------

def _gamma0(sb: SpatialBasis, s0) -> np.ndarray:
    s0 = np.asarray(s0, dtype=float).reshape(1, 2)
    if not sb.contains(s0)[0]:
        raise ValueError(f"target {tuple(s0[0])} lies outside the spatial region {sb.region}")
    return sb.evaluate(s0)[0]


def predict_mean_at(B, G, A, sb: SpatialBasis, s0):
    """Mean coefficients at ``s0`` (``B gamma(s0)``) and ``m0_j = a_j^T G mu0``."""
    mu0 = B @ _gamma0(sb, s0)
    return mu0, A.T @ G @ mu0


def predict_cov_at(C, Gamma, sb: SpatialBasis, s0):
    """``sigma0_j = gamma(s_j)^T C gamma(s0)`` and the smooth-part proxy ``gamma(s0)^T C gamma(s0)``."""
    g0 = _gamma0(sb, s0)
    return Gamma @ C @ g0, float(g0 @ C @ g0)


@dataclass
class SurfaceFits:
    """Fitted mean and covariance surfaces with their penalty choices."""

    B: np.ndarray
    C: np.ndarray
    xi_B: float
    xi_C: float
    df_B: float
    df_C: float
    Gamma: np.ndarray
    sb: SpatialBasis = field(repr=False)
    gcv_B: Optional[GcvResult] = field(default=None, repr=False)
    gcv_C: Optional[GcvResult] = field(default=None, repr=False)

    def mean_at(self, s0, G, A):
        return predict_mean_at(self.B, G, A, self.sb, s0)

    def cov_at(self, s0):
        return predict_cov_at(self.C, self.Gamma, self.sb, s0)


def fit_surfaces(A, Sigma_hat, sb: SpatialBasis, coords, J, xi_grid_B=None, xi_grid_C=None,
                 smoother: Optional[CovarianceSmoother] = None) -> SurfaceFits:
    """GCV-tuned mean and covariance surfaces from site-level estimates."""
    Gamma = design_matrix(sb, coords)
    gb = gcv_mean(A, Gamma, J, xi_grid_B)
    B = fit_mean_surface(A, Gamma, J, gb.xi)
    sm = smoother if smoother is not None else CovarianceSmoother(Gamma, J, spatial_gram(sb))
    gc = sm.gcv(Sigma_hat, xi_grid_C)
    C = sm.fit(Sigma_hat, gc.xi)
    return SurfaceFits(B, C, gb.xi, gc.xi, gb.df, gc.df, Gamma, sb, gb, gc)
