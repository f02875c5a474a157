"""Reference implementations used only by the tests.

Each one follows the defining formula as literally as possible (loops,
dense Kronecker assembly, generic solvers) and shares no code with the
package beyond its data types.
"""

import numpy as np
from scipy.interpolate import BSpline


def scaled_error(x, ref):
    """Max absolute deviation in units of the reference magnitude (at least 1)."""
    ref = np.asarray(ref, dtype=float)
    return float(np.abs(np.asarray(x) - ref).max() / max(1.0, np.abs(ref).max()))


# -- splines ------------------------------------------------------------------------

def cox_de_boor(knots, order, i, t):
    """Value of the i-th B-spline of the given order at a scalar ``t`` by plain recursion."""
    knots = list(knots)
    right = knots[-1]

    def rec(i, r):
        if r == 1:
            lo, hi = knots[i], knots[i + 1]
            if lo <= t < hi:
                return 1.0
            # closed right end: the last non-degenerate span owns t = b
            if t == right and hi == right and lo < hi:
                return 1.0
            return 0.0
        out = 0.0
        den = knots[i + r - 1] - knots[i]
        if den > 0:
            out += (t - knots[i]) / den * rec(i, r - 1)
        den = knots[i + r] - knots[i + 1]
        if den > 0:
            out += (knots[i + r] - t) / den * rec(i + 1, r - 1)
        return out

    return rec(i, order)


def scipy_basis(knots, order, x, deriv=0):
    """Matrix of basis values (or derivatives), one column per B-spline, via scipy."""
    knots = np.asarray(knots, dtype=float)
    p = len(knots) - order
    x = np.asarray(x, dtype=float)
    return np.column_stack([BSpline(knots, np.eye(p)[i], order - 1)(x, nu=deriv) for i in range(p)])


def trapezoid_gram(knots, order, a, b, m=100_001, deriv=0):
    x = np.linspace(a, b, m)
    V = scipy_basis(knots, order, x, deriv)
    w = np.full(m, (b - a) / (m - 1))
    w[[0, -1]] *= 0.5
    return (V * w[:, None]).T @ V


def midpoint_roughness(sb, m):
    """``iint f_11^2 + f_22^2`` Gram matrix by an m x m midpoint rule on the region."""
    x0, x1, y0, y1 = sb.region
    hx, hy = (x1 - x0) / m, (y1 - y0) / m
    xs = x0 + hx * (np.arange(m) + 0.5)
    ys = y0 + hy * (np.arange(m) + 0.5)
    px, py = sb.bx.dim, sb.by.dim
    X0, X2 = scipy_basis(sb.bx.knots, sb.bx.order, xs, 0), scipy_basis(sb.bx.knots, sb.bx.order, xs, 2)
    Y0, Y2 = scipy_basis(sb.by.knots, sb.by.order, ys, 0), scipy_basis(sb.by.knots, sb.by.order, ys, 2)
    q = px * py
    J = np.zeros((q, q))
    for Vx, Vy in ((X2, Y0), (X0, Y2)):
        # rows: grid points (x, y); columns: tensor index (ix, iy)
        F = (Vx[:, None, :, None] * Vy[None, :, None, :]).reshape(m * m, q)
        J += F.T @ F
    return J * hx * hy


def richardson_roughness(sb, m=400):
    """Midpoint rule with one Richardson step (error O(h^4) for smooth cells)."""
    return (4.0 * midpoint_roughness(sb, m) - midpoint_roughness(sb, m // 2)) / 3.0


# -- moment estimators -------------------------------------------------------------

def naive_mean_coefficients(pattern, basis_eval, G):
    n, d = pattern.n, pattern.d
    p = G.shape[0]
    A = np.zeros((p, d))
    for j in range(d):
        acc = np.zeros(p)
        for i in range(n):
            for u in pattern.events[i][j]:
                acc += basis_eval(u)
        A[:, j] = np.linalg.solve(G, acc / n)
    return A


def naive_second_moments(pattern, basis_eval, G):
    n, d = pattern.n, pattern.d
    p = G.shape[0]
    Ginv = np.linalg.inv(G)
    R = np.zeros((d, d, p, p))
    for j in range(d):
        for k in range(d):
            acc = np.zeros((p, p))
            for i in range(n):
                uj, vk = pattern.events[i][j], pattern.events[i][k]
                for a, u in enumerate(uj):
                    for b, v in enumerate(vk):
                        if j == k and a == b:
                            continue
                        acc += np.outer(basis_eval(u), basis_eval(v))
            R[j, k] = Ginv @ (acc / n) @ Ginv
    return R


# -- smoothing ---------------------------------------------------------------------

def psd_sqrt(J, rtol=1e-10):
    """``L`` with ``L^T L = J``; eigenvalues under ``rtol * max`` are rounding noise and dropped."""
    w, V = np.linalg.eigh(0.5 * (J + J.T))
    w = np.where(w > rtol * w.max(), w, 0.0)
    return (V * np.sqrt(w)).T


def mean_surface_lstsq(A, Gamma, J, xi):
    """Minimize ||A - B Gamma^T||^2 + xi tr(B J B^T) over vec(B) as one stacked least-squares problem."""
    p, d = A.shape
    q = Gamma.shape[1]
    L = psd_sqrt(J)
    # row-major vec: vec(B Gamma^T) = (I_p kron Gamma) vec(B), vec(B L^T) = (I_p kron L) vec(B)
    top = np.kron(np.eye(p), Gamma)
    bot = np.sqrt(xi) * np.kron(np.eye(p), L)
    lhs = np.vstack([top, bot])
    rhs = np.concatenate([A.ravel(), np.zeros(bot.shape[0])])
    x = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    return x.reshape(p, q)


def refit_leave_one_out(A, Gamma, J, xi):
    """Leave-one-site-out score by d explicit refits."""
    d = Gamma.shape[0]
    total = 0.0
    for j in range(d):
        keep = np.arange(d) != j
        Gk, Ak = Gamma[keep], A[:, keep]
        B = np.linalg.solve(Gk.T @ Gk + xi * J, Gk.T @ Ak.T).T
        total += np.sum((A[:, j] - B @ Gamma[j]) ** 2)
    return total / d


def pinv_psd(Om, rtol=1e-12):
    w, V = np.linalg.eigh(0.5 * (Om + Om.T))
    keep = w > rtol * w.max()
    return (V[:, keep] / w[keep]) @ V[:, keep].T


def stacked_cov_design(Gamma, J, xi):
    """Least-squares design ``[W_off; sqrt(xi) (L kron L)]`` on vec(C), with ``L^T L = J``."""
    d, q = Gamma.shape
    GG = np.kron(Gamma, Gamma)
    off = np.flatnonzero(~np.eye(d, dtype=bool).ravel())
    L = psd_sqrt(J)
    return np.vstack([GG[off], np.sqrt(xi) * np.kron(L, L)]), off


def dense_cov_min_norm(Sigma, Gamma, J, xi):
    """Minimum-norm minimizer over all q^2 coefficients by stacked least squares."""
    d, q = Gamma.shape
    M, off = stacked_cov_design(Gamma, J, xi)
    b = np.zeros(M.shape[0])
    b[: off.size] = np.asarray(Sigma, dtype=float).ravel()[off]
    C = np.linalg.lstsq(M, b, rcond=1e-10)[0].reshape(q, q)
    return 0.5 * (C + C.T)


def _null_basis(M, rtol=1e-10):
    _, s, Vt = np.linalg.svd(M)
    rank = int((s > rtol * s.max()).sum())
    return Vt[rank:].T


def dense_cov_least_rough(Sigma, Gamma, J, Gs, xi):
    """Among symmetric minimizers, least ``tr(C J C Gs)``; remaining ties by least norm.

    Works in the full q^2 coordinates: feasible set ``v0 + N z`` with ``N``
    spanning symmetric null vectors of the stacked design.
    """
    d, q = Gamma.shape
    M, _ = stacked_cov_design(Gamma, J, xi)
    v0 = dense_cov_min_norm(Sigma, Gamma, J, xi).ravel()
    P = np.eye(q * q).reshape(q, q, q, q).transpose(1, 0, 2, 3).reshape(q * q, q * q)   # transposition
    N = _null_basis(np.vstack([M / np.abs(M).max(), np.eye(q * q) - P]))
    Q = np.kron(J, Gs)                               # vec(C)^T Q vec(C) = tr(C J C Gs) for symmetric C
    H = N.T @ Q @ N
    z = -pinv_psd(H, 1e-10) @ (N.T @ Q @ v0)
    v1 = v0 + N @ z
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    K = N @ V[:, w <= 1e-10 * w.max()]
    if K.shape[1]:
        v1 = v1 - K @ np.linalg.lstsq(K, v1, rcond=None)[0]
    C = v1.reshape(q, q)
    return 0.5 * (C + C.T)


def exact_cov_df(Gamma, J, xi):
    """Trace of the off-diagonal hat operator, ``||U_top||_F^2`` from the stacked SVD."""
    M, off = stacked_cov_design(Gamma, J, xi)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    Ut = U[: off.size, : int((s > 1e-10 * s[0]).sum())]
    return float((Ut ** 2).sum()), Ut @ Ut.T


# -- kriging -----------------------------------------------------------------------

def equality_qp(Q, g, Aeq, beq):
    """``min 0.5 x^T Q x - g^T x`` subject to ``Aeq x = beq`` by the KKT system."""
    n, m = Q.shape[0], Aeq.shape[0]
    K = np.block([[Q, Aeq.T], [Aeq, np.zeros((m, m))]])
    sol = np.linalg.solve(K, np.concatenate([g, beq]))
    return sol[:n], sol[n:]


def null_space_kriging(Sigma, M, sigma0, m0, r):
    """Untruncated-Sigma kriging through an explicit null-space parametrization.

    The constraint keeps the ``r`` leading eigen-directions of ``M``; the
    objective ``c^T Sigma c - 2 c^T sigma0`` is minimized over the affine
    solution set with a least-squares particular solution.
    """
    from scipy.linalg import null_space

    w, V = np.linalg.eigh(M)
    idx = np.argsort(-w)[:r]
    Aeq = w[idx, None] * V[:, idx].T
    beq = V[:, idx].T @ m0
    c_p = np.linalg.lstsq(Aeq, beq, rcond=None)[0]
    Z = null_space(Aeq)
    if Z.shape[1] == 0:
        return c_p
    y = np.linalg.solve(Z.T @ Sigma @ Z, Z.T @ (sigma0 - Sigma @ c_p))
    return c_p + Z @ y


def sampled_count_error(observed, predicted, m=200_000):
    """Root average squared L2 distance by a fine midpoint rule."""
    total = 0.0
    for f, g in zip(observed, predicted):
        a, b = f.domain.a, f.domain.b
        x = a + (b - a) * (np.arange(m) + 0.5) / m
        total += ((f(x) - g(x)) ** 2).mean() * (b - a)
    return float(np.sqrt(total / len(observed)))
