"""Temporal B-spline bases, spatial tensor-product bases and their quadrature matrices.

All bases are clamped: the end knots are repeated ``order`` times, so the
basis spans every polynomial of degree ``< order`` on the domain and the
first (last) basis function equals 1 at the left (right) end point.

Tensor-product index convention: for a spatial basis built from marginals
``bx`` (first coordinate, ``p1`` functions) and ``by`` (second coordinate,
``p2`` functions), basis function ``i * p2 + j`` is ``bx_i(s1) * by_j(s2)``;
the second coordinate varies fastest. This matches ``np.kron(bx, by)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize


@dataclass(frozen=True)
class TimeDomain:
    """Closed observation interval ``[a, b]``."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError(f"domain bounds must be finite, got [{self.a}, {self.b}]")
        if not self.b > self.a:
            raise ValueError(f"domain must satisfy b > a, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t >= self.a) & (t <= self.b)


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Clamped B-spline basis of a given order on a :class:`TimeDomain`.

    Parameters
    ----------
    domain : TimeDomain
        Interval on which the basis lives.
    order : int
        Spline order ``r`` (degree ``r - 1``); cubic splines have order 4.
    interior_knots : sequence of float
        Strictly increasing knots strictly inside ``(a, b)``.
    """

    domain: TimeDomain
    order: int
    interior_knots: tuple = ()
    knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 2:
            raise ValueError(f"order must be an integer >= 2, got {self.order}")
        inner = np.asarray(self.interior_knots, dtype=float).ravel()
        a, b = self.domain.a, self.domain.b
        if inner.size and (inner.min() <= a or inner.max() >= b):
            raise ValueError("interior knots must lie strictly inside (a, b)")
        if inner.size > 1 and np.any(np.diff(inner) <= 0):
            raise ValueError("interior knots must be strictly increasing")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "interior_knots", tuple(float(x) for x in inner))
        full = np.concatenate([np.full(self.order, a), inner, np.full(self.order, b)])
        full.setflags(write=False)
        object.__setattr__(self, "knots", full)

    @property
    def dim(self) -> int:
        """Number of basis functions ``p = order + k``."""
        return self.order + len(self.interior_knots)

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knots ``a < tau_1 < ... < tau_k < b``."""
        return np.concatenate([[self.domain.a], self.interior_knots, [self.domain.b]])

    def greville(self) -> np.ndarray:
        """Greville abscissae; coefficients of the identity function ``t``."""
        r = self.order
        t = self.knots
        return np.array([t[i + 1:i + r].mean() for i in range(self.dim)])

    def __call__(self, t, deriv: int = 0) -> np.ndarray:
        return self.evaluate(t, deriv=deriv)

    def evaluate(self, t, deriv: int = 0, check: bool = True) -> np.ndarray:
        """Evaluate the basis (or a derivative of it) at points ``t``.

        Returns an array of shape ``t.shape + (p,)``.
        """
        t = np.asarray(t, dtype=float)
        if check and not np.all(self.domain.contains(t)):
            bad = t[~self.domain.contains(t)].ravel()[0]
            raise ValueError(
                f"evaluation point {bad} outside domain [{self.domain.a}, {self.domain.b}]"
            )
        flat = t.ravel()
        out = _bspline_dense(self.knots, self.order, flat, deriv, self.order)
        return out.reshape(t.shape + (self.dim,))


def _span_index(knots: np.ndarray, base_order: int, x: np.ndarray) -> np.ndarray:
    # knot span i with knots[i] <= x < knots[i+1], right end folded into the last span
    lo = base_order - 1
    hi = len(knots) - base_order - 1
    idx = np.searchsorted(knots, x, side="right") - 1
    return np.clip(idx, lo, hi)


def _local_values(knots, order, x, base_order):
    """Nonzero B-spline values of ``order`` on ``knots`` at ``x``.

    Returns ``(span, vals)`` where ``vals[:, m]`` belongs to basis index
    ``span - order + 1 + m``.
    """
    span = _span_index(knots, base_order, x)
    n = x.size
    vals = np.zeros((n, order))
    vals[:, 0] = 1.0
    left = np.empty((n, order))
    right = np.empty((n, order))
    for j in range(1, order):
        left[:, j] = x - knots[span + 1 - j]
        right[:, j] = knots[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            with np.errstate(divide="ignore", invalid="ignore"):
                temp = np.where(denom != 0.0, vals[:, r] / denom, 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    return span, vals


def _bspline_dense(knots, order, x, deriv=0, base_order=None):
    """Dense matrix of B-spline values (or derivatives) of ``order`` on ``knots``."""
    if base_order is None:
        base_order = order
    nfun = len(knots) - order
    if deriv >= order:
        return np.zeros((x.size, nfun))
    if deriv == 0:
        span, vals = _local_values(knots, order, x, base_order)
        out = np.zeros((x.size, nfun))
        cols = span[:, None] - order + 1 + np.arange(order)[None, :]
        np.put_along_axis(out, cols, vals, axis=1)
        return out
    # d/dx B_{i,r} = (r-1) [B_{i,r-1}/(t_{i+r-1}-t_i) - B_{i+1,r-1}/(t_{i+r}-t_{i+1})]
    lower = _bspline_dense(knots, order - 1, x, deriv - 1, base_order)
    i = np.arange(nfun)
    d1 = knots[i + order - 1] - knots[i]
    d2 = knots[i + order] - knots[i + 1]
    with np.errstate(divide="ignore"):
        w1 = np.where(d1 > 0, (order - 1) / np.where(d1 > 0, d1, 1.0), 0.0)
        w2 = np.where(d2 > 0, (order - 1) / np.where(d2 > 0, d2, 1.0), 0.0)
    return lower[:, :nfun] * w1 - lower[:, 1:nfun + 1] * w2


def make_time_basis(
    domain: TimeDomain,
    order: int = 4,
    k: int = 5,
    density: Optional[Callable[[float], float]] = None,
    knots: Optional[Sequence[float]] = None,
) -> SplineBasis:
    """Build a clamped B-spline basis with ``k`` interior knots.

    Knots are equally spaced unless ``density`` is given, in which case the
    i-th knot solves ``int_a^tau_i g = i / (k + 1)`` (``g`` is normalized to
    integrate to one). An explicit ``knots`` list overrides both.
    """
    if int(k) != k or k < 0:
        raise ValueError(f"number of interior knots must be a non-negative integer, got {k}")
    k = int(k)
    if knots is not None:
        return SplineBasis(domain, order, tuple(knots))
    a, b = domain.a, domain.b
    if density is None:
        inner = a + (b - a) * np.arange(1, k + 1) / (k + 1)
        return SplineBasis(domain, order, tuple(inner))
    grid = np.linspace(a, b, 257)
    gvals = np.array([density(x) for x in grid], dtype=float)
    # endpoints may touch zero (e.g. g(t) = 2t on [0, 1]); the interior may not
    ok = np.isfinite(gvals) & (gvals >= 0)
    ok[1:-1] &= gvals[1:-1] > 0
    if not np.all(ok):
        bad = grid[~ok][0]
        raise ValueError(f"knot density must be positive on (a, b); g({bad}) = {density(bad)}")
    total = integrate.quad(density, a, b, limit=200)[0]
    inner = []
    for i in range(1, k + 1):
        target = i / (k + 1)
        fn = lambda tau: integrate.quad(density, a, tau, limit=200)[0] / total - target
        inner.append(optimize.brentq(fn, a, b, xtol=1e-14, rtol=1e-14))
    return SplineBasis(domain, order, tuple(inner))


def eval_basis(basis: SplineBasis, t) -> np.ndarray:
    """Basis vector ``beta(t)``; rejects points outside the domain."""
    return basis.evaluate(t)


def _gauss_nodes(breaks: np.ndarray, npts: int):
    x, w = np.polynomial.legendre.leggauss(npts)
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def derivative_gram(basis: SplineBasis, deriv: int = 0, nodes: Optional[int] = None) -> np.ndarray:
    """``int beta^(deriv)(t) beta^(deriv)(t)^T dt`` by per-span Gauss-Legendre.

    The default node count ``order - deriv`` is exact for the integrand's
    degree ``2 (order - 1 - deriv)``.
    """
    npts = nodes if nodes is not None else max(basis.order - deriv, 1)
    x, w = _gauss_nodes(basis.breakpoints, npts)
    vals = basis.evaluate(x, deriv=deriv, check=False)
    return (vals * w[:, None]).T @ vals


def gram_matrix(basis: SplineBasis, nodes: Optional[int] = None) -> np.ndarray:
    """Gram matrix ``G = int beta beta^T``."""
    G = derivative_gram(basis, 0, nodes)
    return 0.5 * (G + G.T)


@dataclass(frozen=True, eq=False)
class SpatialBasis:
    """Tensor product of two clamped spline bases over a rectangle."""

    bx: SplineBasis
    by: SplineBasis

    @property
    def dim(self) -> int:
        return self.bx.dim * self.by.dim

    @property
    def region(self) -> tuple:
        """``(x0, x1, y0, y1)``."""
        return (self.bx.domain.a, self.bx.domain.b, self.by.domain.a, self.by.domain.b)

    @property
    def order(self) -> int:
        return self.bx.order

    def contains(self, s) -> np.ndarray:
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return self.bx.domain.contains(s[:, 0]) & self.by.domain.contains(s[:, 1])

    def evaluate(self, s, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Rows ``gamma(s_i)^T`` (or partial derivatives) for points ``s`` of shape (m, 2)."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        if s.shape[-1] != 2:
            raise ValueError("spatial points must have two coordinates")
        if not np.all(self.contains(s)):
            bad = s[~self.contains(s)][0]
            raise ValueError(f"point {tuple(bad)} outside region {self.region}")
        vx = self.bx.evaluate(s[:, 0], deriv=dx)
        vy = self.by.evaluate(s[:, 1], deriv=dy)
        return (vx[:, :, None] * vy[:, None, :]).reshape(len(s), -1)

    __call__ = evaluate

    def coefficients_of(self, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
        """Coefficient vector of the separable function ``f(s1) g(s2)``."""
        return np.kron(cx, cy)

    def bilinear_coefficients(self) -> np.ndarray:
        """Columns: coefficient vectors of ``1, s1, s2, s1*s2`` (exact)."""
        one_x, one_y = np.ones(self.bx.dim), np.ones(self.by.dim)
        gx, gy = self.bx.greville(), self.by.greville()
        return np.column_stack([
            np.kron(one_x, one_y), np.kron(gx, one_y), np.kron(one_x, gy), np.kron(gx, gy),
        ])


def make_spatial_basis(region, order: int = 4, k_per_axis: int = 6) -> SpatialBasis:
    """Tensor-product basis with ``k_per_axis`` equally spaced interior knots per axis.

    ``region`` is ``(x0, x1, y0, y1)``.
    """
    x0, x1, y0, y1 = map(float, region)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {region}")
    bx = make_time_basis(TimeDomain(x0, x1), order, k_per_axis)
    by = make_time_basis(TimeDomain(y0, y1), order, k_per_axis)
    return SpatialBasis(bx, by)


def spatial_gram(sb: SpatialBasis, nodes: Optional[int] = None) -> np.ndarray:
    """``iint gamma(s) gamma(s)^T ds`` over the region."""
    G = np.kron(derivative_gram(sb.bx, 0, nodes), derivative_gram(sb.by, 0, nodes))
    return 0.5 * (G + G.T)


def roughness_matrix(sb: SpatialBasis, mixed: bool = False, nodes: Optional[int] = None) -> np.ndarray:
    """Penalty matrix ``J`` with ``tr(B^T B J)`` the roughness of ``s -> B gamma(s)``.

    By default the roughness is ``iint f_11^2 + f_22^2``, whose null space is
    the bilinear functions. With ``mixed=True`` the two mixed partials
    ``f_12`` and ``f_21`` are added (null space: affine functions).

    Marginal derivative Gram matrices are exact per-cell Gauss-Legendre
    rules, so the tensor assembly is exact per rectangular cell.
    """
    if sb.bx.order < 3 or sb.by.order < 3:
        raise ValueError("roughness penalty needs marginal order >= 3 (second derivatives)")
    gx0 = derivative_gram(sb.bx, 0, nodes)
    gy0 = derivative_gram(sb.by, 0, nodes)
    gx2 = derivative_gram(sb.bx, 2, nodes)
    gy2 = derivative_gram(sb.by, 2, nodes)
    J = np.kron(gx2, gy0) + np.kron(gx0, gy2)
    if mixed:
        J = J + 2.0 * np.kron(derivative_gram(sb.bx, 1, nodes), derivative_gram(sb.by, 1, nodes))
    return 0.5 * (J + J.T)
