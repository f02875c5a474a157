import numpy as np
import pytest

from conftest import random_pattern
from ppkrige.basis import TimeDomain, gram_matrix, make_time_basis
from ppkrige.data import PointPattern, SiteSet
from ppkrige.moments import (estimate_moments, m_matrix, mean_coefficients, second_moment_coefficients,
                             sigma_matrix)
from ppkrige.simulate import LgcpParams, replicate_rng, simulate_replicate
from oracles import naive_mean_coefficients, naive_second_moments, scaled_error, scipy_basis

UNIT = TimeDomain(0.0, 1.0)
BASIS = make_time_basis(UNIT, 4, 5)
G = gram_matrix(BASIS)


def beta(u):
    return scipy_basis(BASIS.knots, 4, [u])[0]


def trapezoid(a, b, m=100_001):
    x = np.linspace(a, b, m)
    w = np.full(m, (b - a) / (m - 1))
    w[[0, -1]] *= 0.5
    return x, w


def one_site_pattern(reps):
    sites = SiteSet(("a",), [[0.0, 0.0]])
    return PointPattern(UNIT, sites, tuple((np.asarray(r, dtype=float),) for r in reps))


def test_empty_pattern_gives_zero_mean(rng):
    pat = PointPattern(UNIT, SiteSet(("a", "b"), [[0, 0], [1, 1]]), (([], []), ([], [])))
    est = estimate_moments(pat, BASIS)
    assert not est.A.any() and not est.M.any() and not est.Sigma.any()


def test_single_event_mean_integrates_to_one():
    A = mean_coefficients(one_site_pattern([[0.37]]), BASIS)
    np.testing.assert_allclose(A[:, 0], np.linalg.solve(G, beta(0.37)), atol=1e-13)
    x, w = trapezoid(0, 1)
    assert abs(w @ (BASIS.evaluate(x) @ A[:, 0]) - 1.0) < 1e-8
    assert abs(np.ones(BASIS.dim) @ G @ A[:, 0] - 1.0) < 1e-12


def test_naive_loop_oracle(rng):
    for _ in range(20):
        pat = random_pattern(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)), 6)
        est = estimate_moments(pat, BASIS)
        assert scaled_error(est.A, naive_mean_coefficients(pat, beta, G)) <= 1e-12
        assert scaled_error(est.Rcoef, naive_second_moments(pat, beta, G)) <= 1e-12


def test_component_functions_agree_with_bundle(rng):
    pat = random_pattern(rng, 4, 3, 6)
    est = estimate_moments(pat, BASIS)
    np.testing.assert_array_equal(mean_coefficients(pat, BASIS), est.A)
    np.testing.assert_allclose(second_moment_coefficients(pat, BASIS), est.Rcoef, atol=1e-14)


def test_one_event_per_replicate_has_no_diagonal_pairs():
    R = second_moment_coefficients(one_site_pattern([[0.1], [0.6], [0.9]]), BASIS)
    assert np.abs(R[0, 0]).max() < 1e-14


def test_cross_moment_of_single_events():
    sites = SiteSet(("a", "b"), [[0, 0], [1, 0]])
    R = second_moment_coefficients(PointPattern(UNIT, sites, (([0.2], [0.7]),)), BASIS)
    Gi = np.linalg.inv(G)
    np.testing.assert_allclose(R[0, 1], Gi @ np.outer(beta(0.2), beta(0.7)) @ Gi, atol=1e-10)
    np.testing.assert_allclose(R[1, 0], R[0, 1].T, atol=1e-12)


def test_rcoef_transpose_symmetry(rng):
    est = estimate_moments(random_pattern(rng, 5, 3, 6), BASIS)
    np.testing.assert_allclose(est.Rcoef, est.Rcoef.transpose(1, 0, 3, 2), atol=1e-12)


def test_domain_mismatch_rejected():
    pat = PointPattern(TimeDomain(0.0, 2.0), SiteSet(("a",), [[0, 0]]), (([0.5],),))
    with pytest.raises(ValueError, match="domain"):
        mean_coefficients(pat, BASIS)


def test_m_matrix_zero_and_rank_one(rng):
    assert not m_matrix(np.zeros((9, 3)), G).any()
    a = rng.normal(size=9)
    M = m_matrix(np.column_stack([a, a, a]), G)
    w = np.linalg.eigvalsh(M)
    assert w[-1] > 0 and np.abs(w[:-1]).max() < 1e-12 * w[-1]


def test_m_matrix_matches_quadrature(rng):
    A = rng.normal(size=(9, 4))
    x, w = trapezoid(0, 1)
    mu = BASIS.evaluate(x) @ A
    np.testing.assert_allclose(m_matrix(A, G), (mu * w[:, None]).T @ mu, atol=1e-8, rtol=0)


def test_sigma_zero_when_second_moment_is_product(rng):
    A = rng.normal(size=(9, 3))
    R = np.einsum("aj,bk->jkab", A, A)
    assert np.abs(sigma_matrix(A, R, G)).max() < 1e-12


def test_sigma_matches_quadrature(rng):
    A = rng.normal(size=(9, 3))
    R = rng.normal(size=(3, 3, 9, 9))
    R = 0.5 * (R + R.transpose(1, 0, 3, 2))
    x, w = trapezoid(0, 1)
    B = BASIS.evaluate(x)
    S = sigma_matrix(A, R, G)
    for j in range(3):
        for k in range(3):
            rho = np.einsum("ta,ab,tb->t", B, R[j, k] - np.outer(A[:, j], A[:, k]), B)
            assert abs(S[j, k] - w @ rho) < 1e-8
    np.testing.assert_allclose(S, S.T, atol=1e-14)


def test_moment_matrices_symmetric_and_m_psd(rng):
    est = estimate_moments(random_pattern(rng, 5, 3, 6), BASIS)
    assert np.array_equal(est.M, est.M.T)
    assert np.linalg.eigvalsh(est.M).min() > -1e-12 * max(1.0, np.abs(est.M).max())
    np.testing.assert_allclose(est.Sigma, est.Sigma.T, atol=1e-13)


def test_merging_replicate_sets(rng):
    p1 = random_pattern(rng, 3, 2, 6)
    p2 = PointPattern(UNIT, p1.sites, random_pattern(rng, 5, 2, 6).events)
    both = PointPattern(UNIT, p1.sites, p1.events + p2.events)
    A1, A2, A = (mean_coefficients(p, BASIS) for p in (p1, p2, both))
    np.testing.assert_allclose(A, (3 * A1 + 5 * A2) / 8, atol=1e-14)
    R1, R2, R = (second_moment_coefficients(p, BASIS) for p in (p1, p2, both))
    np.testing.assert_allclose(R, (3 * R1 + 5 * R2) / 8, atol=1e-12)


def test_curves_evaluate_coefficients(rng):
    est = estimate_moments(random_pattern(rng, 4, 2, 6), BASIS)
    t = np.array([0.1, 0.5])
    np.testing.assert_allclose(est.mean_curves(t), BASIS.evaluate(t) @ est.A)
    np.testing.assert_allclose(est.second_moment(0, 1, t, t),
                               BASIS.evaluate(t) @ est.Rcoef[0, 1] @ BASIS.evaluate(t).T)


def test_basis_sums_unbiased_for_fixed_intensity():
    params = LgcpParams(var_W=0.0, var_E=0.0)
    reps = 10_000
    total = np.zeros(BASIS.dim)
    for i in range(reps):
        _, ev = simulate_replicate(replicate_rng(99, (i,)), np.ones(1), params)
        total += BASIS.evaluate(ev[0]).sum(axis=0)
    x, w = trapezoid(0, 1, 20_001)
    lam = params.intensity(x, 0.0)
    expected = (BASIS.evaluate(x) * (w * lam)[:, None]).sum(axis=0)
    assert np.abs(total / reps - expected).max() / np.abs(expected).max() < 0.03
    assert np.linalg.norm(total / reps - expected) / np.linalg.norm(expected) < 0.03


def test_mean_error_decreases_with_replicates():
    params = LgcpParams()
    sites = SiteSet(("a", "b"), [[0, 0], [0.1, 0]])
    g = np.ones(2)
    x, w = trapezoid(0, 1, 2001)
    mu = np.exp(params.nu(x) + params.phi(x) ** 2 * (params.var_W + params.var_E) / 2)
    errs = []
    for n in (50, 200, 800):
        acc = 0.0
        for r in range(20):
            evs = tuple(tuple(simulate_replicate(replicate_rng(5, (n, r, i)), g, params)[1]) for i in range(n))
            A = mean_coefficients(PointPattern(UNIT, sites, evs), BASIS)
            acc += w @ ((BASIS.evaluate(x) @ A - mu[:, None]) ** 2).sum(axis=1)
        errs.append(acc / 20)
    assert errs[0] > errs[1] > errs[2]
