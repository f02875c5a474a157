import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_pattern
from ppkrige.basis import TimeDomain
from ppkrige.data import CountFunction, PointPattern, SiteSet
from ppkrige.krige import (KrigingError, count_prediction_error, predict_counts, predict_intensity,
                           solve_kriging, truncate_spectrum)
from oracles import equality_qp, null_space_kriging, sampled_count_error

UNIT = TimeDomain(0.0, 1.0)


def random_spd(rng, d, rank=None):
    X = rng.normal(size=(d, rank or d))
    return X @ X.T + (1e-3 * np.eye(d) if rank is None else 0.0)


# -- truncation -------------------------------------------------------------------------

def test_identity_keeps_nine_of_ten():
    assert truncate_spectrum(np.eye(10), 0.9).rank == 9


def test_rank_one_keeps_one(rng):
    v = rng.normal(size=6)
    trunc = truncate_spectrum(np.outer(v, v), 0.9)
    assert trunc.rank == 1
    np.testing.assert_allclose(abs(trunc.vectors[:, 0] @ v), np.linalg.norm(v), rtol=1e-12)


def test_diagonal_cumulative_mass():
    trunc = truncate_spectrum(np.diag([1.0, 5.0, 1.0, 3.0]), 0.9)
    assert trunc.rank == 3
    np.testing.assert_allclose(trunc.values, [5, 3, 1])


def test_threshold_one_keeps_all_positive():
    assert truncate_spectrum(np.diag([4.0, 2.0, 1.0]), 1.0).rank == 3


def test_negative_eigenvalues_count_but_are_never_kept():
    trunc = truncate_spectrum(np.diag([3.0, 1.0, -1.0]), 0.9)
    assert trunc.total == pytest.approx(3.0)
    assert trunc.rank == 1                         # 3 / 3 >= 0.9
    trunc = truncate_spectrum(np.diag([3.0, 1.0, -0.5]), 1.0)
    assert trunc.rank == 2 and np.all(trunc.values > 0)


def test_asymmetric_input_rejected():
    S = np.eye(3)
    S[0, 1] = 1e-6
    with pytest.raises(ValueError, match="symmetric"):
        truncate_spectrum(S)


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.5])
def test_threshold_range(bad):
    with pytest.raises(ValueError, match="threshold"):
        truncate_spectrum(np.eye(2), bad)


def test_eigenvector_signs_are_deterministic(rng):
    S = random_spd(rng, 5)
    a, b = truncate_spectrum(S, 1.0), truncate_spectrum(S.copy(), 1.0)
    np.testing.assert_array_equal(a.vectors, b.vectors)
    pivots = np.abs(a.vectors).argmax(axis=0)
    assert np.all(a.vectors[pivots, np.arange(a.rank)] > 0)


@given(st.integers(2, 8), st.floats(0.05, 1.0), st.integers(0, 2**32 - 1))
def test_rank_is_smallest_reaching_threshold(d, thr, seed):
    S = random_spd(np.random.default_rng(seed), d)
    trunc = truncate_spectrum(S, thr)
    w = np.sort(np.linalg.eigvalsh(S))[::-1]
    frac = np.cumsum(w) / w.sum()
    assert frac[trunc.rank - 1] >= thr * (1 - 1e-12)
    assert trunc.rank == 1 or frac[trunc.rank - 2] < thr


# -- solve ---------------------------------------------------------------------------

def test_single_site_forced_weight():
    rho = 0.37
    sol = solve_kriging([[1.0]], [[1.0]], [rho], [1.0], 1.0, 1.0)
    assert sol.c_star[0] == pytest.approx(1.0, abs=1e-14)
    assert sol.lagrange[0] == pytest.approx(rho - 1.0, abs=1e-14)


def test_two_sites_common_mean():
    sol = solve_kriging(np.eye(2), np.ones((2, 2)), [0.6, 0.2], [1.0, 1.0])
    assert sol.rank_M == 1 and sol.rank_Sigma == 2
    np.testing.assert_allclose(sol.c_star, [0.7, 0.3], atol=1e-10)


def test_exact_site_recovery(rng):
    d = 6
    S, M = random_spd(rng, d), random_spd(rng, d)
    for j in range(d):
        sol = solve_kriging(S, M, S[:, j], M[:, j], 1.0, 1.0)
        np.testing.assert_allclose(sol.c_star, np.eye(d)[j], atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_matches_null_space_oracle(seed):
    rng = np.random.default_rng(seed)
    d = 7
    S = random_spd(rng, d)
    M = random_spd(rng, d, rank=3)
    s0, m0 = rng.normal(size=d), M @ rng.normal(size=d)
    sol = solve_kriging(S, M, s0, m0, threshold_M=1.0, threshold_Sigma=1.0, rtol_M=1e-10)
    assert sol.rank_M == 3 and sol.rank_Sigma == d
    np.testing.assert_allclose(sol.c_star, null_space_kriging(S, M, s0, m0, 3), atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_truncated_solve_matches_kkt_oracle(seed):
    rng = np.random.default_rng(50 + seed)
    d = 8
    S = random_spd(rng, d)
    M = random_spd(rng, d)
    s0, m0 = rng.normal(size=d), rng.normal(size=d)
    sol = solve_kriging(S, M, s0, m0, threshold_M=0.8, threshold_Sigma=0.97)
    Vs, h = sol.V_s, sol.H_s
    cs, ell = equality_qp(np.diag(h), Vs.T @ s0, sol.M_tilde @ Vs, sol.m0_tilde)
    np.testing.assert_allclose(sol.c_star, Vs @ cs, atol=1e-8)
    np.testing.assert_allclose(sol.lagrange, ell, atol=1e-8 * max(1.0, np.abs(ell).max()))


@given(st.integers(2, 9), st.floats(0.3, 1.0), st.floats(0.3, 1.0), st.integers(0, 2**32 - 1))
def test_residual_invariants(d, tM, tS, seed):
    rng = np.random.default_rng(seed)
    S, M = random_spd(rng, d), random_spd(rng, d)
    s0, m0 = rng.normal(size=d), rng.normal(size=d)
    try:
        sol = solve_kriging(S, M, s0, m0, tM, tS)
    except KrigingError:
        return
    assert sol.constraint_residual() <= 1e-8
    assert sol.kkt_residual(s0) <= 1e-8 * max(1.0, np.abs(s0).max(), np.abs(sol.H_s).max())
    assert sol.rank_M <= d and sol.rank_Sigma <= d


def test_spe_estimate_formula(rng):
    S, M = random_spd(rng, 4), random_spd(rng, 4)
    s0, m0 = rng.normal(size=4), rng.normal(size=4)
    sol = solve_kriging(S, M, s0, m0, 1.0, 1.0, sigma00=2.5)
    c = sol.c_star
    assert sol.spe_estimate == pytest.approx(c @ S @ c - 2 * c @ s0 + 2.5, rel=1e-12)


def test_sigma_rank_below_constraints_reported(rng):
    with pytest.raises(KrigingError, match=r"rank of Sigma \(1\)"):
        solve_kriging(np.diag([1.0, 0.0, 0.0]), np.eye(3), np.ones(3), np.ones(3), 1.0, 1.0)


def test_rank_deficient_constraint_block_reported():
    # Sigma keeps e1, e2; M keeps e3 only: the reduced constraint is zero
    S = np.diag([2.0, 1.0, 0.0])
    M = np.diag([0.0, 0.0, 1.0])
    with pytest.raises(KrigingError, match="rank_M=1, rank_Sigma=2"):
        solve_kriging(S, M, np.ones(3), np.ones(3), 1.0, 1.0)


def test_empty_mean_constraint_reported():
    with pytest.raises(KrigingError, match="no positive eigenvalue"):
        solve_kriging(np.eye(2), np.zeros((2, 2)), np.ones(2), np.ones(2))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="inconsistent shapes"):
        solve_kriging(np.eye(2), np.eye(2), np.ones(3), np.ones(2))


# -- predictions ------------------------------------------------------------------------

def test_intensity_unit_weight_returns_site_curve(rng):
    A = rng.normal(size=(9, 4))
    np.testing.assert_array_equal(predict_intensity(np.eye(4)[2], A), A[:, 2])


def test_intensity_common_curve_preserved(rng):
    a = rng.normal(size=9)
    c = np.array([0.5, -0.2, 0.7])
    np.testing.assert_allclose(predict_intensity(c, np.column_stack([a, a, a])), a, atol=1e-14)


def test_intensity_clamp_is_optional():
    curves = np.array([[1.0, -3.0]])
    assert predict_intensity([0.5, 0.5], curves)[0] == -1.0
    assert predict_intensity([0.5, 0.5], curves, clamp=True)[0] == 0.0


def two_site_pattern(events):
    return PointPattern(UNIT, SiteSet(("a", "b"), [[0, 0], [1, 0]]), events)


def test_counts_unit_weight_reproduce_site():
    pat = two_site_pattern((([0.1, 0.4], [0.3]),))
    f = predict_counts(pat, [0.0, 1.0], 0)
    x = np.linspace(0, 1, 101)
    np.testing.assert_array_equal(f(x), (x >= 0.3).astype(float))


def test_counts_empty_replicate_is_zero():
    pat = two_site_pattern((([0.1], [0.3]), ([], [])))
    assert not predict_counts(pat, [0.3, 0.7], 1)(np.linspace(0, 1, 11)).any()


def test_counts_half_weights():
    pat = two_site_pattern((([0.2], [0.4]),))
    f = predict_counts(pat, [0.5, 0.5], 0)
    np.testing.assert_allclose(f([0.1, 0.2, 0.3, 0.4, 0.9]), [0, 0.5, 0.5, 1.0, 1.0])


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_counts_linear_in_weights(c1, c2, a, seed):
    pat = random_pattern(np.random.default_rng(seed), 2, 3, 5)
    x = np.linspace(0, 1, 57)
    lhs = predict_counts(pat, a * np.array(c1) + np.array(c2), 1)(x)
    rhs = a * predict_counts(pat, c1, 1)(x) + predict_counts(pat, c2, 1)(x)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_counts_bad_index_and_weights():
    pat = two_site_pattern((([0.2], [0.4]),))
    with pytest.raises(IndexError):
        predict_counts(pat, [1, 0], 1)
    with pytest.raises(ValueError, match="expected 2 weights"):
        predict_counts(pat, [1, 0, 0], 0)


# -- count prediction error ------------------------------------------------------------------

def test_error_zero_for_identical():
    f = CountFunction(UNIT, [0.2, 0.5, 0.5])
    assert count_prediction_error([f, f], [f, f]) == 0.0


def test_error_of_constant_prediction():
    zero = CountFunction(UNIT, [])
    const = CountFunction(UNIT, [0.0], [-1.75])
    assert count_prediction_error([zero], [const]) == pytest.approx(1.75, abs=1e-14)


def test_error_matches_dense_grid(rng):
    obs, pred = [], []
    for _ in range(4):
        obs.append(CountFunction(UNIT, rng.uniform(0, 1, 6)))
        pred.append(CountFunction(UNIT, rng.uniform(0, 1, 9), rng.normal(size=9)))
    assert count_prediction_error(obs, pred) == pytest.approx(sampled_count_error(obs, pred), rel=1e-4)


def test_error_hand_computed():
    # |N - Nhat| = 1 on [0.2, 0.6), 0 elsewhere, for both replicates -> sqrt(0.4)
    f = CountFunction(UNIT, [0.2])
    g = CountFunction(UNIT, [0.6])
    assert count_prediction_error([f, f], [g, g]) == pytest.approx(np.sqrt(0.4), abs=1e-14)


def test_error_rejects_mismatches():
    f = CountFunction(UNIT, [0.2])
    with pytest.raises(ValueError, match="domains"):
        count_prediction_error([f], [CountFunction(TimeDomain(0, 2), [0.2])])
    with pytest.raises(ValueError):
        count_prediction_error([f], [])
    with pytest.raises(ValueError):
        count_prediction_error([], [])
