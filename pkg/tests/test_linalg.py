import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopexplore.errors import NumericalError, StructuralError
from coopexplore.linalg import (FeatureMap, SufficientStats, Transition, accumulate,
                                log_det_ratio, quad_norm, ridge_solve, sample_gaussian)


def random_features(rng, n_states, n_actions, d):
    table = rng.normal(size=(n_states, n_actions, d))
    table /= np.maximum(1.0, np.linalg.norm(table, axis=2, keepdims=True))
    return FeatureMap(table)


def fill(stats, feat, rng, n, local=True):
    for _ in range(n):
        s = int(rng.integers(feat.n_states))
        a = int(rng.integers(feat.n_actions))
        accumulate(stats, Transition(s, a, int(rng.integers(feat.n_states)), float(rng.random())),
                   feat, into_local=local)
    return stats


def cofactor_det(m):
    m = [list(row) for row in m]
    if len(m) == 1:
        return m[0][0]
    return sum((-1) ** j * m[0][j] * cofactor_det([row[:j] + row[j + 1:] for row in m[1:]])
               for j in range(len(m)))


def test_accumulate_scalar_local():
    feat = FeatureMap(np.ones((1, 1, 1)))
    stats = accumulate(SufficientStats(1, 1.0), Transition(0, 0, 0, 0.0), feat, into_local=True)
    assert stats.lambda_loc.tolist() == [[1.0]]
    assert stats.lambda_ser.tolist() == [[0.0]]
    assert stats.gram().tolist() == [[2.0]]


def test_accumulate_zero_feature():
    feat = FeatureMap(np.zeros((1, 1, 3)))
    stats = SufficientStats(3)
    accumulate(stats, Transition(0, 0, 0, 0.5), feat)
    assert np.all(stats.lambda_loc == 0)
    assert len(stats.transitions_loc) == 1


def test_accumulate_dimension_mismatch():
    feat = FeatureMap(np.zeros((1, 1, 3)))
    with pytest.raises(StructuralError):
        accumulate(SufficientStats(2), Transition(0, 0, 0, 0.0), feat)


def test_incremental_matches_batch():
    rng = np.random.default_rng(0)
    feat = random_features(rng, 5, 3, 4)
    stats = SufficientStats(4)
    fill(stats, feat, rng, 25, local=False)
    fill(stats, feat, rng, 25, local=True)
    ser = sum(np.outer(feat(t.state, t.action), feat(t.state, t.action)) for t in stats.transitions_ser)
    loc = sum(np.outer(feat(t.state, t.action), feat(t.state, t.action)) for t in stats.transitions_loc)
    assert np.max(np.abs(stats.lambda_ser - ser)) < 1e-9
    assert np.max(np.abs(stats.lambda_loc - loc)) < 1e-9


def test_server_insert_keeps_server_block_first():
    feat = FeatureMap.one_hot(3, 1)
    stats = SufficientStats(3)
    accumulate(stats, Transition(0, 0, 1, 0.0), feat, into_local=True)
    accumulate(stats, Transition(1, 0, 2, 0.0), feat, into_local=False)
    assert [t.state for t in stats.transitions_ser] == [1]
    assert [t.state for t in stats.transitions_loc] == [0]


def test_ridge_scalar():
    feat = FeatureMap(np.ones((1, 1, 1)))
    stats = accumulate(SufficientStats(1), Transition(0, 0, 0, 0.0), feat)
    sol = ridge_solve(stats, [2.0])
    assert sol.w[0] == pytest.approx(1.0, abs=1e-15)


def test_ridge_empty_is_zero():
    sol = ridge_solve(SufficientStats(3), [])
    assert np.all(sol.w == 0)


def test_ridge_matches_lu_oracle():
    from scipy.linalg import lu_factor, lu_solve

    rng = np.random.default_rng(1)
    feat = random_features(rng, 4, 2, 3)
    stats = fill(SufficientStats(3), feat, rng, 10)
    targets = rng.normal(size=10)
    sol = ridge_solve(stats, targets)
    phi = np.array([feat(t.state, t.action) for t in stats.transitions_loc])
    gram = phi.T @ phi + np.eye(3)
    expected = lu_solve(lu_factor(gram), phi.T @ targets)
    assert np.max(np.abs(sol.w - expected)) < 1e-9
    assert np.max(np.abs(sol.lambda_inv @ gram - np.eye(3))) < 1e-8


def test_ridge_wrong_target_count():
    with pytest.raises(StructuralError):
        ridge_solve(SufficientStats(2), [1.0])


def test_ridge_ill_conditioned():
    stats = SufficientStats(2, reg=1e-14)
    stats.lambda_loc = np.diag([1e3, 0.0])
    with pytest.raises(NumericalError):
        ridge_solve(stats, [])


def test_log_det_ratio_examples():
    assert log_det_ratio(SufficientStats(3)) == 0.0
    feat = FeatureMap(np.array([[[1.0, 0.0]]]))
    stats = accumulate(SufficientStats(2), Transition(0, 0, 0, 0.0), feat)
    assert log_det_ratio(stats) == pytest.approx(math.log(2), abs=1e-12)


def test_log_det_ratio_cofactor_oracle():
    rng = np.random.default_rng(2)
    feat = random_features(rng, 6, 2, 4)
    stats = fill(SufficientStats(4), feat, rng, 8, local=False)
    fill(stats, feat, rng, 8, local=True)
    eye = np.eye(4)
    expected = math.log(cofactor_det((stats.lambda_ser + stats.lambda_loc + eye).tolist())
                        / cofactor_det((stats.lambda_ser + eye).tolist()))
    assert abs(log_det_ratio(stats) - expected) < 1e-9


def test_quad_norm_examples():
    assert quad_norm([1.0, 0.0], np.linalg.inv(2 * np.eye(2))) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert quad_norm([0.0, 0.0], np.eye(2)) == 0.0
    assert quad_norm([0.6, 0.8], np.eye(2)) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(StructuralError):
        quad_norm([1.0], np.eye(2))


def test_sample_gaussian_zero_covariance():
    mean = np.array([0.25, -3.0])
    out = sample_gaussian(mean, np.zeros((2, 2)), np.random.default_rng(0))
    assert np.array_equal(out, mean)


def test_sample_gaussian_moments():
    rng = np.random.default_rng(3)
    n = 10 ** 5
    mean = np.array([1.0, -2.0])
    draws = sample_gaussian(mean, np.eye(2), rng, size=n)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 / math.sqrt(n))
    draws = sample_gaussian(np.zeros(2), np.diag([4.0, 1.0]), rng, size=n)
    assert np.allclose(draws.var(axis=0), [4.0, 1.0], rtol=0.05)


def test_sample_gaussian_rejects_indefinite():
    with pytest.raises(NumericalError):
        sample_gaussian(np.zeros(2), np.diag([1.0, -1e-6]), np.random.default_rng(0))
    # tiny negative eigenvalues are clamped, not rejected
    sample_gaussian(np.zeros(2), np.diag([1.0, -1e-12]), np.random.default_rng(0))


sizes = st.integers(min_value=1, max_value=4)


@settings(max_examples=40, deadline=None)
@given(d=sizes, n=st.integers(0, 30), seed=st.integers(0, 2 ** 31))
def test_log_det_monotone_and_residual(d, n, seed):
    rng = np.random.default_rng(seed)
    feat = random_features(rng, 3, 2, d)
    stats = fill(SufficientStats(d), feat, rng, 5, local=False)
    prev = log_det_ratio(stats)
    for _ in range(n):
        fill(stats, feat, rng, 1)
        cur = log_det_ratio(stats)
        assert cur >= prev - 1e-12
        prev = cur
    targets = rng.normal(scale=5, size=len(stats))
    sol = ridge_solve(stats, targets)
    assert np.linalg.norm(sol.gram @ sol.w - sol.b) / max(1.0, np.linalg.norm(sol.b)) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(d=sizes, reg=st.floats(0.1, 10.0), seed=st.integers(0, 2 ** 31))
def test_quad_norm_prior_bound(d, reg, seed):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=d)
    phi /= max(1.0, np.linalg.norm(phi))
    sol = ridge_solve(SufficientStats(d, reg), [])
    assert quad_norm(phi, sol.lambda_inv) <= np.linalg.norm(phi) / math.sqrt(reg) + 1e-12
