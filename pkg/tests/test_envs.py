import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopexplore.envs import (LEFT, RIGHT, MisspecConfig, TabularMDPSpec, build_nchain,
                              evaluate_policy, misspecify, optimal_values,
                              random_linear_mdp, step, tv_distance)
from coopexplore.errors import ConfigError, StructuralError


def test_nchain_shape_and_rewards():
    spec, emb = build_nchain(25)
    assert spec.horizon == 34
    assert spec.initial_state == 1
    assert spec.rewards[0, 0, LEFT] == 0.001
    assert spec.rewards[0, 24, RIGHT] == 1.0
    assert build_nchain(10)[0].horizon == 19
    assert emb.feature_dim == 50


def test_nchain_optimal_return():
    spec, _ = build_nchain(25)
    assert optimal_values(spec).v_star[0, spec.initial_state] == pytest.approx(10.0, abs=1e-9)


@pytest.mark.parametrize("n", [3, 5, 10, 40])
def test_nchain_optimal_return_any_length(n):
    spec, _ = build_nchain(n)
    assert optimal_values(spec).v_star[0, 1] == pytest.approx(10.0, abs=1e-9)


def test_nchain_rejects_short():
    with pytest.raises(ConfigError):
        build_nchain(2)


def test_nchain_moves():
    spec, _ = build_nchain(25)
    rng = np.random.default_rng(0)
    assert step(spec, 0, 1, RIGHT, rng)[0] == 2
    assert step(spec, 0, 0, LEFT, rng)[0] == 0
    assert step(spec, 0, 24, RIGHT, rng)[0] == 24


def test_always_left_value():
    # step 1 is spent at s_2, steps 2..H-1 collect 0.001 at s_1, step H is unrewarded
    spec, _ = build_nchain(25)
    V = evaluate_policy(spec, np.zeros((spec.horizon, spec.n_states), dtype=int))
    assert V[0, 1] == pytest.approx(0.001 * (spec.horizon - 2), abs=1e-12)


def test_random_mdp_deterministic():
    a, _ = random_linear_mdp(6, 3, 4, seed=7)
    b, _ = random_linear_mdp(6, 3, 4, seed=7)
    assert a.same_as(b)
    c, _ = random_linear_mdp(6, 3, 4, seed=8)
    assert not a.same_as(c)


def test_random_mdp_rows_and_embedding():
    spec, emb = random_linear_mdp(8, 3, 5, seed=1)
    assert np.max(np.abs(spec.transitions.sum(axis=-1) - 1)) <= 1e-12
    rng = np.random.default_rng(0)
    for _ in range(100):
        h, s, a = rng.integers(5), rng.integers(8), rng.integers(3)
        phi = emb.feature_map(s, a)
        assert np.array_equal(phi @ emb.mu[h], spec.transitions[h, s, a])
        assert phi @ emb.theta[h] == spec.rewards[h, s, a]


def test_embedding_norms():
    spec, emb = random_linear_mdp(5, 2, 3, seed=2)
    d = emb.feature_dim
    for h in range(3):
        assert np.linalg.norm(emb.mu[h].sum(axis=1)) == pytest.approx(math.sqrt(d), abs=1e-12)
        assert np.linalg.norm(emb.theta[h]) <= math.sqrt(d)


def test_misspecify_zero_is_identity():
    spec, _ = random_linear_mdp(5, 2, 3, seed=3)
    out = misspecify(spec, MisspecConfig(0.0, seed=9), agent_index=1)
    assert np.array_equal(out.transitions, spec.transitions)
    assert np.array_equal(out.rewards, spec.rewards)


def test_misspecify_radius():
    spec, _ = random_linear_mdp(6, 3, 4, seed=4)
    cfg = MisspecConfig(0.1, seed=5)
    a = misspecify(spec, cfg, 0)
    b = misspecify(spec, cfg, 1)
    for out in (a, b):
        assert tv_distance(out.transitions, spec.transitions).max() <= 0.1 + 1e-12
        assert np.abs(out.rewards - spec.rewards).max() <= 0.1 + 1e-15
    assert not a.same_as(b)


def test_misspecify_range_check():
    with pytest.raises(ConfigError) as err:
        MisspecConfig(1.5)
    assert err.value.path == "env.misspec.zeta"


def test_step_frequencies():
    spec, _ = random_linear_mdp(4, 2, 2, seed=6)
    rng = np.random.default_rng(11)
    n = 10 ** 5
    counts = np.bincount([step(spec, 1, 2, 1, rng)[0] for _ in range(n)], minlength=4)
    p = spec.transitions[1, 2, 1]
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) <= 3 * se + 1e-12)


def test_step_range_errors():
    spec, _ = build_nchain(5)
    with pytest.raises(StructuralError):
        step(spec, 0, 5, 0, np.random.default_rng(0))
    with pytest.raises(StructuralError):
        step(spec, spec.horizon, 0, 0, np.random.default_rng(0))


def test_spec_validation():
    P = np.full((1, 2, 1, 2), 0.5)
    TabularMDPSpec(2, 1, 1, P, np.zeros((1, 2, 1)))
    with pytest.raises(StructuralError):
        TabularMDPSpec(2, 1, 1, P * 1.1, np.zeros((1, 2, 1)))
    with pytest.raises(StructuralError):
        TabularMDPSpec(2, 1, 1, P, np.full((1, 2, 1), 1.5))


def test_optimal_values_small_cases():
    P = np.full((2, 2, 1, 2), 0.5)
    spec = TabularMDPSpec(2, 1, 2, P, np.full((2, 2, 1), 0.5))
    assert optimal_values(spec).v_star[0].tolist() == [1.0, 1.0]
    zero = TabularMDPSpec(2, 1, 2, P, np.zeros((2, 2, 1)))
    assert np.all(optimal_values(zero).v_star == 0)


def test_json_round_trip():
    spec, _ = random_linear_mdp(3, 2, 2, seed=0)
    doc = json.loads(spec.to_json())
    assert len(doc["transitions"]) == 2 * 3 * 2 * 3
    assert TabularMDPSpec.from_json(spec.to_json()).same_as(spec)


@settings(max_examples=30, deadline=None)
@given(S=st.integers(1, 6), A=st.integers(1, 3), H=st.integers(1, 5), seed=st.integers(0, 2 ** 32))
def test_dp_bounds_and_bellman(S, A, H, seed):
    spec, emb = random_linear_mdp(S, A, H, seed)
    ov = optimal_values(spec)
    for h in range(H):
        assert np.all(ov.v_star[h] >= 0) and np.all(ov.v_star[h] <= H - h + 1e-12)
        assert np.allclose(ov.q_star[h], spec.rewards[h] + spec.transitions[h] @ ov.v_star[h + 1])
        assert np.array_equal(ov.v_star[h], ov.q_star[h].max(axis=1))
    recon = emb.feature_map.flat @ emb.mu
    assert np.array_equal(recon, spec.transitions.reshape(H, S * A, S))
