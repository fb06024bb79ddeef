import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regimecredit import (
    MarkovChain,
    ValidationError,
    dedup_regimes,
    enumerate_paths,
    future_path_weights,
    path_probability,
    simulate_regimes,
)

from helpers import random_chain


@pytest.fixture
def chain():
    return MarkovChain(p0=np.array([1.0, 0.0]), P=np.array([[0.9, 0.1], [0.2, 0.8]]))


def test_chain_validation():
    with pytest.raises(ValidationError):
        MarkovChain(p0=np.array([0.5, 0.4]), P=np.eye(2))
    with pytest.raises(ValidationError):
        MarkovChain(p0=np.array([0.5, 0.5]), P=np.array([[0.9, 0.2], [0.2, 0.8]]))
    with pytest.raises(ValidationError):
        MarkovChain(p0=np.array([1.1, -0.1]), P=np.eye(2))


def test_path_probability_products(chain):
    # paths are 0-based internally
    assert path_probability(chain, [0, 0]) == pytest.approx(0.9, abs=1e-15)
    assert path_probability(chain, [0, 1, 1]) == pytest.approx(1.0 * 0.1 * 0.8, abs=1e-15)
    assert path_probability(chain, []) == 1.0


def test_path_probability_sums_to_one(chain):
    for k in (1, 2, 4):
        total = sum(path_probability(chain, p) for p in enumerate_paths(2, k))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_path_probability_tower(chain):
    # marginalizing the last step recovers the shorter path probability
    rng = np.random.default_rng(0)
    for _ in range(10):
        k = int(rng.integers(1, 5))
        path = rng.integers(0, 2, k)
        total = sum(path_probability(chain, np.append(path, j)) for j in range(2))
        assert abs(total - path_probability(chain, path)) < 1e-14


def test_future_weights_single_regime():
    one = MarkovChain(p0=np.array([1.0]), P=np.array([[1.0]]))
    paths, w = future_path_weights(one, np.array([1.0]), 3)
    assert paths.shape == (1, 3)
    assert w[0] == 1.0


def test_future_weights_one_step(chain):
    z = np.array([0.3, 0.7])
    paths, w = future_path_weights(chain, z, 1)
    assert np.allclose(w, chain.P.T @ z, atol=1e-15)


def test_future_weights_match_enumeration():
    rng = np.random.default_rng(3)
    chain = random_chain(2, rng)
    z = rng.dirichlet(np.ones(2))
    paths, w = future_path_weights(chain, z, 3)
    # oracle: P[path | z] = sum_j z_j P[j, s1] P[s1, s2] P[s2, s3]
    for path, weight in zip(paths, w):
        brute = sum(
            z[j] * chain.P[j, path[0]] * chain.P[path[0], path[1]] * chain.P[path[1], path[2]]
            for j in range(2)
        )
        assert abs(weight - brute) < 1e-14
    assert abs(w.sum() - 1.0) < 1e-12


def test_future_weights_from_time_zero(chain):
    paths, w = future_path_weights(chain, None, 2)
    for path, weight in zip(paths, w):
        assert abs(weight - path_probability(chain, path)) < 1e-15


@settings(max_examples=50, deadline=None)
@given(
    st.integers(2, 4),
    st.integers(1, 5),
    st.integers(0, 10_000),
)
def test_future_weights_sum_to_one(N, k, seed):
    rng = np.random.default_rng(seed)
    chain = random_chain(N, rng)
    z = rng.dirichlet(np.ones(N))
    _, w = future_path_weights(chain, z, k)
    assert abs(w.sum() - 1.0) < 1e-12


def test_dedup_first_occurrence_order():
    assert dedup_regimes([0, 1, 0, 2]).tolist() == [0, 1, 2]
    assert dedup_regimes([1, 1, 1]).tolist() == [1]
    assert dedup_regimes([]).tolist() == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), max_size=12))
def test_dedup_idempotent_and_stable(path):
    once = dedup_regimes(path)
    assert dedup_regimes(once).tolist() == once.tolist()
    seen = []
    for s in path:
        if s not in seen:
            seen.append(s)
    assert once.tolist() == seen


def test_simulate_regimes_absorbing():
    chain = MarkovChain(p0=np.array([1.0, 0.0]), P=np.eye(2))
    rng = np.random.default_rng(0)
    path = simulate_regimes(chain, 10, rng)
    assert np.all(path[1:] == 0)


def test_simulate_regimes_deterministic():
    chain = MarkovChain(p0=np.array([0.5, 0.5]), P=np.array([[0.7, 0.3], [0.4, 0.6]]))
    a = simulate_regimes(chain, 50, np.random.default_rng(7))
    b = simulate_regimes(chain, 50, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_simulate_regimes_marginal_frequency():
    # P[s_2 = regime 1] = 0.5*0.7 + 0.5*0.4 = 0.55; simulate_regimes delegates
    # to the same sampler, so draw the bulk vectorized
    from regimecredit import sample_paths

    chain = MarkovChain(p0=np.array([0.5, 0.5]), P=np.array([[0.7, 0.3], [0.4, 0.6]]))
    rng = np.random.default_rng(11)
    draws = 100_000
    paths = sample_paths(chain, None, 2, draws, rng)
    p_hat = (paths[:, 1] == 0).mean()
    se = np.sqrt(0.55 * 0.45 / draws)
    assert abs(p_hat - 0.55) < 3.0 * se


def test_chain_marginal_power_convention():
    chain = MarkovChain(p0=np.array([0.3, 0.7]), P=np.array([[0.9, 0.1], [0.2, 0.8]]))
    assert np.allclose(chain.marginal(1), chain.p0)
    assert np.allclose(chain.marginal(3), chain.p0 @ chain.P @ chain.P)


def test_stationary_rows_give_stationary_weights():
    pi = np.array([0.4, 0.6])
    chain = MarkovChain(p0=pi, P=np.vstack([pi, pi]))
    for t in (2, 5, 9):
        assert np.allclose(chain.marginal(t), pi, atol=1e-14)


def test_enumeration_budget_guard():
    with pytest.raises(ValidationError, match="enumeration budget"):
        enumerate_paths(4, 20)
