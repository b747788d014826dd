import numpy as np
import pytest
from hypothesis import given, strategies as st

from cachenet.objective import is_allocation, multilinear_gain
from cachenet.rounding import (
    NodeDistribution,
    RoundingError,
    build_distribution,
    global_distributions,
    sample,
    sample_global,
)

from helpers import random_marginals, tiny_instance


def as_sets(dist):
    return {frozenset(s): p for s, p in zip(dist.sets(), dist.probs)}


def test_four_items_three_slots():
    dist = build_distribution([0.75] * 4, 3)
    expected = [{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}]
    assert [set(s) for s in dist.sets()] == expected
    assert dist.probs.tolist() == pytest.approx([0.25] * 4)


def test_single_slot_split():
    dist = build_distribution([0.3, 0.7], 1)
    assert as_sets(dist) == pytest.approx({frozenset([0]): 0.3, frozenset([1]): 0.7})


def test_integral_marginals_give_a_point_mass():
    dist = build_distribution([1, 0, 1, 0, 0], 2)
    assert len(dist.probs) == 1 and dist.probs[0] == 1.0
    assert dist.sets() == [frozenset([0, 2])]


def test_zero_capacity():
    dist = build_distribution([0, 0, 0], 0)
    assert dist.support.shape == (1, 3) and not dist.support.any()


@pytest.mark.parametrize("ybar, cap", [([0.5, 0.4], 1), ([1.2, -0.2], 1), ([0.5, 0.5, 0.5], 2)])
def test_invalid_marginals(ybar, cap):
    with pytest.raises(RoundingError):
        build_distribution(ybar, cap)


@st.composite
def capped_vectors(draw):
    n = draw(st.integers(2, 50))
    c = draw(st.integers(1, min(5, n)))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    # random point of the capped simplex: rescale, then clip and redistribute
    y = rng.dirichlet(np.full(n, draw(st.sampled_from([0.2, 1.0, 5.0])))) * c
    for _ in range(100):
        over = y > 1
        if not over.any():
            break
        excess = (y[over] - 1).sum()
        y[over] = 1
        room = ~over & (y < 1)
        y[room] += excess * (1 - y[room]) / (1 - y[room]).sum()
    if draw(st.booleans()):
        # snap a few coordinates to 0 or 1 and rebalance on the others
        y = np.round(y, draw(st.integers(1, 3)))
        y = np.clip(y, 0, 1)
        diff = c - y.sum()
        free = np.flatnonzero((y > 0) & (y < 1)) if diff < 0 else np.flatnonzero(y < 1)
        if free.size and abs(diff) < free.size:
            y[free] += diff / free.size
        y = np.clip(y, 0, 1)
    if abs(y.sum() - c) > 1e-9:
        y *= c / y.sum()
    if y.max() > 1:
        y = np.full(n, c / n)
    return y, c


@given(capped_vectors())
def test_exact_marginals_and_feasible_support(case):
    y, c = case
    dist = build_distribution(y, c)
    assert np.abs(dist.marginals() - y).max() <= 1e-9
    assert len(dist.probs) <= len(y)
    assert np.all(dist.support.sum(axis=1) == c)
    assert np.all(dist.probs > 0) and dist.probs.sum() == pytest.approx(1.0)
    pinned = np.flatnonzero(y == 1.0)
    assert dist.support[:, pinned].all()


def test_sampling_frequencies():
    rng = np.random.default_rng(0)
    dist = build_distribution([0.75] * 4, 3)
    n = 1_000_000
    draws = sample(dist, rng, n)
    first = np.mean(np.all(draws == dist.support[0], axis=1))
    assert abs(first - 0.25) <= 3 * np.sqrt(0.25 * 0.75 / n)
    y = np.array([0.1, 0.55, 0.35, 1.0, 0.0])
    dist = build_distribution(y, 2)
    freq = sample(dist, rng, n).mean(axis=0)
    assert np.all(np.abs(freq - y) <= 3 * np.sqrt(y * (1 - y) / n) + 1e-12)


def test_singleton_support_is_always_drawn():
    dist = NodeDistribution(np.array([[True, False]]), np.array([1.0]))
    assert sample(dist, np.random.default_rng(1)).tolist() == [True, False]


def test_sample_global_on_the_star(star_demand):
    Y = np.array([[0, 0], [0.5, 0.5], [1, 0], [0, 1.0]])
    draws = sample_global(Y, star_demand.capacities, np.random.default_rng(2), size=20_000)
    assert draws.shape == (20_000, 4, 2)
    assert set(map(tuple, draws[:, 1].astype(int).tolist())) == {(1, 0), (0, 1)}
    assert abs(draws[:, 1, 1].mean() - 0.5) < 0.02


@given(seed=st.integers(0, 1000))
def test_global_samples_are_feasible(seed):
    dem = tiny_instance(seed)
    rng = np.random.default_rng(seed)
    Y = random_marginals(dem, rng)
    dists = global_distributions(Y, dem.capacities)
    for _ in range(5):
        assert is_allocation(dem, sample_global(Y, dem.capacities, rng, dists=dists))


def test_integral_marginals_sample_to_themselves(star_demand):
    X = np.array([[0, 0], [0, 1], [1, 0], [0, 1.0]])
    assert np.array_equal(sample_global(X, star_demand.capacities, np.random.default_rng(0)), X)


def test_monte_carlo_matches_multilinear():
    dem = tiny_instance(4)
    rng = np.random.default_rng(4)
    Y = random_marginals(dem, rng)
    values = multilinear_gain(dem, sample_global(Y, dem.capacities, rng, size=20_000))
    err = values.std(ddof=1) / np.sqrt(values.size)
    assert abs(values.mean() - multilinear_gain(dem, Y)) <= 3 * err + 1e-12
