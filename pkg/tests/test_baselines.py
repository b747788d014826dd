import numpy as np
import pytest

from cachenet.baselines import POLICIES, ClassicCache
from cachenet.sim import PathReplication, run


@pytest.mark.parametrize("policy", POLICIES)
def test_zero_slots_never_change(policy):
    cache = ClassicCache(policy, 0, pinned=[4])
    for item in [1, 2, 3, 4]:
        assert cache.on_response(item) is None
    assert cache.contents() == {4}


def test_lru_single_slot():
    cache = ClassicCache("LRU", 1)
    for item in [1, 2, 1]:
        cache.on_response(item)
    assert cache.contents() == {1}


def test_lru_hit_refreshes_recency():
    cache = ClassicCache("LRU", 2, initial=[1, 2])
    cache.on_request_hit_update(1)
    assert cache.on_response(3) == 2
    assert list(cache.order) == [1, 3]


def test_fifo_hit_changes_nothing():
    cache = ClassicCache("FIFO", 2, initial=[1, 2])
    cache.on_request_hit_update(1)
    cache.on_response(1)
    assert list(cache.order) == [1, 2]
    assert cache.on_response(3) == 1


def test_lfu_counts_and_ties():
    cache = ClassicCache("LFU", 2, initial=[1, 2])
    cache.on_request_hit_update(2)
    assert cache.counts == {1: 1, 2: 2}
    assert cache.on_response(3) == 1
    # counts are now {2: 2, 3: 1}, so 3 makes way
    assert cache.on_response(1) == 3
    cache.on_request_hit_update(1)
    # now 2 and 1 both have count 2: the older insertion is evicted
    assert cache.on_response(4) == 2


def test_lfu_counts_reset_or_persist():
    fresh = ClassicCache("LFU", 1, initial=[1])
    kept = ClassicCache("LFU", 1, initial=[1], persistent_counts=True)
    for cache in (fresh, kept):
        cache.on_request_hit_update(1)
        cache.on_response(2)
        cache.on_response(1)
    assert fresh.counts == {1: 1}
    assert kept.counts[1] == 3 and kept.counts[2] == 1


def test_random_replacement_is_seeded():
    def trace(seed):
        cache = ClassicCache("RR", 3, rng=np.random.default_rng(seed), initial=[0, 1, 2])
        return [cache.on_response(i) for i in range(3, 40)]

    assert trace(5) == trace(5)
    evicted = [e for e in trace(5) if e is not None]
    assert len(evicted) == 37 and len(set(evicted)) > 3


def test_pinned_items_are_never_evicted():
    cache = ClassicCache("LRU", 1, pinned=[0])
    for item in [0, 1, 2, 0, 3]:
        assert cache.on_response(item) != 0
    assert 0 in cache and cache.contents() == {0, 3}


def test_validation():
    with pytest.raises(ValueError, match="unknown policy"):
        ClassicCache("MRU", 1)
    with pytest.raises(ValueError):
        ClassicCache("LRU", -1)
    with pytest.raises(ValueError, match="exceed"):
        ClassicCache("LRU", 1, initial=[1, 2])


def test_single_slot_policies_coincide_on_the_star(star_demand):
    logs = {kind: run(star_demand, PathReplication(kind), horizon=2000, seed=3) for kind in POLICIES}
    assert logs["LRU"] == logs["LFU"] == logs["FIFO"] == logs["RR"]


def test_lru_steady_state_on_the_star(star_demand):
    log = run(star_demand, "LRU", horizon=100_000, seed=1)
    # ECG is 10 when the far item is held and 0.9 otherwise
    ecg = np.asarray(log.ecg)
    assert set(np.round(ecg, 9)) == {0.9, 10.0}
    assert abs(np.mean(ecg == 10.0) - 0.1) <= 0.02
