from __future__ import annotations

import math
import random

import numpy as np
import pytest

from cparchive.analyze import (
    TimingEvent,
    cache_histogram,
    dump_events,
    events_from_journal,
    flow_matrix,
    histogram,
    load_events,
    perfect_cache,
    timing_densities,
)


def hand_case():
    return [TimingEvent("a", "x", 0, 10, 100), TimingEvent("b", "x", 5, 20, 50)]


def test_perfect_cache_hand_case():
    trace = perfect_cache(hand_case())
    assert trace.samples == [(0, 100), (5, 150), (10, 50), (20, 0)]
    assert trace.occupancy_at(2) == 100
    assert trace.occupancy_at(7) == 150
    assert trace.occupancy_at(15) == 50
    assert trace.occupancy_at(25) == 0
    assert trace.peak == 150 and trace.added == trace.removed == 150


def test_additions_before_removals_at_equal_time():
    trace = perfect_cache([TimingEvent("a", "x", 0, 5, 10), TimingEvent("b", "x", 5, 9, 7)])
    assert trace.peak == 17
    assert trace.samples == [(0, 10), (5, 7), (9, 0)]


def test_entity_spans_merge_over_actors():
    evs = [TimingEvent("a", "x", 0, 1, 10), TimingEvent("a", "y", 4, 6, 10)]
    assert perfect_cache(evs).samples == [(0, 10), (6, 0)]


def random_corpus(rng, n):
    evs = []
    for i in range(n):
        t = rng.uniform(0, 1000)
        for _ in range(rng.randint(1, 4)):
            d = rng.expovariate(1.0)
            evs.append(TimingEvent(f"e{i}", rng.choice("abc"), t, t + d, rng.randint(0, 10**6)))
            t += d + rng.expovariate(0.5)
    rng.shuffle(evs)
    return evs


def test_random_corpora_end_empty():
    rng = random.Random(12)
    for _ in range(50):
        evs = random_corpus(rng, rng.randint(1, 60))
        trace = perfect_cache(evs)
        assert trace.samples[-1][1] == 0
        assert all(occ >= 0 for _, occ in trace.samples)
        # brute force: occupancy at sample instants
        spans = {}
        for ev in evs:
            lo, hi, sz = spans.get(ev.entity, (ev.start, ev.stop, ev.size))
            spans[ev.entity] = (min(lo, ev.start), max(hi, ev.stop), max(sz, ev.size))
        for t, occ in trace.samples:
            assert occ == sum(sz for lo, hi, sz in spans.values() if lo <= t < hi)


def test_cache_histogram_hand_case():
    h = cache_histogram(perfect_cache(hand_case()))
    assert len(h.density) == 100
    assert h.edges[0] == 0 and h.edges[-1] == 12
    assert math.isclose(h.density.sum(), 1.0)
    weights = {}
    for lo, hi, d in h.rows():
        if d:
            weights[round(lo, 2)] = d
    # 5 s at 100 B, 5 s at 150 B, 10 s at 50 B; bins are 0.12 wide
    assert weights == pytest.approx({1.92: 0.25, 2.16: 0.25, 1.68: 0.5})


def test_histogram_clips_and_normalizes():
    h = histogram([-5, 0.5, 100], [1, 1, 2], 0, 1, 10)
    assert h.density[0] == 0.25 and h.density[5] == 0.25 and h.density[-1] == 0.5
    empty = histogram([], [], 0, 1, 10)
    assert not empty.density.any()


def test_timing_densities():
    evs = [TimingEvent("a", "x", 0, 1, 10), TimingEvent("a", "y", 11, 12, 10),
           TimingEvent("b", "x", 0, 100, 1000)]
    out = timing_densities(evs)
    assert out["inter_job"]["values"] == [10]
    assert sorted(out["first_last"]["values"]) == [12, 100]
    by_count = out["first_last"]["by_count"]
    by_volume = out["first_last"]["by_volume"]
    assert math.isclose(by_count.density.sum(), 1.0)
    bin_12 = int((math.log10(12) + 1) / 0.08)
    bin_100 = int((math.log10(100) + 1) / 0.08)
    assert by_count.density[bin_12] == pytest.approx(0.5)
    assert by_volume.density[bin_100] == pytest.approx(1000 / 1010)


def test_flow_matrix():
    evs = [TimingEvent("a", "x", 0, 1, 10), TimingEvent("a", "y", 2, 3, 10), TimingEvent("a", "y", 4, 5, 10),
           TimingEvent("b", "x", 0, 1, 5), TimingEvent("b", "y", 2, 3, 5)]
    assert flow_matrix(evs) == {("x", "y"): (2, 15), ("y", "y"): (1, 10)}


def test_round_trip_and_validation(tmp_path):
    evs = hand_case()
    dump_events(evs, tmp_path / "ev.jsonl")
    assert load_events(tmp_path / "ev.jsonl") == evs
    with pytest.raises(ValueError):
        TimingEvent("a", "x", 5, 1, 10)
    with pytest.raises(ValueError):
        perfect_cache([])


def test_events_from_journal():
    records = [
        {"ts": 1.0, "kind": "accept", "actor": "x", "job": "J:1", "carvpath": "0+100"},
        {"ts": 3.0, "kind": "forward", "actor": "y", "job": "J:1", "carvpath": "0+100"},
        {"ts": 4.0, "kind": "accept", "actor": "y", "job": "J:2", "carvpath": "0+100"},
        {"ts": 9.0, "kind": "complete", "actor": "y", "job": "J:2", "carvpath": "0+100"},
        {"ts": 9.5, "kind": "register", "actor": "z"},
    ]
    evs = events_from_journal(records)
    assert evs == [TimingEvent("0+100", "x", 1.0, 3.0, 100), TimingEvent("0+100", "y", 4.0, 9.0, 100)]
    assert flow_matrix(evs) == {("x", "y"): (1, 100)}
    assert np.isclose(cache_histogram(perfect_cache(evs)).density.sum(), 1.0)
