import random

import pytest

from subtlb.addrs import PageConfig, TlbGeometry
from subtlb.hierarchy import (DEFAULT_L3_GEOMETRY, GmmuModel, InstanceConfig,
                              MshrTable, TranslationPipeline,
                              TranslationRequest)
from subtlb.star import StarTlb
from subtlb.tlbcore import SubEntryTlb

PAGE = PageConfig()
TINY_L3 = TlbGeometry(sets=1, ways=1, subentries_per_entry=16,
                      lookup_latency_cycles=40)


def req(tick, page, pid=1, inst=1, measured=True, weight=1.0):
    return TranslationRequest(tick, inst, pid, page << PAGE.offset_bits,
                              weight, measured)


def pipeline(l3=None, instances=None, **kw):
    if l3 is None:
        l3 = SubEntryTlb(DEFAULT_L3_GEOMETRY, PAGE)
    if instances is None:
        instances = [InstanceConfig(1, g_units=3)]
    return TranslationPipeline(instances, l3, **kw)


def latencies(pipe):
    return sorted(c.latency for c in pipe.completions)


# ----------------------------------------------------------------------
# cycle-exact paths

def test_cold_translation_costs_451():
    pipe = pipeline()
    pipe.simulate([req(0, page=5)])
    (done,) = pipe.completions
    assert done.completion_tick == 451
    assert done.latency == 451
    assert done.pfn == 5
    t = pipe.tallies[1]
    assert (t.l1_probes, t.l1_hits, t.l2_probes, t.l2_hits,
            t.l3_probes, t.l3_hits, t.walks) == (1, 0, 1, 0, 1, 0, 1)


def test_l1_hit_costs_1():
    pipe = pipeline()
    pipe.simulate([req(0, 5), req(1000, 5)])
    assert latencies(pipe) == [1, 451]
    assert pipe.tallies[1].l1_hits == 1


def test_l2_hit_costs_11():
    pipe = pipeline(l1_entries=1, l1_ways=1)
    pipe.simulate([req(0, 5), req(1000, 77), req(2000, 5)])
    assert latencies(pipe) == [11, 451, 451]
    assert pipe.tallies[1].l2_hits == 1


def test_l3_hit_costs_51():
    l2 = TlbGeometry(sets=1, ways=1, subentries_per_entry=16,
                     lookup_latency_cycles=10)
    pipe = pipeline(l1_entries=1, l1_ways=1, l2_geom=l2)
    # page 77 evicts page 5 from the one-entry L1 and L2, not from L3
    pipe.simulate([req(0, 5), req(1000, 77), req(2000, 5)])
    assert latencies(pipe) == [51, 451, 451]
    t = pipe.tallies[1]
    assert t.l3_hits == 1 and t.walks == 2


def test_walk_cache_hit_costs_151():
    l2 = TlbGeometry(sets=1, ways=1, subentries_per_entry=16,
                     lookup_latency_cycles=10)
    pipe = pipeline(l3=SubEntryTlb(TINY_L3, PAGE), l1_entries=1, l1_ways=1,
                    l2_geom=l2)
    # 77 evicts 5 from every level; the walk cache still remembers 5
    pipe.simulate([req(0, 5), req(1000, 77), req(2000, 5)])
    assert latencies(pipe) == [151, 451, 451]
    assert pipe.gmmu.walk_cache_hits == 1
    assert pipe.tallies[1].walks == 3


def test_sibling_page_misses_sub_entry_through_the_stack():
    pipe = pipeline()
    # pages 0x50 and 0x51 live in the same 16-page region
    pipe.simulate([req(0, 0x50), req(1000, 0x51), req(2000, 0x50),
                   req(2001, 0x51)])
    assert latencies(pipe) == [1, 1, 451, 451]
    t = pipe.tallies[1]
    assert t.l3_miss_no_entry == 1
    assert t.l3_miss_sub_entry == 1
    assert pipe.l3.stats.new_entries == 1
    assert pipe.l3.stats.fills_existing == 1
    assert pipe.l3_probe_stream == [(1, 0x50, True), (1, 0x51, True)]


# ----------------------------------------------------------------------
# coalescing and stalls

def test_same_page_requests_coalesce_into_one_walk():
    pipe = pipeline()
    pipe.simulate([req(0, 9), req(0, 9), req(3, 9)])
    assert [c.completion_tick for c in pipe.completions] == [451, 451, 451]
    assert pipe.tallies[1].walks == 1
    assert pipe.l1_mshr[1].coalesced == 2
    assert pipe.gmmu.walks_started == 1
    # offsets within one page share a vpn too
    pipe2 = pipeline()
    pipe2.simulate([req(0, 9),
                    TranslationRequest(0, 1, 1, (9 << 16) + 0x123, 1.0, True)])
    assert pipe2.tallies[1].walks == 1


def test_mshr_full_parks_and_cascades():
    pipe = pipeline(l1_mshr_capacity=1)
    pipe.simulate([req(0, 1), req(0, 2), req(0, 2)])
    # leader X at 451; parked Y-leader rides the freed entry at 451 and
    # lands at 902; the second Y request wakes on Y's allocate and coalesces
    assert sorted(c.completion_tick for c in pipe.completions) == [451, 902, 902]
    assert pipe.l1_mshr[1].stalls == 2
    assert pipe.l1_mshr[1].coalesced == 1
    assert pipe.tallies[1].completed == 3


def test_inflight_page_attaches_even_when_table_full():
    pipe = pipeline(l1_mshr_capacity=1)
    # the third request targets the in-flight page: it rides that entry
    # instead of parking, so only the page-2 request ever stalls
    pipe.simulate([req(0, 1), req(5, 2), req(6, 1)])
    ticks = {c.request.tick: c.completion_tick for c in pipe.completions}
    assert ticks[0] == 451
    assert ticks[6] == 451
    assert ticks[5] == 902
    assert pipe.l1_mshr[1].stalls == 1
    assert pipe.l1_mshr[1].coalesced == 1


def test_walker_pool_overflow_queues_fifo():
    pipe = pipeline(walkers_per_gpc=2)
    pipe.simulate([req(0, 0x10), req(0, 0x20), req(0, 0x30)])
    assert sorted(c.completion_tick for c in pipe.completions) == [451, 451, 851]
    assert pipe.gmmu.max_queue_depth == 1
    assert pipe.gmmu.walks_requested == 3
    # the queued walk kept its request order
    last = max(pipe.completions, key=lambda c: c.completion_tick)
    assert last.request.vaddr == 0x30 << 16


# ----------------------------------------------------------------------
# measurement masking

def test_unmeasured_traffic_exercises_but_never_counts():
    pipe = pipeline()
    pipe.simulate([req(0, 5, measured=False), req(1000, 5)])
    t = pipe.tallies[1]
    assert t.issued == 1 and t.completed == 1
    assert t.l1_probes == 1 and t.l1_hits == 1  # the warm measured probe
    assert t.walks == 0
    assert pipe.l3.stats.probes == 1            # structure saw the traffic
    assert latencies(pipe) == [1, 451]          # completions keep everything


def test_masked_eviction_samples_respect_cutoff():
    pipe = pipeline(l3=SubEntryTlb(TINY_L3, PAGE))
    pipe.simulate([req(0, 5), req(1000, 0x999, measured=False)])
    # the eviction lands at tick 1451, after pid 1's last measured
    # completion at 451, so the report window excludes it
    assert pipe.masked_eviction_samples() == []

    pipe = pipeline(l3=SubEntryTlb(TINY_L3, PAGE))
    pipe.simulate([req(0, 5), req(500, 0x999)])
    samples = pipe.masked_eviction_samples()
    assert len(samples) == 1 and samples[0].tick == 951


def test_pid_without_measured_traffic_contributes_no_samples():
    pipe = pipeline(l3=SubEntryTlb(TINY_L3, PAGE),
                    instances=[InstanceConfig(1), InstanceConfig(2)])
    pipe.simulate([req(0, 5, pid=2, inst=2, measured=False),
                   req(500, 0x999, pid=1)])
    # pid 2's entry is the eviction victim, but pid 2 never measured
    samples = pipe.masked_eviction_samples()
    assert samples == []


# ----------------------------------------------------------------------
# multi-instance structure

def test_private_levels_are_private():
    pipe = pipeline(instances=[InstanceConfig(1), InstanceConfig(2)])
    pipe.simulate([req(0, 5, pid=1, inst=1)])
    assert pipe.l1[2].stats.probes == 0
    assert pipe.l2[2].stats.probes == 0
    pipe2 = pipeline(instances=[InstanceConfig(1), InstanceConfig(2)])
    pipe2.simulate([req(0, 5, pid=1, inst=1), req(1, 5, pid=2, inst=2)])
    # same page number, different pid: both walk (no cross-tenant reuse)
    assert pipe2.tallies[1].walks == 1
    assert pipe2.tallies[2].walks == 1


def test_rejects_unknown_instance():
    pipe = pipeline()
    with pytest.raises(AssertionError):
        pipe.submit(req(0, 5, inst=9))


# ----------------------------------------------------------------------
# conservation under load

def test_conservation_random_stress():
    l3 = StarTlb(TlbGeometry(8, 4, 16, 40), PAGE)
    l2 = TlbGeometry(sets=2, ways=2, subentries_per_entry=16,
                     lookup_latency_cycles=10)
    pipe = pipeline(l3=l3, instances=[InstanceConfig(i, g_units=2)
                                      for i in (1, 2, 3)],
                    l2_geom=l2, walkers_per_gpc=2,
                    l1_mshr_capacity=4, l2_mshr_capacity=4)
    rng = random.Random(1999)
    n = 4000
    # a process lives on one slice; walk dedup relies on that
    picks = [rng.choice((1, 2, 3)) for _ in range(n)]
    reqs = [req(tick, rng.randrange(1 << 10), pid=p, inst=p,
                measured=rng.random() < 0.8)
            for tick, p in enumerate(picks)]
    pipe.simulate(reqs)
    assert len(pipe.completions) == n
    check = pipe.conservation_check()
    assert check["balanced"], check
    assert check["l3_probes"] == len(pipe.l3_probe_stream)
    for pid, t in pipe.tallies.items():
        assert t.issued == t.completed
        assert len(t.latencies) == t.completed
        assert all(lat >= 1 for lat in t.latencies)
    measured = sum(1 for r in reqs if r.measured)
    assert sum(t.issued for t in pipe.tallies.values()) == measured


# ----------------------------------------------------------------------
# component models

def test_mshr_table_mechanics():
    m = MshrTable(2)
    assert m.allocate("a", 1)
    m.attach("a", 2)
    assert m.has("a")
    assert m.allocate("b", 3)
    assert m.full
    assert not m.allocate("c", 4)
    assert m.stalls == 1
    m.park("c", 4)
    m.park("b", 5)
    m.park("c", 6)
    assert not m.idle()
    assert m.wake_key("c") == [4, 6]
    assert m.wake_oldest() == 5       # skips the dead "c" boxes
    assert m.wake_oldest() is None
    assert m.release("a") == [1, 2]
    assert m.release("b") == [3]
    assert m.idle()
    assert m.coalesced == 1
    assert m.peak == 2


def test_gmmu_walker_and_cache_mechanics():
    g = GmmuModel(walkers_per_gpc=1, walk_cache_entries=2, levels=4,
                  level_latency=100)
    g.register_gpc(0)
    assert g.request_walk(0, (1, 1), "p1") == (400, True)
    assert g.request_walk(0, (1, 2), "p2") is None  # walker busy
    assert g.max_queue_depth == 1
    nxt = g.finish_walk(0, (1, 1), True)
    assert nxt == ((1, 2), "p2", 400, True)
    assert g.finish_walk(0, (1, 2), True) is None
    # cache now holds pages 1 and 2; a re-walk of 1 pays one level
    assert g.request_walk(0, (1, 1), "x") == (100, False)
    assert g.finish_walk(0, (1, 1), False) is None
    # page 3 pushes out page 2 (LRU after the hit refreshed page 1)
    assert g.request_walk(0, (1, 3), "x") == (400, True)
    g.finish_walk(0, (1, 3), True)
    assert g.request_walk(0, (1, 2), "x") == (400, True)
    g.finish_walk(0, (1, 2), True)
    assert g.walk_cache_hits == 1

    g.request_walk(0, (9, 9), "x")
    with pytest.raises(AssertionError):
        g.request_walk(0, (9, 9), "again")
