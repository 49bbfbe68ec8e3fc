"""Multi-level translation pipeline: private L1/L2 per instance, one shared
last level, MSHR coalescing and a page-walk engine behind it all.

The model is event-driven over integer ticks.  A request probes its
instance's small page-granular L1; on a miss it coalesces in the L1 MSHR
(one in-flight walk per page) and the leader probes the instance's L2 one
L1-latency later.  The same happens at the L2 MSHR before the shared level.
A shared-level miss requests a page walk: each instance has a pool of
walkers (a GPC's worth), overflow waits in FIFO order, and a small LRU walk
cache short-circuits all but the final level of a walk.  Fills propagate to
the shared level, the requesting instance's L2 and its L1, completing every
coalesced requester on the same tick.

With every latency at its default a single cold request costs

    1 (L1) + 10 (L2) + 40 (shared) + 4*100 (walk) = 451 cycles.

Instances never touch each other's private levels; the shared level is the
only coupling point.  One trace record stands for one translation request;
issue-rate effects live in trace generation, not here.
"""

from __future__ import annotations

import heapq
from collections import OrderedDict, deque
from dataclasses import dataclass, field

from .addrs import (PageConfig, RequestIdentity, TlbGeometry, decompose,
                    global_page_number)
from .metrics import EvictionSample
from .tlbcore import LookupKind, PlainTlb, SubEntryTlb

DEFAULT_L1_ENTRIES = 16
DEFAULT_L1_WAYS = 16
DEFAULT_L1_LATENCY = 1
DEFAULT_L2_GEOMETRY = TlbGeometry(sets=16, ways=8, subentries_per_entry=16,
                                  lookup_latency_cycles=10)
DEFAULT_L3_GEOMETRY = TlbGeometry(sets=128, ways=8, subentries_per_entry=16,
                                  lookup_latency_cycles=40)
DEFAULT_MSHR_CAPACITY = 64
DEFAULT_WALKERS_PER_GPC = 8
DEFAULT_WALK_CACHE_ENTRIES = 128
DEFAULT_WALK_LEVELS = 4
DEFAULT_WALK_LEVEL_LATENCY = 100


@dataclass(frozen=True)
class TranslationRequest:
    tick: int
    instance_id: int
    process_id: int
    vaddr: int
    weight_instructions: float = 1.0
    measured: bool = True


@dataclass(frozen=True)
class CompletedTranslation:
    request: TranslationRequest
    completion_tick: int
    pfn: int

    @property
    def latency(self) -> int:
        return self.completion_tick - self.request.tick


@dataclass(frozen=True)
class InstanceConfig:
    """Per-instance resources: g_units size the shared-level partition when
    one is configured; gpc/tpc counts are descriptive of the slice."""
    instance_id: int
    g_units: int = 1
    gpc_count: int = 1
    tpc_count: int = 1


class MshrTable:
    """Miss-status holding registers: coalesces in-flight misses per page.

    A request that cannot get an entry parks instead of polling: it is woken
    (and re-probes its level once) when its own page's entry allocates or
    fills, or when an entry frees up and it is the oldest waiter.  That is
    tick-for-tick what retry-every-cycle converges to, without flooding the
    event loop while the walkers are saturated.
    """

    __slots__ = ("capacity", "pending", "stalls", "coalesced", "peak",
                 "parked", "parked_by_key")

    def __init__(self, capacity: int):
        assert capacity >= 1
        self.capacity = capacity
        self.pending: dict[tuple[int, int], list] = {}
        self.stalls = 0
        self.coalesced = 0
        self.peak = 0
        self.parked: deque = deque()                 # boxes [key, item, alive]
        self.parked_by_key: dict[tuple[int, int], list] = {}

    def has(self, key) -> bool:
        return key in self.pending

    @property
    def full(self) -> bool:
        return len(self.pending) >= self.capacity

    def attach(self, key, item):
        self.pending[key].append(item)
        self.coalesced += 1

    def allocate(self, key, item) -> bool:
        """Reserve an entry for a new leader; False when full (park it)."""
        if self.full:
            self.stalls += 1
            return False
        self.pending[key] = [item]
        self.peak = max(self.peak, len(self.pending))
        return True

    def release(self, key) -> list:
        return self.pending.pop(key)

    def park(self, key, item):
        box = [key, item, True]
        self.parked.append(box)
        self.parked_by_key.setdefault(key, []).append(box)

    def wake_key(self, key) -> list:
        """Un-park every waiter for one page (it just allocated or filled)."""
        out = []
        for box in self.parked_by_key.pop(key, []):
            if box[2]:
                box[2] = False
                out.append(box[1])
        return out

    def wake_oldest(self):
        """Un-park the longest-waiting request, whatever its page."""
        while self.parked:
            box = self.parked[0]
            if not box[2]:
                self.parked.popleft()
                continue
            box[2] = False
            self.parked.popleft()
            waiters = self.parked_by_key.get(box[0])
            if waiters is not None:
                waiters.remove(box)
                if not waiters:
                    del self.parked_by_key[box[0]]
            return box[1]
        return None

    def idle(self) -> bool:
        return not self.pending and not any(b[2] for b in self.parked)


class GmmuModel:
    """Page-walk engine: per-GPC walker pools, FIFO overflow, LRU walk cache.

    A walk's duration is decided when a walker picks it up: a walk-cache hit
    pays only the final level, a miss pays every level and caches the result
    on completion.  Upstream coalescing plus disjoint tenant address spaces
    guarantee at most one in-flight walk per (pid, vpn); asserted.
    """

    def __init__(self, *, walkers_per_gpc: int = DEFAULT_WALKERS_PER_GPC,
                 walk_cache_entries: int = DEFAULT_WALK_CACHE_ENTRIES,
                 levels: int = DEFAULT_WALK_LEVELS,
                 level_latency: int = DEFAULT_WALK_LEVEL_LATENCY):
        assert walkers_per_gpc >= 1 and walk_cache_entries >= 1
        assert levels >= 1 and level_latency >= 1
        self.walkers_per_gpc = walkers_per_gpc
        self.walk_cache_entries = walk_cache_entries
        self.levels = levels
        self.level_latency = level_latency
        self.free: dict[int, int] = {}
        self.queues: dict[int, deque] = {}
        self.cache: OrderedDict[tuple[int, int], bool] = OrderedDict()
        self.in_flight: set[tuple[int, int]] = set()
        self.walks_requested = 0
        self.walks_started = 0
        self.walk_cache_hits = 0
        self.max_queue_depth = 0

    def register_gpc(self, gpc: int):
        self.free.setdefault(gpc, self.walkers_per_gpc)
        self.queues.setdefault(gpc, deque())

    def _begin(self, key) -> tuple[int, bool]:
        """(duration, was_cache_miss) for a walk starting now."""
        self.walks_started += 1
        if key in self.cache:
            self.cache.move_to_end(key)
            self.walk_cache_hits += 1
            return self.level_latency, False
        return self.levels * self.level_latency, True

    def request_walk(self, gpc: int, key: tuple[int, int],
                     payload) -> tuple[int, bool] | None:
        """Try to start a walk; None means it queued behind busy walkers."""
        assert key not in self.in_flight, f"duplicate in-flight walk for {key}"
        self.in_flight.add(key)
        self.walks_requested += 1
        if self.free[gpc] > 0:
            self.free[gpc] -= 1
            return self._begin(key)
        self.queues[gpc].append((key, payload))
        self.max_queue_depth = max(self.max_queue_depth, len(self.queues[gpc]))
        return None

    def finish_walk(self, gpc: int, key: tuple[int, int], was_miss: bool
                    ) -> tuple[tuple[int, int], object, int, bool] | None:
        """Retire a walk; returns the next queued walk to schedule, if any,
        as (key, payload, duration, was_miss)."""
        self.in_flight.discard(key)
        if was_miss:
            self.cache[key] = True
            while len(self.cache) > self.walk_cache_entries:
                self.cache.popitem(last=False)
        queue = self.queues[gpc]
        if queue:
            next_key, payload = queue.popleft()
            duration, miss = self._begin(next_key)
            return next_key, payload, duration, miss
        self.free[gpc] += 1
        return None


class _Tally:
    """Per-pid measured counters."""

    __slots__ = ("issued", "instructions", "l1_probes", "l1_hits", "l2_probes",
                 "l2_hits", "l3_probes", "l3_hits", "l3_miss_no_entry",
                 "l3_miss_sub_entry", "l3_miss_aib", "walks", "latencies",
                 "completed", "cutoff_tick")

    def __init__(self):
        for name in self.__slots__:
            setattr(self, name, 0)
        self.latencies = []
        self.cutoff_tick = 0


(_EV_L1, _EV_L2, _EV_L3, _EV_WALK_REQ, _EV_WALK_DONE,
 _EV_L1_FILL, _EV_L2_FILL) = range(7)


class TranslationPipeline:
    """Drives TranslationRequests through L1 -> L2 -> shared level -> walk.

    l3 is any model with lookup/insert/drain_eviction_samples (baseline,
    sharing, partitioned...).  Per-pid statistics honor each request's
    measured flag; unmeasured (rerun filler) traffic still exercises every
    structure.
    """

    def __init__(self, instances: list[InstanceConfig], l3, *,
                 page: PageConfig = PageConfig(),
                 l1_entries: int = DEFAULT_L1_ENTRIES,
                 l1_ways: int = DEFAULT_L1_WAYS,
                 l1_latency: int = DEFAULT_L1_LATENCY,
                 l2_geom: TlbGeometry = DEFAULT_L2_GEOMETRY,
                 l1_mshr_capacity: int = DEFAULT_MSHR_CAPACITY,
                 l2_mshr_capacity: int = DEFAULT_MSHR_CAPACITY,
                 walkers_per_gpc: int = DEFAULT_WALKERS_PER_GPC,
                 walk_cache_entries: int = DEFAULT_WALK_CACHE_ENTRIES,
                 walk_levels: int = DEFAULT_WALK_LEVELS,
                 walk_level_latency: int = DEFAULT_WALK_LEVEL_LATENCY):
        assert instances, "at least one instance"
        assert len({ic.instance_id for ic in instances}) == len(instances)
        self.page = page
        self.instances = {ic.instance_id: ic for ic in instances}
        self.l3 = l3
        self.l3_geom = l3.geom
        self.l3_page = l3.page
        self.l1 = {}
        self.l2 = {}
        self.l1_mshr = {}
        self.l2_mshr = {}
        l2_page = PageConfig(page.page_size_bytes, l2_geom.subentries_per_entry)
        self.l2_geom = l2_geom
        self.l2_page = l2_page
        for ic in instances:
            self.l1[ic.instance_id] = PlainTlb(l1_entries, l1_ways, l1_latency)
            self.l2[ic.instance_id] = SubEntryTlb(l2_geom, l2_page)
            self.l1_mshr[ic.instance_id] = MshrTable(l1_mshr_capacity)
            self.l2_mshr[ic.instance_id] = MshrTable(l2_mshr_capacity)
        self.gmmu = GmmuModel(walkers_per_gpc=walkers_per_gpc,
                              walk_cache_entries=walk_cache_entries,
                              levels=walk_levels,
                              level_latency=walk_level_latency)
        for ic in instances:
            self.gmmu.register_gpc(ic.instance_id)
        self._heap: list = []
        self._seq = 0
        self.tallies: dict[int, _Tally] = {}
        self.completions: list[CompletedTranslation] = []
        self.l3_probe_stream: list[tuple[int, int, bool]] = []

    # ------------------------------------------------------------------

    def _tally(self, pid: int) -> _Tally:
        t = self.tallies.get(pid)
        if t is None:
            t = self.tallies[pid] = _Tally()
        return t

    def _schedule(self, tick: int, kind: int, payload):
        self._seq += 1
        heapq.heappush(self._heap, (tick, self._seq, kind, payload))

    def submit(self, req: TranslationRequest):
        assert req.instance_id in self.instances, (
            f"request for unknown instance {req.instance_id}")
        t = self._tally(req.process_id)
        if req.measured:
            t.issued += 1
            t.instructions += req.weight_instructions
        self._schedule(req.tick, _EV_L1, req)

    def simulate(self, requests) -> None:
        for req in requests:
            self.submit(req)
        self.run()

    def run(self) -> None:
        heap = self._heap
        handlers = {_EV_L1: self._on_l1, _EV_L2: self._on_l2,
                    _EV_L3: self._on_l3, _EV_WALK_REQ: self._on_walk_req,
                    _EV_WALK_DONE: self._on_walk_done,
                    _EV_L1_FILL: self._on_l1_fill,
                    _EV_L2_FILL: self._on_l2_fill}
        while heap:
            now, _, kind, payload = heapq.heappop(heap)
            handlers[kind](now, payload)
        for mshr in list(self.l1_mshr.values()) + list(self.l2_mshr.values()):
            assert mshr.idle(), "drained pipeline left MSHR entries behind"
        assert not self.gmmu.in_flight, "drained pipeline left walks in flight"

    # ------------------------------------------------------------------
    # level handlers

    def _page_of(self, req: TranslationRequest) -> int:
        return req.vaddr >> self.page.offset_bits

    def _drain_parked(self, mshr: MshrTable, kind: int, now: int):
        # a free entry never idles while a waiter sleeps; the woken request
        # re-probes this tick and either takes the entry or cascades here
        if not mshr.full:
            waiter = mshr.wake_oldest()
            if waiter is not None:
                self._schedule(now, kind, waiter)

    def _on_l1(self, now: int, req: TranslationRequest):
        inst = req.instance_id
        vpn = self._page_of(req)
        l1 = self.l1[inst]
        res = l1.lookup(vpn, req.process_id, now)
        if req.measured:
            t = self._tally(req.process_id)
            t.l1_probes += 1
            t.l1_hits += res.hit
        mshr = self.l1_mshr[inst]
        if res.hit:
            self._complete(req, now + res.latency_cycles, res.pfn)
            self._drain_parked(mshr, _EV_L1, now)
            return
        key = (req.process_id, vpn)
        if mshr.has(key):
            mshr.attach(key, req)
        elif mshr.allocate(key, req):
            for waiter in mshr.wake_key(key):
                self._schedule(now, _EV_L1, waiter)
            self._schedule(now + res.latency_cycles, _EV_L2, req)
        else:
            mshr.park(key, req)
        self._drain_parked(mshr, _EV_L1, now)

    def _on_l2(self, now: int, leader: TranslationRequest):
        inst = leader.instance_id
        who = RequestIdentity(inst, leader.process_id)
        d2 = decompose(leader.vaddr, self.l2_page, self.l2_geom)
        res = self.l2[inst].lookup(d2, who, now)
        if leader.measured:
            t = self._tally(leader.process_id)
            t.l2_probes += 1
            t.l2_hits += res.hit
        mshr = self.l2_mshr[inst]
        done = now + res.latency_cycles
        if res.hit:
            self._schedule(done, _EV_L1_FILL, (inst, leader, res.pfn))
            self._drain_parked(mshr, _EV_L2, now)
            return
        key = (leader.process_id, self._page_of(leader))
        if mshr.has(key):
            mshr.attach(key, leader)
        elif mshr.allocate(key, leader):
            self._schedule(done, _EV_L3, leader)
        else:
            mshr.park(key, leader)
        self._drain_parked(mshr, _EV_L2, now)

    def _on_l3(self, now: int, leader: TranslationRequest):
        who = RequestIdentity(leader.instance_id, leader.process_id)
        d3 = decompose(leader.vaddr, self.l3_page, self.l3_geom)
        res = self.l3.lookup(d3, who, now)
        self.l3_probe_stream.append(
            (leader.process_id, self._page_of(leader), leader.measured))
        if leader.measured:
            t = self._tally(leader.process_id)
            t.l3_probes += 1
            if res.kind is LookupKind.HIT:
                t.l3_hits += 1
            elif res.kind is LookupKind.MISS_NO_ENTRY:
                t.l3_miss_no_entry += 1
            elif res.kind is LookupKind.MISS_SUB_ENTRY:
                t.l3_miss_sub_entry += 1
            else:
                t.l3_miss_aib += 1
        done = now + res.latency_cycles
        if res.hit:
            assert res.pfn == self._page_of(leader), "identity mapping broken"
            self._schedule(done, _EV_L2_FILL, (leader, res.pfn))
            return
        self._schedule(done, _EV_WALK_REQ, leader)

    def _on_walk_req(self, now: int, leader: TranslationRequest):
        if leader.measured:
            self._tally(leader.process_id).walks += 1
        key = (leader.process_id, self._page_of(leader))
        started = self.gmmu.request_walk(leader.instance_id, key, leader)
        if started is not None:
            duration, was_miss = started
            self._schedule(now + duration, _EV_WALK_DONE,
                           (leader, was_miss))

    def _on_walk_done(self, now: int, payload):
        leader, was_miss = payload
        key = (leader.process_id, self._page_of(leader))
        nxt = self.gmmu.finish_walk(leader.instance_id, key, was_miss)
        if nxt is not None:
            next_key, next_leader, duration, next_miss = nxt
            self._schedule(now + duration, _EV_WALK_DONE,
                           (next_leader, next_miss))
        pfn = self._page_of(leader)
        who = RequestIdentity(leader.instance_id, leader.process_id)
        d3 = decompose(leader.vaddr, self.l3_page, self.l3_geom)
        self.l3.insert(d3, pfn, who, now)
        self._fill_l2_down(leader, pfn, now)

    # ------------------------------------------------------------------
    # fill paths

    def _on_l1_fill(self, now: int, payload):
        inst, leader, pfn = payload
        self._fill_l1_and_complete(inst, leader, pfn, now)

    def _on_l2_fill(self, now: int, payload):
        leader, pfn = payload
        self._fill_l2_down(leader, pfn, now)

    def _fill_l2_down(self, leader: TranslationRequest, pfn: int, now: int):
        """Shared level resolved (hit or walk): fill the requesting L2 and
        hand the translation to every coalesced L1-level leader."""
        inst = leader.instance_id
        who = RequestIdentity(inst, leader.process_id)
        d2 = decompose(leader.vaddr, self.l2_page, self.l2_geom)
        self.l2[inst].insert(d2, pfn, who, now)
        key = (leader.process_id, self._page_of(leader))
        mshr = self.l2_mshr[inst]
        for l1_leader in mshr.release(key):
            self._fill_l1_and_complete(inst, l1_leader, pfn, now)
        self._drain_parked(mshr, _EV_L2, now)

    def _fill_l1_and_complete(self, inst: int, leader: TranslationRequest,
                              pfn: int, now: int):
        vpn = self._page_of(leader)
        self.l1[inst].insert(vpn, leader.process_id, pfn, now)
        key = (leader.process_id, vpn)
        mshr = self.l1_mshr[inst]
        for req in mshr.release(key):
            self._complete(req, now, pfn)
        for waiter in mshr.wake_key(key):
            self._schedule(now, _EV_L1, waiter)
        self._drain_parked(mshr, _EV_L1, now)

    def _complete(self, req: TranslationRequest, tick: int, pfn: int):
        self.completions.append(CompletedTranslation(req, tick, pfn))
        if req.measured:
            t = self._tally(req.process_id)
            t.completed += 1
            t.latencies.append(tick - req.tick)
            t.cutoff_tick = max(t.cutoff_tick, tick)

    # ------------------------------------------------------------------
    # collection for reporting

    def masked_eviction_samples(self) -> list[EvictionSample]:
        """Shared-level eviction samples inside their pid's measurement
        window (up to the completion of the pid's last measured request)."""
        samples = self.l3.drain_eviction_samples()
        out = []
        for s in samples:
            t = self.tallies.get(s.pid)
            if t is not None and t.issued and s.tick <= t.cutoff_tick:
                out.append(s)
        return out

    def conservation_check(self) -> dict:
        """Walks must equal post-coalescing shared-level misses, walks must
        all have completed, and per-level probe counts must nest."""
        l3 = self.l3.stats
        l3_misses = l3.miss_no_entry + l3.miss_sub_entry + l3.miss_aib
        return {
            "l3_probes": l3.probes,
            "l3_misses": l3_misses,
            "walks_requested": self.gmmu.walks_requested,
            "walks_started": self.gmmu.walks_started,
            "balanced": (l3_misses == self.gmmu.walks_requested
                         == self.gmmu.walks_started),
        }
