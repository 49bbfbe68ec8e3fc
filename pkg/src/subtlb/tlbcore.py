"""Set-associative TLB models with per-entry sub-entry arrays.

One entry tags an aligned group of region_pages consecutive pages with a
single base (VPB + owning process) and keeps one sub-entry per page in the
group.  A probe that finds no matching base is a MissNoEntry; a matching
base whose sub-entry is empty is a MissSubEntry.  Eviction drops the entry
wholesale, all sub-entries included, which is what makes eviction-time
utilization worth sampling.

Replacement is LRU over a strict total order: every touch takes a fresh
monotonic sequence number, and victim selection breaks never-touched ties
toward the lowest way index.  Probes that match a base refresh recency even
when the sub-entry itself misses; the entry demonstrably has traffic and the
fill that follows would touch it anyway.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .addrs import DecomposedAddress, PageConfig, RequestIdentity, TlbGeometry
from .metrics import EvictionSample


class LookupKind(enum.Enum):
    HIT = "hit"
    MISS_NO_ENTRY = "miss_no_entry"
    MISS_SUB_ENTRY = "miss_sub_entry"
    MISS_AIB = "miss_aib"  # produced only by sharing models


class InsertKind(enum.Enum):
    FILLED_EXISTING = "filled_existing"
    NEW_ENTRY_VACANT = "new_entry_vacant"
    NEW_ENTRY_EVICTED = "new_entry_evicted"
    SHARED_JOIN = "shared_join"  # produced only by sharing models


@dataclass(frozen=True)
class LookupResult:
    kind: LookupKind
    pfn: int | None
    latency_cycles: int

    @property
    def hit(self) -> bool:
        return self.kind is LookupKind.HIT


@dataclass(frozen=True)
class InsertOutcome:
    kind: InsertKind
    evicted: EvictionSample | None = None


class SubEntrySlot:
    __slots__ = ("valid", "pfn", "aib", "touch_seq")

    def __init__(self):
        self.valid = False
        self.pfn = 0
        self.aib = 0
        self.touch_seq = 0


class BaseRecord:
    """Base half of an entry: tag plus ownership and recency."""

    __slots__ = ("valid", "dirty", "vpb", "owner_pid", "last_access_tick")

    def __init__(self):
        self.valid = False
        self.dirty = False
        self.vpb = 0
        self.owner_pid = 0
        self.last_access_tick = 0

    def matches(self, vpb: int, pid: int) -> bool:
        return self.valid and self.vpb == vpb and self.owner_pid == pid


class TlbEntry:
    __slots__ = ("base", "slots", "lru_seq")

    def __init__(self, subentries: int):
        self.base = BaseRecord()
        self.slots = [SubEntrySlot() for _ in range(subentries)]
        self.lru_seq = 0

    def utilized(self) -> int:
        return sum(1 for s in self.slots if s.valid)


class TlbStats:
    __slots__ = ("probes", "hits", "miss_no_entry", "miss_sub_entry", "miss_aib",
                 "inserts", "fills_existing", "new_entries", "evictions",
                 "shared_joins", "reverts", "replacements",
                 "layout_conflict_drops", "relocations", "relocation_evictions",
                 "escalations", "demotions", "zero_util_evictions_skipped")

    def __init__(self):
        for name in self.__slots__:
            setattr(self, name, 0)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__slots__}


class SubEntryTlb:
    """Baseline sub-entry TLB: one base per entry, no sharing.

    way_halves_sequential models a double-way variant probing the way array
    in two halves: a probe resolved in ways [0, ways/2) costs the base
    latency, anything that has to examine the second half costs twice that.
    """

    def __init__(self, geom: TlbGeometry, page: PageConfig, *,
                 way_halves_sequential: bool = False):
        assert geom.subentries_per_entry == page.region_pages, (
            "entry sub-entry count must match the page grouping "
            f"({geom.subentries_per_entry} != {page.region_pages})")
        self.geom = geom
        self.page = page
        self.way_halves_sequential = way_halves_sequential
        self.sets = [[TlbEntry(geom.subentries_per_entry) for _ in range(geom.ways)]
                     for _ in range(geom.sets)]
        self.stats = TlbStats()
        self.eviction_samples: list[EvictionSample] = []
        self._seq = 0

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _touch(self, entry: TlbEntry, tick: int):
        entry.lru_seq = self._next_seq()
        entry.base.last_access_tick = tick

    def _probe_latency(self, way: int | None) -> int:
        lat = self.geom.lookup_latency_cycles
        if self.way_halves_sequential:
            if way is None or way >= self.geom.ways // 2:
                lat *= 2
        return lat

    def lookup(self, d: DecomposedAddress, who: RequestIdentity, tick: int) -> LookupResult:
        self.stats.probes += 1
        for way, entry in enumerate(self.sets[d.set_index]):
            if entry.base.matches(d.vpb, who.process_id):
                self._touch(entry, tick)
                slot = entry.slots[d.sub_index]
                if slot.valid:
                    slot.touch_seq = self._next_seq()
                    self.stats.hits += 1
                    return LookupResult(LookupKind.HIT, slot.pfn,
                                        self._probe_latency(way))
                self.stats.miss_sub_entry += 1
                return LookupResult(LookupKind.MISS_SUB_ENTRY, None,
                                    self._probe_latency(way))
        self.stats.miss_no_entry += 1
        return LookupResult(LookupKind.MISS_NO_ENTRY, None, self._probe_latency(None))

    def insert(self, d: DecomposedAddress, pfn: int, who: RequestIdentity,
               tick: int) -> InsertOutcome:
        """Fill the translation, creating or evicting an entry as needed.

        Called on miss paths; re-inserting a resident translation just
        refreshes it.
        """
        self.stats.inserts += 1
        entries = self.sets[d.set_index]
        for entry in entries:
            if entry.base.matches(d.vpb, who.process_id):
                self._fill_slot(entry, d.sub_index, pfn)
                self._touch(entry, tick)
                self.stats.fills_existing += 1
                return InsertOutcome(InsertKind.FILLED_EXISTING)

        for entry in entries:
            if not entry.base.valid:
                self._new_entry(entry, d, pfn, who, tick)
                self.stats.new_entries += 1
                return InsertOutcome(InsertKind.NEW_ENTRY_VACANT)

        victim = min(entries, key=lambda e: e.lru_seq)
        sample = EvictionSample(pid=victim.base.owner_pid,
                                utilized=victim.utilized(),
                                capacity=self.geom.subentries_per_entry,
                                shared=False, tick=tick)
        self.eviction_samples.append(sample)
        self.stats.evictions += 1
        self._new_entry(victim, d, pfn, who, tick)
        return InsertOutcome(InsertKind.NEW_ENTRY_EVICTED, sample)

    def _fill_slot(self, entry: TlbEntry, sub_index: int, pfn: int):
        slot = entry.slots[sub_index]
        slot.valid = True
        slot.pfn = pfn
        slot.aib = 0
        slot.touch_seq = self._next_seq()

    def _new_entry(self, entry: TlbEntry, d: DecomposedAddress, pfn: int,
                   who: RequestIdentity, tick: int):
        base = entry.base
        base.valid = True
        base.dirty = False
        base.vpb = d.vpb
        base.owner_pid = who.process_id
        for slot in entry.slots:
            slot.valid = False
            slot.aib = 0
        self._fill_slot(entry, d.sub_index, pfn)
        self._touch(entry, tick)

    def resident(self, d: DecomposedAddress, who: RequestIdentity) -> bool:
        """State peek for tests: is this exact translation currently mapped?"""
        for entry in self.sets[d.set_index]:
            if entry.base.matches(d.vpb, who.process_id):
                return entry.slots[d.sub_index].valid
        return False

    def drain_eviction_samples(self) -> list[EvictionSample]:
        out = self.eviction_samples
        self.eviction_samples = []
        return out


class PlainTlb:
    """Page-granular TLB without sub-entries (the small per-TPC first level)."""

    __slots__ = ("sets_count", "ways", "latency", "sets", "stats", "_seq")

    def __init__(self, entries: int, ways: int, latency_cycles: int):
        assert entries % ways == 0, "entries must divide evenly into ways"
        self.sets_count = entries // ways
        assert self.sets_count & (self.sets_count - 1) == 0, "set count must be a power of two"
        self.ways = ways
        self.latency = latency_cycles
        # each way is [valid, vpn, pid, pfn, lru_seq]
        self.sets = [[[False, 0, 0, 0, 0] for _ in range(ways)]
                     for _ in range(self.sets_count)]
        self.stats = TlbStats()
        self._seq = 0

    def lookup(self, vpn: int, pid: int, tick: int) -> LookupResult:
        self.stats.probes += 1
        for way in self.sets[vpn & (self.sets_count - 1)]:
            if way[0] and way[1] == vpn and way[2] == pid:
                self._seq += 1
                way[4] = self._seq
                self.stats.hits += 1
                return LookupResult(LookupKind.HIT, way[3], self.latency)
        self.stats.miss_no_entry += 1
        return LookupResult(LookupKind.MISS_NO_ENTRY, None, self.latency)

    def insert(self, vpn: int, pid: int, pfn: int, tick: int):
        self.stats.inserts += 1
        ways = self.sets[vpn & (self.sets_count - 1)]
        target = None
        for way in ways:
            if way[0] and way[1] == vpn and way[2] == pid:
                target = way
                break
        if target is None:
            for way in ways:
                if not way[0]:
                    target = way
                    break
        if target is None:
            target = min(ways, key=lambda w: w[4])
            self.stats.evictions += 1
        self._seq += 1
        target[0] = True
        target[1] = vpn
        target[2] = pid
        target[3] = pfn
        target[4] = self._seq
