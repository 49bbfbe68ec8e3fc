"""Entry-sharing TLB: two bases pack their translations into one entry.

Under multi-tenant contention most victims of whole-entry eviction carry
only a handful of valid sub-entries, so the array's pay-for-16 layout is
mostly wasted.  This model lets a second base (another 1 MB-aligned region,
possibly another process) move into an entry whose current tenant uses
fewer than half of its sub-entries, splitting the 16 physical slots evenly
between the two.

Layouts.  How the slots split is chosen from the incumbent's occupancy at
transition time and recorded in a 2-bit layout field:

    NonShared  (00)  one base, sub_index addresses slots directly
    Sequential (01)  local = sub & 0b111, aib = sub >> 3
                     slot = 8*role + local  (incumbent low half, joiner high)
    Stride     (10)  local = sub >> 1,    aib = sub & 0b1
                     slot = 2*local + role (incumbent even, joiner odd)

Sequential fits occupancies that form one gap-free run of sub-indices;
anything else takes Stride.  Squeezing the 4-bit sub-index into a 3-bit
local slot drops one bit; that address index bit (aib) is stored alongside
the translation and compared on lookup, since two pages of the same base
can now alias one physical slot.  An aliased fill replaces the older
resident; a fill whose whole half is already valid reverts the entry to
NonShared instead, evicting the other base.

Lookups resolve the bases of an entry in order, so a request served by the
joiner's base pays twice the lookup latency.  Base recency is tracked per
base; entry recency (for LRU) refreshes when either base is touched.

The same machinery generalizes to four bases per entry (quarter lanes,
2-bit locals, 2-bit aibs); see variants.
"""

from __future__ import annotations

import enum
from typing import Iterable

from .addrs import DecomposedAddress, PageConfig, RequestIdentity, TlbGeometry
from .metrics import EvictionSample
from .tlbcore import (InsertKind, InsertOutcome, LookupKind, LookupResult,
                      TlbStats)


class LayoutMode(enum.Enum):
    NON_SHARED = 0b00
    SEQUENTIAL = 0b01
    STRIDE = 0b10

    @property
    def code(self) -> int:
        return self.value


class BaseRole(enum.Enum):
    INCUMBENT = 0
    JOINER = 1


SUB_INDEX_BITS = 4
SLOTS_PER_ENTRY = 1 << SUB_INDEX_BITS


def _lane_geometry(degree: int) -> tuple[int, int]:
    """(local_bits, aib_bits) for entries shared degree ways."""
    assert degree in (2, 4)
    local_bits = 3 if degree == 2 else 2
    return local_bits, SUB_INDEX_BITS - local_bits


def slot_map_general(strategy: LayoutMode, degree: int, ordinal: int,
                     sub_index: int) -> tuple[int, int]:
    """Map a base's 4-bit sub-index to (physical slot, aib) in a shared entry.

    Sequential gives each base one contiguous 16/degree-slot lane and keeps
    the low bits of the sub-index as the in-lane position; Stride interleaves
    the bases and keeps the high bits.  The remaining bits become the aib.
    """
    assert 0 <= sub_index < SLOTS_PER_ENTRY
    assert 0 <= ordinal < degree
    local_bits, aib_bits = _lane_geometry(degree)
    if strategy is LayoutMode.SEQUENTIAL:
        local = sub_index & ((1 << local_bits) - 1)
        aib = sub_index >> local_bits
        phys = (ordinal << local_bits) + local
    else:
        assert strategy is LayoutMode.STRIDE
        local = sub_index >> aib_bits
        aib = sub_index & ((1 << aib_bits) - 1)
        phys = local * degree + ordinal
    return phys, aib


def sub_from_local(strategy: LayoutMode, degree: int, local: int, aib: int) -> int:
    """Inverse of slot_map_general: recover the 4-bit sub-index."""
    local_bits, aib_bits = _lane_geometry(degree)
    if strategy is LayoutMode.SEQUENTIAL:
        return (aib << local_bits) | local
    assert strategy is LayoutMode.STRIDE
    return (local << aib_bits) | aib


def lane_slots(strategy: LayoutMode, degree: int, ordinal: int) -> range:
    """Physical slots owned by one base; lanes of an entry are disjoint."""
    lane_size = SLOTS_PER_ENTRY // degree
    if strategy is LayoutMode.SEQUENTIAL:
        return range(ordinal * lane_size, (ordinal + 1) * lane_size)
    assert strategy is LayoutMode.STRIDE
    return range(ordinal, SLOTS_PER_ENTRY, degree)


def lane_local(strategy: LayoutMode, degree: int, ordinal: int, phys: int) -> int:
    """In-lane local index of a physical slot."""
    if strategy is LayoutMode.SEQUENTIAL:
        return phys - ordinal * (SLOTS_PER_ENTRY // degree)
    assert strategy is LayoutMode.STRIDE
    return phys // degree


def lane_slot_for_local(strategy: LayoutMode, degree: int, ordinal: int,
                        local: int) -> int:
    if strategy is LayoutMode.SEQUENTIAL:
        return ordinal * (SLOTS_PER_ENTRY // degree) + local
    assert strategy is LayoutMode.STRIDE
    return local * degree + ordinal


def slot_map(layout: LayoutMode, role: BaseRole, sub_index: int) -> tuple[int, int]:
    """Two-base slot map: (physical slot, aib) for one role's sub-index."""
    assert layout in (LayoutMode.SEQUENTIAL, LayoutMode.STRIDE), (
        "slot_map is only defined for shared layouts")
    return slot_map_general(layout, 2, role.value, sub_index)


def choose_layout(occupied: Iterable[int]) -> LayoutMode:
    """Pick the shared layout from the incumbent's occupied sub-indices.

    Sequential exactly when the indices form one gap-free run (a single
    index counts as a run of one); everything else takes Stride.
    """
    subs = sorted(occupied)
    assert 1 <= len(subs) <= 7, (
        f"sharing requires 1..7 occupied sub-entries, got {len(subs)}")
    if subs[-1] - subs[0] + 1 == len(subs):
        return LayoutMode.SEQUENTIAL
    return LayoutMode.STRIDE


class StarBase:
    __slots__ = ("valid", "dirty", "vpb", "owner_pid", "last_access_tick")

    def __init__(self):
        self.valid = False
        self.dirty = False
        self.vpb = 0
        self.owner_pid = 0
        self.last_access_tick = 0

    def matches(self, vpb: int, pid: int) -> bool:
        return self.valid and self.vpb == vpb and self.owner_pid == pid


class StarSlot:
    __slots__ = ("valid", "pfn", "aib", "touch_seq")

    def __init__(self):
        self.valid = False
        self.pfn = 0
        self.aib = 0
        self.touch_seq = 0


class StarEntry:
    """One entry: up to max_degree bases plus 16 physical slots.

    degree is the active sharing tier (1, 2 or 4); valid bases always form a
    prefix of the lanes.  strategy is meaningful only when degree > 1.
    """

    __slots__ = ("bases", "degree", "strategy", "slots", "lru_seq")

    def __init__(self, max_degree: int):
        self.bases = [StarBase() for _ in range(max_degree)]
        self.degree = 1
        self.strategy: LayoutMode | None = None
        self.slots = [StarSlot() for _ in range(SLOTS_PER_ENTRY)]
        self.lru_seq = 0

    @property
    def valid(self) -> bool:
        return self.bases[0].valid

    @property
    def layout(self) -> LayoutMode:
        if self.degree == 1:
            return LayoutMode.NON_SHARED
        assert self.strategy is not None
        return self.strategy

    def utilized(self) -> int:
        return sum(1 for s in self.slots if s.valid)

    def lane_utilized(self, ordinal: int) -> int:
        if self.degree == 1:
            return self.utilized()
        return sum(1 for p in lane_slots(self.strategy, self.degree, ordinal)
                   if self.slots[p].valid)

    def valid_base_count(self) -> int:
        return sum(1 for b in self.bases if b.valid)


class StarTlb:
    """Sub-entry TLB with up-to-two-base entry sharing.

    With sharing_enabled=False no entry ever leaves NonShared and the model
    is behaviorally identical to the baseline SubEntryTlb, which is both a
    regression anchor and the cheapest way to run controlled comparisons.
    """

    max_degree = 2

    def __init__(self, geom: TlbGeometry, page: PageConfig, *,
                 sharing_enabled: bool = True):
        assert geom.subentries_per_entry == SLOTS_PER_ENTRY, (
            "entry sharing assumes 16 sub-entries per entry")
        assert page.region_pages == SLOTS_PER_ENTRY
        self.geom = geom
        self.page = page
        self.sharing_enabled = sharing_enabled
        self.sets = [[StarEntry(self.max_degree) for _ in range(geom.ways)]
                     for _ in range(geom.sets)]
        self.stats = TlbStats()
        self.eviction_samples: list[EvictionSample] = []
        self._seq = 0

    # ------------------------------------------------------------------
    # shared plumbing

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _touch(self, entry: StarEntry, ordinal: int, tick: int):
        entry.lru_seq = self._next_seq()
        entry.bases[ordinal].last_access_tick = tick

    def _find_base(self, entries: list[StarEntry], vpb: int,
                   pid: int) -> tuple[StarEntry, int] | None:
        # at most one base in a set matches a given (vpb, pid)
        for entry in entries:
            if not entry.valid:
                continue
            for ordinal in range(entry.degree):
                if entry.bases[ordinal].matches(vpb, pid):
                    return entry, ordinal
        return None

    def _fill_phys(self, entry: StarEntry, phys: int, pfn: int, aib: int):
        slot = entry.slots[phys]
        slot.valid = True
        slot.pfn = pfn
        slot.aib = aib
        slot.touch_seq = self._next_seq()

    # ------------------------------------------------------------------
    # lookup

    def lookup(self, d: DecomposedAddress, who: RequestIdentity,
               tick: int) -> LookupResult:
        """Probe the entry's bases in order; serving from a later base costs
        proportionally more (the joiner comparison is sequential in time)."""
        self.stats.probes += 1
        base_latency = self.geom.lookup_latency_cycles
        entries = self.sets[d.set_index]
        found = self._find_base(entries, d.vpb, who.process_id)
        if found is None:
            self.stats.miss_no_entry += 1
            return LookupResult(LookupKind.MISS_NO_ENTRY, None, base_latency)

        entry, ordinal = found
        latency = base_latency * (ordinal + 1)
        self._touch(entry, ordinal, tick)
        if entry.degree == 1:
            slot = entry.slots[d.sub_index]
            if slot.valid:
                slot.touch_seq = self._next_seq()
                self.stats.hits += 1
                return LookupResult(LookupKind.HIT, slot.pfn, latency)
            self.stats.miss_sub_entry += 1
            return LookupResult(LookupKind.MISS_SUB_ENTRY, None, latency)

        phys, aib = slot_map_general(entry.strategy, entry.degree, ordinal,
                                     d.sub_index)
        slot = entry.slots[phys]
        if slot.valid and slot.aib == aib:
            slot.touch_seq = self._next_seq()
            self.stats.hits += 1
            return LookupResult(LookupKind.HIT, slot.pfn, latency)
        self.stats.miss_aib += 1
        return LookupResult(LookupKind.MISS_AIB, None, latency)

    # ------------------------------------------------------------------
    # insert

    def insert(self, d: DecomposedAddress, pfn: int, who: RequestIdentity,
               tick: int) -> InsertOutcome:
        self.stats.inserts += 1
        entries = self.sets[d.set_index]
        found = self._find_base(entries, d.vpb, who.process_id)
        if found is not None:
            entry, ordinal = found
            return self._insert_into_base(entry, ordinal, d, pfn, tick)

        for entry in entries:
            if not entry.valid:
                self._new_entry(entry, d, pfn, who, tick)
                self.stats.new_entries += 1
                return InsertOutcome(InsertKind.NEW_ENTRY_VACANT)

        target = self._select_share_target(entries, d.vpb, who.process_id)
        if target is not None:
            return self._join(target, d, pfn, who, tick)

        victim = min(entries, key=lambda e: e.lru_seq)
        sample = EvictionSample(pid=victim.bases[0].owner_pid,
                                utilized=victim.utilized(),
                                capacity=SLOTS_PER_ENTRY,
                                shared=victim.degree > 1, tick=tick)
        self.eviction_samples.append(sample)
        self.stats.evictions += 1
        self._new_entry(victim, d, pfn, who, tick)
        return InsertOutcome(InsertKind.NEW_ENTRY_EVICTED, sample)

    def _insert_into_base(self, entry: StarEntry, ordinal: int,
                          d: DecomposedAddress, pfn: int, tick: int) -> InsertOutcome:
        self.stats.fills_existing += 1
        if entry.degree == 1:
            self._fill_phys(entry, d.sub_index, pfn, 0)
            self._touch(entry, 0, tick)
            return InsertOutcome(InsertKind.FILLED_EXISTING)

        lane_full = all(entry.slots[p].valid
                        for p in lane_slots(entry.strategy, entry.degree, ordinal))
        if lane_full:
            return self._handle_full_lane(entry, ordinal, d, pfn, tick)

        phys, aib = slot_map_general(entry.strategy, entry.degree, ordinal,
                                     d.sub_index)
        slot = entry.slots[phys]
        if slot.valid and slot.aib != aib:
            # same base, aliasing page: the newcomer takes the slot
            self.stats.replacements += 1
        self._fill_phys(entry, phys, pfn, aib)
        self._touch(entry, ordinal, tick)
        return InsertOutcome(InsertKind.FILLED_EXISTING)

    def _handle_full_lane(self, entry: StarEntry, ordinal: int,
                          d: DecomposedAddress, pfn: int, tick: int) -> InsertOutcome:
        """A base whose whole lane is valid demands one more translation:
        give the entry back to it and evict the other base."""
        assert entry.degree == 2
        self.revert_to_exclusive(entry, ordinal, tick)
        self._fill_phys(entry, d.sub_index, pfn, 0)
        self._touch(entry, 0, tick)
        return InsertOutcome(InsertKind.FILLED_EXISTING)

    def _new_entry(self, entry: StarEntry, d: DecomposedAddress, pfn: int,
                   who: RequestIdentity, tick: int):
        for base in entry.bases:
            base.valid = False
        base = entry.bases[0]
        base.valid = True
        base.dirty = False
        base.vpb = d.vpb
        base.owner_pid = who.process_id
        entry.degree = 1
        entry.strategy = None
        for slot in entry.slots:
            slot.valid = False
            slot.aib = 0
        self._fill_phys(entry, d.sub_index, pfn, 0)
        self._touch(entry, 0, tick)

    # ------------------------------------------------------------------
    # sharing transitions

    def _nonshared_candidates(self, entries: list[StarEntry],
                              pid: int) -> list[tuple[int, int]]:
        """(way, utilized) of NonShared entries eligible to host a second
        base, preferring the requester's own process."""
        eligible = [(way, e.utilized()) for way, e in enumerate(entries)
                    if e.degree == 1 and e.utilized() < SLOTS_PER_ENTRY // 2]
        same_pid = [(way, u) for way, u in eligible
                    if entries[way].bases[0].owner_pid == pid]
        return same_pid or eligible

    def _select_share_target(self, entries: list[StarEntry], vpb: int,
                             pid: int) -> StarEntry | None:
        if not self.sharing_enabled:
            return None
        candidates = self._nonshared_candidates(entries, pid)
        if not candidates:
            return None
        way = min(candidates, key=lambda wu: (wu[1], wu[0]))[0]
        return entries[way]

    def _join(self, entry: StarEntry, d: DecomposedAddress, pfn: int,
              who: RequestIdentity, tick: int) -> InsertOutcome:
        self.transition_to_shared(entry, d.vpb, who.process_id, tick)
        self._place_joining(entry, 1, d.sub_index, pfn, tick)
        self.stats.shared_joins += 1
        return InsertOutcome(InsertKind.SHARED_JOIN)

    def _place_joining(self, entry: StarEntry, ordinal: int, sub_index: int,
                       pfn: int, tick: int):
        """First fill for a base that just joined a shared entry.

        If its mapped slot is still held by an earlier tenant's translation,
        try to relocate that translation to its own lane's slot for the same
        local index, else drop it.  With the eager remap done at transition
        the lanes are already disjoint and this never fires; it is kept to
        the letter of the insert algorithm and pinned idle by tests.
        """
        phys, aib = slot_map_general(entry.strategy, entry.degree, ordinal,
                                     sub_index)
        slot = entry.slots[phys]
        if slot.valid:
            local = lane_local(entry.strategy, entry.degree, ordinal, phys)
            alt = lane_slot_for_local(entry.strategy, entry.degree, 0, local)
            if not entry.slots[alt].valid:
                moved = entry.slots[alt]
                moved.valid = True
                moved.pfn = slot.pfn
                moved.aib = slot.aib
                moved.touch_seq = slot.touch_seq
                self.stats.relocations += 1
            else:
                self.stats.relocation_evictions += 1
            slot.valid = False
        self._fill_phys(entry, phys, pfn, aib)
        self._touch(entry, ordinal, tick)

    def transition_to_shared(self, entry: StarEntry, new_vpb: int, new_pid: int,
                             tick: int):
        """NonShared -> two-base shared: pick the layout from the incumbent's
        occupancy, remap its translations into its own lane, open the other
        lane to the newcomer.

        Remap collisions (two sub-indices landing on one slot, possible when
        a gappy occupancy maps through Stride) keep the most recently touched
        translation; the loser is dropped and counted.
        """
        assert entry.degree == 1
        occupied = [s for s in range(SLOTS_PER_ENTRY) if entry.slots[s].valid]
        strategy = choose_layout(occupied)
        moved = [(s, entry.slots[s].pfn, entry.slots[s].touch_seq)
                 for s in occupied]
        for slot in entry.slots:
            slot.valid = False
            slot.aib = 0
        entry.degree = 2
        entry.strategy = strategy
        for sub, pfn, touch in moved:
            phys, aib = slot_map_general(strategy, 2, 0, sub)
            slot = entry.slots[phys]
            if slot.valid:
                self.stats.layout_conflict_drops += 1
                if touch <= slot.touch_seq:
                    continue
            slot.valid = True
            slot.pfn = pfn
            slot.aib = aib
            slot.touch_seq = touch
        joiner = entry.bases[1]
        joiner.valid = True
        joiner.dirty = False
        joiner.vpb = new_vpb
        joiner.owner_pid = new_pid
        joiner.last_access_tick = tick

    def revert_to_exclusive(self, entry: StarEntry, surviving_ordinal: int,
                            tick: int):
        """Shared -> NonShared: evict the other base (sampling its lane
        utilization) and spread the survivor's translations back out to
        their 4-bit sub-indices.  The spread is collision-free because
        (local, aib) -> sub-index is a bijection."""
        assert entry.degree == 2
        strategy = entry.strategy
        evicted_ordinal = 1 - surviving_ordinal
        evicted_base = entry.bases[evicted_ordinal]
        evicted_used = entry.lane_utilized(evicted_ordinal)
        if evicted_used >= 1:
            sample = EvictionSample(pid=evicted_base.owner_pid,
                                    utilized=evicted_used,
                                    capacity=SLOTS_PER_ENTRY // 2,
                                    shared=True, tick=tick)
            self.eviction_samples.append(sample)
        else:
            self.stats.zero_util_evictions_skipped += 1
        self.stats.reverts += 1

        survivors = []
        for phys in lane_slots(strategy, 2, surviving_ordinal):
            slot = entry.slots[phys]
            if slot.valid:
                local = lane_local(strategy, 2, surviving_ordinal, phys)
                sub = sub_from_local(strategy, 2, local, slot.aib)
                survivors.append((sub, slot.pfn, slot.touch_seq))
        for slot in entry.slots:
            slot.valid = False
            slot.aib = 0

        keeper = entry.bases[surviving_ordinal]
        base0 = entry.bases[0]
        if surviving_ordinal != 0:
            base0.valid = True
            base0.dirty = keeper.dirty
            base0.vpb = keeper.vpb
            base0.owner_pid = keeper.owner_pid
            base0.last_access_tick = keeper.last_access_tick
        for base in entry.bases[1:]:
            base.valid = False
        entry.degree = 1
        entry.strategy = None
        for sub, pfn, touch in survivors:
            slot = entry.slots[sub]
            assert not slot.valid, "survivor spread must be collision-free"
            slot.valid = True
            slot.pfn = pfn
            slot.aib = 0
            slot.touch_seq = touch

    # ------------------------------------------------------------------
    # inspection helpers

    def resident(self, d: DecomposedAddress, who: RequestIdentity) -> bool:
        found = self._find_base(self.sets[d.set_index], d.vpb, who.process_id)
        if found is None:
            return False
        entry, ordinal = found
        if entry.degree == 1:
            return entry.slots[d.sub_index].valid
        phys, aib = slot_map_general(entry.strategy, entry.degree, ordinal,
                                     d.sub_index)
        slot = entry.slots[phys]
        return slot.valid and slot.aib == aib

    def drain_eviction_samples(self) -> list[EvictionSample]:
        out = self.eviction_samples
        self.eviction_samples = []
        return out

    def total_valid_subentries(self) -> int:
        return sum(e.utilized() for row in self.sets for e in row)
