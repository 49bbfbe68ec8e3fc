"""Design alternatives around the shared sub-entry TLB.

Three ways to spend the same sub-entry budget without sharing (half-size
entries with doubled sets or ways), static way-partitioning for isolation,
and the four-base generalization of entry sharing.  All of them preserve
total sub-entry capacity; what moves is how the capacity is reachable.

The four-base variant widens the layout field to three bits:

    000 NonShared        001 Sequential x2     010 Stride x2
    101 Sequential x4    110 Stride x4
    (011, 100, 111 are invalid encodings)

Bit 2 flags the four-base tier; bits 1..0 keep the two-base meaning.  At
tier 4 every base owns a 4-slot lane, locals shrink to 2 bits and aibs grow
to 2 bits, with the same first-bits/last-bits split as the two-base maps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .addrs import PageConfig, TlbGeometry
from .metrics import EvictionSample
from .star import (LayoutMode, StarEntry, StarTlb, SLOTS_PER_ENTRY,
                   lane_local, lane_slots, slot_map_general, sub_from_local)
from .tlbcore import (InsertKind, InsertOutcome, SubEntryTlb, TlbStats)


class VariantKind(enum.Enum):
    BASELINE = "baseline"
    STAR2 = "star2"
    STAR4 = "star4"
    HALF_SUB_DOUBLE_SET = "halfsub-double-set"
    HALF_SUB_DOUBLE_WAY_SEQ = "halfsub-double-way-seq"
    HALF_SUB_DOUBLE_WAY_PARA = "halfsub-double-way-para"
    STATIC_BASELINE = "static-baseline"
    STAR2_STATIC = "star2-static"


HALF_SUB_KINDS = (VariantKind.HALF_SUB_DOUBLE_SET,
                  VariantKind.HALF_SUB_DOUBLE_WAY_SEQ,
                  VariantKind.HALF_SUB_DOUBLE_WAY_PARA)


@dataclass(frozen=True)
class VariantConfig:
    kind: VariantKind
    enable_tier4: bool = True       # star4 only
    sharing_enabled: bool = True    # star2/star4: off degenerates to baseline


def make_geometry(kind: VariantKind, base: TlbGeometry) -> TlbGeometry:
    """Geometry an alternative actually instantiates.

    Half-sub variants cut sub-entries per entry in half and double either
    the set count or the way count, so total sub-entry capacity is invariant
    across every kind.
    """
    if kind is VariantKind.HALF_SUB_DOUBLE_SET:
        return TlbGeometry(base.sets * 2, base.ways,
                           base.subentries_per_entry // 2,
                           base.lookup_latency_cycles)
    if kind in (VariantKind.HALF_SUB_DOUBLE_WAY_SEQ,
                VariantKind.HALF_SUB_DOUBLE_WAY_PARA):
        return TlbGeometry(base.sets, base.ways * 2,
                           base.subentries_per_entry // 2,
                           base.lookup_latency_cycles)
    return base


def encode_layout3(degree: int, strategy: LayoutMode | None) -> int:
    if degree == 1:
        return 0b000
    assert strategy in (LayoutMode.SEQUENTIAL, LayoutMode.STRIDE)
    code = strategy.code
    if degree == 2:
        return code
    assert degree == 4
    return 0b100 | code


def decode_layout3(code: int) -> tuple[int, LayoutMode | None]:
    """(degree, strategy) of a 3-bit layout code; rejects the three holes."""
    if code == 0b000:
        return 1, None
    strategy_bits = code & 0b011
    if strategy_bits == 0b01:
        strategy = LayoutMode.SEQUENTIAL
    elif strategy_bits == 0b10:
        strategy = LayoutMode.STRIDE
    else:
        raise ValueError(f"invalid layout code {code:#05b}")
    if code & 0b100:
        return 4, strategy
    return 2, strategy


def static_partition_map(g_units: Sequence[int], ways: int) -> list[int]:
    """Split ways across instances proportionally to their g-unit sizes.

    Largest-remainder rounding, ties to the lowest index, then a fix-up pass
    so every instance keeps at least one way.  The fix-up takes from the
    instance sitting furthest above its quota, which keeps the allocation
    order-consistent: a bigger slice never ends up with fewer ways than a
    smaller one.  Deterministic for a given input.
    """
    n = len(g_units)
    assert n >= 1 and all(g >= 1 for g in g_units), "g_units must be positive"
    assert n <= ways, f"cannot give {n} instances at least one of {ways} ways"
    total = sum(g_units)
    quotas = [ways * g / total for g in g_units]
    alloc = [int(q) for q in quotas]
    leftover = ways - sum(alloc)
    by_remainder = sorted(range(n), key=lambda i: (alloc[i] - quotas[i], i))
    for i in by_remainder[:leftover]:
        alloc[i] += 1
    for i in range(n):
        while alloc[i] == 0:
            donors = [j for j in range(n) if alloc[j] > 1]
            donor = max(donors, key=lambda j: (alloc[j] - quotas[j],
                                               alloc[j], -j))
            alloc[donor] -= 1
            alloc[i] += 1
    assert sum(alloc) == ways
    return alloc


class Star4Tlb(StarTlb):
    """Entry sharing extended to four bases per entry.

    Tier-4 sharing engages only when no NonShared host is available: a
    two-base entry whose bases each use fewer than four sub-entries accepts
    a third base (quartering the entry, strategy bits kept), and a tier-4
    entry with a free lane and all residents under four accepts a fourth.
    A base that fills its 4-slot lane and demands more space demotes the
    entry back to two bases: the demander plus the most recently touched
    other base survive, everyone else is evicted.

    With enable_tier4=False no escalation path is reachable and behavior is
    identical to the two-base model.
    """

    max_degree = 4

    def __init__(self, geom: TlbGeometry, page: PageConfig, *,
                 sharing_enabled: bool = True, enable_tier4: bool = True):
        super().__init__(geom, page, sharing_enabled=sharing_enabled)
        self.enable_tier4 = enable_tier4

    # -- share-target search ------------------------------------------------

    def _select_share_target(self, entries: list[StarEntry], vpb: int,
                             pid: int) -> StarEntry | None:
        target = super()._select_share_target(entries, vpb, pid)
        if target is not None or not self.sharing_enabled or not self.enable_tier4:
            return target

        def prefer(cands: list[tuple[int, int]]) -> StarEntry | None:
            if not cands:
                return None
            same = [wu for wu in cands
                    if any(b.valid and b.owner_pid == pid
                           for b in entries[wu[0]].bases)]
            pool = same or cands
            return entries[min(pool, key=lambda wu: (wu[1], wu[0]))[0]]

        pairs = [(way, e.utilized()) for way, e in enumerate(entries)
                 if e.degree == 2
                 and all(e.lane_utilized(o) < SLOTS_PER_ENTRY // 4
                         for o in range(2))]
        target = prefer(pairs)
        if target is not None:
            return target

        quads = [(way, e.utilized()) for way, e in enumerate(entries)
                 if e.degree == 4 and e.valid_base_count() < 4
                 and all(e.lane_utilized(o) < SLOTS_PER_ENTRY // 4
                         for o in range(4) if e.bases[o].valid)]
        return prefer(quads)

    # -- joining ------------------------------------------------------------

    def _join(self, entry: StarEntry, d, pfn: int, who, tick: int) -> InsertOutcome:
        if entry.degree == 1:
            return super()._join(entry, d, pfn, who, tick)
        if entry.degree == 2:
            self._escalate_to_four(entry, d.vpb, who.process_id, tick)
            ordinal = 2
        else:
            ordinal = entry.valid_base_count()
            self._attach_base(entry, ordinal, d.vpb, who.process_id, tick)
        self._place_joining(entry, ordinal, d.sub_index, pfn, tick)
        self.stats.shared_joins += 1
        return InsertOutcome(InsertKind.SHARED_JOIN)

    def _attach_base(self, entry: StarEntry, ordinal: int, vpb: int, pid: int,
                     tick: int):
        base = entry.bases[ordinal]
        assert not base.valid
        base.valid = True
        base.dirty = False
        base.vpb = vpb
        base.owner_pid = pid
        base.last_access_tick = tick

    def _escalate_to_four(self, entry: StarEntry, new_vpb: int, new_pid: int,
                          tick: int):
        """Two bases -> four lanes: requarter both residents' translations
        through the tier-4 map, keeping the entry's strategy bits.  Slot
        collisions (two aibs of one base meeting in its quarter) keep the
        most recently touched translation, as at any layout change."""
        assert entry.degree == 2 and self.enable_tier4
        strategy = entry.strategy
        moved = []
        for ordinal in range(2):
            for phys in lane_slots(strategy, 2, ordinal):
                slot = entry.slots[phys]
                if slot.valid:
                    local = lane_local(strategy, 2, ordinal, phys)
                    sub = sub_from_local(strategy, 2, local, slot.aib)
                    moved.append((ordinal, sub, slot.pfn, slot.touch_seq))
        for slot in entry.slots:
            slot.valid = False
            slot.aib = 0
        entry.degree = 4
        for ordinal, sub, pfn, touch in moved:
            phys, aib = slot_map_general(strategy, 4, ordinal, sub)
            slot = entry.slots[phys]
            if slot.valid:
                self.stats.layout_conflict_drops += 1
                if touch <= slot.touch_seq:
                    continue
            slot.valid = True
            slot.pfn = pfn
            slot.aib = aib
            slot.touch_seq = touch
        self._attach_base(entry, 2, new_vpb, new_pid, tick)
        self.stats.escalations += 1

    # -- lane-full handling -------------------------------------------------

    def _handle_full_lane(self, entry: StarEntry, ordinal: int, d, pfn: int,
                          tick: int) -> InsertOutcome:
        if entry.degree == 2:
            return super()._handle_full_lane(entry, ordinal, d, pfn, tick)
        assert entry.degree == 4
        self._demote_to_two(entry, ordinal, tick)
        phys, aib = slot_map_general(entry.strategy, 2, 0, d.sub_index)
        slot = entry.slots[phys]
        if slot.valid and slot.aib != aib:
            self.stats.replacements += 1
        self._fill_phys(entry, phys, pfn, aib)
        self._touch(entry, 0, tick)
        return InsertOutcome(InsertKind.FILLED_EXISTING)

    def _demote_to_two(self, entry: StarEntry, demanding: int, tick: int):
        """Four lanes -> two: the demander becomes incumbent, the most
        recently touched other base rides along, the rest are evicted with
        per-lane utilization samples (capacity 4)."""
        strategy = entry.strategy
        others = [o for o in range(4) if o != demanding and entry.bases[o].valid]
        assert others, "a degree-4 entry has at least two valid bases"
        keep = max(others,
                   key=lambda o: (entry.bases[o].last_access_tick, -o))
        for o in others:
            if o == keep:
                continue
            used = entry.lane_utilized(o)
            if used >= 1:
                self.eviction_samples.append(
                    EvictionSample(pid=entry.bases[o].owner_pid, utilized=used,
                                   capacity=SLOTS_PER_ENTRY // 4, shared=True,
                                   tick=tick))
            else:
                self.stats.zero_util_evictions_skipped += 1
        self.stats.demotions += 1

        moved = []
        for new_ordinal, old_ordinal in ((0, demanding), (1, keep)):
            for phys in lane_slots(strategy, 4, old_ordinal):
                slot = entry.slots[phys]
                if slot.valid:
                    local = lane_local(strategy, 4, old_ordinal, phys)
                    sub = sub_from_local(strategy, 4, local, slot.aib)
                    moved.append((new_ordinal, sub, slot.pfn, slot.touch_seq))
        survivors = []
        for o in (demanding, keep):
            b = entry.bases[o]
            survivors.append((b.vpb, b.owner_pid, b.dirty, b.last_access_tick))
        for slot in entry.slots:
            slot.valid = False
            slot.aib = 0
        for base, (vpb, pid, dirty, last) in zip(entry.bases, survivors):
            base.valid = True
            base.vpb = vpb
            base.owner_pid = pid
            base.dirty = dirty
            base.last_access_tick = last
        for base in entry.bases[2:]:
            base.valid = False
        entry.degree = 2
        for ordinal, sub, pfn, touch in moved:
            phys, aib = slot_map_general(strategy, 2, ordinal, sub)
            slot = entry.slots[phys]
            if slot.valid:
                self.stats.layout_conflict_drops += 1
                if touch <= slot.touch_seq:
                    continue
            slot.valid = True
            slot.pfn = pfn
            slot.aib = aib
            slot.touch_seq = touch


class StaticPartitionTlb:
    """Way-partitioned wrapper: each instance gets a private slice of ways.

    The slice is a fully fledged inner TLB with the same set count, so an
    instance's traffic can never observe or perturb another's entries; the
    price is that idle ways cannot be borrowed.
    """

    def __init__(self, geom: TlbGeometry, page: PageConfig,
                 instance_g_units: dict[int, int], inner_factory):
        self.geom = geom
        self.page = page
        ids = sorted(instance_g_units)
        allocation = static_partition_map([instance_g_units[i] for i in ids],
                                          geom.ways)
        self.way_allocation = dict(zip(ids, allocation))
        self.parts = {
            iid: inner_factory(
                TlbGeometry(geom.sets, ways, geom.subentries_per_entry,
                            geom.lookup_latency_cycles), page)
            for iid, ways in self.way_allocation.items()
        }

    def _part(self, who):
        part = self.parts.get(who.instance_id)
        assert part is not None, f"no partition for instance {who.instance_id}"
        return part

    def lookup(self, d, who, tick):
        return self._part(who).lookup(d, who, tick)

    def insert(self, d, pfn, who, tick):
        return self._part(who).insert(d, pfn, who, tick)

    def resident(self, d, who) -> bool:
        return self._part(who).resident(d, who)

    @property
    def stats(self) -> TlbStats:
        merged = TlbStats()
        for iid in sorted(self.parts):
            part_stats = self.parts[iid].stats
            for name in TlbStats.__slots__:
                setattr(merged, name,
                        getattr(merged, name) + getattr(part_stats, name))
        return merged

    def drain_eviction_samples(self) -> list[EvictionSample]:
        out: list[EvictionSample] = []
        for iid in sorted(self.parts):
            out.extend(self.parts[iid].drain_eviction_samples())
        return out

    def total_valid_subentries(self) -> int:
        total = 0
        for part in self.parts.values():
            if hasattr(part, "total_valid_subentries"):
                total += part.total_valid_subentries()
            else:
                total += sum(e.utilized() for row in part.sets for e in row)
        return total


def build_l3(config: VariantConfig, base_geom: TlbGeometry, page: PageConfig,
             instance_g_units: dict[int, int] | None = None):
    """Instantiate the shared level for a policy, ready for the pipeline."""
    kind = config.kind
    geom = make_geometry(kind, base_geom)
    if kind in HALF_SUB_KINDS:
        half_page = PageConfig(page.page_size_bytes, geom.subentries_per_entry)
        return SubEntryTlb(
            geom, half_page,
            way_halves_sequential=(kind is VariantKind.HALF_SUB_DOUBLE_WAY_SEQ))
    if kind is VariantKind.BASELINE:
        return SubEntryTlb(geom, page)
    if kind is VariantKind.STAR2:
        return StarTlb(geom, page, sharing_enabled=config.sharing_enabled)
    if kind is VariantKind.STAR4:
        return Star4Tlb(geom, page, sharing_enabled=config.sharing_enabled,
                        enable_tier4=config.enable_tier4)
    assert instance_g_units, f"{kind.value} needs per-instance g_units"
    if kind is VariantKind.STATIC_BASELINE:
        return StaticPartitionTlb(geom, page, instance_g_units, SubEntryTlb)
    assert kind is VariantKind.STAR2_STATIC
    def star_factory(g, p):
        return StarTlb(g, p, sharing_enabled=config.sharing_enabled)
    return StaticPartitionTlb(geom, page, instance_g_units, star_factory)
