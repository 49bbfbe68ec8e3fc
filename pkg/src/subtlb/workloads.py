"""Synthetic translation workloads and trace plumbing.

Each tenant owns a disjoint virtual address space (the pid is folded into
the high address bits) and walks it in one of four patterns:

    stream     pages 0..F-1 in order, wrapping
    stride(k)  the matrix-column idiom: 0, k, 2k, ... then 1, k+1, ...
               so one lap touches every footprint page exactly once
    block      fixed-size blocks of consecutive pages, block order shuffled
               per lap by the seeded rng
    dependent  pointer-chase over a seeded single-cycle permutation

Traces are lists of TraceRecords; tenants combine by deterministic weighted
round-robin (one record per tick), and rerun_until_longest wraps shorter
tenants until the longest finishes, flagging only first-pass records as
measured.  The on-disk format is plain text, one record per line:

    tick instance pid vaddr_hex weight

with '#' comments; a .gz suffix gzips it.  The measured flag is a runtime
concept and is not serialized.
"""

from __future__ import annotations

import dataclasses
import enum
import gzip
import random
from dataclasses import dataclass
from typing import Sequence

from .addrs import PageConfig

# Tenant address spaces are disjoint by construction: the pid sits above
# these page-number bits.
TENANT_PAGE_BITS = 24


class PatternKind(enum.Enum):
    STREAM = "stream"
    STRIDE = "stride"
    BLOCK = "block"
    DEPENDENT = "dependent"


@dataclass(frozen=True)
class PatternSpec:
    kind: PatternKind
    footprint_pages: int
    accesses: int
    intensity: float = 1.0
    stride_pages: int | None = None
    block_pages: int | None = None
    blocks: int | None = None

    def __post_init__(self):
        assert self.footprint_pages >= 1
        assert self.accesses >= 0
        assert self.intensity > 0
        assert self.footprint_pages < (1 << TENANT_PAGE_BITS)
        if self.kind is PatternKind.STRIDE:
            assert self.stride_pages and self.stride_pages >= 1
            assert self.footprint_pages % self.stride_pages == 0, (
                "stride must divide the footprint so a lap covers it exactly")
        if self.kind is PatternKind.BLOCK:
            assert self.block_pages and self.block_pages >= 1
            blocks = self.blocks
            if blocks is None:
                blocks = self.footprint_pages // self.block_pages
                object.__setattr__(self, "blocks", blocks)
            assert blocks * self.block_pages == self.footprint_pages, (
                "blocks * block_pages must equal the footprint")


@dataclass(frozen=True)
class TenantSpec:
    pid: int
    g_units: int
    pattern: PatternSpec
    mpki_class: str = "M"              # nominal intent: L, M or H
    instructions_per_access: float = 10.0
    instance_id: int | None = None     # defaults to the pid

    def __post_init__(self):
        assert self.g_units >= 1
        assert self.mpki_class in ("L", "M", "H")
        assert self.instructions_per_access > 0

    @property
    def instance(self) -> int:
        return self.pid if self.instance_id is None else self.instance_id


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    instance_id: int
    pid: int
    vaddr: int
    weight_instructions: float = 1.0
    measured: bool = True


def tenant_vaddr(pid: int, page: int, page_cfg: PageConfig) -> int:
    assert 0 <= page < (1 << TENANT_PAGE_BITS)
    return ((pid << TENANT_PAGE_BITS) | page) << page_cfg.offset_bits


def _page_sequence(spec: PatternSpec, rng: random.Random):
    """Yield spec.accesses page numbers inside [0, footprint)."""
    fp = spec.footprint_pages
    if spec.kind is PatternKind.STREAM:
        for i in range(spec.accesses):
            yield i % fp
    elif spec.kind is PatternKind.STRIDE:
        k = spec.stride_pages
        rows = fp // k
        for i in range(spec.accesses):
            j = i % fp
            yield (j % rows) * k + (j // rows)
    elif spec.kind is PatternKind.BLOCK:
        emitted = 0
        while emitted < spec.accesses:
            order = list(range(spec.blocks))
            rng.shuffle(order)
            for b in order:
                for p in range(b * spec.block_pages, (b + 1) * spec.block_pages):
                    if emitted == spec.accesses:
                        return
                    yield p
                    emitted += 1
    else:
        assert spec.kind is PatternKind.DEPENDENT
        order = list(range(fp))
        rng.shuffle(order)
        succ = {order[i]: order[(i + 1) % fp] for i in range(fp)}
        page = order[0]
        for _ in range(spec.accesses):
            yield page
            page = succ[page]


def generate(tenant: TenantSpec, seed: int) -> list[TraceRecord]:
    """Materialize one tenant's trace; deterministic in (tenant, seed)."""
    rng = random.Random(f"subtlb:{seed}:{tenant.pid}:{tenant.pattern.kind.value}")
    page_cfg = PageConfig()
    spec = tenant.pattern
    out = []
    for i, page in enumerate(_page_sequence(spec, rng)):
        out.append(TraceRecord(
            tick=int(i / spec.intensity),
            instance_id=tenant.instance,
            pid=tenant.pid,
            vaddr=tenant_vaddr(tenant.pid, page, page_cfg),
            weight_instructions=tenant.instructions_per_access))
    return out


def interleave(traces: Sequence[Sequence[TraceRecord]],
               rates: Sequence[int] | None = None) -> list[TraceRecord]:
    """Merge tenant traces by weighted round-robin, one record per tick.

    rates are per-trace records per round (default 1 each); per-trace order
    is preserved and exhausted traces simply drop out of the rotation.
    """
    if rates is None:
        rates = [1] * len(traces)
    assert len(rates) == len(traces) and all(r >= 1 for r in rates)
    positions = [0] * len(traces)
    out: list[TraceRecord] = []
    tick = 0
    remaining = sum(len(t) for t in traces)
    while remaining:
        for idx, rate in enumerate(rates):
            trace = traces[idx]
            for _ in range(rate):
                if positions[idx] >= len(trace):
                    break
                rec = trace[positions[idx]]
                out.append(dataclasses.replace(rec, tick=tick))
                positions[idx] += 1
                tick += 1
                remaining -= 1
    return out


def rerun_until_longest(traces: Sequence[Sequence[TraceRecord]],
                        rates: Sequence[int] | None = None) -> list[TraceRecord]:
    """Weighted round-robin where shorter traces wrap until the longest-
    running tenant finishes its trace once.

    Rounds run until the tenant needing the most rounds has emitted its
    whole trace; every other tenant loops. Only first-pass records carry
    measured=True, so statistics can mask out the artificial reruns.
    """
    if rates is None:
        rates = [1] * len(traces)
    assert len(rates) == len(traces) and all(r >= 1 for r in rates)
    assert all(len(t) >= 1 for t in traces), "empty tenant trace"
    rounds = max(-(-len(t) // r) for t, r in zip(traces, rates))
    out: list[TraceRecord] = []
    tick = 0
    emitted = [0] * len(traces)
    for _ in range(rounds):
        for idx, rate in enumerate(rates):
            trace = traces[idx]
            for _ in range(rate):
                k = emitted[idx]
                rec = trace[k % len(trace)]
                out.append(dataclasses.replace(rec, tick=tick,
                                               measured=k < len(trace)))
                emitted[idx] += 1
                tick += 1
    return out


def write_trace(path: str, records: Sequence[TraceRecord]):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt") as fh:
        fh.write("# tick instance pid vaddr_hex weight\n")
        for r in records:
            fh.write(f"{r.tick} {r.instance_id} {r.pid} "
                     f"{r.vaddr:#x} {r.weight_instructions!r}\n")


def read_trace(path: str) -> list[TraceRecord]:
    opener = gzip.open if str(path).endswith(".gz") else open
    out = []
    with opener(path, "rt") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, "
                                 f"got {len(parts)}")
            tick, inst, pid = int(parts[0]), int(parts[1]), int(parts[2])
            vaddr = int(parts[3], 16)
            weight = float(parts[4])
            out.append(TraceRecord(tick, inst, pid, vaddr, weight))
    return out


# ----------------------------------------------------------------------
# Standard tenant recipes.  Footprints are expressed against the shared
# level's reach (total sub-entries = mappable pages) so the same mixes run
# at desk scale or full scale.  The class letters are nominal intent;
# measured MPKI depends on the private levels in front.

def h_stride_thrash(pid: int, reach: int, laps: int = 2, g: int = 3) -> TenantSpec:
    """High-intensity stride sweep far beyond reach: one page per region,
    defeats any private level, classic utilization-killer."""
    fp = 4 * reach
    return TenantSpec(pid, g, PatternSpec(PatternKind.STRIDE, fp, laps * fp,
                                          stride_pages=16),
                      mpki_class="H", instructions_per_access=5.0)


def h_stride_dense(pid: int, reach: int, laps: int = 3, g: int = 3) -> TenantSpec:
    """Stride-4 column sweep a bit over reach.

    Deliberately adversarial to entry sharing: each column revisits a
    region at the adjacent page index, which maps to the same shared slot
    with the opposite identity bit, so a shared pair alternates identity
    misses instead of hitting.  Useful for studying that pathology; the
    standard mixes use h_pointer_chase for their dense heavy tenant.
    """
    fp = (reach * 3) // 2
    fp -= fp % 4
    return TenantSpec(pid, g, PatternSpec(PatternKind.STRIDE, fp, laps * fp,
                                          stride_pages=4),
                      mpki_class="H", instructions_per_access=5.0)


def h_pointer_chase(pid: int, reach: int, laps: int = 4, g: int = 3) -> TenantSpec:
    """Pointer chase over ~5/8 of reach: big enough to lose ways in a
    contended shared level, sparse enough per region that pairs of bases
    fit one entry."""
    fp = (5 * reach) // 8
    return TenantSpec(pid, g, PatternSpec(PatternKind.DEPENDENT, fp, laps * fp),
                      mpki_class="H", instructions_per_access=5.0)


def m_stream(pid: int, reach: int, laps: int = 8, g: int = 2) -> TenantSpec:
    fp = reach // 4
    return TenantSpec(pid, g, PatternSpec(PatternKind.STREAM, fp, laps * fp),
                      mpki_class="M", instructions_per_access=20.0)


def m_block(pid: int, reach: int, laps: int = 6, g: int = 2) -> TenantSpec:
    fp = (reach * 3) // 8
    fp -= fp % 8
    return TenantSpec(pid, g, PatternSpec(PatternKind.BLOCK, fp, laps * fp,
                                          block_pages=8),
                      mpki_class="M", instructions_per_access=20.0)


def l_dependent(pid: int, reach: int, laps: int = 4, g: int = 1) -> TenantSpec:
    fp = max(16, reach // 16)
    return TenantSpec(pid, g, PatternSpec(PatternKind.DEPENDENT, fp, laps * fp),
                      mpki_class="L", instructions_per_access=200.0)


def standard_mixes(reach_pages: int = 1024) -> dict[str, list[TenantSpec]]:
    """Multi-tenant mixes by intensity-class combination (pids 1, 2, 3).

    The class letters name the tenants' nominal translation intensity; the
    pattern choices pair each combination with the contention shapes worth
    studying (sparse strides for pollution, pointer chases for capacity
    pressure, streams/blocks for locality victims).  Slice sizes are
    trimmed where needed so each mix fits the seven-g-unit budget.
    """
    r = reach_pages
    return {
        "HHH": [h_pointer_chase(1, r), h_stride_thrash(2, r, g=2),
                h_pointer_chase(3, r, g=2)],
        "HHM": [h_pointer_chase(1, r), h_stride_thrash(2, r, g=2),
                m_stream(3, r)],
        "HMM": [h_stride_thrash(1, r), m_stream(2, r), m_block(3, r)],
        "MMM": [m_stream(1, r), m_block(2, r), m_stream(3, r)],
        "HML": [h_pointer_chase(1, r), m_stream(2, r), l_dependent(3, r)],
        "MML": [m_stream(1, r), m_block(2, r), l_dependent(3, r)],
        "HLL": [h_stride_thrash(1, r), l_dependent(2, r), l_dependent(3, r)],
        "LLM": [l_dependent(1, r), l_dependent(2, r), m_block(3, r)],
        "LLL": [l_dependent(1, r), l_dependent(2, r), l_dependent(3, r)],
    }
