"""Analysis instruments: reuse distances, eviction-time utilization,
MPKI classing, per-entry storage accounting and run-report serialization.

Everything here is a pure function over plain values so the TLB models and
the pipeline stay measurement-free; they only emit samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class EvictionSample:
    """Sub-entry utilization of one eviction victim at eviction time.

    capacity is the victim's allocated sub-entry capacity: the full entry for
    whole-entry evictions, the per-base share (8, or 4 in the 4-base variant)
    for base-only evictions such as reverts.
    """

    pid: int
    utilized: int
    capacity: int
    shared: bool
    tick: int

    def __post_init__(self):
        assert 1 <= self.utilized <= self.capacity, (
            f"utilized {self.utilized} out of range for capacity {self.capacity}")

    @property
    def fraction(self) -> float:
        return self.utilized / self.capacity


@dataclass(frozen=True)
class ReuseEvent:
    pid: int
    distance: int


class _Fenwick:
    """Prefix-sum tree over access positions; one live bit per key."""

    __slots__ = ("n", "tree")

    def __init__(self, n: int):
        self.n = n
        self.tree = [0] * (n + 1)

    def add(self, i: int, delta: int):
        while i <= self.n:
            self.tree[i] += delta
            i += i & (-i)

    def prefix(self, i: int) -> int:
        s = 0
        while i > 0:
            s += self.tree[i]
            i -= i & (-i)
        return s


def reuse_distance_stream(events: Sequence[tuple[int, int]],
                          measured: Sequence[bool] | None = None,
                          group_pages: int = 1) -> list[ReuseEvent]:
    """Exact reuse distances over a (pid, page) access stream.

    The distance of an access is the number of distinct (pid, page) keys
    touched strictly between it and the previous access to the same key;
    an immediate re-access scores 0, first touches emit nothing.  Distances
    count every tenant's intervening keys (the structure being modeled is
    shared), while the key itself is pid-qualified so tenants' address
    spaces never alias.

    group_pages > 1 coarsens the key to (pid, page // group_pages), for
    region-granularity analysis.  measured, when given, suppresses events
    for accesses outside a tenant's measurement window without removing
    their effect on other accesses' distances.
    """
    assert group_pages >= 1
    n = len(events)
    fen = _Fenwick(n)
    last_pos: dict[tuple[int, int], int] = {}
    out: list[ReuseEvent] = []
    pos = 0
    for idx, (pid, page) in enumerate(events):
        pos += 1
        key = (pid, page // group_pages) if group_pages > 1 else (pid, page)
        prev = last_pos.get(key)
        if prev is not None:
            distance = fen.prefix(pos - 1) - fen.prefix(prev)
            if measured is None or measured[idx]:
                out.append(ReuseEvent(pid, distance))
            fen.add(prev, -1)
        fen.add(pos, 1)
        last_pos[key] = pos
    return out


def distance_cdf(distances: Sequence[int]) -> list[tuple[int, float]]:
    """CDF over reuse distances as (distance, cumulative fraction) steps."""
    if not distances:
        return []
    counts: dict[int, int] = {}
    for d in distances:
        counts[d] = counts.get(d, 0) + 1
    total = len(distances)
    cdf = []
    acc = 0
    for d in sorted(counts):
        acc += counts[d]
        cdf.append((d, acc / total))
    return cdf


UTIL_CDF_BUCKETS = 17  # sixteenths, 0/16 .. 16/16


@dataclass(frozen=True)
class UtilizationStats:
    count: int
    mean: float                    # mean of utilized/capacity over samples
    histogram: tuple[int, ...]     # per-sixteenth bucket counts
    cdf: tuple[float, ...]         # cumulative fraction at <= k/16


def utilization_stats(samples: Iterable[EvictionSample]) -> UtilizationStats:
    hist = [0] * UTIL_CDF_BUCKETS
    total = 0
    acc = 0.0
    for s in samples:
        # capacities 4/8/16 land exactly on the sixteenth grid
        bucket = s.utilized * (UTIL_CDF_BUCKETS - 1) // s.capacity
        hist[bucket] += 1
        acc += s.utilized / s.capacity
        total += 1
    if total == 0:
        return UtilizationStats(0, 0.0, tuple(hist), tuple([0.0] * UTIL_CDF_BUCKETS))
    cdf = []
    running = 0
    for h in hist:
        running += h
        cdf.append(running / total)
    return UtilizationStats(total, acc / total, tuple(hist), tuple(cdf))


MPKI_CLASS_LOW = "L"
MPKI_CLASS_MED = "M"
MPKI_CLASS_HIGH = "H"


def mpki(misses: int, weight_instructions: float) -> tuple[float, str]:
    """Misses per kilo-instruction and its intensity class (L/M/H)."""
    assert weight_instructions > 0, "instruction weight must be positive"
    value = misses * 1000.0 / weight_instructions
    if value < 1.0:
        klass = MPKI_CLASS_LOW
    elif value > 100.0:
        klass = MPKI_CLASS_HIGH
    else:
        klass = MPKI_CLASS_MED
    return value, klass


# Per-entry storage accounting, in bits.  A sub-entry holds a translation
# (frame number plus permissions): 52 bits.  Every entry carries valid+dirty
# and a 30-bit base tag.  Sharing adds a layout field, per-sub-entry address
# index bits and the extra base tags.
VALID_DIRTY_BITS = 2
BASE_TAG_BITS = 30
SUBENTRY_BITS = 52
LAYOUT2_BITS = 2
LAYOUT3_BITS = 3


def bits_per_entry(policy: str, subentries_per_entry: int = 16) -> int:
    """Storage cost of one entry under the named policy.

    baseline (16 subs):       2 + 30 + 16*52            = 864
    star2:                    864 + 2 + 16*1 + 30 + 2   = 914
    star4:                    864 + 3 + 16*2 + 3*(30+2) = 995
    halfsub-* (8 subs):       2 + 30 + 8*52             = 448
    """
    base = VALID_DIRTY_BITS + BASE_TAG_BITS + subentries_per_entry * SUBENTRY_BITS
    if policy in ("baseline", "halfsub-double-set", "halfsub-double-way-seq",
                  "halfsub-double-way-para", "static-baseline"):
        return base
    if policy in ("star2", "star2-static"):
        # layout + 1 address-index bit per sub-entry + second base tag + v/d
        return (base + LAYOUT2_BITS + subentries_per_entry
                + BASE_TAG_BITS + VALID_DIRTY_BITS)
    if policy == "star4":
        # layout + 2 address-index bits per sub-entry + three more base tags
        return (base + LAYOUT3_BITS + 2 * subentries_per_entry
                + 3 * (BASE_TAG_BITS + VALID_DIRTY_BITS))
    raise ValueError(f"unknown policy {policy!r}")


def percentile(sorted_values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile over an already sorted sequence."""
    assert sorted_values, "percentile of empty sequence"
    assert 0.0 <= q <= 100.0
    rank = max(1, -(-int(q * len(sorted_values)) // 100))  # ceil(q*n/100), min 1
    rank = min(rank, len(sorted_values))
    return sorted_values[rank - 1]


def latency_summary(latencies: Sequence[int]) -> dict:
    if not latencies:
        return {"count": 0, "mean": 0.0, "p50": 0, "p95": 0, "max": 0}
    vals = sorted(latencies)
    return {
        "count": len(vals),
        "mean": sum(vals) / len(vals),
        "p50": percentile(vals, 50),
        "p95": percentile(vals, 95),
        "max": vals[-1],
    }


def harmonic_mean(values: Sequence[float]) -> float:
    assert values and all(v > 0 for v in values), "harmonic mean needs positive values"
    return len(values) / sum(1.0 / v for v in values)


REPORT_SCHEMA = "subtlb-run-1"


@dataclass
class RunReport:
    """Everything one simulation run produced, serialization-ready.

    per_pid maps pid -> metric dict; totals holds the same keys aggregated
    over all tenants.  Values are plain ints/floats/lists so json round-trips
    are exact.
    """

    seed: int
    policy: str
    config: dict
    per_pid: dict
    totals: dict
    schema: str = REPORT_SCHEMA

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "seed": self.seed,
            "policy": self.policy,
            "config": self.config,
            "per_pid": {str(pid): m for pid, m in sorted(self.per_pid.items())},
            "totals": self.totals,
        }


def report_json_bytes(report: RunReport) -> bytes:
    return (json.dumps(report.to_dict(), sort_keys=True,
                       separators=(",", ":")) + "\n").encode("ascii")


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_csv_bytes(report: RunReport) -> bytes:
    """Long-format CSV: one row per metric per pid ('all' = aggregate).

    List-valued metrics (CDFs) expand to one row per point with the metric
    name suffixed by the point's x value.
    """
    lines = ["pid,metric,value"]

    def emit(pid_label: str, metrics: dict):
        for name in sorted(metrics):
            value = metrics[name]
            if isinstance(value, (list, tuple)):
                for point in value:
                    if isinstance(point, (list, tuple)) and len(point) == 2:
                        lines.append(
                            f"{pid_label},{name}_le_{point[0]},{_csv_cell(point[1])}")
                    else:
                        lines.append(f"{pid_label},{name},{_csv_cell(point)}")
            elif isinstance(value, dict):
                for k in sorted(value):
                    lines.append(f"{pid_label},{name}_{k},{_csv_cell(value[k])}")
            else:
                lines.append(f"{pid_label},{name},{_csv_cell(value)}")

    for pid in sorted(report.per_pid):
        emit(str(pid), report.per_pid[pid])
    emit("all", report.totals)
    return ("\n".join(lines) + "\n").encode("ascii")
