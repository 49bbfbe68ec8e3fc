"""Address arithmetic shared by every TLB model.

A virtual address is cut into fields, high bits to low:

    [ vpb | set_index | sub_index | page_offset ]

The page offset covers log2(page_size_bytes) bits, the sub-entry index
log2(region_pages) bits and the set index log2(sets) bits.  Everything above
the page offset is the virtual page number (VPN); everything above the set
index is the virtual page base (VPB), the tag one TLB entry stores.  An entry
therefore maps region_pages virtually consecutive pages: with 64 KB pages and
16 pages per region it spans an aligned 1 MB range, and sub_index picks the
page inside that range.

Physical frames are an identity mapping of the global page number, so a hit
can be checked for correctness without carrying a page table around.
"""

from __future__ import annotations

from dataclasses import dataclass


def log2_exact(value: int, label: str = "value") -> int:
    assert value > 0 and value & (value - 1) == 0, (
        f"{label} must be a positive power of two, got {value}")
    return value.bit_length() - 1


@dataclass(frozen=True)
class PageConfig:
    """Page size and the region grouping that sub-entry indices range over."""

    page_size_bytes: int = 65536
    region_pages: int = 16

    def __post_init__(self):
        log2_exact(self.page_size_bytes, "page_size_bytes")
        log2_exact(self.region_pages, "region_pages")

    @property
    def offset_bits(self) -> int:
        return self.page_size_bytes.bit_length() - 1

    @property
    def sub_bits(self) -> int:
        return self.region_pages.bit_length() - 1

    @property
    def region_bytes(self) -> int:
        return self.page_size_bytes * self.region_pages


@dataclass(frozen=True)
class TlbGeometry:
    """Shape of one set-associative TLB level.

    ways does not have to be a power of two (static partitions carve odd way
    counts), but sets and subentries_per_entry index address bits and do.
    """

    sets: int
    ways: int
    subentries_per_entry: int
    lookup_latency_cycles: int

    def __post_init__(self):
        log2_exact(self.sets, "sets")
        log2_exact(self.subentries_per_entry, "subentries_per_entry")
        assert self.ways >= 1, "ways must be >= 1"
        assert self.lookup_latency_cycles >= 1, "lookup latency must be >= 1"

    @property
    def set_bits(self) -> int:
        return self.sets.bit_length() - 1

    @property
    def entries(self) -> int:
        return self.sets * self.ways

    @property
    def total_subentries(self) -> int:
        return self.sets * self.ways * self.subentries_per_entry

    @property
    def reach_pages(self) -> int:
        # one sub-entry maps one page, so reach equals total sub-entries
        return self.total_subentries


@dataclass(frozen=True)
class RequestIdentity:
    """Who issued a translation request: the GPU instance and its process."""

    instance_id: int
    process_id: int


@dataclass(frozen=True)
class DecomposedAddress:
    vaddr: int
    offset: int
    sub_index: int
    set_index: int
    vpb: int


def decompose(vaddr: int, page: PageConfig, geom: TlbGeometry) -> DecomposedAddress:
    """Split vaddr into (vpb, set_index, sub_index, offset) for one level.

    The sub-index width comes from page.region_pages and the set-index width
    from geom.sets, so the same address decomposes differently at levels with
    different set counts.
    """
    assert vaddr >= 0, f"vaddr must be non-negative, got {vaddr:#x}"
    offset = vaddr & (page.page_size_bytes - 1)
    vpn = vaddr >> page.offset_bits
    sub_index = vpn & (page.region_pages - 1)
    set_index = (vpn >> page.sub_bits) & (geom.sets - 1)
    vpb = vpn >> (page.sub_bits + geom.set_bits)
    return DecomposedAddress(vaddr, offset, sub_index, set_index, vpb)


def recompose(d: DecomposedAddress, page: PageConfig, geom: TlbGeometry) -> int:
    """Inverse of decompose: rebuild the virtual address from its fields."""
    vpn = (((d.vpb << geom.set_bits) | d.set_index) << page.sub_bits) | d.sub_index
    return (vpn << page.offset_bits) | d.offset


def global_page_number(d: DecomposedAddress, page: PageConfig, geom: TlbGeometry) -> int:
    """Global page number of the decomposed address (vaddr >> offset_bits).

    The model's physical frame numbers are exactly these, which makes stored
    translations self-checking.
    """
    return (((d.vpb << geom.set_bits) | d.set_index) << page.sub_bits) | d.sub_index
