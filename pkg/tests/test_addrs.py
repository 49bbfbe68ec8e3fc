import random

import pytest

from subtlb.addrs import (DecomposedAddress, PageConfig, TlbGeometry,
                          decompose, global_page_number, log2_exact,
                          recompose)


def test_documented_example():
    """vaddr 0x12345678 with 64 KB pages and 128 sets.

    offset = low 16 bits = 0x5678; the VPN 0x1234 splits into sub 0x4
    (low 4 bits), set 0x23 (next 7 bits) and vpb 0x2.
    """
    page = PageConfig()
    geom = TlbGeometry(128, 8, 16, 40)
    d = decompose(0x12345678, page, geom)
    assert d.offset == 0x5678
    assert d.sub_index == 0x4
    assert d.set_index == 0x23
    assert d.vpb == 0x2
    assert recompose(d, page, geom) == 0x12345678


def test_field_widths():
    page = PageConfig()
    assert page.offset_bits == 16
    assert page.sub_bits == 4
    assert page.region_bytes == 1 << 20
    geom = TlbGeometry(128, 8, 16, 40)
    assert geom.set_bits == 7
    assert geom.entries == 1024
    assert geom.total_subentries == 16384
    assert geom.reach_pages == 16384


def test_decompose_matches_div_mod():
    # independent arithmetic: repeated divmod instead of masks and shifts
    page = PageConfig()
    geom = TlbGeometry(16, 4, 16, 10)
    rng = random.Random(20260401)
    for _ in range(2000):
        vaddr = rng.randrange(1 << 48)
        d = decompose(vaddr, page, geom)
        rest, offset = divmod(vaddr, 65536)
        rest, sub = divmod(rest, 16)
        vpb, set_i = divmod(rest, 16)
        assert (d.offset, d.sub_index, d.set_index, d.vpb) == (
            offset, sub, set_i, vpb)
        assert global_page_number(d, page, geom) == vaddr // 65536


@pytest.mark.parametrize("sets,subs,page_bytes", [
    (128, 16, 65536),
    (16, 16, 65536),
    (256, 8, 65536),
    (8, 16, 4096),
])
def test_round_trip(sets, subs, page_bytes):
    page = PageConfig(page_bytes, subs)
    geom = TlbGeometry(sets, 8, subs, 40)
    rng = random.Random(f"roundtrip:{sets}:{subs}:{page_bytes}")
    for _ in range(5000):
        vaddr = rng.randrange(1 << 49)
        d = decompose(vaddr, page, geom)
        assert recompose(d, page, geom) == vaddr
        assert 0 <= d.sub_index < subs
        assert 0 <= d.set_index < sets


def test_same_region_shares_vpb_and_set():
    page = PageConfig()
    geom = TlbGeometry(128, 8, 16, 40)
    base = 0x7700000  # region-aligned vaddr: 0x7700000 >> 16 is a multiple of 16
    fields = set()
    for i in range(16):
        d = decompose(base + i * page.page_size_bytes, page, geom)
        fields.add((d.vpb, d.set_index))
        assert d.sub_index == i
    assert len(fields) == 1


def test_adjacent_regions_differ_in_set():
    page = PageConfig()
    geom = TlbGeometry(128, 8, 16, 40)
    a = decompose(0x0, page, geom)
    b = decompose(page.region_bytes, page, geom)
    assert (a.vpb, a.set_index) == (0, 0)
    assert (b.vpb, b.set_index) == (0, 1)
    wrap = decompose(page.region_bytes * geom.sets, page, geom)
    assert (wrap.vpb, wrap.set_index) == (1, 0)


def test_log2_exact_rejects_non_powers():
    assert log2_exact(1) == 0
    assert log2_exact(65536) == 16
    for bad in (0, 3, 12, -4):
        with pytest.raises(AssertionError):
            log2_exact(bad)


def test_geometry_validation():
    with pytest.raises(AssertionError):
        TlbGeometry(12, 8, 16, 40)       # sets not a power of two
    with pytest.raises(AssertionError):
        TlbGeometry(16, 0, 16, 40)       # no ways
    with pytest.raises(AssertionError):
        TlbGeometry(16, 8, 12, 40)       # sub-entries not a power of two
    TlbGeometry(16, 3, 16, 40)           # odd way counts are fine


def test_decompose_rejects_negative():
    with pytest.raises(AssertionError):
        decompose(-1, PageConfig(), TlbGeometry(16, 4, 16, 10))
