import random

import pytest

from subtlb.addrs import PageConfig
from subtlb.workloads import (PatternKind, PatternSpec, TenantSpec,
                              TraceRecord, generate, interleave,
                              read_trace, rerun_until_longest, standard_mixes,
                              tenant_vaddr, write_trace)

PAGE = PageConfig()


def pages_of(records):
    return [(r.vaddr >> PAGE.offset_bits) & 0xFFFFFF for r in records]


def spec(kind, fp, accesses, **kw):
    return PatternSpec(kind, fp, accesses, **kw)


def make(pattern, pid=1, **kw):
    return TenantSpec(pid, 1, pattern, **kw)


def test_stream_wraps():
    t = make(spec(PatternKind.STREAM, 8, 20))
    assert pages_of(generate(t, 1)) == list(range(8)) * 2 + [0, 1, 2, 3]


def test_stride_is_column_sweep():
    t = make(spec(PatternKind.STRIDE, 16, 16, stride_pages=4))
    got = pages_of(generate(t, 1))
    assert got == [0, 4, 8, 12, 1, 5, 9, 13, 2, 6, 10, 14, 3, 7, 11, 15]
    # one lap covers the footprint exactly once, then repeats
    t2 = make(spec(PatternKind.STRIDE, 64, 136, stride_pages=16))
    got = pages_of(generate(t2, 1))
    assert got[:4] == [0, 16, 32, 48]
    assert sorted(got[:64]) == list(range(64))
    assert got[64:128] == got[:64]
    assert got[128:] == got[:8]


def test_block_laps_are_shuffled_block_permutations():
    t = make(spec(PatternKind.BLOCK, 32, 96, block_pages=8))
    assert t.pattern.blocks == 4
    got = pages_of(generate(t, 7))
    assert len(got) == 96
    for lap in range(3):
        chunk = got[32 * lap:32 * (lap + 1)]
        assert sorted(chunk) == list(range(32))
        starts = chunk[::8]
        assert all(s % 8 == 0 for s in starts)
        for i, start in enumerate(starts):
            assert chunk[8 * i:8 * (i + 1)] == list(range(start, start + 8))


def test_dependent_is_single_cycle():
    fp = 24
    t = make(spec(PatternKind.DEPENDENT, fp, 3 * fp))
    got = pages_of(generate(t, 3))
    assert sorted(got[:fp]) == list(range(fp))  # visits everything
    assert got[fp:2 * fp] == got[:fp]           # one cycle, repeated
    succ = {got[i]: got[i + 1] for i in range(fp - 1)}
    for i in range(fp, 3 * fp - 1):
        assert got[i + 1] == succ.get(got[i], got[0])


def test_generate_is_deterministic_and_seed_sensitive():
    t = make(spec(PatternKind.BLOCK, 64, 192, block_pages=8))
    a = generate(t, 11)
    assert a == generate(t, 11)
    b = generate(t, 12)
    assert pages_of(a) != pages_of(b)


def test_tenant_spaces_are_disjoint():
    assert tenant_vaddr(1, 5, PAGE) != tenant_vaddr(2, 5, PAGE)
    assert tenant_vaddr(3, 0, PAGE) >> PAGE.offset_bits == 3 << 24
    with pytest.raises(AssertionError):
        tenant_vaddr(1, 1 << 24, PAGE)


def test_generate_record_fields():
    t = TenantSpec(4, 2, spec(PatternKind.STREAM, 4, 6, intensity=0.5),
                   instructions_per_access=25.0, instance_id=9)
    recs = generate(t, 0)
    assert [r.tick for r in recs] == [0, 2, 4, 6, 8, 10]
    assert all(r.instance_id == 9 and r.pid == 4 for r in recs)
    assert all(r.weight_instructions == 25.0 for r in recs)
    assert all(r.measured for r in recs)
    fast = generate(make(spec(PatternKind.STREAM, 4, 6, intensity=2.0)), 0)
    assert [r.tick for r in fast] == [0, 0, 1, 1, 2, 2]


def _tiny_traces():
    a = generate(make(spec(PatternKind.STREAM, 4, 4), pid=1), 0)
    b = generate(make(spec(PatternKind.STREAM, 2, 2), pid=2), 0)
    return a, b


def test_interleave_round_robin():
    a, b = _tiny_traces()
    out = interleave([a, b])
    assert [r.pid for r in out] == [1, 2, 1, 2, 1, 1]
    assert [r.tick for r in out] == list(range(6))
    # per-tenant order preserved
    assert pages_of([r for r in out if r.pid == 1]) == pages_of(a)
    assert pages_of([r for r in out if r.pid == 2]) == pages_of(b)


def test_interleave_weighted():
    a, b = _tiny_traces()
    out = interleave([a, b], rates=[2, 1])
    assert [r.pid for r in out] == [1, 1, 2, 1, 1, 2]
    assert [r.tick for r in out] == list(range(6))


def test_rerun_until_longest_wraps_and_masks():
    long = generate(make(spec(PatternKind.STREAM, 10, 10), pid=1), 0)
    short = generate(make(spec(PatternKind.STREAM, 4, 4), pid=2), 0)
    out = rerun_until_longest([long, short])
    assert len(out) == 20
    assert [r.tick for r in out] == list(range(20))
    mine = [r for r in out if r.pid == 2]
    assert pages_of(mine) == [0, 1, 2, 3] * 2 + [0, 1]  # 2.5 laps
    assert [r.measured for r in mine] == [True] * 4 + [False] * 6
    assert all(r.measured for r in out if r.pid == 1)


def test_rerun_until_longest_weighted():
    a = generate(make(spec(PatternKind.STREAM, 3, 3), pid=1), 0)
    b = generate(make(spec(PatternKind.STREAM, 10, 10), pid=2), 0)
    out = rerun_until_longest([a, b], rates=[1, 2])
    # rounds = max(ceil(3/1), ceil(10/2)) = 5
    assert len(out) == 15
    assert [r.pid for r in out[:6]] == [1, 2, 2, 1, 2, 2]
    mine = [r for r in out if r.pid == 1]
    assert [r.measured for r in mine] == [True] * 3 + [False] * 2
    with pytest.raises(AssertionError):
        rerun_until_longest([a, []])


def test_trace_round_trip(tmp_path):
    recs = rerun_until_longest(list(_tiny_traces()))
    recs = [  # exercise non-trivial weights too
        r if i % 2 else
        TraceRecord(r.tick, r.instance_id, r.pid, r.vaddr, 2.5, r.measured)
        for i, r in enumerate(recs)]
    for name in ("t.trace", "t.trace.gz"):
        path = str(tmp_path / name)
        write_trace(path, recs)
        back = read_trace(path)
        assert len(back) == len(recs)
        for got, want in zip(back, recs):
            assert (got.tick, got.instance_id, got.pid, got.vaddr,
                    got.weight_instructions) == \
                (want.tick, want.instance_id, want.pid, want.vaddr,
                 want.weight_instructions)
            assert got.measured  # the mask is runtime-only


def test_read_trace_tolerates_comments_rejects_garbage(tmp_path):
    path = tmp_path / "x.trace"
    path.write_text("# header\n\n0 1 1 0x10000 1.0\n")
    assert len(read_trace(str(path))) == 1
    path.write_text("0 1 1 0x10000\n")
    with pytest.raises(ValueError, match="expected 5 fields"):
        read_trace(str(path))


def test_pattern_spec_validation():
    with pytest.raises(AssertionError):
        spec(PatternKind.STRIDE, 10, 10, stride_pages=4)  # no clean laps
    with pytest.raises(AssertionError):
        spec(PatternKind.STRIDE, 16, 16)  # stride missing
    with pytest.raises(AssertionError):
        spec(PatternKind.BLOCK, 16, 16, block_pages=5)
    with pytest.raises(AssertionError):
        spec(PatternKind.STREAM, 8, 8, intensity=0.0)
    with pytest.raises(AssertionError):
        spec(PatternKind.STREAM, 1 << 24, 8)
    assert spec(PatternKind.BLOCK, 16, 16, block_pages=4).blocks == 4


def test_standard_mixes_budget_and_classes():
    mixes = standard_mixes(1024)
    assert set(mixes) == {"HHH", "HHM", "HMM", "MMM", "HML", "MML",
                          "HLL", "LLM", "LLL"}
    for name, tenants in mixes.items():
        assert [t.pid for t in tenants] == [1, 2, 3]
        assert sum(t.g_units for t in tenants) <= 7
        assert [t.mpki_class for t in tenants] == list(name)
        for t in tenants:
            assert t.pattern.accesses >= t.pattern.footprint_pages
            # every tenant really generates (validates internal ratios)
            assert generate(t, 0)


def test_standard_mixes_scale_with_reach():
    big = standard_mixes(1024)["HMM"]
    small = standard_mixes(512)["HMM"]
    for b, s in zip(big, small):
        assert b.pattern.footprint_pages == 2 * s.pattern.footprint_pages
