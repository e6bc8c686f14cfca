import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cachepart.engine import (CoreProgram, LatencyTable, MemController, System, UnmappedAddress,
                              mem_request, run)
from cachepart.geometry import KiB, platform_preset
from cachepart.partition import ratio_to_way_config
from cachepart.pmu import SYSTEM, EventId as E, check_identities, cluster_scope, core_scope
from cachepart.workloads import MODIFY, PREFETCH, READ, WRITE, AccessStream

from oracles import fifo_completions

RK = platform_preset("rk3568")
A55 = platform_preset("rk3588")
ORIN = platform_preset("orin")
C0 = core_scope(0)


def stream(core, kinds, addrs):
    return AccessStream(core, np.asarray(kinds, np.uint8), np.asarray(addrs, np.uint64))


def ev(system, e, scope=C0):
    return system.pmu.get(e, scope)


# -- memory controller ------------------------------------------------------

def test_mem_idle_request():
    ctrl = MemController(320.0, 120)
    # one quantum of 200 cycles plus the base latency
    assert mem_request(ctrl, 64, 0) == fifo_completions([0], 200, 120)[0] == 320


def test_mem_simultaneous_requests():
    ctrl = MemController(320.0, 120)
    a = mem_request(ctrl, 64, 1000)
    b = mem_request(ctrl, 64, 1000)
    assert [a, b] == fifo_completions([1000, 1000], 200, 120)
    assert b - a == ctrl.service_cycles(64)


def test_mem_saturates_at_max_bandwidth():
    ctrl = MemController(320.0, 120)
    n = 20_000
    arrivals = [k * 100 for k in range(n)]            # offered load = 2x capacity
    done = [mem_request(ctrl, 64, t) for t in arrivals]
    assert done == fifo_completions(arrivals, 200, 120)
    served = n * 64 * 1000 / (done[-1] - 120)
    assert served == pytest.approx(320.0, rel=0.01)
    assert ctrl.served_bytes == n * 64


def test_mem_request_rejects_partial_lines():
    with pytest.raises(ValueError):
        mem_request(MemController(), 32, 0)
    with pytest.raises(ValueError):
        MemController(0)


def test_latency_table_must_increase():
    with pytest.raises(ValueError):
        System(RK, LatencyTable(l1=2, l3=1))


# -- single accesses --------------------------------------------------------

def test_l1_hit_read():
    s = System(RK)
    s.access(0, READ, 0x1000)
    before = ev(s, E.L1D_REFILL)
    assert s.access(0, READ, 0x1008) == 2
    assert ev(s, E.L1D_REFILL) == before


def test_modify_of_uncached_line():
    # hand trace: L1 miss, L3 miss, one DRAM read: 30 + 200 + 120 cycles
    s = System(RK)
    assert s.access(0, MODIFY, 0x4000) == 350
    assert ev(s, E.L1D_MISS) == 1 and ev(s, E.L3D_MISS) == 1
    assert ev(s, E.MEM_ACCESS, SYSTEM) == 1
    assert ev(s, E.L1D_CACHE_REFILL_OUTER) == 1 and ev(s, E.L1D_CACHE_REFILL_INNER) == 0
    assert ev(s, E.BUS_ACCESS) == 1
    assert s.l1[0].is_dirty(0x4000 >> 6)


def test_full_line_write_does_not_fetch():
    s = System(RK)
    assert s.access(0, WRITE, 0x4000) == 2
    assert ev(s, E.MEM_ACCESS, SYSTEM) == 0
    assert s.l1[0].is_dirty(0x4000 >> 6)


def test_l1_victim_lands_in_exclusive_l3():
    s = System(RK)
    lines = [k * 128 for k in range(5)]          # one L1 set
    for ln in lines:
        s.access(0, READ, ln << 6)
    assert ev(s, E.L3D_CACHE_ALLOCATE, cluster_scope(0)) == 1
    assert lines[0] in s.l3[0] and lines[0] not in s.l1[0]
    # refill from L3 removes the line there
    s.access(0, READ, lines[0] << 6)
    assert lines[0] not in s.l3[0] and lines[0] in s.l1[0]
    assert ev(s, E.L1D_CACHE_REFILL_INNER) == 1


def test_inclusive_l2_back_invalidates_l1():
    s = System(ORIN)
    a = [(k << 23) for k in range(4)]            # L1 set 0, L2 set 0
    b = [(k << 23) | 0x8080 for k in range(4)]   # L1 set 2, still L2 set 0
    for addr in a + b:
        s.access(0, READ, addr)
    assert all(ORIN.l2.set_index(x) == 0 for x in a + b)
    victim = a[0] >> 6
    assert victim in s.l1[0] and victim in s.l2[0]
    s.access(0, READ, 8 << 23)
    assert victim not in s.l1[0] and victim not in s.l2[0]
    assert victim in s.l3[0]


def test_exclusive_l2_on_a55():
    s = System(A55)
    lines = [k * 128 for k in range(5)]
    for ln in lines:
        s.access(0, READ, ln << 6)
    assert lines[0] in s.l2[0] and lines[0] not in s.l3[0]
    s.access(0, READ, lines[0] << 6)
    assert lines[0] not in s.l2[0]
    assert ev(s, E.L2D_HIT) == 1


def test_orin_l4_is_shared_and_fills_on_refill():
    s = System(ORIN)
    s.access(0, READ, 0x10000)
    assert (0x10000 >> 6) in s.l4
    assert ev(s, E.L4D_MISS, SYSTEM) == 1
    # another cluster finds it in L4
    assert s.access(4, READ, 0x10000) == 45
    assert ev(s, E.L4D_HIT, SYSTEM) == 1


def test_prefetch_installs_in_l3_only():
    s = System(RK)
    s.access(0, PREFETCH, 0x8000)
    ln = 0x8000 >> 6
    assert ln in s.l3[0] and ln not in s.l1[0]
    assert ev(s, E.SCU_PFTCH_CPU_MISS) == 1 and ev(s, E.L3D_CACHE_ALLOCATE) == 0
    assert s.access(0, PREFETCH, 0x8000) == 30
    assert ev(s, E.SCU_PFTCH_CPU_HIT) == 1


def test_hw_prefetcher_next_line():
    s = System(RK, hw_prefetch=True)
    s.access(0, READ, 0x8000)
    assert (0x8000 >> 6) + 1 in s.l3[0]
    assert ev(s, E.SCU_PFTCH_CPU_ACCESS) == 1
    assert check_identities(s.pmu.snapshot()) == []
    # no prefetch across a page end
    s.access(0, READ, 0x8FC0)
    assert (0x9000 >> 6) not in s.l3[0]


def test_unmapped_address():
    s = System(RK)
    s.map_range(0, 0, 8 * KiB)
    s.access(0, READ, 0x1FC0)
    with pytest.raises(UnmappedAddress):
        s.access(0, READ, 0x2000)
    with pytest.raises(UnmappedAddress):
        s.access(1, READ, 2 << 30)
    with pytest.raises(ValueError):
        s.map_pages(0, [0x123])


def test_bad_kind():
    with pytest.raises(ValueError):
        System(RK).access(0, 9, 0)


# -- write streaming ----------------------------------------------------------

def _stores(system, n, base=1 << 20):
    for k in range(n):
        system.access(0, WRITE, base + 64 * k)


def test_store_1024_and_later_skip_l3():
    s = System(RK)
    _stores(s, 1023)
    alloc = ev(s, E.L3D_CACHE_ALLOCATE)
    assert alloc == 1020                                 # stores 4..1023
    mem = ev(s, E.MEM_ACCESS, SYSTEM)
    _stores(s, 2, base=(1 << 20) + 1023 * 64)
    assert ev(s, E.L3D_CACHE_ALLOCATE) == alloc
    assert ev(s, E.MEM_ACCESS, SYSTEM) == mem + 2
    assert ev(s, E.L3D_WS_MODE) > 0


def expected_levels(n):
    """Closed form for n consecutive stores into an empty A55 hierarchy."""
    return dict(l1=min(n, 3), l2=min(max(n - 3, 0), 124), l3=min(max(n - 127, 0), 896),
                mem=max(n - 1023, 0))


@settings(max_examples=25)
@given(st.integers(0, 1400))
def test_streaming_thresholds_exact(n):
    s = System(A55)
    _stores(s, n)
    want = expected_levels(n)
    assert s.l1[0].occupancy == want["l1"]
    assert s.l2[0].occupancy == want["l2"]
    assert ev(s, E.L3D_CACHE_ALLOCATE) == want["l3"]
    assert ev(s, E.MEM_ACCESS, SYSTEM) == want["mem"]


@given(st.integers(1, 200), st.sampled_from(["read", "gap"]))
def test_streaming_run_resets(n, breaker):
    s = System(A55)
    _stores(s, n)
    if breaker == "read":
        s.access(0, READ, 64)
        nxt = (1 << 20) + 64 * n
    else:
        nxt = (1 << 20) + 64 * (n + 1)
    assert s.cores[0].run == (0 if breaker == "read" else n)
    s.access(0, WRITE, nxt)
    assert s.cores[0].run == 1
    assert (nxt >> 6) in s.l1[0]


def test_streaming_disabled_keeps_allocating():
    s = System(RK, write_streaming=False)
    _stores(s, 2000)
    # 2000 dirty lines: 512 stay in L1, the rest are L1 victims allocated in L3
    assert ev(s, E.MEM_ACCESS, SYSTEM) == 0
    assert ev(s, E.L3D_CACHE_ALLOCATE) == 2000 - 512
    assert ev(s, E.L3D_WS_MODE) == 0


def test_streaming_continues_across_colored_pages():
    s = System(RK)
    pages = [k * 8 * 4096 for k in range(1, 40)]        # one color, non-contiguous
    for p in pages:
        for off in range(0, 4096, 64):
            s.access(0, WRITE, p + off)
    assert s.cores[0].run == 39 * 64


# -- runs -----------------------------------------------------------------------

def test_empty_run():
    s = System(RK)
    r = run(s, [AccessStream.empty(0)])
    assert r.cycles == {0: 0} and dict(r.snapshot.counts) == {}


def test_l1_hits_closed_form():
    s = System(RK)
    s.access(0, READ, 0)
    s.cores[0].clock = 0
    n = 500
    r = run(s, [stream(0, [READ] * n, [8 * (k % 8) for k in range(n)])])
    assert r.cycles[0] == n * 2 == r.busy[0]


def _mixed(core, seed, n=400, span=64 * KiB, base=0):
    rng = np.random.default_rng(seed)
    kinds = rng.integers(0, 4, n)
    addrs = base + rng.integers(0, span // 64, n) * 64
    return stream(core, kinds, addrs)


@pytest.mark.parametrize("platform", [RK, A55, ORIN, platform_preset("zcu102")])
@settings(max_examples=15)
@given(seed=st.integers(0, 10_000))
def test_identities_and_stall_accounting(platform, seed):
    s = System(platform, hw_prefetch=seed % 2 == 0, seed=seed)
    r = run(s, [_mixed(0, seed), _mixed(1, seed + 1, base=1 << 20)])
    assert check_identities(s.pmu.snapshot()) == []
    assert r.busy == {c: s.cores[c].busy for c in (0, 1)}
    solo = System(platform, seed=seed)
    r1 = run(solo, [_mixed(0, seed)])
    assert r1.cycles[0] == r1.busy[0]


def test_determinism():
    def once():
        buf = io.StringIO()
        s = System(RK, trace=buf)
        r = run(s, [_mixed(0, 5), _mixed(1, 6)])
        return r.cycles, dict(r.snapshot.counts), buf.getvalue()
    assert once() == once()


def test_trace_format():
    buf = io.StringIO()
    s = System(RK, trace=buf)
    s.access(0, MODIFY, 0x40)
    s.access(0, READ, 0x40)
    assert buf.getvalue().splitlines() == ["0 0 modify 0x40 MEM", "350 0 read 0x40 L1"]


def test_looping_program_needs_bound():
    s = System(RK)
    with pytest.raises(ValueError):
        run(s, [CoreProgram(_mixed(1, 1), loop=True)])
    r = run(s, [CoreProgram(_mixed(1, 1), loop=True)], max_cycles=5000)
    assert r.truncated
    r = run(s, [CoreProgram(_mixed(1, 1), loop=True, limit=1000)])
    assert r.accesses[1] == 1000 and not r.truncated


def test_loop_stops_with_finite_program():
    s = System(RK)
    v = stream(0, [READ] * 10, [64 * k for k in range(10)])
    r = run(s, [v, CoreProgram(_mixed(1, 2, base=1 << 20), loop=True)])
    assert r.accesses[0] == 10 and r.accesses[1] >= 1


def test_disjoint_colors_victim_unchanged():
    """Victim and interference both fit their color partitions: once warm, the
    interference cannot change the victim's timing."""
    v_pages = [p * 4096 for p in range(0, 64, 8)]      # color 0
    i_pages = [p * 4096 for p in range(4, 68, 8)]      # color 4
    v = stream(0, [READ] * 512, [v_pages[k % 8] + 64 * (k // 8 % 64) for k in range(512)])
    i = stream(1, [MODIFY] * 512, [i_pages[k % 8] + 64 * (k // 8 % 64) for k in range(512)])

    def victim_cycles(with_i):
        s = System(RK)
        progs = [v] + ([CoreProgram(i, loop=True)] if with_i else [])
        run(s, progs)
        for cs in s.cores:
            cs.clock = max(c.clock for c in s.cores)
        return run(s, progs).cycles[0]
    assert victim_cycles(True) == victim_cycles(False)


def test_way_partition_prevents_cross_eviction():
    regs = ratio_to_way_config("1/3", 0, 1)
    s = System(RK, regs=regs)
    big = stream(1, [MODIFY] * 20000, [(64 << 20) + 64 * k for k in range(20000)])
    v = stream(0, [READ] * 4000, [64 * k for k in range(2000)] * 2)
    run(s, [v, big])
    assert s.pmu.get(E.L3D_EVICTED_BY_OTHER, C0) == 0
    assert s.pmu.get(E.L3D_EVICT_OTHER, core_scope(1)) == 0


def test_unpartitioned_cross_eviction_is_counted():
    s = System(RK)
    v = stream(0, [READ] * 4000, [64 * k for k in range(4000)])
    big = stream(1, [MODIFY] * 20000, [(64 << 20) + 64 * k for k in range(20000)])
    run(s, [v])
    run(s, [big])
    n = s.pmu.get(E.L3D_EVICTED_BY_OTHER, C0)
    assert n > 0 and n == s.pmu.get(E.L3D_EVICT_OTHER, core_scope(1))
