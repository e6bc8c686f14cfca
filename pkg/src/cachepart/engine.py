"""Multi-core access engine: routing through the hierarchy, write streaming,
software prefetch, latency charging and a bandwidth-limited memory controller.

Each core has one access in flight. Cores are scheduled by their ready time
(ties go to the lower core ID), so a run is fully determined by its inputs.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, TextIO, Union

from .cache import CacheLevel
from .geometry import Inclusion, PlatformConfig
from .partition import WayPartitionRegs, allocation_mask
from .pmu import EVENT_INDEX, SYSTEM, EventId as E, Pmu, PmuSnapshot, check_identities, cluster_scope, core_scope
from .workloads import KIND_NAMES, MODIFY, PREFETCH, READ, WRITE, AccessStream


_BUS_ACCESS = EVENT_INDEX[E.BUS_ACCESS]
_L1D_CACHE_REFILL_INNER = EVENT_INDEX[E.L1D_CACHE_REFILL_INNER]
_L1D_CACHE_REFILL_OUTER = EVENT_INDEX[E.L1D_CACHE_REFILL_OUTER]
_L1D_HIT = EVENT_INDEX[E.L1D_HIT]
_L1D_LOOKUP = EVENT_INDEX[E.L1D_LOOKUP]
_L1D_MISS = EVENT_INDEX[E.L1D_MISS]
_L1D_REFILL = EVENT_INDEX[E.L1D_REFILL]
_L2D_HIT = EVENT_INDEX[E.L2D_HIT]
_L2D_LOOKUP = EVENT_INDEX[E.L2D_LOOKUP]
_L2D_MISS = EVENT_INDEX[E.L2D_MISS]
_L3D_ACCESS = EVENT_INDEX[E.L3D_ACCESS]
_L3D_CACHE_ALLOCATE = EVENT_INDEX[E.L3D_CACHE_ALLOCATE]
_L3D_DEMAND_MISS = EVENT_INDEX[E.L3D_DEMAND_MISS]
_L3D_EVICTED_BY_OTHER = EVENT_INDEX[E.L3D_EVICTED_BY_OTHER]
_L3D_EVICT_OTHER = EVENT_INDEX[E.L3D_EVICT_OTHER]
_L3D_HIT = EVENT_INDEX[E.L3D_HIT]
_L3D_LOOKUP = EVENT_INDEX[E.L3D_LOOKUP]
_L3D_MISS = EVENT_INDEX[E.L3D_MISS]
_L3D_WRITEBACK = EVENT_INDEX[E.L3D_WRITEBACK]
_L3D_WS_MODE = EVENT_INDEX[E.L3D_WS_MODE]
_L4D_HIT = EVENT_INDEX[E.L4D_HIT]
_L4D_LOOKUP = EVENT_INDEX[E.L4D_LOOKUP]
_L4D_MISS = EVENT_INDEX[E.L4D_MISS]
_MEM_ACCESS = EVENT_INDEX[E.MEM_ACCESS]
_SCU_PFTCH_CPU_ACCESS = EVENT_INDEX[E.SCU_PFTCH_CPU_ACCESS]
_SCU_PFTCH_CPU_HIT = EVENT_INDEX[E.SCU_PFTCH_CPU_HIT]
_SCU_PFTCH_CPU_MISS = EVENT_INDEX[E.SCU_PFTCH_CPU_MISS]


class UnmappedAddress(ValueError):
    pass


@dataclass(frozen=True)
class LatencyTable:
    """Load-to-use cycles for a hit at each level, and the DRAM base latency."""

    l1: int = 2
    l2: int = 10
    l3: int = 30
    l4: int = 45
    mem: int = 120

    def check(self, platform: PlatformConfig):
        seq = [self.l1]
        if platform.l2 is not None:
            seq.append(self.l2)
        seq.append(self.l3)
        if platform.l4 is not None:
            seq.append(self.l4)
        seq.append(self.mem)
        if any(b <= a for a, b in zip(seq, seq[1:])):
            raise ValueError(f"latencies must increase down the hierarchy, got {seq}")


class MemController:
    """FIFO server with a fixed byte rate and a pipelined base latency.

    A request occupies the server for ``n_bytes / max_bandwidth`` cycles
    (rounded up); its data arrives ``base_latency`` cycles after service.
    """

    def __init__(self, max_bandwidth: float = 320.0, base_latency: int = 120):
        if max_bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        self.max_bandwidth = max_bandwidth    # bytes per 1000 cycles
        self.base_latency = base_latency
        self.free_at = 0
        self.served_bytes = 0
        self.n_requests = 0

    def service_cycles(self, n_bytes: int) -> int:
        return math.ceil(n_bytes * 1000 / self.max_bandwidth - 1e-9)

    def request(self, n_bytes: int, now: int) -> tuple[int, int]:
        """Queue a transfer; return ``(service_start, completion)``."""
        start = max(now, self.free_at)
        self.free_at = start + self.service_cycles(n_bytes)
        self.served_bytes += n_bytes
        self.n_requests += 1
        return start, self.free_at + self.base_latency


def mem_request(ctrl: MemController, n_bytes: int, now_cycle: int, line_size: int = 64) -> int:
    if n_bytes <= 0 or n_bytes % line_size:
        raise ValueError("request size must be a positive multiple of the line size")
    return ctrl.request(n_bytes, now_cycle)[1]


@dataclass
class CoreState:
    core: int
    cluster: int
    allowed: int            # L3 allocation way mask
    clock: int = 0
    busy: int = 0
    run: int = 0            # consecutive full-line store count
    last_store: int = -2
    accesses: int = 0


class System:
    """One simulated SoC instance: caches, counters and memory controller."""

    def __init__(self, platform: PlatformConfig, latency: Optional[LatencyTable] = None,
                 mem: Optional[MemController] = None,
                 write_streaming: Union[bool, tuple[bool, bool, bool]] = True,
                 hw_prefetch: bool = False, seed: int = 0,
                 regs: Optional[WayPartitionRegs] = None, trace: Optional[TextIO] = None,
                 write_buffer: int = 4,
                 check_identities_on_run: bool = True):
        self.platform = p = platform
        self.lat = latency or LatencyTable()
        self.lat.check(p)
        self.mem = mem or MemController(base_latency=self.lat.mem)
        if isinstance(write_streaming, bool):
            write_streaming = (write_streaming,) * 3
        th = p.streaming_thresholds
        big = 1 << 62
        self.ws_thresholds = tuple(t if (th and on) else big
                                   for t, on in zip(th or (0, 0, 0), write_streaming))
        self.hw_prefetch = hw_prefetch
        # posted writebacks: a core stalls only while the controller backlog
        # ahead of its writeback exceeds this many line transfers
        self.wb_slack = write_buffer * self.mem.service_cycles(p.line_size)
        self.trace = trace
        self.check_on_run = check_identities_on_run
        self.pmu = Pmu()
        self.line_bits = p.line_size.bit_length() - 1
        self.page_bits = p.page_size.bit_length() - 1
        self.lines_per_page = p.page_size // p.line_size
        self.mem_lines = p.mem_size >> self.line_bits

        n = p.n_cores
        self.cores = [CoreState(c, p.cluster_of(c), 0) for c in range(n)]
        self.l1 = [CacheLevel(p.l1, seed=seed * 7919 + c, name=f"L1[{c}]") for c in range(n)]
        self.l2 = [CacheLevel(p.l2, seed=seed * 7919 + 100 + c, name=f"L2[{c}]")
                   for c in range(n)] if p.l2 else None
        self.l3 = [CacheLevel(p.l3, seed=seed * 7919 + 200 + k, name=f"L3[{k}]")
                   for k in range(len(p.clusters))]
        self.l4 = CacheLevel(p.l4, seed=seed * 7919 + 300, name="L4") if p.l4 else None
        self.l2_inclusive = bool(p.l2 and p.l2.inclusion is Inclusion.INCLUSIVE)
        self.l3_exclusive = p.l3.inclusion is Inclusion.EXCLUSIVE_VICTIM
        self.l3_inclusive = p.l3.inclusion is Inclusion.INCLUSIVE
        self.mapped: list[Optional[set[int]]] = [None] * n
        self._cb = [self.pmu.bank(core_scope(c)) for c in range(n)]
        self._kb = [self.pmu.bank(cluster_scope(self.cores[c].cluster)) for c in range(n)]
        self._sb = self.pmu.bank(SYSTEM)
        self.set_partition(regs)
        self._wb_start = -1
        self._served = ""

    # -- configuration -------------------------------------------------------
    def set_partition(self, regs: Optional[WayPartitionRegs]):
        self.regs = regs
        full = (1 << self.platform.l3.n_ways) - 1
        for cs in self.cores:
            cs.allowed = full if regs is None or cs.core not in regs.thread_sid \
                else allocation_mask(regs, cs.core)

    def map_pages(self, core: int, pages: Iterable[int]):
        s = self.mapped[core]
        if s is None:
            s = self.mapped[core] = set()
        for pg in pages:
            if pg % self.platform.page_size:
                raise ValueError(f"page {pg:#x} not page aligned")
            s.add(pg >> self.page_bits)

    def map_range(self, core: int, base: int, n_bytes: int):
        ps = self.platform.page_size
        self.map_pages(core, range(base - base % ps, base + n_bytes, ps))

    # -- counters --------------------------------------------------------------
    def _core(self, c: int, ev: int, d: int = 1):
        self._cb[c][ev] += d

    def _dsu(self, c: int, ev: int, d: int = 1):
        self._kb[c][ev] += d
        self._cb[c][ev] += d

    def _sys(self, c: int, ev: int, d: int = 1):
        self._sb[ev] += d
        self._cb[c][ev] += d

    def snapshot(self) -> PmuSnapshot:
        return self.pmu.snapshot(max(cs.clock for cs in self.cores))

    # -- memory side -----------------------------------------------------------
    def _mem_write(self, c: int, t: int):
        self._sys(c, _MEM_ACCESS)
        start, _ = self.mem.request(self.platform.line_size, t)
        start -= self.wb_slack
        if start > self._wb_start:
            self._wb_start = start

    def _mem_read(self, c: int, t: int) -> int:
        self._sys(c, _MEM_ACCESS)
        return self.mem.request(self.platform.line_size, t)[1]

    def _beyond_l3(self, c: int, line: int, now: int) -> int:
        """Fetch a line from L4 or DRAM; return the completion time."""
        l4 = self.l4
        if l4 is not None:
            self._sys(c, _L4D_LOOKUP)
            if l4.lookup(line) is not None:
                self._sys(c, _L4D_HIT)
                self._served = "L4"
                return now + self.lat.l4
            self._sys(c, _L4D_MISS)
            t = now + self.lat.l4
            done = self._mem_read(c, t)
            ev = l4.fill(line, None, c)
            if ev is not None and ev[1]:
                self._mem_write(c, t)
            self._served = "MEM"
            return done
        self._served = "MEM"
        return self._mem_read(c, now + self.lat.l3)

    def _write_beyond_l3(self, c: int, line: int, t: int):
        l4 = self.l4
        if l4 is None:
            self._mem_write(c, t)
        elif line in l4:
            l4.mark_dirty(line)
        else:
            ev = l4.fill(line, None, c, dirty=True)
            if ev is not None and ev[1]:
                self._mem_write(c, t)

    # -- eviction chain --------------------------------------------------------
    def _l3_evicted(self, c: int, ev: tuple[int, bool, int], t: int):
        line, dirty, owner = ev
        if owner >= 0 and owner != c:
            self._dsu(c, _L3D_EVICT_OTHER)
            self._dsu(owner, _L3D_EVICTED_BY_OTHER)
        if self.l3_inclusive:
            for cc in self.platform.clusters[self.cores[c].cluster]:
                if self.l2 is not None:
                    dirty |= self.l2[cc].invalidate(line)
                dirty |= self.l1[cc].invalidate(line)
        if dirty:
            self._dsu(c, _L3D_WRITEBACK)
            self._dsu(c, _BUS_ACCESS)
            self._write_beyond_l3(c, line, t)

    def _l3_insert(self, c: int, line: int, dirty: bool, t: int):
        """A line evicted from the private levels arrives at L3."""
        l3 = self.l3[self.cores[c].cluster]
        self._dsu(c, _L3D_ACCESS)
        if line in l3:
            if dirty:
                l3.mark_dirty(line)
            return
        self._dsu(c, _L3D_CACHE_ALLOCATE)
        ev = l3.fill(line, self.cores[c].allowed, c, dirty)
        if ev is not None:
            self._l3_evicted(c, ev, t)

    def _l2_evicted(self, c: int, ev: tuple[int, bool, int], t: int):
        line, dirty, _ = ev
        if self.l2_inclusive:
            dirty |= self.l1[c].invalidate(line)
        self._l3_insert(c, line, dirty, t)

    def _l2_fill(self, c: int, line: int, dirty: bool, t: int):
        ev = self.l2[c].fill(line, None, c, dirty)
        if ev is not None:
            self._l2_evicted(c, ev, t)

    def _l1_evicted(self, c: int, line: int, dirty: bool, t: int):
        if self.l2 is None:
            self._l3_insert(c, line, dirty, t)
        elif self.l2_inclusive:
            if dirty:
                self.l2[c].mark_dirty(line)
        else:
            self._l2_fill(c, line, dirty, t)

    def _l1_fill(self, c: int, line: int, dirty: bool, t: int):
        ev = self.l1[c].fill(line, None, c, dirty)
        if ev is not None:
            self._l1_evicted(c, ev[0], ev[1], t)

    # -- access kinds ----------------------------------------------------------
    def _load(self, c: int, line: int, now: int, modify: bool) -> int:
        lat = self.lat
        self._core(c, _L1D_LOOKUP)
        l1 = self.l1[c]
        if l1.lookup(line) is not None:
            self._core(c, _L1D_HIT)
            if modify:
                l1.dirty.add(line)
            self._served = "L1"
            return lat.l1
        self._core(c, _L1D_MISS)
        self._core(c, _L1D_REFILL)
        if self.l2 is not None:
            l2 = self.l2[c]
            self._core(c, _L2D_LOOKUP)
            if l2.lookup(line) is not None:
                self._core(c, _L2D_HIT)
                self._core(c, _L1D_CACHE_REFILL_INNER)
                dirty = False if self.l2_inclusive else l2.invalidate(line)
                self._served = "L2"
                self._l1_fill(c, line, dirty or modify, now + lat.l2)
                return lat.l2
            self._core(c, _L2D_MISS)
        cs = self.cores[c]
        l3 = self.l3[cs.cluster]
        self._dsu(c, _L3D_ACCESS)
        self._dsu(c, _L3D_LOOKUP)
        t_ev = now + lat.l3
        if l3.lookup(line) is not None:
            self._dsu(c, _L3D_HIT)
            self._core(c, _L1D_CACHE_REFILL_INNER)
            dirty = l3.invalidate(line) if self.l3_exclusive else False
            self._served = "L3"
            done = now + lat.l3
        else:
            self._dsu(c, _L3D_MISS)
            self._dsu(c, _L3D_DEMAND_MISS)
            self._dsu(c, _BUS_ACCESS)
            self._core(c, _L1D_CACHE_REFILL_OUTER)
            dirty = False
            done = self._beyond_l3(c, line, now)
            if not self.l3_exclusive:
                ev = l3.fill(line, cs.allowed, c)
                if ev is not None:
                    self._l3_evicted(c, ev, t_ev)
            if self.hw_prefetch:
                self._hw_prefetch(c, line + 1, t_ev)
        if self.l2_inclusive:
            self._l2_fill(c, line, dirty, t_ev)
            dirty = False
        self._l1_fill(c, line, dirty or modify, t_ev)
        return done - now

    def _store(self, c: int, line: int, now: int, run: int) -> int:
        """Full-line store: write-allocate without fetch unless streaming."""
        lat = self.lat
        th = self.ws_thresholds
        byp1, byp2, byp3 = run >= th[0], run >= th[1], run >= th[2]
        l1 = self.l1[c]
        self._core(c, _L1D_LOOKUP)
        if l1.lookup(line) is not None:
            self._core(c, _L1D_HIT)
            l1.dirty.add(line)
            self._served = "L1"
            return lat.l1
        self._core(c, _L1D_MISS)
        l2 = self.l2[c] if self.l2 is not None else None
        t_ev = now + lat.l3
        if l2 is not None:
            self._core(c, _L2D_LOOKUP)
            if l2.lookup(line) is not None:
                self._core(c, _L2D_HIT)
                if byp1:
                    l2.dirty.add(line)
                    self._served = "L2"
                    return lat.l2
                if not self.l2_inclusive:
                    l2.invalidate(line)
                self._served = "L1"
                self._l1_fill(c, line, True, t_ev)
                return lat.l1
            self._core(c, _L2D_MISS)
        cs = self.cores[c]
        l3 = self.l3[cs.cluster]
        self._dsu(c, _L3D_ACCESS)
        self._dsu(c, _L3D_LOOKUP)
        if l3.lookup(line) is not None:
            self._dsu(c, _L3D_HIT)
            if byp1 and (l2 is None or byp2):
                l3.dirty.add(line)
                self._served = "L3"
                return lat.l3
            if self.l3_exclusive:
                l3.invalidate(line)
        else:
            self._dsu(c, _L3D_MISS)
            if byp3 and (l2 is None or byp2) and byp1:
                self._dsu(c, _L3D_DEMAND_MISS)
                self._dsu(c, _BUS_ACCESS)
                if self.l4 is not None:
                    self._write_beyond_l3(c, line, t_ev)
                    self._served = "L4"
                    return lat.l4
                self._served = "MEM"
                _, done = self.mem.request(self.platform.line_size, t_ev)
                self._sys(c, _MEM_ACCESS)
                return done - now
            if byp1 and (l2 is None or byp2):
                self._dsu(c, _L3D_CACHE_ALLOCATE)
                ev = l3.fill(line, cs.allowed, c, dirty=True)
                if ev is not None:
                    self._l3_evicted(c, ev, t_ev)
                self._served = "L3"
                return lat.l3
        if byp1:
            # L1 streaming, L2 still allocates
            self._l2_fill(c, line, True, t_ev)
            self._served = "L2"
            return lat.l2
        if self.l2_inclusive:
            self._l2_fill(c, line, False, t_ev)
        self._l1_fill(c, line, True, t_ev)
        self._served = "L1"
        return lat.l1

    def _prefetch(self, c: int, line: int, now: int) -> int:
        lat = self.lat
        cs = self.cores[c]
        self._dsu(c, _SCU_PFTCH_CPU_ACCESS)
        self._dsu(c, _L3D_ACCESS)
        if line in self.l1[c] or (self.l2 is not None and line in self.l2[c]):
            self._dsu(c, _SCU_PFTCH_CPU_HIT)
            self._served = "L1"
            return lat.l1
        l3 = self.l3[cs.cluster]
        self._dsu(c, _L3D_LOOKUP)
        if l3.lookup(line) is not None:
            self._dsu(c, _L3D_HIT)
            self._dsu(c, _SCU_PFTCH_CPU_HIT)
            self._served = "L3"
            return lat.l3
        self._dsu(c, _L3D_MISS)
        self._dsu(c, _SCU_PFTCH_CPU_MISS)
        self._dsu(c, _BUS_ACCESS)
        done = self._beyond_l3(c, line, now)
        ev = l3.fill(line, cs.allowed, c)
        if ev is not None:
            self._l3_evicted(c, ev, now + lat.l3)
        return done - now

    def _hw_prefetch(self, c: int, line: int, t: int):
        """Next-line L3 prefetch within the page; costs bandwidth, not latency."""
        if line % self.lines_per_page == 0:
            return
        m = self.mapped[c]
        if m is not None and (line >> (self.page_bits - self.line_bits)) not in m:
            return
        if line in self.l1[c] or (self.l2 is not None and line in self.l2[c]):
            return
        l3 = self.l3[self.cores[c].cluster]
        self._dsu(c, _SCU_PFTCH_CPU_ACCESS)
        self._dsu(c, _L3D_ACCESS)
        self._dsu(c, _L3D_LOOKUP)
        if l3.lookup(line) is not None:
            self._dsu(c, _L3D_HIT)
            self._dsu(c, _SCU_PFTCH_CPU_HIT)
            return
        self._dsu(c, _L3D_MISS)
        self._dsu(c, _SCU_PFTCH_CPU_MISS)
        self._dsu(c, _BUS_ACCESS)
        saved = self._served
        self._beyond_l3(c, line, t - self.lat.l3)
        self._served = saved
        ev = l3.fill(line, self.cores[c].allowed, c)
        if ev is not None:
            self._l3_evicted(c, ev, t)

    def access(self, core: int, kind: int, addr: int, now: Optional[int] = None) -> int:
        """Perform one access and return its latency in cycles."""
        cs = self.cores[core]
        if now is None:
            now = cs.clock
        line = addr >> self.line_bits
        if not 0 <= line < self.mem_lines:
            raise UnmappedAddress(f"address {addr:#x} outside physical memory")
        m = self.mapped[core]
        if m is not None and (addr >> self.page_bits) not in m:
            raise UnmappedAddress(f"core {core}: address {addr:#x} is not mapped")
        if kind == WRITE:
            last = cs.last_store
            lpp = self.lines_per_page
            if line == last + 1 or (last % lpp == lpp - 1 and line % lpp == 0 and last >= 0):
                # colored buffers continue the run across a page boundary
                cs.run += 1
            else:
                cs.run = 1
            cs.last_store = line
        else:
            cs.run = 0
            cs.last_store = -2
        self._wb_start = -1
        if kind == READ:
            lat = self._load(core, line, now, False)
        elif kind == MODIFY:
            lat = self._load(core, line, now, True)
        elif kind == WRITE:
            lat = self._store(core, line, now, cs.run)
        elif kind == PREFETCH:
            lat = self._prefetch(core, line, now)
        else:
            raise ValueError(f"bad access kind {kind}")
        if self._wb_start > now + lat:
            # write buffer full: wait until the writeback drains into it
            lat = self._wb_start - now
        if kind == WRITE and cs.run >= self.ws_thresholds[2]:
            self._core(core, _L3D_WS_MODE, lat)
        cs.clock = now + lat
        cs.busy += lat
        cs.accesses += 1
        if self.trace is not None:
            self.trace.write(f"{now} {core} {KIND_NAMES[kind]} {addr:#x} {self._served}\n")
        return lat

    def check(self) -> list[str]:
        return check_identities(self.pmu.snapshot())


# ---------------------------------------------------------------------------

@dataclass
class CoreProgram:
    """A stream plus a cursor; ``loop`` streams restart and never end a run."""

    stream: AccessStream
    loop: bool = False
    limit: Optional[int] = None     # stop after this many accesses
    pos: int = 0
    issued: int = 0

    @property
    def core(self) -> int:
        return self.stream.core


@dataclass
class RunResult:
    cycles: dict[int, int]          # per core: finish time - start time
    busy: dict[int, int]            # per core: sum of access latencies
    accesses: dict[int, int]
    snapshot: PmuSnapshot           # counter deltas over the run
    start: dict[int, int]
    end: int
    truncated: bool = False


def run(system: System, streams: Union[Mapping[int, AccessStream], Iterable],
        max_cycles: Optional[int] = None) -> RunResult:
    """Interleave the programs until every non-looping one finishes.

    With only looping programs the run ends when each hits its ``limit``
    (or at ``max_cycles``); unbounded loops alone need ``max_cycles``.
    """
    if isinstance(streams, Mapping):
        streams = streams.values()
    programs = [s if isinstance(s, CoreProgram) else CoreProgram(s) for s in streams]
    cores = [p.core for p in programs]
    if len(set(cores)) != len(cores):
        raise ValueError("one program per core")
    if (max_cycles is None and programs and all(p.loop for p in programs)
            and any(p.limit is None for p in programs)):
        raise ValueError("unbounded looping programs need max_cycles")
    before = system.pmu.snapshot()
    cs_all = system.cores
    start = {c: cs_all[c].clock for c in cores}
    busy0 = {c: cs_all[c].busy for c in cores}
    acc0 = {c: cs_all[c].accesses for c in cores}
    t_begin = min(start.values(), default=0)
    finish = dict(start)
    prog = {p.core: p for p in programs}

    def live(p: CoreProgram) -> bool:
        if p.limit is not None and p.issued >= p.limit:
            return False
        return p.pos < len(p.stream) or (p.loop and len(p.stream) > 0)

    has_finite = any(not p.loop for p in programs)
    pending = {p.core for p in programs if not p.loop and live(p)}
    heap = [(start[p.core], p.core) for p in programs if live(p)]
    heapq.heapify(heap)
    truncated = False
    access = system.access
    end = t_begin
    while heap and (pending or not has_finite):
        t, c = heapq.heappop(heap)
        if max_cycles is not None and t - t_begin >= max_cycles:
            truncated = True
            break
        p = prog[c]
        kinds, addrs = p.stream.as_lists()
        i = p.pos
        t += access(c, kinds[i], addrs[i], t)
        if t > end:
            end = t
        p.issued += 1
        i += 1
        if i == len(kinds) and p.loop:
            i = 0
        p.pos = i
        finish[c] = t
        if live(p):
            heapq.heappush(heap, (t, c))
        else:
            pending.discard(c)
    snap = system.pmu.snapshot(end) - before
    if system.check_on_run:
        bad = check_identities(snap)
        if bad:
            raise AssertionError("counter identities violated: " + "; ".join(bad))
    return RunResult(
        cycles={c: finish[c] - start[c] for c in cores},
        busy={c: cs_all[c].busy - busy0[c] for c in cores},
        accesses={c: cs_all[c].accesses - acc0[c] for c in cores},
        snapshot=snap,
        start=start,
        end=end,
        truncated=truncated,
    )
