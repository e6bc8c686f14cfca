"""Experiment grid: baselines, partitioned co-runs, slowdowns and reports."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .engine import CoreProgram, LatencyTable, MemController, System, run
from .geometry import KiB, MiB, PlatformConfig, color_count
from .partition import (PartitionError, WayPartitionRegs, allocate_colored_pages,
                        color_config_for, parse_ratio, ratio_to_way_config)
from .pmu import ALL_EVENTS, EventId, PmuSnapshot, core_scope
from .workloads import (KIND_NAMES, InterferenceSpec, PageMap, VictimSpec, gen_interference,
                        gen_victim)

MODES = ("None", "Way", "Set")
KINDS = ("read", "write", "modify", "prefetch")
DEFAULT_WSS = tuple(8 * KiB << k for k in range(11))     # 8 KiB .. 8 MiB

CSV_HEADER = ["platform", "mode", "ratio", "kind", "wss_kib", "victim_cycles", "slowdown"] + \
    [e.name for e in ALL_EVENTS]

VICTIM_BASE = 16 * MiB
INTERFERENCE_BASE = 256 * MiB


@dataclass(frozen=True)
class RunSettings:
    """Knobs shared by every cell of an experiment."""

    latency: LatencyTable = LatencyTable()
    max_bandwidth: float = 320.0
    write_streaming: tuple[bool, bool, bool] = (True, True, True)
    hw_prefetch: bool = False
    seed: int = 0

    def system(self, platform: PlatformConfig, regs: Optional[WayPartitionRegs] = None) -> System:
        mem = MemController(self.max_bandwidth, self.latency.mem)
        return System(platform, self.latency, mem, write_streaming=self.write_streaming,
                      hw_prefetch=self.hw_prefetch, seed=self.seed, regs=regs)


def default_victim_wss(platform: PlatformConfig) -> int:
    """Private capacity plus an eighth of the LLC: spills into, but fits, the LLC."""
    return platform.private_capacity() + platform.l3.capacity // 8


@dataclass(frozen=True)
class SweepGrid:
    platform: PlatformConfig
    modes: tuple[str, ...] = MODES
    ratios: tuple[str, ...] = ("1/3", "2/2", "3/1")
    kinds: tuple[str, ...] = KINDS
    wss: tuple[int, ...] = DEFAULT_WSS
    victim: Optional[VictimSpec] = None
    repetitions: int = 1
    victim_core: int = 0
    interference_core: int = 1

    def __post_init__(self):
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}")
        for k in self.kinds:
            if k not in KIND_NAMES:
                raise ValueError(f"unknown interference kind {k!r}")
        if not self.wss:
            raise ValueError("empty WSS grid")
        for r in self.ratios:
            parse_ratio(r)
        n = self.platform.n_cores
        if not (0 <= self.victim_core < n and 0 <= self.interference_core < n) \
                or self.victim_core == self.interference_core:
            raise ValueError("victim and interference need two distinct cores")

    @property
    def victim_spec(self) -> VictimSpec:
        return self.victim or VictimSpec(default_victim_wss(self.platform))

    def check_span(self) -> list[str]:
        """Warnings when the WSS axis does not bracket L1 and 2x the LLC."""
        p = self.platform
        llc = p.l4.capacity if p.l4 else p.l3.capacity
        out = []
        if min(self.wss) >= p.l1.capacity:
            out.append("smallest WSS is not below the L1 size")
        if max(self.wss) < 2 * llc:
            out.append("largest WSS is below twice the LLC size")
        return out

    def cells(self) -> list[tuple[str, str, str, int]]:
        out = []
        for mode in self.modes:
            for ratio in (("No",) if mode == "None" else self.ratios):
                for kind in self.kinds:
                    for w in self.wss:
                        out.append((mode, ratio, kind, w))
        return out


@dataclass
class CellResult:
    mode: str
    ratio: str
    kind: str
    wss: int
    victim_cycles: int
    slowdown: float
    snapshot: PmuSnapshot          # victim core, timed pass only
    interference: PmuSnapshot      # interference core, timed pass only
    total: PmuSnapshot             # whole cell including warmup, all scopes
    truncated: bool = False


@dataclass
class SweepReport:
    platform: str
    baseline: CellResult
    rows: list[CellResult] = field(default_factory=list)
    wss: tuple[int, ...] = DEFAULT_WSS

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in [self.baseline] + self.rows:
            w.writerow([self.platform, r.mode, r.ratio, r.kind, r.wss // KiB, r.victim_cycles,
                        f"{r.slowdown:.6f}"] + [r.snapshot.get(e, _VS) for e in ALL_EVENTS])
        return buf.getvalue()

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "ratio", "kind", "wss_kib", "slowdown"])
        for r in sorted(self.rows, key=lambda r: (r.mode, r.ratio, r.kind, r.wss)):
            w.writerow([r.mode, r.ratio, r.kind, r.wss // KiB, f"{r.slowdown:.6f}"])
        return buf.getvalue()


# the per-core scope is renamed to the victim's in reports
_VS = core_scope(0)


def _scoped(snap: PmuSnapshot, core: int) -> PmuSnapshot:
    return PmuSnapshot({(_VS, e): v for (s, e), v in snap.counts.items() if s == core_scope(core)},
                       snap.cycle)


def way_layout(platform: PlatformConfig) -> tuple[int, int]:
    """(groups, ways per group) used for ratio configs.

    Always four groups so every ratio is representable; a 12-way cache gets
    logical groups of three ways.
    """
    if not platform.way_partitioning:
        raise PartitionError(f"{platform.name}: no way-partitioning support")
    n = platform.l3.n_ways
    if n % 4:
        raise PartitionError(f"{platform.name}: {n} ways do not split into four groups")
    return 4, n // 4


def _placement(platform: PlatformConfig, mode: str, ratio: str, vc: int, ic: int,
               v_bytes: int, i_bytes: int, system: System) -> tuple[PageMap, PageMap]:
    ps = platform.page_size
    if mode == "Set":
        assign = color_config_for(platform, ratio, vc, ic)
        pv = PageMap(tuple(allocate_colored_pages(assign, vc, max(v_bytes, ps))), ps)
        pi = PageMap(tuple(allocate_colored_pages(assign, ic, max(i_bytes, ps))), ps)
    else:
        pv = PageMap.contiguous(VICTIM_BASE, max(v_bytes, ps), ps)
        pi = PageMap.contiguous(INTERFERENCE_BASE, max(i_bytes, ps), ps)
    system.map_pages(vc, pv.pages)
    system.map_pages(ic, pi.pages)
    return pv, pi


def _regs(platform: PlatformConfig, mode: str, ratio: str, vc: int, ic: int):
    if mode != "Way":
        return None
    g, w = way_layout(platform)
    return ratio_to_way_config(ratio, vc, ic, n_groups=g, ways_per_group=w)


def total_cache_lines(platform: PlatformConfig) -> int:
    return sum(g.capacity for _, g in platform.levels()) // platform.line_size


def _sync(system: System, cores: Sequence[int]):
    t = max(system.cores[c].clock for c in cores)
    for c in cores:
        system.cores[c].clock = t


def run_baseline(platform: PlatformConfig, victim: VictimSpec,
                 settings: RunSettings = RunSettings(), victim_core: int = 0) -> CellResult:
    """Victim alone with the whole LLC: one warmup pass, one timed pass."""
    system = settings.system(platform)
    pv = PageMap.contiguous(VICTIM_BASE, max(victim.working_set_bytes, platform.page_size),
                            platform.page_size)
    system.map_pages(victim_core, pv.pages)
    v = gen_victim(victim, pv, victim_core)
    run(system, [v])
    r = run(system, [v])
    return CellResult("baseline", "-", "-", 0, r.cycles.get(victim_core, 0), 1.0,
                      _scoped(r.snapshot, victim_core), PmuSnapshot({}),
                      system.pmu.snapshot(r.end), r.truncated)


def run_cell(platform: PlatformConfig, mode: str, ratio: str, kind: str, wss: int,
             victim: VictimSpec, settings: RunSettings = RunSettings(),
             baseline_cycles: Optional[int] = None, victim_core: int = 0,
             interference_core: int = 1, max_cycles: Optional[int] = None) -> CellResult:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    ratio = parse_ratio(ratio) if mode != "None" else "No"
    if mode != "None" and ratio == "No":
        raise PartitionError(f"mode {mode} needs a ratio")
    vc, ic = victim_core, interference_core
    regs = _regs(platform, mode, ratio, vc, ic)
    system = settings.system(platform, regs)
    pv, pi = _placement(platform, mode, ratio, vc, ic, victim.working_set_bytes, wss, system)
    v = gen_victim(victim, pv, vc)
    i = gen_interference(InterferenceSpec(kind, wss), pi, ic)

    warm = min(len(i), 2 * total_cache_lines(platform))
    run(system, [CoreProgram(i, loop=True, limit=warm)])
    ip = CoreProgram(i, loop=True, pos=warm % len(i))
    _sync(system, (vc, ic))
    run(system, [v, ip], max_cycles)
    _sync(system, (vc, ic))
    r = run(system, [v, ip], max_cycles)
    cyc = r.cycles.get(vc, 0)
    if baseline_cycles is None:
        baseline_cycles = run_baseline(platform, victim, settings, vc).victim_cycles
    slow = cyc / baseline_cycles if baseline_cycles else 1.0
    return CellResult(mode, ratio, kind, wss, cyc, slow, _scoped(r.snapshot, vc),
                      _scoped(r.snapshot, ic), system.pmu.snapshot(r.end), r.truncated)


def _cell_job(args):
    grid, settings, base, cell = args
    mode, ratio, kind, w = cell
    return run_cell(grid.platform, mode, ratio, kind, w, grid.victim_spec, settings, base,
                    grid.victim_core, grid.interference_core)


def sweep(grid: SweepGrid, settings: RunSettings = RunSettings(), threads: int = 1,
          progress=None) -> SweepReport:
    """Run every cell; rows come back in grid order regardless of ``threads``."""
    base = run_baseline(grid.platform, grid.victim_spec, settings, grid.victim_core)
    jobs = [(grid, settings, base.victim_cycles, c) for c in grid.cells()]
    rows: list[CellResult] = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            for r in ex.map(_cell_job, jobs):
                rows.append(r)
                if progress:
                    progress(len(rows), len(jobs))
    else:
        for j in jobs:
            rows.append(_cell_job(j))
            if progress:
                progress(len(rows), len(jobs))
    return SweepReport(grid.platform.name, base, rows, grid.wss)


def max_slowdown_table(report: SweepReport, victim_label: str = "victim") -> dict:
    """Max slowdown over the WSS axis per (victim, mode, ratio, kind)."""
    by: dict[tuple, dict[int, float]] = {}
    for r in report.rows:
        by.setdefault((victim_label, r.mode, r.ratio, r.kind), {})[r.wss] = r.slowdown
    want = set(report.wss)
    for key, pts in by.items():
        if set(pts) != want:
            missing = sorted(want - set(pts))
            raise ValueError(f"incomplete grid for {key}: missing WSS {missing}")
    return {k: max(v.values()) for k, v in sorted(by.items())}


def max_slowdown_csv(table: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["victim", "mode", "ratio", "kind", "max_slowdown"])
    for (vl, mode, ratio, kind), v in table.items():
        w.writerow([vl, mode, ratio, kind, f"{v:.6f}"])
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def max_slowdown_from_rows(rows: list[dict]) -> dict:
    out: dict[tuple, float] = {}
    for r in rows:
        if r["mode"] == "baseline":
            continue
        key = ("victim", r["mode"], r["ratio"], r["kind"])
        out[key] = max(out.get(key, 0.0), float(r["slowdown"]))
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandwidthPoint:
    wss: int
    bus_accesses: int
    cycles: int
    bytes_per_kcycle: float
    mb_per_s: float


def bandwidth_profile(platform: PlatformConfig, wss_list: Sequence[int], kind: str = "modify",
                      mode: str = "None", ratio: str = "No",
                      settings: RunSettings = RunSettings(), core: int = 1,
                      window: Optional[int] = None) -> list[BandwidthPoint]:
    """Interference alone under its own partition: BUS_ACCESS-derived bandwidth."""
    from .pmu import normalized_bandwidth
    out = []
    other = 0 if core != 0 else 1
    for wss in wss_list:
        regs = _regs(platform, mode, ratio, other, core) if mode == "Way" else None
        system = settings.system(platform, regs)
        _, pi = _placement(platform, mode, ratio, other, core, platform.page_size, wss, system)
        s = gen_interference(InterferenceSpec(kind, wss), pi, core)
        warm = max(len(s), 2 * total_cache_lines(platform))
        n = window or max(len(s), 16384)
        prog = CoreProgram(s, loop=True, limit=warm)
        run(system, [prog])
        prog.limit = warm + n
        r = run(system, [prog])
        bus = r.snapshot.get(EventId.BUS_ACCESS, core_scope(core))
        cyc = r.cycles[core]
        out.append(BandwidthPoint(wss, bus, cyc, bus * platform.line_size * 1000 / cyc,
                                  normalized_bandwidth(bus, platform.line_size, cyc,
                                                       platform.freq_hz)))
    return out


# ---------------------------------------------------------------------------
# coloring probe and strided conflict benchmark

@dataclass(frozen=True)
class ProbePoint:
    size: int
    misses: int
    max_misses: int

    @property
    def miss_ratio(self) -> float:
        return self.misses / self.max_misses


def run_probe(platform: PlatformConfig, sizes: Sequence[int], color: int = 0,
              settings: RunSettings = RunSettings(), core: int = 0) -> list[ProbePoint]:
    """Two prefetch passes over ``size`` bytes of one color; pass-2 misses."""
    from .workloads import coloring_probe, huge_pages_needed
    ps = platform.page_size
    out = []
    for size in sizes:
        n_chunks = size // ps
        if n_chunks <= 0:
            raise ValueError(f"probe size {size} is below one page")
        hp = huge_pages_needed(platform.l3, n_chunks, ps, platform.huge_page_size)
        pr = coloring_probe(platform.l3, color, n_chunks, ps, platform.huge_page_size,
                            huge_base=platform.huge_page_size, huge_pages=hp, core=core)
        system = settings.system(platform)
        run(system, [pr.pass1])
        r = run(system, [pr.pass2])
        out.append(ProbePoint(size, r.snapshot.get(EventId.SCU_PFTCH_CPU_MISS, core_scope(core)),
                              pr.max_misses))
    return out


@dataclass(frozen=True)
class StridedPoint:
    sets: int
    mode: str
    cycles: int
    l3_misses: int


def strided_placement(platform: PlatformConfig, mode: str, sets: int,
                      system: Optional[System] = None, core: int = 0) -> PageMap:
    """Buffer for the strided benchmark: whole way images, or just enough colors."""
    from fractions import Fraction

    from .partition import PagePool, ColorAssignment
    from .workloads import strided_buffer_bytes
    geom = platform.l3
    frac = Fraction(sets, geom.n_sets)
    ps = platform.page_size
    if mode == "Set":
        n_colors = color_count(geom, ps)
        sets_per_color = geom.n_sets // n_colors
        if sets % sets_per_color:
            raise PartitionError(f"{sets} sets is not a whole number of colors")
        colors = tuple(range(sets // sets_per_color))
        assign = ColorAssignment({core: colors}, PagePool(n_colors, ps, size=platform.mem_size))
        pm = PageMap(tuple(allocate_colored_pages(assign, core, strided_buffer_bytes(frac, geom, True))), ps)
    else:
        pm = PageMap.contiguous(VICTIM_BASE, strided_buffer_bytes(frac, geom, False), ps)
    if system is not None:
        system.map_pages(core, pm.pages)
    return pm


def run_strided(platform: PlatformConfig, set_counts: Sequence[int] = (128, 256, 384),
                modes: Sequence[str] = MODES, repetitions: int = 8,
                settings: RunSettings = RunSettings(), core: int = 0) -> list[StridedPoint]:
    """Strided conflict benchmark; Way mode confines the core to one way group."""
    from fractions import Fraction

    from .workloads import strided_conflict
    out = []
    for sets in set_counts:
        for mode in modes:
            regs = None
            if mode == "Way":
                g, w = way_layout(platform)
                regs = WayPartitionRegs({core: 0}, {0: 0b0001}, g, w)
            system = settings.system(platform, regs)
            pm = strided_placement(platform, mode, sets, system, core)
            s = strided_conflict(Fraction(sets, platform.l3.n_sets), platform.l3, pm,
                                 repetitions, core)
            r = run(system, [s])
            out.append(StridedPoint(sets, mode, r.cycles[core],
                                    r.snapshot.get(EventId.L3D_DEMAND_MISS, core_scope(core))))
    return out
