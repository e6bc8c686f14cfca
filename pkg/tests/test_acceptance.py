"""One test per acceptance criterion; each prints a PASS/FAIL line in the summary."""
import json
import time

import pytest

from cachepart.cli import main
from cachepart.engine import System, run
from cachepart.geometry import KiB, MiB, platform_preset
from cachepart.harness import (KINDS, RunSettings, SweepGrid, bandwidth_profile, default_victim_wss,
                               run_baseline, run_cell, run_probe, run_strided,
                               sweep)
from cachepart.pmu import EventId as E, check_identities, core_scope
from cachepart.workloads import InterferenceSpec, VictimSpec, gen_interference, gen_victim

from conftest import ACCEPTANCE_LINES
from oracles import SetAssocOracle

RK = platform_preset("rk3568")


def verdict(n: int, ok: bool, detail: str):
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_coloring_probe():
    t = time.perf_counter()
    sizes = [16, 32, 48, 64, 80, 96, 112, 128]
    pts = run_probe(RK, [s * KiB for s in sizes], settings=RunSettings(hw_prefetch=False))
    dt = time.perf_counter() - t
    ratios = [p.miss_ratio for p in pts]
    ok = (all(r == 0 for s, r in zip(sizes, ratios) if s <= 64)
          and all(a <= b for a, b in zip(ratios, ratios[1:]))
          and ratios[sizes.index(128)] >= 0.9 and dt < 5)
    verdict(1, ok, f"ratios={[round(r, 3) for r in ratios]} {dt:.1f}s")


def _reference_4way_misses(sets: int, reps: int) -> int:
    # the strided stream fed to a standalone 4-way cache with the same set count
    from fractions import Fraction
    from cachepart.harness import strided_placement
    from cachepart.workloads import strided_conflict
    pm = strided_placement(RK, "Way", sets)
    s = strided_conflict(Fraction(sets, RK.l3.n_sets), RK.l3, pm, reps)
    ref = SetAssocOracle(RK.l3.n_sets, 4)
    return sum(not ref.access(int(a) // RK.line_size)[0] for a in s.addrs)


def test_criterion_2_strided_way_vs_set():
    t = time.perf_counter()
    reps = 8
    pts = {p.mode: p for p in run_strided(RK, (128,), repetitions=reps)}
    dt = time.perf_counter() - t
    way, st = pts["Way"].l3_misses, pts["Set"].l3_misses
    ref = _reference_4way_misses(128, reps)
    ok = way >= 5 * st and way == ref and dt < 10
    verdict(2, ok, f"way={way} set={st} ref4way={ref} {dt:.1f}s")


@pytest.fixture(scope="module")
def partitioned_grid():
    return sweep(SweepGrid(RK, modes=("Way", "Set")))


@pytest.mark.slow
def test_criterion_3_partition_isolation(partitioned_grid):
    rows = partitioned_grid.rows
    worst = max(r.total.get(E.L3D_EVICTED_BY_OTHER, core_scope(0)) for r in rows)
    verdict(3, worst == 0 and len(rows) == 2 * 3 * 4 * 11,
            f"{len(rows)} cells, max victim lines evicted by interference={worst}")


def test_criterion_4_write_streaming():
    t = time.perf_counter()
    v = VictimSpec(default_victim_wss(RK))
    configs = [("None", "No"), ("Way", "1/3"), ("Way", "2/2"), ("Way", "3/1")]
    wss = (128 * KiB, 512 * KiB, 2 * MiB)

    def maxima(settings, cfgs):
        b = run_baseline(RK, v, settings).victim_cycles
        return {c: max(run_cell(RK, *c, "write", w, v, settings, b).slowdown for w in wss)
                for c in cfgs}

    on = maxima(RunSettings(write_streaming=(True,) * 3), configs)
    off = maxima(RunSettings(write_streaming=(False,) * 3), [configs[0], configs[3]])
    dt = time.perf_counter() - t
    agree = max(on.values()) <= 1.10 * min(on.values())
    ok = agree and off[("Way", "3/1")] < off[("None", "No")] and dt < 60
    verdict(4, ok, f"on={[round(x, 3) for x in on.values()]} off None={off[configs[0]]:.3f} "
                   f"3/1={off[configs[3]]:.3f} {dt:.1f}s")


def test_criterion_5_bandwidth_saturation():
    wss = [64 * KiB, 128 * KiB, 256 * KiB, 384 * KiB, 512 * KiB, 768 * KiB, 1 * MiB, 2 * MiB,
           4 * MiB]
    settings = RunSettings()
    none = [p.bytes_per_kcycle for p in bandwidth_profile(RK, wss, settings=settings)]
    way = [p.bytes_per_kcycle for p in bandwidth_profile(RK, wss, mode="Way", ratio="1/3",
                                                         settings=settings)]
    top = settings.max_bandwidth

    def rise(bw):
        return next(w for w, b in zip(wss, bw) if b > 0.01 * top)

    mono = all(a <= b for a, b in zip(none, none[1:]))
    sat = all(abs(b - top) <= 0.01 * top for w, b in zip(wss, none) if w >= 2 * RK.l3.capacity)
    ok = mono and sat and rise(way) < rise(none)
    verdict(5, ok, f"None={[round(b) for b in none]} rise None={rise(none) // KiB}K "
                   f"Way1/3={rise(way) // KiB}K")


def test_criterion_6_counter_identities():
    # run() asserts the identities itself; this spreads runs over every preset and kind
    bad = []
    for name in ("zcu102", "rk3568", "rk3588", "orin"):
        p = platform_preset(name)
        for hw in (False, True):
            for kind in KINDS:
                system = System(p, hw_prefetch=hw)
                assert system.check_on_run
                victim = gen_victim(VictimSpec(64 * KiB), core=0)
                inter = gen_interference(InterferenceSpec(kind, 512 * KiB, base=1 * MiB), core=1)
                r = run(system, [victim, inter])
                bad += [f"{name}/{kind}: {b}" for b in check_identities(r.snapshot)]
    verdict(6, not bad, "identities hold on 32 runs" if not bad else "; ".join(bad[:3]))


def test_criterion_7_determinism(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 11, "grid": {
        "modes": ["None", "Set"], "ratios": ["2/2"], "kinds": ["read", "modify"],
        "wss_kib": [8, 512], "victim": {"wss_kib": 64}}}))
    outs = []
    for d in ("a", "b"):
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
        outs.append([(tmp_path / d / f).read_bytes()
                     for f in ("sweep.csv", "series.csv", "max_slowdown.csv")])
    verdict(7, outs[0] == outs[1], f"{len(outs[0][0])} bytes of sweep.csv identical")


def test_criterion_8_outer_refill_peak():
    t = time.perf_counter()
    v = VictimSpec(default_victim_wss(RK))
    assert RK.l1.capacity < v.working_set_bytes < RK.l3.capacity
    wss = [64 * KiB, 128 * KiB, 256 * KiB, 384 * KiB, 512 * KiB, 1 * MiB]
    outer = {w: run_cell(RK, "None", "No", "modify", w, v, baseline_cycles=1)
             .snapshot.get(E.L1D_CACHE_REFILL_OUTER, core_scope(0)) for w in wss}
    dt = time.perf_counter() - t
    peak = max(wss, key=lambda w: outer[w])
    ok = peak <= RK.l3.capacity and outer[2 * RK.l3.capacity] < outer[peak] and dt < 120
    verdict(8, ok, f"OUTER={[outer[w] for w in wss]} peak={peak // KiB}K {dt:.1f}s")


def test_criterion_9_orin_clusters():
    orin = platform_preset("orin")
    v = VictimSpec(default_victim_wss(orin))
    b = run_baseline(orin, v).victim_cycles
    w = orin.l3.capacity
    same_core = 1
    cross_core = orin.clusters[1][0]
    lines = []
    ok = True
    for kind in ("read", "modify"):
        same = run_cell(orin, "None", "No", kind, w, v, baseline_cycles=b,
                        interference_core=same_core).slowdown
        cross = run_cell(orin, "None", "No", kind, w, v, baseline_cycles=b,
                         interference_core=cross_core).slowdown
        ok &= cross <= 1.02 and cross < same
        lines.append(f"{kind}: cross={cross:.3f} same={same:.3f}")
    verdict(9, ok, f"WSS={w // KiB}K " + ", ".join(lines))
