"""Named event counters for cores, DSU clusters and the system level."""
from __future__ import annotations

import csv
import enum
import io
from collections import defaultdict
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Optional


class EventId(enum.Enum):
    # (code, scope-kind); code None marks simulator-internal events, which
    # carry their name as a third element to keep the values distinct
    L1D_CACHE_REFILL_INNER = (0x44, "core")
    L1D_CACHE_REFILL_OUTER = (0x45, "core")
    L3D_WS_MODE = (0xC7, "core")
    SCU_PFTCH_CPU_ACCESS = (0x500, "dsu")
    SCU_PFTCH_CPU_MISS = (0x501, "dsu")
    SCU_PFTCH_CPU_HIT = (0x502, "dsu")
    L3D_ACCESS = (0x2B, "dsu")
    BUS_ACCESS = (0x19, "dsu")
    L3D_CACHE_ALLOCATE = (0x29, "dsu")

    L1D_LOOKUP = (None, "core", "L1D_LOOKUP")
    L1D_HIT = (None, "core", "L1D_HIT")
    L1D_MISS = (None, "core", "L1D_MISS")
    L1D_REFILL = (None, "core", "L1D_REFILL")
    L2D_LOOKUP = (None, "core", "L2D_LOOKUP")
    L2D_HIT = (None, "core", "L2D_HIT")
    L2D_MISS = (None, "core", "L2D_MISS")
    L3D_LOOKUP = (None, "dsu", "L3D_LOOKUP")
    L3D_HIT = (None, "dsu", "L3D_HIT")
    L3D_MISS = (None, "dsu", "L3D_MISS")
    L3D_DEMAND_MISS = (None, "dsu", "L3D_DEMAND_MISS")  # demand lookups that went to the bus
    L3D_WRITEBACK = (None, "dsu", "L3D_WRITEBACK")  # dirty lines leaving L3 for the bus
    L3D_EVICT_OTHER = (None, "dsu", "L3D_EVICT_OTHER")  # this core's fill evicted another core's line
    L3D_EVICTED_BY_OTHER = (None, "dsu", "L3D_EVICTED_BY_OTHER")  # this core's line evicted by another core
    L4D_LOOKUP = (None, "system", "L4D_LOOKUP")
    L4D_HIT = (None, "system", "L4D_HIT")
    L4D_MISS = (None, "system", "L4D_MISS")
    MEM_ACCESS = (None, "system", "MEM_ACCESS")

    @property
    def code(self) -> Optional[int]:
        return self.value[0]

    @property
    def kind(self) -> str:
        return self.value[1]


NAMED_EVENTS = tuple(e for e in EventId if e.code is not None)
ALL_EVENTS = tuple(EventId)


def core_scope(core: int) -> tuple[str, int]:
    return ("core", core)


def cluster_scope(cluster: int) -> tuple[str, int]:
    return ("cluster", cluster)


SYSTEM = ("system", 0)


def scope_str(scope) -> str:
    return f"{scope[0]}{scope[1]}"


EVENT_INDEX = {e: i for i, e in enumerate(ALL_EVENTS)}


class Pmu:
    """Mutable counter bank owned by one simulated system.

    Each scope owns a flat list indexed by ``EVENT_INDEX``; the simulator
    bumps list slots directly on its hot path.
    """

    def __init__(self):
        self.banks: dict = {}

    def bank(self, scope) -> list[int]:
        b = self.banks.get(scope)
        if b is None:
            b = self.banks[scope] = [0] * len(ALL_EVENTS)
        return b

    def record(self, event: EventId, scope, delta: int = 1):
        if delta < 0:
            raise ValueError("counters only move forward")
        self.bank(scope)[EVENT_INDEX[event]] += delta

    def get(self, event: EventId, scope) -> int:
        b = self.banks.get(scope)
        return b[EVENT_INDEX[event]] if b else 0

    @property
    def counts(self) -> dict:
        return {(s, ALL_EVENTS[i]): v for s, b in self.banks.items() for i, v in enumerate(b) if v}

    def snapshot(self, cycle: int = 0) -> "PmuSnapshot":
        return PmuSnapshot(MappingProxyType(self.counts), cycle)


@dataclass(frozen=True)
class PmuSnapshot:
    counts: Mapping
    cycle: int = 0

    def __reduce__(self):
        return _snapshot, (dict(self.counts), self.cycle)

    def get(self, event: EventId, scope) -> int:
        return self.counts.get((scope, event), 0)

    def __getitem__(self, key) -> int:
        event, scope = key
        return self.get(event, scope)

    def scopes(self) -> list:
        return sorted({s for s, _ in self.counts})

    def scope(self, scope) -> dict:
        return {e: v for (s, e), v in self.counts.items() if s == scope}

    def __sub__(self, other: "PmuSnapshot") -> "PmuSnapshot":
        keys = set(self.counts) | set(other.counts)
        diff = {}
        for k in keys:
            d = self.counts.get(k, 0) - other.counts.get(k, 0)
            if d < 0:
                raise ValueError(f"counter {k} went backwards")
            if d:
                diff[k] = d
        return PmuSnapshot(MappingProxyType(diff), self.cycle - other.cycle)

    def to_rows(self, run_id: str) -> list[tuple[str, str, str, int]]:
        rows = []
        for (scope, event), v in sorted(self.counts.items(),
                                        key=lambda kv: (kv[0][0], kv[0][1].name)):
            rows.append((run_id, scope_str(scope), event.name, v))
        return rows

    def to_csv(self, run_id: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run_id", "scope", "event", "count"])
        w.writerows(self.to_rows(run_id))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> dict[str, "PmuSnapshot"]:
        out: dict[str, dict] = defaultdict(dict)
        for row in csv.DictReader(io.StringIO(text)):
            s = row["scope"]
            kind = s.rstrip("0123456789")
            scope = (kind, int(s[len(kind):]))
            out[row["run_id"]][(scope, EventId[row["event"]])] = int(row["count"])
        return {k: cls(MappingProxyType(v)) for k, v in out.items()}


def normalized_bandwidth(count: int, line_size: int, elapsed_cycles: float, freq_hz: float) -> float:
    """Event count converted to MB/s (1 MB = 10**6 bytes)."""
    if elapsed_cycles <= 0:
        raise ValueError("elapsed time must be positive")
    seconds = elapsed_cycles / freq_hz
    return count * line_size / seconds / 1e6


def check_identities(snap: PmuSnapshot) -> list[str]:
    """Return a list of violated counter identities (empty when consistent)."""
    bad = []
    E = EventId
    for scope in snap.scopes():
        g = lambda e: snap.get(e, scope)  # noqa: E731
        for lk, h, m in ((E.L1D_LOOKUP, E.L1D_HIT, E.L1D_MISS),
                         (E.L2D_LOOKUP, E.L2D_HIT, E.L2D_MISS),
                         (E.L3D_LOOKUP, E.L3D_HIT, E.L3D_MISS),
                         (E.L4D_LOOKUP, E.L4D_HIT, E.L4D_MISS)):
            if g(h) + g(m) != g(lk):
                bad.append(f"{scope_str(scope)}: {h.name}+{m.name} != {lk.name}")
        if g(E.SCU_PFTCH_CPU_HIT) + g(E.SCU_PFTCH_CPU_MISS) != g(E.SCU_PFTCH_CPU_ACCESS):
            bad.append(f"{scope_str(scope)}: prefetch hit+miss != access")
        if scope[0] == "core" and (g(E.L1D_CACHE_REFILL_INNER) + g(E.L1D_CACHE_REFILL_OUTER)
                                   != g(E.L1D_REFILL)):
            bad.append(f"{scope_str(scope)}: INNER+OUTER != L1 refills")
        if g(E.BUS_ACCESS) != g(E.L3D_DEMAND_MISS) + g(E.SCU_PFTCH_CPU_MISS) + g(E.L3D_WRITEBACK):
            bad.append(f"{scope_str(scope)}: BUS_ACCESS != demand misses + prefetch misses + writebacks")
    return bad


def sum_scopes(snap: PmuSnapshot, event: EventId, kind: str) -> int:
    return sum(v for (s, e), v in snap.counts.items() if e is event and s[0] == kind)


def event_columns(events: Iterable[EventId] = ALL_EVENTS) -> list[str]:
    return [e.name for e in events]


def _snapshot(counts: dict, cycle: int) -> PmuSnapshot:
    return PmuSnapshot(MappingProxyType(counts), cycle)
