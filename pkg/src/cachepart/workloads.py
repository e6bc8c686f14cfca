"""Deterministic access-stream generators.

Streams hold physical byte addresses. Generators lay out a virtual buffer,
then translate it through a :class:`PageMap` (the core's physical pages).
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .geometry import CacheGeometry, color_count

READ, WRITE, MODIFY, PREFETCH = 0, 1, 2, 3
KIND_NAMES = ("read", "write", "modify", "prefetch")
KIND_CODES = {name: i for i, name in enumerate(KIND_NAMES)}
KIND_CODES["prefetch_l3"] = PREFETCH

_RECORD = np.dtype([("core", "<u2"), ("kind", "u1"), ("addr", "<u8")])


def kind_code(kind) -> int:
    if isinstance(kind, (int, np.integer)):
        if not 0 <= kind < 4:
            raise ValueError(f"bad access kind {kind}")
        return int(kind)
    try:
        return KIND_CODES[kind]
    except KeyError:
        raise ValueError(f"unknown access kind {kind!r}") from None


@dataclass(eq=False)
class AccessStream:
    core: int
    kinds: np.ndarray
    addrs: np.ndarray
    _lists: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        self.kinds = np.asarray(self.kinds, dtype=np.uint8)
        self.addrs = np.asarray(self.addrs, dtype=np.uint64)
        if self.kinds.shape != self.addrs.shape:
            raise ValueError("kinds and addrs must have equal length")

    def __len__(self) -> int:
        return len(self.addrs)

    def __eq__(self, other) -> bool:
        return (isinstance(other, AccessStream) and self.core == other.core
                and np.array_equal(self.kinds, other.kinds)
                and np.array_equal(self.addrs, other.addrs))

    def as_lists(self) -> tuple[list[int], list[int]]:
        if self._lists is None:
            self._lists = (self.kinds.tolist(), self.addrs.tolist())
        return self._lists

    def repeat(self, n: int) -> "AccessStream":
        return AccessStream(self.core, np.tile(self.kinds, n), np.tile(self.addrs, n))

    def lines(self, line_size: int = 64) -> np.ndarray:
        return np.unique(self.addrs // line_size)

    @classmethod
    def empty(cls, core: int) -> "AccessStream":
        return cls(core, np.zeros(0, np.uint8), np.zeros(0, np.uint64))

    # -- trace files ---------------------------------------------------------
    # text: one "core kind addr" record per line, kind by name, addr in hex
    def to_text(self) -> str:
        buf = io.StringIO()
        for k, a in zip(*self.as_lists()):
            buf.write(f"{self.core} {KIND_NAMES[k]} {a:#x}\n")
        return buf.getvalue()

    def to_bytes(self) -> bytes:
        rec = np.empty(len(self), dtype=_RECORD)
        rec["core"] = self.core
        rec["kind"] = self.kinds
        rec["addr"] = self.addrs
        return rec.tobytes()


def streams_from_text(text: str) -> dict[int, AccessStream]:
    per: dict[int, tuple[list, list]] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        raw = raw.split("#", 1)[0].strip()
        if not raw:
            continue
        parts = raw.split()
        if len(parts) != 3:
            raise ValueError(f"line {n}: expected 'core kind addr'")
        core, kind, addr = int(parts[0]), kind_code(parts[1]), int(parts[2], 0)
        ks, as_ = per.setdefault(core, ([], []))
        ks.append(kind)
        as_.append(addr)
    return {c: AccessStream(c, ks, as_) for c, (ks, as_) in per.items()}


def streams_from_bytes(data: bytes) -> dict[int, AccessStream]:
    rec = np.frombuffer(data, dtype=_RECORD)
    out = {}
    for c in np.unique(rec["core"]):
        sel = rec[rec["core"] == c]
        out[int(c)] = AccessStream(int(c), sel["kind"].copy(), sel["addr"].copy())
    return out


@dataclass(frozen=True)
class PageMap:
    """Virtual buffer offset -> physical address through a page list."""

    pages: tuple[int, ...]
    page_size: int = 4096

    @classmethod
    def contiguous(cls, base: int, n_bytes: int, page_size: int = 4096) -> "PageMap":
        if base % page_size:
            raise ValueError("base must be page aligned")
        n = -(-n_bytes // page_size)
        return cls(tuple(base + k * page_size for k in range(n)), page_size)

    @property
    def size(self) -> int:
        return len(self.pages) * self.page_size

    def translate(self, voff) -> np.ndarray:
        v = np.asarray(voff, dtype=np.uint64)
        if v.size and int(v.max()) >= self.size:
            raise ValueError(f"offset {int(v.max()):#x} beyond the {self.size} byte buffer")
        ps = np.uint64(self.page_size)
        table = np.asarray(self.pages, dtype=np.uint64)
        return table[(v // ps).astype(np.int64)] + v % ps


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterferenceSpec:
    kind: str
    working_set_bytes: int
    repetitions: int = 1
    base: int = 0           # physical base when no page map is given
    line_size: int = 64

    def __post_init__(self):
        kind_code(self.kind)
        if self.working_set_bytes <= 0 or self.working_set_bytes % self.line_size:
            raise ValueError("working set must be a positive multiple of the line size")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @property
    def n_lines(self) -> int:
        return self.working_set_bytes // self.line_size


def gen_interference(spec: InterferenceSpec, page_map: Optional[PageMap] = None,
                     core: int = 1) -> AccessStream:
    """One access per line, sequential, looped ``repetitions`` times."""
    if page_map is None:
        page_map = PageMap.contiguous(spec.base, spec.working_set_bytes)
    if spec.working_set_bytes > page_map.size:
        raise ValueError(f"working set {spec.working_set_bytes} exceeds the "
                         f"{page_map.size} bytes of allocated pages")
    voff = np.arange(spec.n_lines, dtype=np.uint64) * np.uint64(spec.line_size)
    addrs = np.tile(page_map.translate(voff), spec.repetitions)
    kinds = np.full(len(addrs), kind_code(spec.kind), dtype=np.uint8)
    return AccessStream(core, kinds, addrs)


@dataclass(frozen=True)
class VictimSpec:
    """Synthetic stand-in for the vision benchmarks: a looped line sweep.

    Each line is touched ``accesses_per_line`` times in a row (the first
    touch may be a modify, the rest are reads), modelling the in-line reuse
    of a real kernel. With ``shuffle_seed`` set, lines are visited in a fixed
    pseudo-random order that repeats every pass.
    """

    working_set_bytes: int
    read_fraction: float = 0.9
    repetitions: int = 1
    line_size: int = 64
    accesses_per_line: int = 8
    shuffle_seed: Optional[int] = 0

    def __post_init__(self):
        if self.working_set_bytes < 0 or self.working_set_bytes % self.line_size:
            raise ValueError("working set must be a multiple of the line size")
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ValueError("read fraction must be in [0, 1]")
        if not 1 <= self.accesses_per_line <= self.line_size:
            raise ValueError("accesses per line must be in [1, line size]")

    @property
    def n_lines(self) -> int:
        return self.working_set_bytes // self.line_size


def gen_victim(spec: VictimSpec, page_map: Optional[PageMap] = None, core: int = 0) -> AccessStream:
    n = spec.n_lines
    if n == 0:
        return AccessStream.empty(core)
    if page_map is None:
        page_map = PageMap.contiguous(0, spec.working_set_bytes)
    wf = Fraction(1) - Fraction(spec.read_fraction).limit_denominator(10_000)
    i = np.arange(n, dtype=np.int64)
    # modify at the evenly spaced positions where floor(i * wf) steps
    steps = ((i + 1) * wf.numerator) // wf.denominator > (i * wf.numerator) // wf.denominator
    order = i if spec.shuffle_seed is None else np.random.default_rng(spec.shuffle_seed).permutation(n)
    k = spec.accesses_per_line
    kinds = np.full((n, k), READ, dtype=np.uint8)
    kinds[:, 0] = np.where(steps, MODIFY, READ)
    step = spec.line_size // k
    voff = order[:, None] * spec.line_size + np.arange(k)[None, :] * step
    addrs = page_map.translate(voff.reshape(-1).astype(np.uint64))
    kinds = kinds.reshape(-1)
    return AccessStream(core, np.tile(kinds, spec.repetitions), np.tile(addrs, spec.repetitions))


# ---------------------------------------------------------------------------

def strided_sets(level_fraction: Fraction | float | str, geom: CacheGeometry) -> int:
    frac = Fraction(level_fraction)
    s = frac * geom.n_sets
    if s.denominator != 1 or not 0 < s <= geom.n_sets:
        raise ValueError(f"{level_fraction} of {geom.n_sets} sets is not a whole set count")
    return int(s)


def strided_conflict(level_fraction, geom: CacheGeometry, page_map: PageMap,
                     repetitions: int = 1, core: int = 0, kind: int = MODIFY) -> AccessStream:
    """Modify ``w`` distinct lines in each of the first ``s`` sets reachable from the buffer.

    One pass sweeps the chosen sets linearly once per tag, so each set sees
    its ``w`` lines round-robin; ``s * w`` accesses in total.
    """
    s = strided_sets(level_fraction, geom)
    w = geom.n_ways
    ls = geom.line_size
    voff = np.arange(page_map.size // ls, dtype=np.uint64) * np.uint64(ls)
    phys = page_map.translate(voff)
    by_set: dict[int, list[int]] = {}
    for a in phys.tolist():
        by_set.setdefault(geom.set_index(a), []).append(a)
    chosen = [k for k in sorted(by_set) if len(by_set[k]) >= w][:s]
    if len(chosen) < s:
        raise ValueError(f"buffer reaches only {len(chosen)} sets with {w} lines; need {s}")
    grid = np.array([[by_set[k][t] for k in chosen] for t in range(w)], dtype=np.uint64)
    addrs = np.tile(grid.reshape(-1), repetitions)
    return AccessStream(core, np.full(len(addrs), kind, np.uint8), addrs)


def strided_buffer_bytes(level_fraction, geom: CacheGeometry, colored: bool) -> int:
    """Buffer size that reaches the needed sets: colored pages cover only the
    partition, a contiguous buffer must span ``w`` whole cache-way images."""
    s = strided_sets(level_fraction, geom)
    if colored:
        return s * geom.n_ways * geom.line_size
    return geom.n_ways * geom.n_sets * geom.line_size


@dataclass(frozen=True)
class ProbeStreams:
    pass1: AccessStream
    pass2: AccessStream
    max_misses: int

    def miss_ratio(self, pass2_misses: int) -> float:
        return pass2_misses / self.max_misses


def coloring_probe(geom: CacheGeometry, color: int, n_chunks: int, page_size: int = 4096,
                   huge_page_size: int = 2 << 20, huge_base: int = 2 << 20,
                   huge_pages: int = 1, core: int = 0) -> ProbeStreams:
    """Prefetch ``n_chunks`` same-color page-sized chunks twice.

    Chunks come from huge pages starting at ``huge_base`` so the physical
    color bits are under control.
    """
    if n_chunks <= 0:
        raise ValueError("probe needs at least one chunk (miss ratio undefined)")
    n_colors = color_count(geom, page_size)
    if not 0 <= color < n_colors:
        raise ValueError(f"color {color} outside 0..{n_colors - 1}")
    if huge_base % huge_page_size:
        raise ValueError("huge page base must be huge-page aligned")
    per_huge = huge_page_size // page_size // n_colors
    if n_chunks > per_huge * huge_pages:
        raise ValueError(f"{n_chunks} chunks of color {color} exceed the {per_huge * huge_pages} "
                         f"available in {huge_pages} huge page(s)")
    k = np.arange(n_chunks, dtype=np.uint64)
    chunk_base = (np.uint64(huge_base) + (k // np.uint64(per_huge)) * np.uint64(huge_page_size)
                  + ((k % np.uint64(per_huge)) * np.uint64(n_colors) + np.uint64(color))
                  * np.uint64(page_size))
    lines = np.arange(page_size // geom.line_size, dtype=np.uint64) * np.uint64(geom.line_size)
    addrs = (chunk_base[:, None] + lines[None, :]).reshape(-1)
    kinds = np.full(len(addrs), PREFETCH, np.uint8)
    s = AccessStream(core, kinds, addrs)
    return ProbeStreams(s, AccessStream(core, kinds.copy(), addrs.copy()), len(addrs))


def huge_pages_needed(geom: CacheGeometry, n_chunks: int, page_size: int = 4096,
                      huge_page_size: int = 2 << 20) -> int:
    per_huge = huge_page_size // page_size // color_count(geom, page_size)
    return max(1, -(-n_chunks // per_huge))
