"""Way-group registers (DSU style) and a page-color allocator."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .geometry import CacheGeometry, PlatformConfig, color_count

RATIOS = ("No", "1/3", "2/2", "3/1")

# victim share out of four partitions
_VICTIM_QUARTERS = {"1/3": 1, "2/2": 2, "3/1": 3}


class PartitionError(ValueError):
    pass


class PoolExhausted(PartitionError):
    pass


def parse_ratio(ratio: str) -> str:
    r = str(ratio).strip()
    if r.lower() in ("no", "none", ""):
        return "No"
    r = r.replace("-", "/")
    if r not in _VICTIM_QUARTERS:
        raise PartitionError(f"unknown ratio {ratio!r}; expected one of {RATIOS}")
    return r


@dataclass(frozen=True)
class WayPartitionRegs:
    """Per-core scheme IDs and per-scheme group masks.

    ``ways_per_group`` is 4 on the hardware; the 12-way RK3588 L3 can be run
    in a 4-logical-group mode where each group stands for 3 physical ways.
    """

    thread_sid: Mapping[int, int]
    partcr: Mapping[int, int]
    n_groups: int = 4
    ways_per_group: int = 4

    def __post_init__(self):
        full = (1 << self.n_groups) - 1
        for sid, mask in self.partcr.items():
            if not 0 <= sid < 8:
                raise PartitionError(f"scheme ID {sid} out of range 0..7")
            if mask & full == 0:
                raise PartitionError(f"scheme {sid} has an empty group mask")
            if mask & ~full:
                raise PartitionError(f"scheme {sid} mask {mask:#b} exceeds {self.n_groups} groups")
        for core, sid in self.thread_sid.items():
            if sid not in self.partcr:
                raise PartitionError(f"core {core} uses scheme {sid} with no mask")

    @classmethod
    def unpartitioned(cls, cores: Iterable[int], n_groups: int = 4, ways_per_group: int = 4):
        return cls({c: 0 for c in cores}, {0: (1 << n_groups) - 1}, n_groups, ways_per_group)

    def mask_of(self, core: int) -> int:
        try:
            return self.partcr[self.thread_sid[core]]
        except KeyError:
            raise PartitionError(f"core {core} has no scheme ID") from None


def ratio_to_way_config(ratio: str, victim_core: int, interference_core: int,
                        n_groups: int = 4, ways_per_group: int = 4,
                        other_cores: Iterable[int] = ()) -> WayPartitionRegs:
    if n_groups not in (3, 4):
        raise PartitionError(f"n_groups must be 3 or 4, got {n_groups}")
    ratio = parse_ratio(ratio)
    full = (1 << n_groups) - 1
    if ratio == "No":
        v = i = full
    elif n_groups == 4:
        nv = _VICTIM_QUARTERS[ratio]
        v = (1 << nv) - 1
        i = full & ~v
    else:
        if ratio == "2/2":
            raise PartitionError(
                "2/2 is not representable on 3 way groups; 1:1 by ways within groups is unsupported")
        v = 0b001 if ratio == "1/3" else 0b011
        i = full & ~v
    sid = {victim_core: 0, interference_core: 1}
    for c in other_cores:
        sid.setdefault(c, 2)
    partcr = {0: v, 1: i}
    if 2 in sid.values():
        partcr[2] = full
    return WayPartitionRegs(sid, partcr, n_groups, ways_per_group)


def allocation_ways(regs: WayPartitionRegs, core: int) -> frozenset[int]:
    """Way indices the core may allocate into; lookups are never restricted."""
    mask = regs.mask_of(core)
    w = regs.ways_per_group
    return frozenset(g * w + k for g in range(regs.n_groups) if mask >> g & 1 for k in range(w))


def allocation_mask(regs: WayPartitionRegs, core: int) -> int:
    m = 0
    for way in allocation_ways(regs, core):
        m |= 1 << way
    return m


# ---------------------------------------------------------------------------
# page coloring

@dataclass
class PagePool:
    """Physical page supply for one linearly indexed LLC.

    Page ``p`` (address ``p * page_size``) has color ``p % n_colors``.
    """

    n_colors: int
    page_size: int = 4096
    base: int = 0
    size: int = 1 << 30
    _next: dict = field(default_factory=dict)   # color -> next page number
    owner: dict = field(default_factory=dict)   # page address -> core

    def pages_per_color(self) -> int:
        return self.size // self.page_size // self.n_colors

    def take(self, color: int, core: int) -> int:
        first = self.base // self.page_size
        p = self._next.get(color)
        if p is None:
            p = first + ((color - first) % self.n_colors)
        if (p + 1) * self.page_size > self.base + self.size:
            raise PoolExhausted(f"no free pages of color {color}")
        self._next[color] = p + self.n_colors
        addr = p * self.page_size
        self.owner[addr] = core
        return addr


@dataclass
class ColorAssignment:
    colors: Mapping[int, tuple[int, ...]]
    pool: PagePool
    _cursor: dict = field(default_factory=dict)

    def allowed(self, core: int) -> tuple[int, ...]:
        try:
            return self.colors[core]
        except KeyError:
            raise PartitionError(f"core {core} has no color assignment") from None


def split_colors(ratio: str, n_colors: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if n_colors % 4:
        raise PartitionError(f"{n_colors} colors cannot be split into four partitions")
    ratio = parse_ratio(ratio)
    if ratio == "No":
        allc = tuple(range(n_colors))
        return allc, allc
    cut = n_colors // 4 * _VICTIM_QUARTERS[ratio]
    return tuple(range(cut)), tuple(range(cut, n_colors))


def ratio_to_color_config(ratio: str, victim_core: int, interference_core: int,
                          n_colors: int, page_size: int = 4096,
                          mem_size: int = 1 << 30) -> ColorAssignment:
    v, i = split_colors(ratio, n_colors)
    pool = PagePool(n_colors=n_colors, page_size=page_size, size=mem_size)
    return ColorAssignment({victim_core: v, interference_core: i}, pool)


def color_config_for(platform: PlatformConfig, ratio: str, victim_core: int,
                     interference_core: int) -> ColorAssignment:
    n = color_count(platform.l3, platform.page_size)
    return ratio_to_color_config(ratio, victim_core, interference_core, n,
                                 platform.page_size, platform.mem_size)


def allocate_colored_pages(assignment: ColorAssignment, core: int, n_bytes: int) -> list[int]:
    """Hand out pages round-robin across the core's allowed colors."""
    allowed = assignment.allowed(core)
    ps = assignment.pool.page_size
    n_pages = -(-n_bytes // ps)
    start = assignment._cursor.get(core, 0)
    pages = [assignment.pool.take(allowed[(start + k) % len(allowed)], core) for k in range(n_pages)]
    assignment._cursor[core] = (start + n_pages) % len(allowed)
    return pages


def check_pages(pages: Iterable[int], allowed: Iterable[int], geom: CacheGeometry,
                page_size: int = 4096) -> bool:
    from .geometry import color_of
    ok = set(allowed)
    return all(color_of(p, geom, page_size) in ok for p in pages)
