"""Address decomposition, set-index functions, colors and platform presets.

All sizes are in bytes. Physical memory is a flat range starting at 0.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

KiB = 1024
MiB = 1024 * KiB
GiB = 1024 * MiB

DEFAULT_MEM_SIZE = 1 * GiB


class Inclusion(str, enum.Enum):
    EXCLUSIVE_VICTIM = "exclusive-victim"
    INCLUSIVE = "inclusive"
    NON_INCLUSIVE = "non-inclusive"


class Replacement(str, enum.Enum):
    TREE_PLRU = "tree-plru"
    PSEUDO_RANDOM = "pseudo-random"
    TRUE_LRU = "true-lru"


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class XorPermute:
    """Set index built as ``addr[hi] XOR addr[lo]`` above ``low_bits`` linear bits.

    The 256 KiB A78 L2 has 512 sets but the permutation only yields 8 bits,
    so the least significant index bit (addr[6]) stays linear.
    """

    hi: tuple[int, int] = (22, 15)
    lo: tuple[int, int] = (14, 7)

    @property
    def width(self) -> int:
        return self.hi[0] - self.hi[1] + 1

    def __post_init__(self):
        if self.lo[0] - self.lo[1] + 1 != self.width:
            raise ValueError("XOR ranges must have equal width")
        if self.lo[0] >= self.hi[1]:
            raise ValueError("XOR ranges must not overlap")


@dataclass(frozen=True)
class CacheGeometry:
    name: str
    n_sets: int
    n_ways: int
    line_size: int = 64
    index_fn: Optional[XorPermute] = None  # None means linear indexing
    inclusion: Inclusion = Inclusion.EXCLUSIVE_VICTIM
    replacement: Replacement = Replacement.TREE_PLRU

    def __post_init__(self):
        if not _is_pow2(self.line_size):
            raise ValueError(f"{self.name}: line size must be a power of two")
        if not _is_pow2(self.n_sets):
            raise ValueError(f"{self.name}: set count must be a power of two")
        if self.n_ways < 1:
            raise ValueError(f"{self.name}: need at least one way")
        if self.index_fn is not None:
            low = self.index_bits - self.index_fn.width
            if low < 0 or self.index_fn.lo[1] != self.offset_bits + low:
                raise ValueError(f"{self.name}: XOR ranges do not fit {self.n_sets} sets")

    @property
    def capacity(self) -> int:
        return self.line_size * self.n_sets * self.n_ways

    @property
    def offset_bits(self) -> int:
        return self.line_size.bit_length() - 1

    @property
    def index_bits(self) -> int:
        return self.n_sets.bit_length() - 1

    @property
    def linear(self) -> bool:
        return self.index_fn is None

    @property
    def tag_shift(self) -> int:
        """Bit position where the tag starts."""
        if self.index_fn is None:
            return self.offset_bits + self.index_bits
        return self.index_fn.lo[0] + 1

    def set_index(self, addr: int) -> int:
        if self.index_fn is None:
            return (addr >> self.offset_bits) & (self.n_sets - 1)
        f = self.index_fn
        mask = (1 << f.width) - 1
        low = self.index_bits - f.width
        permuted = ((addr >> f.hi[1]) & mask) ^ ((addr >> f.lo[1]) & mask)
        return (permuted << low) | ((addr >> self.offset_bits) & ((1 << low) - 1))

    def line_set_fn(self):
        """Return a fast ``line_number -> set`` callable."""
        if self.index_fn is None:
            m = self.n_sets - 1
            return lambda line: line & m
        shift = self.offset_bits
        f = self.set_index
        return lambda line: f(line << shift)


@dataclass(frozen=True)
class AddressParts:
    tag: int
    set_index: int
    byte_offset: int
    color: Optional[int]


def color_count(geom: CacheGeometry, page_size: int = 4096) -> int:
    """Number of page colors of a linearly indexed cache (1 if uncolorable)."""
    if not geom.linear:
        raise ValueError(f"{geom.name}: coloring needs a linear set index")
    span = geom.n_sets * geom.line_size
    if span <= page_size:
        return 1
    return span // page_size


def color_capacity(geom: CacheGeometry, page_size: int = 4096) -> int:
    return geom.capacity // color_count(geom, page_size)


def color_of(addr: int, geom: CacheGeometry, page_size: int = 4096) -> Optional[int]:
    if not geom.linear:
        return None
    n = color_count(geom, page_size)
    return (addr // page_size) % n


def decompose(addr: int, geom: CacheGeometry, page_size: int = 4096,
              mem_size: int = DEFAULT_MEM_SIZE) -> AddressParts:
    if addr < 0 or addr >= mem_size:
        raise ValueError(f"address {addr:#x} outside physical memory [0, {mem_size:#x})")
    return AddressParts(
        tag=addr >> geom.tag_shift,
        set_index=geom.set_index(addr),
        byte_offset=addr & (geom.line_size - 1),
        color=color_of(addr, geom, page_size),
    )


def recompose(parts: AddressParts, geom: CacheGeometry) -> int:
    if not geom.linear:
        raise ValueError("recompose is only defined for linear indexing")
    return (parts.tag << geom.tag_shift) | (parts.set_index << geom.offset_bits) | parts.byte_offset


@dataclass(frozen=True)
class PlatformConfig:
    """One SoC: private per-core levels, one shared level per cluster, optional L4.

    ``l3`` is the shared cluster level. On the ZCU102 this is the A53's shared
    L2; it keeps the ``l3`` slot so the engine and counters treat it as the LLC.
    """

    name: str
    l1: CacheGeometry
    l3: CacheGeometry
    clusters: tuple[tuple[int, ...], ...]
    l2: Optional[CacheGeometry] = None
    l4: Optional[CacheGeometry] = None
    page_size: int = 4096
    huge_page_size: int = 2 * MiB
    mem_size: int = DEFAULT_MEM_SIZE
    way_partitioning: bool = True
    way_group_size: int = 4
    # consecutive full-line store counts that engage streaming at L1/L2/L3
    streaming_thresholds: Optional[tuple[int, int, int]] = (4, 128, 1024)
    freq_hz: float = 2.0e9

    def __post_init__(self):
        cores = [c for cl in self.clusters for c in cl]
        if sorted(cores) != list(range(len(cores))):
            raise ValueError(f"{self.name}: cores must be numbered 0..n-1 across clusters")
        if self.way_partitioning and self.l3.n_ways % self.way_group_size:
            raise ValueError(f"{self.name}: L3 ways not a multiple of the group size")
        for g in (self.l1, self.l2, self.l3, self.l4):
            if g is not None and g.line_size != self.l1.line_size:
                raise ValueError(f"{self.name}: all levels must share one line size")

    @property
    def n_cores(self) -> int:
        return sum(len(cl) for cl in self.clusters)

    @property
    def n_groups(self) -> int:
        return self.l3.n_ways // self.way_group_size

    @property
    def line_size(self) -> int:
        return self.l1.line_size

    def cluster_of(self, core: int) -> int:
        for k, cl in enumerate(self.clusters):
            if core in cl:
                return k
        raise ValueError(f"{self.name}: no core {core}")

    def private_capacity(self) -> int:
        """Bytes a core can keep in its private levels."""
        if self.l2 is None:
            return self.l1.capacity
        if self.l2.inclusion is Inclusion.INCLUSIVE:
            return self.l2.capacity
        return self.l1.capacity + self.l2.capacity

    def levels(self):
        return [(n, g) for n, g in (("L1", self.l1), ("L2", self.l2), ("L3", self.l3), ("L4", self.l4))
                if g is not None]


def _geom(name, size, ways, **kw) -> CacheGeometry:
    return CacheGeometry(name=name, n_sets=size // (64 * ways), n_ways=ways, **kw)


def _zcu102() -> PlatformConfig:
    return PlatformConfig(
        name="zcu102",
        l1=_geom("L1", 32 * KiB, 4, replacement=Replacement.PSEUDO_RANDOM),
        l3=_geom("L2", 1 * MiB, 16),
        clusters=((0, 1, 2, 3),),
        way_partitioning=False,
        streaming_thresholds=None,
        freq_hz=1.2e9,
    )


def _rk3568() -> PlatformConfig:
    return PlatformConfig(
        name="rk3568",
        l1=_geom("L1", 32 * KiB, 4),
        l3=_geom("L3", 512 * KiB, 16),
        clusters=((0, 1, 2, 3),),
        freq_hz=1.992e9,
    )


def _rk3588_a55() -> PlatformConfig:
    return PlatformConfig(
        name="rk3588-a55",
        l1=_geom("L1", 32 * KiB, 4),
        l2=_geom("L2", 128 * KiB, 16),
        l3=_geom("L3", 3 * MiB, 12),
        clusters=((0, 1, 2, 3),),
        freq_hz=1.8e9,
    )


def _orin() -> PlatformConfig:
    return PlatformConfig(
        name="orin",
        l1=_geom("L1", 64 * KiB, 4),
        l2=_geom("L2", 256 * KiB, 8, index_fn=XorPermute(), inclusion=Inclusion.INCLUSIVE),
        l3=_geom("L3", 2 * MiB, 16),
        l4=_geom("L4", 4 * MiB, 16, inclusion=Inclusion.NON_INCLUSIVE),
        clusters=((0, 1, 2, 3), (4, 5, 6, 7), (8, 9, 10, 11)),
        freq_hz=2.2e9,
    )


_PRESETS = {
    "zcu102": _zcu102,
    "rk3568": _rk3568,
    "rk3588-a55": _rk3588_a55,
    "orin": _orin,
}
_ALIASES = {"rk3588": "rk3588-a55"}

PLATFORM_NAMES = tuple(_PRESETS)


def platform_preset(name: str) -> PlatformConfig:
    key = _ALIASES.get(name.lower(), name.lower())
    try:
        return _PRESETS[key]()
    except KeyError:
        raise ValueError(f"unknown platform {name!r}; choose from {', '.join(PLATFORM_NAMES)}") from None


# ---------------------------------------------------------------------------
# structured (dict/JSON) form

def geometry_to_dict(g: CacheGeometry) -> dict:
    d = {
        "name": g.name,
        "size_bytes": g.capacity,
        "ways": g.n_ways,
        "line_size_bytes": g.line_size,
        "index": "linear",
        "inclusion": g.inclusion.value,
        "replacement": g.replacement.value,
    }
    if g.index_fn is not None:
        d["index"] = {"xor": {"hi": list(g.index_fn.hi), "lo": list(g.index_fn.lo)}}
    return d


def geometry_from_dict(d: dict) -> CacheGeometry:
    line = int(d.get("line_size_bytes", 64))
    ways = int(d["ways"])
    size = int(d["size_bytes"])
    if size % (line * ways):
        raise ValueError(f"{d.get('name')}: size {size} not divisible by line*ways")
    index = d.get("index", "linear")
    index_fn = None
    if isinstance(index, dict):
        x = index["xor"]
        index_fn = XorPermute(hi=tuple(x["hi"]), lo=tuple(x["lo"]))
    elif index != "linear":
        raise ValueError(f"unknown index function {index!r}")
    return CacheGeometry(
        name=d.get("name", "cache"),
        n_sets=size // (line * ways),
        n_ways=ways,
        line_size=line,
        index_fn=index_fn,
        inclusion=Inclusion(d.get("inclusion", Inclusion.EXCLUSIVE_VICTIM.value)),
        replacement=Replacement(d.get("replacement", Replacement.TREE_PLRU.value)),
    )


def platform_to_dict(p: PlatformConfig) -> dict:
    return {
        "name": p.name,
        "l1": geometry_to_dict(p.l1),
        "l2": geometry_to_dict(p.l2) if p.l2 else None,
        "l3": geometry_to_dict(p.l3),
        "l4": geometry_to_dict(p.l4) if p.l4 else None,
        "clusters": [list(c) for c in p.clusters],
        "page_size_bytes": p.page_size,
        "huge_page_bytes": p.huge_page_size,
        "mem_size_bytes": p.mem_size,
        "way_partitioning": p.way_partitioning,
        "way_group_size": p.way_group_size,
        "streaming_thresholds": list(p.streaming_thresholds) if p.streaming_thresholds else None,
        "freq_hz": p.freq_hz,
    }


def platform_from_dict(d: dict) -> PlatformConfig:
    """Build a platform from a dict; a ``base`` key names a preset to override."""
    d = dict(d)
    base = d.pop("base", None)
    if base is not None:
        merged = platform_to_dict(platform_preset(base))
        merged.update(d)
        d = merged
    st = d.get("streaming_thresholds")
    kw = dict(
        name=d["name"],
        l1=geometry_from_dict(d["l1"]),
        l2=geometry_from_dict(d["l2"]) if d.get("l2") else None,
        l3=geometry_from_dict(d["l3"]),
        l4=geometry_from_dict(d["l4"]) if d.get("l4") else None,
        clusters=tuple(tuple(int(c) for c in cl) for cl in d["clusters"]),
        streaming_thresholds=tuple(st) if st else None,
    )
    for src, dst in (("page_size_bytes", "page_size"), ("huge_page_bytes", "huge_page_size"),
                     ("mem_size_bytes", "mem_size"), ("way_partitioning", "way_partitioning"),
                     ("way_group_size", "way_group_size"), ("freq_hz", "freq_hz")):
        if src in d:
            kw[dst] = d[src]
    return PlatformConfig(**kw)


def with_l3(p: PlatformConfig, **changes) -> PlatformConfig:
    return replace(p, l3=replace(p.l3, **changes))
