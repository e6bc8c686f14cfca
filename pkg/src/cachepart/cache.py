"""One set-associative cache level with way-masked allocation.

Tree-PLRU layout
----------------
The tree is a binary tree over the physical ways with ``n_ways - 1`` internal
nodes. A node covering ``n`` ways splits at ``n // 2`` when ``n`` is a power
of two, otherwise at the largest power of two below ``n``. For 16 ways this is
the usual balanced tree. For 12 ways the root splits 8|4, giving 11 nodes:

    node 0: ways 0-11  (left 0-7, right 8-11)
    node 1: ways 0-7   (left 0-3, right 4-7)
    nodes 2-4: ways 0-3,  nodes 5-7: ways 4-7,  nodes 8-10: ways 8-11

so each aligned group of four ways is a 3-node subtree. Node bit 0 points the
victim search left, 1 right. A touch flips every node on the path to point
away from the touched way.

Victim choice under an allocation mask descends from the root and takes the
preferred branch unless it holds no allowed way. With the mask equal to one
aligned 4-way group this behaves exactly like a standalone 4-way tree.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from .geometry import CacheGeometry, Replacement


class TreePLRU:
    def __init__(self, n_ways: int):
        self.n_ways = n_ways
        # node -> (left child, right child, left leaf mask, right leaf mask);
        # children >= 0 are nodes, < 0 encode leaf way as ~way
        self.nodes: list[tuple[int, int, int, int]] = []
        self.touch_and = [0] * n_ways
        self.touch_or = [0] * n_ways
        self._build(0, n_ways, [])
        self._memo: dict[tuple[int, int], int] = {}

    def _build(self, lo: int, n: int, path: list[tuple[int, int]]) -> int:
        if n == 1:
            clear = 0
            setb = 0
            for node, went_right in path:
                clear |= 1 << node
                if not went_right:
                    setb |= 1 << node   # touched left: point right
            self.touch_and[lo] = ~clear
            self.touch_or[lo] = setb
            return ~lo
        split = n // 2 if n & (n - 1) == 0 else 1 << (n.bit_length() - 1)
        idx = len(self.nodes)
        self.nodes.append((0, 0, 0, 0))
        left = self._build(lo, split, path + [(idx, False)])
        right = self._build(lo + split, n - split, path + [(idx, True)])
        lmask = ((1 << split) - 1) << lo
        rmask = ((1 << (n - split)) - 1) << (lo + split)
        self.nodes[idx] = (left, right, lmask, rmask)
        return idx

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def touch(self, state: int, way: int) -> int:
        return (state & self.touch_and[way]) | self.touch_or[way]

    def victim(self, state: int, allowed: int) -> int:
        key = (state, allowed)
        way = self._memo.get(key)
        if way is not None:
            return way
        if self.n_ways == 1:
            return 0
        node = 0
        nodes = self.nodes
        while node >= 0:
            left, right, lmask, rmask = nodes[node]
            if (state >> node) & 1:
                node = right if rmask & allowed else left
            else:
                node = left if lmask & allowed else right
        way = ~node
        if len(self._memo) < 1 << 20:
            self._memo[key] = way
        return way


class CacheLevel:
    """Lines are keyed by line number (``addr >> offset_bits``)."""

    def __init__(self, geom: CacheGeometry, seed: int = 0, name: Optional[str] = None,
                 replacement: Optional[Replacement] = None, check_fills: bool = True):
        self.geom = geom
        self.name = name or geom.name
        self.n_sets = geom.n_sets
        self.n_ways = geom.n_ways
        self.full_mask = (1 << geom.n_ways) - 1
        self.set_of = geom.line_set_fn()
        self.replacement = replacement or geom.replacement
        self.check_fills = check_fills
        n = geom.n_sets
        self.tags: list[list[int]] = [[-1] * geom.n_ways for _ in range(n)]
        self.owner: list[list[int]] = [[-1] * geom.n_ways for _ in range(n)]
        self.where: dict[int, int] = {}     # line -> way
        self.dirty: set[int] = set()
        if self.replacement is Replacement.TREE_PLRU:
            self.plru = TreePLRU(geom.n_ways)
            self.state = [0] * n
        elif self.replacement is Replacement.TRUE_LRU:
            self.stack = [list(range(geom.n_ways)) for _ in range(n)]   # LRU first
        else:
            self.rng = random.Random(seed)
        self.lookups = 0
        self.hits = 0
        self.misses = 0

    # -- replacement state -------------------------------------------------
    def _touch(self, s: int, way: int):
        rep = self.replacement
        if rep is Replacement.TREE_PLRU:
            self.state[s] = self.plru.touch(self.state[s], way)
        elif rep is Replacement.TRUE_LRU:
            st = self.stack[s]
            st.remove(way)
            st.append(way)

    def _choose(self, s: int, allowed: int) -> int:
        rep = self.replacement
        if rep is Replacement.TREE_PLRU:
            return self.plru.victim(self.state[s], allowed)
        if rep is Replacement.TRUE_LRU:
            for w in self.stack[s]:
                if allowed >> w & 1:
                    return w
        ways = [w for w in range(self.n_ways) if allowed >> w & 1]
        return ways[self.rng.randrange(len(ways))]

    # -- operations --------------------------------------------------------
    def lookup(self, line: int) -> Optional[int]:
        """Return the hit way (and mark it most recently used) or None."""
        self.lookups += 1
        way = self.where.get(line)
        if way is None:
            self.misses += 1
            return None
        self.hits += 1
        self._touch(self.set_of(line), way)
        return way

    def __contains__(self, line: int) -> bool:
        return line in self.where

    def fill(self, line: int, allowed: Optional[int] = None, owner: int = -1,
             dirty: bool = False) -> Optional[tuple[int, bool, int]]:
        """Allocate ``line``; return ``(evicted_line, was_dirty, owner)`` or None."""
        if allowed is None:
            allowed = self.full_mask
        s = self.set_of(line)
        tags = self.tags[s]
        way = -1
        for w in range(self.n_ways):
            if tags[w] < 0 and allowed >> w & 1:
                way = w
                break
        evicted = None
        if way < 0:
            way = self._choose(s, allowed)
            old = tags[way]
            del self.where[old]
            was_dirty = old in self.dirty
            if was_dirty:
                self.dirty.discard(old)
            evicted = (old, was_dirty, self.owner[s][way])
        if self.check_fills:
            assert allowed >> way & 1, f"{self.name}: fill into disallowed way {way}"
            assert line not in self.where, f"{self.name}: line {line:#x} already resident"
        tags[way] = line
        self.owner[s][way] = owner
        self.where[line] = way
        if dirty:
            self.dirty.add(line)
        self._touch(s, way)
        return evicted

    def invalidate(self, line: int) -> bool:
        way = self.where.pop(line, None)
        if way is None:
            return False
        s = self.set_of(line)
        self.tags[s][way] = -1
        self.owner[s][way] = -1
        if line in self.dirty:
            self.dirty.discard(line)
            return True
        return False

    def mark_dirty(self, line: int):
        if line in self.where:
            self.dirty.add(line)

    def is_dirty(self, line: int) -> bool:
        return line in self.dirty

    def owner_of(self, line: int) -> int:
        way = self.where.get(line)
        if way is None:
            return -1
        return self.owner[self.set_of(line)][way]

    def way_of(self, line: int) -> Optional[int]:
        return self.where.get(line)

    @property
    def occupancy(self) -> int:
        return len(self.where)

    def dump(self, sets=None) -> str:
        """Text dump of valid lines: ``set way tag owner dirty`` per row."""
        out = []
        shift = self.geom.tag_shift - self.geom.offset_bits
        for s in (range(self.n_sets) if sets is None else sets):
            for w in range(self.n_ways):
                line = self.tags[s][w]
                if line >= 0:
                    out.append(f"{s} {w} {line >> shift:#x} {self.owner[s][w]} "
                               f"{int(line in self.dirty)}")
        return "\n".join(out)


@dataclass
class Hit:
    way: int


def lookup(level: CacheLevel, line_addr: int):
    """Byte-address convenience wrapper returning ``Hit(way)`` or None."""
    if line_addr % level.geom.line_size:
        raise ValueError("line address must be line aligned")
    way = level.lookup(line_addr >> level.geom.offset_bits)
    return None if way is None else Hit(way)
