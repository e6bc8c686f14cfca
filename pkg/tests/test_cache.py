import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cachepart.cache import CacheLevel, Hit, TreePLRU, lookup
from cachepart.geometry import CacheGeometry, Replacement

from oracles import PlruOracle, SetAssocOracle


def geom(sets=4, ways=4, rep=Replacement.TREE_PLRU):
    return CacheGeometry("t", n_sets=sets, n_ways=ways, replacement=rep)


@pytest.mark.parametrize("n,nodes", [(4, 3), (12, 11), (16, 15), (2, 1), (1, 0)])
def test_node_count(n, nodes):
    assert TreePLRU(n).n_nodes == nodes


def test_twelve_way_layout_splits_eight_four():
    t = TreePLRU(12)
    _, _, lmask, rmask = t.nodes[0]
    assert lmask == 0xFF and rmask == 0xF00


@pytest.mark.parametrize("n", [2, 3, 4, 8, 12, 16])
@given(data=st.data())
def test_plru_matches_tree_oracle(n, data):
    t = TreePLRU(n)
    o = PlruOracle(n)
    state = 0
    ops = data.draw(st.lists(st.tuples(st.booleans(), st.integers(0, n - 1),
                                       st.integers(1, (1 << n) - 1)), max_size=60))
    for is_touch, way, allowed in ops:
        if is_touch:
            state = t.touch(state, way)
            o.touch(way)
        else:
            ways = {w for w in range(n) if allowed >> w & 1}
            assert t.victim(state, allowed) == o.victim(ways)


def _run_level(level, oracle, seq, allowed=None):
    for line in seq:
        hit = level.lookup(line) is not None
        o_hit, o_ev = oracle.access(line, allowed and {w for w in range(16) if allowed >> w & 1})
        assert hit == o_hit
        if not hit:
            ev = level.fill(line, allowed)
            assert (ev[0] if ev else None) == o_ev


@pytest.mark.parametrize("rep,policy", [(Replacement.TREE_PLRU, "plru"),
                                        (Replacement.TRUE_LRU, "lru")])
@given(seq=st.lists(st.integers(0, 63), max_size=300))
def test_level_matches_oracle(rep, policy, seq):
    lv = CacheLevel(geom(4, 4, rep))
    _run_level(lv, SetAssocOracle(4, 4, policy), seq)


def test_masked_plru_equals_standalone_four_way_bulk():
    """10^4 random sequences: a 16-way set restricted to one aligned group of four
    ways behaves exactly like a standalone 4-way PLRU set."""
    rng = np.random.default_rng(7)
    for trial in range(10_000):
        group = trial % 4
        mask = 0xF << (4 * group)
        big = CacheLevel(geom(1, 16))
        small = CacheLevel(geom(1, 4))
        for line in rng.integers(0, 10, size=40).tolist():
            hb = big.lookup(line) is not None
            hs = small.lookup(line) is not None
            assert hb == hs
            if not hb:
                eb = big.fill(line, mask)
                es = small.fill(line)
                assert (eb and eb[0]) == (es and es[0])
                assert big.way_of(line) - 4 * group == small.way_of(line)


@given(st.lists(st.integers(0, 200), max_size=200), st.integers(1, 0xFFFF))
def test_fills_only_in_allowed_ways(seq, mask):
    lv = CacheLevel(geom(4, 16))
    for line in seq:
        if lv.lookup(line) is None:
            lv.fill(line, mask)
            assert mask >> lv.way_of(line) & 1


@given(st.lists(st.tuples(st.integers(0, 99), st.sampled_from([0x000F, 0xFFF0])), max_size=300))
def test_lookups_are_global_allocation_is_not(ops):
    """A line allocated by one partition is hit from anywhere, and fills from
    one partition never displace lines in the other."""
    lv = CacheLevel(geom(2, 16))
    owner = {}
    for line, mask in ops:
        if lv.lookup(line) is not None:
            continue
        ev = lv.fill(line, mask, owner=mask)
        owner[line] = mask
        if ev:
            assert ev[2] == mask


def test_dirty_and_invalidate():
    lv = CacheLevel(geom())
    assert lv.fill(5, dirty=True) is None
    assert lv.is_dirty(5)
    assert lv.invalidate(5) is True
    assert 5 not in lv and not lv.invalidate(5)
    lv.fill(6)
    lv.mark_dirty(6)
    lv.mark_dirty(99)                 # absent line: no-op
    assert lv.is_dirty(6) and not lv.is_dirty(99)


def test_eviction_reports_dirty_and_owner():
    lv = CacheLevel(geom(1, 2, Replacement.TRUE_LRU))
    lv.fill(1, owner=3, dirty=True)
    lv.fill(2, owner=4)
    assert lv.fill(3, owner=5) == (1, True, 3)
    assert lv.owner_of(2) == 4 and lv.owner_of(1) == -1


def test_duplicate_fill_rejected():
    lv = CacheLevel(geom())
    lv.fill(1)
    with pytest.raises(AssertionError):
        lv.fill(1)


def test_pseudo_random_is_seeded():
    def evictions(seed):
        lv = CacheLevel(geom(1, 4, Replacement.PSEUDO_RANDOM), seed=seed)
        out = []
        for line in range(40):
            ev = lv.fill(line)
            out.append(ev and ev[0])
        return out
    assert evictions(1) == evictions(1)
    assert evictions(1) != evictions(2)


def test_byte_lookup_wrapper_and_dump():
    lv = CacheLevel(geom())
    assert lookup(lv, 0x40) is None
    lv.fill(1, owner=0, dirty=True)
    assert lookup(lv, 0x40) == Hit(way=0)
    with pytest.raises(ValueError):
        lookup(lv, 0x41)
    assert lv.dump() == "1 0 0x0 0 1"
    assert lv.occupancy == 1


@settings(max_examples=30)
@given(st.lists(st.integers(0, 1 << 20), min_size=1, max_size=400))
def test_occupancy_bounded(seq):
    lv = CacheLevel(geom(8, 4))
    for line in seq:
        if lv.lookup(line) is None:
            lv.fill(line)
    assert lv.occupancy <= 32
    assert lv.occupancy == sum(t >= 0 for s in lv.tags for t in s)
