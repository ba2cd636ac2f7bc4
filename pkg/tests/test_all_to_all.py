import math

import numpy as np
import pytest

from clexsim.all_to_all import (
    MATERIALIZE_LIMIT,
    _ring_offsets,
    clex_all_to_all,
    clex_flood_tree,
    flood_from,
    torus_all_to_all,
    torus_flood_tree,
)
from clexsim.topology import TorusTopology, build_clex, embed
from oracles import edge_rule


@pytest.mark.parametrize("dims", [(4, 4, 4), (2, 6, 4), (8, 8, 8), (16, 16, 16)])
def test_torus_flood_even_dims(dims):
    t = TorusTopology(*dims)
    s = torus_all_to_all(t)
    assert s.complete and s.tree
    assert s.avg_hops == sum(dims) / 2
    assert s.total_traversals == t.n * (t.n - 1)
    assert s.extra["materialized_traversals"] == s.total_traversals
    assert s.extra["materialized_depth"] == s.max_hops
    assert s.traffic_ratio <= 3


@pytest.mark.parametrize("dims", [(3, 5, 7), (1, 1, 5), (3, 4, 1)])
def test_torus_flood_odd_dims_depth(dims):
    s = torus_all_to_all(TorusTopology(*dims))
    assert s.complete and s.tree
    assert s.max_hops == sum(k // 2 for k in dims)


def test_torus_link_load_within_factor_three_of_mean():
    for k in (4, 8, 12):
        s = torus_all_to_all(TorusTopology(k, k, k), materialize=False)
        assert 1 <= s.link_load_ratio <= 3.2


def test_ring_offsets_cover_ring_once():
    for k in range(1, 9):
        for src in range(k):
            offs = _ring_offsets(k, src)
            assert sorted((src + o) % k for o in offs) == sorted(set(range(k)) - {src})
            assert max((abs(o) for o in offs), default=0) == k // 2


def test_torus_flood_tree_size():
    t = TorusTopology(3, 4, 5)
    assert torus_flood_tree(t).size == t.n


@pytest.mark.parametrize("base,levels", [(4, 2), (8, 2), (3, 3), (4, 3), (16, 3)])
def test_clex_flood_complete_tree(base, levels):
    t = build_clex(base, levels, aggregated=False)
    s = clex_all_to_all(t)
    assert s.complete and s.tree
    assert s.extra["materialized_traffic"] == s.traffic_by_group
    assert s.extra["materialized_depth"] == levels
    assert s.total_traversals == t.n * (t.n - 1)


@pytest.mark.parametrize("base,levels", [(4, 2), (8, 3), (64, 2), (27, 2)])
def test_clex_max_propagation_is_level_series(base, levels):
    t = build_clex(base, levels)
    s = clex_all_to_all(t, embed(t))
    n = t.n
    series = sum(math.sqrt(3) * n ** (1 / 3) * n ** (-i / (3 * levels)) / 2 for i in range(levels))
    assert round(s.max_propagation, 6) == round(series, 6)


def test_flood_uses_graph_links_once_per_level():
    base, levels = 3, 3
    t = build_clex(base, levels)
    links = edge_rule(base, levels)
    undirected = {(a, b, lv) for a, b, lv in links} | {(b, a, lv) for a, b, lv in links}
    for root in range(t.n):
        levels_on_path = {root: []}
        for level, _, send, recv in flood_from(t, [root]):
            for s, r in zip(send, recv):
                assert (t.label(int(s)), t.label(int(r)), level) in undirected
                levels_on_path[int(r)] = levels_on_path[int(s)] + [level]
        assert len(levels_on_path) == t.n
        for path in levels_on_path.values():
            assert len(path) == len(set(path))


def test_lower_levels_carry_most_traffic():
    s = clex_all_to_all(build_clex(8, 2))
    shares = s.traffic_shares
    assert shares[1] > shares[2]
    assert sum(shares.values()) == pytest.approx(1.0)


def test_clex_link_load_concentrates_by_level_count():
    # busiest link vs the mean over all links approaches the number of levels
    for base, levels in [(32, 2), (16, 3), (16, 4)]:
        s = clex_all_to_all(build_clex(base, levels), materialize=False)
        assert s.link_load_ratio == pytest.approx(levels, rel=0.1)


def test_counting_mode_at_large_n():
    t = build_clex(32, 4)
    s = clex_all_to_all(t)
    assert s.complete is None and s.n > MATERIALIZE_LIMIT
    assert s.total_traversals == t.n * (t.n - 1)
    assert clex_flood_tree(t).size == t.n
