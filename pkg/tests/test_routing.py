import math
import random

import pytest

from miragesim import synthetic
from miragesim.routing import (
    Metric,
    Path,
    PathPool,
    RoutingError,
    bridges,
    build_path_pool,
    dijkstra,
    enumerate_all_paths,
    has_alternate_path,
    path_cost,
    select_next_path,
)
from miragesim.topo import Link, Topology, parse_gml


def bellman_ford(topo, source, weight_fn):
    """Reference oracle: relax every edge |V|-1 times."""
    dist = {n: math.inf for n in topo.nodes}
    dist[source] = 0.0
    edges = []
    for link in topo.links:
        w = weight_fn(link)
        edges.append((link.a, link.b, w))
        edges.append((link.b, link.a, w))
    for _ in range(len(topo.nodes) - 1):
        for u, v, w in edges:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
    return dist


def recursive_simple_paths(topo, src, dst):
    """Reference oracle: plain recursive enumeration, no caps."""
    adj = {n: topo.neighbors(n) for n in topo.nodes}
    out = []

    def walk(node, seen, acc):
        if node == dst:
            out.append(tuple(acc))
            return
        for nxt in adj[node]:
            if nxt not in seen:
                seen.add(nxt)
                acc.append(nxt)
                walk(nxt, seen, acc)
                acc.pop()
                seen.remove(nxt)

    walk(src, {src}, [src])
    return sorted(out)


# -- dijkstra ----------------------------------------------------------------

def test_dijkstra_path_graph():
    topo = synthetic.path_graph(3)
    dm = dijkstra(topo, "s1")
    assert dm.dist["s3"] == 2
    assert dm.prev["s3"] == "s2"


def test_dijkstra_source_initialization():
    dm = dijkstra(synthetic.triangle(), "a")
    assert dm.dist["a"] == 0
    assert dm.prev["a"] is None


def test_dijkstra_unreachable_is_infinite():
    topo = Topology(name="two", switches=frozenset({"a", "b", "c"}),
                    links=(Link("a", "b"),))
    dm = dijkstra(topo, "a")
    assert math.isinf(dm.dist["c"])
    assert dm.prev["c"] is None
    assert dm.path_to("c") is None


def test_dijkstra_negative_weight_rejected():
    topo = synthetic.triangle()
    with pytest.raises(RoutingError, match="negative"):
        dijkstra(topo, "a", weight_fn=lambda link: -1.0)


def test_dijkstra_predecessor_tie_breaks_to_lowest_id():
    # two equal-cost routes into s4: via s2 and via s3
    topo = synthetic._topo("diamond", ["s1", "s2", "s3", "s4"],
                           [("s1", "s2"), ("s1", "s3"), ("s2", "s4"), ("s3", "s4")])
    dm = dijkstra(topo, "s1")
    assert dm.dist["s4"] == 2
    assert dm.prev["s4"] == "s2"


def test_dijkstra_matches_bellman_ford_on_random_graphs():
    rng = random.Random(2024)
    for trial in range(200):
        n = rng.randint(4, 15)
        topo = synthetic.random_connected(n, extra_edges=rng.randint(0, n), seed=trial)
        weights = {link.endpoints: float(rng.randint(1, 5)) for link in topo.links}
        weight_fn = lambda link: weights[link.endpoints]
        dm = dijkstra(topo, "s1", weight_fn=weight_fn)
        oracle = bellman_ford(topo, "s1", weight_fn)
        assert dm.dist == oracle


def test_dijkstra_rejects_non_additive_metric():
    with pytest.raises(RoutingError, match="additive"):
        dijkstra(synthetic.triangle(), "a", Metric.INVERSE_CAPACITY_MIN)


# -- path cost ----------------------------------------------------------------

def test_path_cost_hop_count():
    topo = synthetic.triangle()
    assert path_cost(topo, ("a", "b", "c"), Metric.HOP_COUNT) == 2


def test_path_cost_latency_sum():
    topo = synthetic._topo("pair", ["a", "b"], [("a", "b")], latency_ms=3.0)
    assert path_cost(topo, ("a", "b"), Metric.LATENCY_SUM) == 3.0


def test_path_cost_inverse_capacity_min():
    links = (Link("a", "b", capacity_pkt_per_ms=10),
             Link("b", "c", capacity_pkt_per_ms=40))
    topo = Topology(name="t", switches=frozenset("abc"), links=links)
    assert path_cost(topo, ("a", "b", "c"), Metric.INVERSE_CAPACITY_MIN) == pytest.approx(0.1)


def test_path_cost_missing_link_is_error():
    with pytest.raises(RoutingError, match="no link"):
        path_cost(synthetic.path_graph(3), ("s1", "s3"))


def test_path_cost_abilene_latency_matches_file_resummation(abilene_text):
    topo = parse_gml(abilene_text, name="Abilene.gml")
    nodes = ("3", "4", "5", "8")  # Seattle-Sunnyvale-LA-Houston
    total = path_cost(topo, nodes, Metric.LATENCY_SUM)
    # independent re-summation over per-link attributes
    expected = sum(topo.link_between(u, v).latency_ms
                   for u, v in zip(nodes, nodes[1:]))
    assert total == expected


# -- enumeration --------------------------------------------------------------

def test_enumerate_triangle():
    result = enumerate_all_paths(synthetic.triangle(), "a", "c",
                                 max_hops=10, max_paths=100)
    assert [p.nodes for p in result.paths] == [("a", "b", "c"), ("a", "c")]
    assert not result.truncated


def test_enumerate_tree_has_unique_path():
    topo = synthetic.path_graph(5)
    result = enumerate_all_paths(topo, "s1", "s5", max_hops=10, max_paths=100)
    assert len(result.paths) == 1
    assert not result.truncated


def test_enumerate_k4_has_five_paths():
    topo = synthetic.complete(4)
    result = enumerate_all_paths(topo, "s1", "s4", max_hops=10, max_paths=100)
    assert len(result.paths) == 5
    oracle = recursive_simple_paths(topo, "s1", "s4")
    assert sorted(p.nodes for p in result.paths) == oracle


def test_enumerate_matches_recursive_oracle_on_random_graphs():
    rng = random.Random(7)
    for trial in range(200):
        n = rng.randint(3, 10)
        topo = synthetic.random_connected(n, extra_edges=rng.randint(0, 6), seed=trial + 1000)
        nodes = sorted(topo.switches)
        src, dst = rng.sample(nodes, 2)
        result = enumerate_all_paths(topo, src, dst, max_hops=n, max_paths=10_000)
        assert not result.truncated
        assert sorted(p.nodes for p in result.paths) == recursive_simple_paths(topo, src, dst)


def test_enumerate_paths_are_simple_with_consistent_costs():
    topo = synthetic.complete(5)
    result = enumerate_all_paths(topo, "s1", "s5", max_hops=10, max_paths=1000)
    for p in result.paths:
        assert len(set(p.nodes)) == len(p.nodes)
        assert p.cost == path_cost(topo, p.nodes, Metric.HOP_COUNT)


def test_enumerate_truncation_flags():
    topo = synthetic.complete(5)
    capped = enumerate_all_paths(topo, "s1", "s5", max_hops=10, max_paths=3)
    assert len(capped.paths) == 3
    assert capped.truncated
    shallow = enumerate_all_paths(topo, "s1", "s5", max_hops=1, max_paths=100)
    assert [p.nodes for p in shallow.paths] == [("s1", "s5")]
    assert shallow.truncated


def test_enumerate_unreachable_gives_empty():
    topo = Topology(name="two", switches=frozenset({"a", "b", "c"}),
                    links=(Link("a", "b"),))
    result = enumerate_all_paths(topo, "a", "c", max_hops=5, max_paths=5)
    assert result.paths == []


def test_enumerate_rejects_same_endpoints():
    with pytest.raises(RoutingError):
        enumerate_all_paths(synthetic.triangle(), "a", "a", max_hops=3, max_paths=3)


# -- path pool ----------------------------------------------------------------

def _pool(paths):
    return PathPool(sd_pair=("s", "d"), all_paths=tuple(paths))


def test_pool_min_cost_then_refill():
    p1 = Path(("s", "d"), 2.0)
    p2 = Path(("s", "x", "d"), 3.0)
    pool = _pool([p1, p2])
    assert select_next_path(pool) == p1
    assert select_next_path(pool) == p2
    assert select_next_path(pool) == p1  # refilled


def test_pool_equal_costs_tie_break_lexicographic():
    pa = Path(("s", "a", "d"), 2.0)
    pb = Path(("s", "b", "d"), 2.0)
    pool = _pool([pb, pa])
    assert select_next_path(pool) == pa


def test_pool_round_robin_over_k_rounds():
    rng = random.Random(5)
    paths = [Path(("s", f"x{i}", "d"), float(rng.randint(1, 4))) for i in range(6)]
    pool = _pool(paths)
    seen = [select_next_path(pool) for _ in range(3 * len(paths))]
    for r in range(3):
        round_paths = seen[r * len(paths):(r + 1) * len(paths)]
        assert sorted(p.nodes for p in round_paths) == sorted(p.nodes for p in paths)
        costs = [p.cost for p in round_paths]
        assert costs == sorted(costs)


def test_pool_exhaustive_nondecreasing_cost_for_small_sizes():
    rng = random.Random(99)
    for n in range(1, 9):
        for _ in range(30):
            paths = [Path(("s", f"m{i}", "d"), float(rng.randint(1, 3)))
                     for i in range(n)]
            pool = _pool(paths)
            drained = [select_next_path(pool) for _ in range(n)]
            assert sorted(p.nodes for p in drained) == sorted(p.nodes for p in paths)
            costs = [p.cost for p in drained]
            assert costs == sorted(costs)
            # refill returns the global minimum again
            nxt = select_next_path(pool)
            assert (nxt.cost, nxt.nodes) == min((p.cost, p.nodes) for p in paths)


def test_pool_empty_rejected():
    with pytest.raises(RoutingError):
        PathPool(sd_pair=("s", "d"), all_paths=())


def test_build_path_pool_orders_by_cost():
    pool = build_path_pool(synthetic.triangle(), "a", "c")
    assert [p.nodes for p in pool.all_paths] == [("a", "c"), ("a", "b", "c")]
    assert pool.has_diversity


# -- bridges / alternate paths -------------------------------------------------

def test_bridges_of_barbell():
    # two triangles joined by one bridge
    topo = synthetic._topo("barbell", ["a", "b", "c", "x", "y", "z"],
                           [("a", "b"), ("b", "c"), ("a", "c"),
                            ("x", "y"), ("y", "z"), ("x", "z"), ("c", "x")])
    assert bridges(topo) == {("c", "x")}


def test_bridges_of_tree_are_all_edges():
    topo = synthetic.path_graph(4)
    assert bridges(topo) == {("s1", "s2"), ("s2", "s3"), ("s3", "s4")}


def test_bridges_of_ring_are_empty():
    assert bridges(synthetic.ring(5)) == set()


def test_alternate_path_tree_false_cycle_true():
    tree = synthetic.path_graph(4)
    assert not has_alternate_path(tree, "s1", "s4")
    ring = synthetic.ring(5)
    assert has_alternate_path(ring, "s1", "s3")


def test_alternate_path_hanging_cycle_does_not_help():
    # u - a - (triangle a,b,c) - a - v : entering and leaving the cycle at
    # the same node gives no second simple path
    topo = synthetic._topo("lollipop", ["u", "a", "b", "c", "v"],
                           [("u", "a"), ("a", "b"), ("b", "c"), ("a", "c"), ("a", "v")])
    assert not has_alternate_path(topo, "u", "v")
    assert has_alternate_path(topo, "b", "c")


def test_alternate_path_matches_enumeration_on_random_graphs():
    rng = random.Random(31)
    for trial in range(60):
        n = rng.randint(4, 15)
        topo = synthetic.random_connected(n, extra_edges=rng.randint(0, 8), seed=trial + 77)
        nodes = sorted(topo.switches)
        for i, u in enumerate(nodes):
            for v in nodes[i + 1:]:
                expected = len(recursive_simple_paths(topo, u, v)) >= 2
                assert has_alternate_path(topo, u, v) == expected, (topo.name, u, v)


def test_alternate_path_is_symmetric():
    rng = random.Random(13)
    for trial in range(20):
        topo = synthetic.random_connected(10, extra_edges=rng.randint(0, 6), seed=trial)
        nodes = sorted(topo.switches)
        for i, u in enumerate(nodes):
            for v in nodes[i + 1:]:
                assert has_alternate_path(topo, u, v) == has_alternate_path(topo, v, u)


def test_alternate_path_unreachable_false():
    topo = Topology(name="two", switches=frozenset({"a", "b", "c"}),
                    links=(Link("a", "b"),))
    assert not has_alternate_path(topo, "a", "c")
