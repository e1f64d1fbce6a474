import random
import re

import pytest

from miragesim import synthetic
from miragesim.topo import (
    DEFAULT_CAPACITY_PKT_PER_MS,
    DEFAULT_LATENCY_MS,
    GmlParseError,
    TopologyError,
    attach_hosts,
    controller_switch,
    parse_gml,
    place_controller,
    to_canonical_json,
    to_gml,
)

TRIANGLE_GML = """
graph [
  node [ id 0 ]
  node [ id 1 ]
  node [ id 2 ]
  edge [ source 0 target 1 ]
  edge [ source 1 target 2 ]
  edge [ source 0 target 2 ]
]
"""


def test_parse_triangle():
    topo = parse_gml(TRIANGLE_GML, name="triangle")
    assert len(topo.switches) == 3
    assert len(topo.links) == 3
    assert topo.hosts == frozenset()
    assert topo.source_format == "GML"
    assert topo.report.connected


def test_parse_fills_defaults_and_reads_attributes():
    text = """
    graph [
      node [ id 0 ]
      node [ id 1 ]
      node [ id 2 ]
      edge [ source 0 target 1 capacity 42 latency 2.5 queue_limit 7 ]
      edge [ source 1 target 2 ]
    ]
    """
    topo = parse_gml(text)
    tuned = topo.link_between("0", "1")
    assert tuned.capacity_pkt_per_ms == 42
    assert tuned.latency_ms == 2.5
    assert tuned.queue_limit == 7
    plain = topo.link_between("1", "2")
    assert plain.capacity_pkt_per_ms == DEFAULT_CAPACITY_PKT_PER_MS
    assert plain.latency_ms == DEFAULT_LATENCY_MS


def test_parse_duplicate_edge_collapsed_keeping_max_capacity():
    text = """
    graph [
      node [ id 0 ]
      node [ id 1 ]
      edge [ source 0 target 1 capacity 10 ]
      edge [ source 1 target 0 capacity 99 ]
    ]
    """
    topo = parse_gml(text)
    assert len(topo.links) == 1
    assert topo.report.duplicate_edges_collapsed == 1
    assert topo.link_between("0", "1").capacity_pkt_per_ms == 99


def test_parse_drops_self_loops():
    text = """
    graph [
      node [ id 0 ]
      node [ id 1 ]
      edge [ source 0 target 0 ]
      edge [ source 0 target 1 ]
    ]
    """
    topo = parse_gml(text)
    assert len(topo.links) == 1
    assert topo.report.self_loops_dropped == 1


def test_parse_malformed_reports_line():
    bad = "graph [\n  node [ id 0\n"
    with pytest.raises(GmlParseError) as err:
        parse_gml(bad)
    assert "line" in str(err.value)


def test_parse_edge_to_undeclared_node_is_validation_error():
    text = """
    graph [
      node [ id 0 ]
      edge [ source 0 target 3 ]
    ]
    """
    with pytest.raises(TopologyError, match="undeclared"):
        parse_gml(text)


def test_parse_disconnected_flagged_not_rejected():
    text = """
    graph [
      node [ id 0 ]
      node [ id 1 ]
      node [ id 2 ]
      node [ id 3 ]
      edge [ source 0 target 1 ]
      edge [ source 2 target 3 ]
    ]
    """
    topo = parse_gml(text)
    assert not topo.report.connected
    assert "disconnected" in topo.report.warnings[0]


def test_abilene_switch_count_matches_raw_node_blocks(abilene_text):
    # independent oracle: count node blocks with a plain text scan
    expected = len(re.findall(r"node\s*\[", abilene_text))
    topo = parse_gml(abilene_text, name="Abilene.gml")
    assert expected == 11
    assert len(topo.switches) == expected
    assert len(topo.links) == 14


def test_parse_roundtrip_is_idempotent(abilene_text):
    first = parse_gml(abilene_text, name="Abilene.gml")
    again = parse_gml(to_gml(first), name="Abilene.gml")
    assert first == again
    assert to_canonical_json(first) == to_canonical_json(again)


def test_canonical_json_is_stable(abilene_text):
    topo = parse_gml(abilene_text, name="Abilene.gml")
    assert to_canonical_json(topo) == to_canonical_json(topo)


# -- attach_hosts -----------------------------------------------------------

def test_attach_zero_hosts_is_identity():
    topo = synthetic.triangle()
    assert attach_hosts(topo, 0, seed=7) == topo


def test_attach_hosts_matches_independent_replay():
    topo = synthetic.triangle()
    grown = attach_hosts(topo, 200, seed=42)
    assert len(grown.hosts) == 200

    # replay the documented draw: sorted switches, randrange per host
    rng = random.Random(42)
    switches = sorted(topo.switches)
    expected_counts = {s: 0 for s in switches}
    for _ in range(200):
        expected_counts[switches[rng.randrange(len(switches))]] += 1

    actual_counts = {s: 0 for s in switches}
    for host in grown.hosts:
        actual_counts[grown.host_switch(host)] += 1
    assert actual_counts == expected_counts
    assert sum(actual_counts.values()) == 200


def test_attach_hosts_deterministic_across_runs():
    topo = synthetic.ring(5)
    a = attach_hosts(topo, 25, seed=9)
    b = attach_hosts(topo, 25, seed=9)
    assert a == b
    assert attach_hosts(topo, 25, seed=10) != a


def test_attach_hosts_single_switch_forced():
    base = synthetic._topo("one", ["s1"], [])
    grown = attach_hosts(base, 3, seed=123)
    assert len(grown.hosts) == 3
    assert {grown.host_switch(h) for h in grown.hosts} == {"s1"}


def test_attach_hosts_access_links_get_10x_capacity():
    topo = attach_hosts(synthetic.triangle(), 4, seed=1)
    host = sorted(topo.hosts)[0]
    access = topo.link_between(host, topo.host_switch(host))
    assert access.capacity_pkt_per_ms == 10 * DEFAULT_CAPACITY_PKT_PER_MS


# -- place_controller -------------------------------------------------------

def test_place_controller_centroid_of_path_graph():
    topo = synthetic.path_graph(3)  # s1 - s2 - s3
    placed = place_controller(topo, "centroid")
    assert placed.controller == "ctrl"
    assert controller_switch(placed) == "s2"


def test_place_controller_max_degree_tie_breaks_to_lowest_id():
    placed = place_controller(synthetic.triangle(), "max_degree")
    assert controller_switch(placed) == "a"


def test_place_controller_max_degree_abilene_matches_degree_scan(abilene_text):
    degrees: dict[str, int] = {}
    for src, dst in re.findall(r"edge\s*\[\s*source\s+(\d+)\s+target\s+(\d+)", abilene_text):
        degrees[src] = degrees.get(src, 0) + 1
        degrees[dst] = degrees.get(dst, 0) + 1
    best = max(degrees.values())
    expected = min((s for s, d in degrees.items() if d == best), key=int)

    topo = parse_gml(abilene_text, name="Abilene.gml")
    placed = place_controller(topo, "max_degree")
    assert controller_switch(placed) == expected


def test_place_controller_by_node_id():
    placed = place_controller(synthetic.triangle(), ("node_id", "b"))
    assert controller_switch(placed) == "b"


def test_place_controller_requires_connected():
    text = """
    graph [
      node [ id 0 ] node [ id 1 ] node [ id 2 ] node [ id 3 ]
      edge [ source 0 target 1 ] edge [ source 2 target 3 ]
    ]
    """
    topo = parse_gml(text)
    with pytest.raises(TopologyError, match="connected"):
        place_controller(topo, "max_degree")


def test_every_switch_routes_to_controller_after_placement():
    from miragesim.routing import dijkstra
    import math

    topo = attach_hosts(synthetic.ring(6), 5, seed=3)
    placed = place_controller(topo, "max_degree")
    dm = dijkstra(placed, placed.controller)
    for s in placed.switches:
        assert not math.isinf(dm.dist[s])


# -- invariants -------------------------------------------------------------

def test_host_must_have_exactly_one_link():
    from miragesim.topo import Link, Topology

    with pytest.raises(TopologyError, match="exactly one link"):
        Topology(name="bad", switches=frozenset({"s1", "s2"}),
                 hosts=frozenset({"h1"}),
                 links=(Link("h1", "s1"), Link("h1", "s2"), Link("s1", "s2")))


def test_link_validation():
    from miragesim.topo import Link

    with pytest.raises(TopologyError):
        Link("a", "a")
    with pytest.raises(TopologyError):
        Link("a", "b", capacity_pkt_per_ms=0)
    with pytest.raises(TopologyError):
        Link("a", "b", latency_ms=-1)
    with pytest.raises(TopologyError):
        Link("a", "b", queue_limit=0)
    # endpoints canonicalized
    assert Link("b", "a").endpoints == ("a", "b")
