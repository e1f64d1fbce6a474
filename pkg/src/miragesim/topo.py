"""Topology model and GML ingestion.

Parses Topology Zoo style GML files into a validated, canonical graph of
switches and links, and prepares experiment topologies by attaching hosts
and placing an in-band controller node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

# Core links default to 100 pkt/ms so a single host can saturate one with a
# modest burst; access links are 10x so they are never the bottleneck.
DEFAULT_CAPACITY_PKT_PER_MS = 100.0
DEFAULT_LATENCY_MS = 1.0
DEFAULT_QUEUE_LIMIT = 1000
ACCESS_CAPACITY_FACTOR = 10.0

CONTROLLER_ID = "ctrl"


class GmlParseError(ValueError):
    """Raised for malformed GML input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TopologyError(ValueError):
    pass


def node_key(node_id: str):
    """Sort key giving numeric ids numeric order, then lexicographic ids."""
    try:
        return (0, int(node_id), "")
    except ValueError:
        return (1, 0, node_id)


def sorted_nodes(ids) -> list[str]:
    return sorted(ids, key=node_key)


@dataclass(frozen=True, order=True)
class Link:
    """Undirected physical link; endpoints stored in canonical order."""

    a: str
    b: str
    capacity_pkt_per_ms: float = DEFAULT_CAPACITY_PKT_PER_MS
    latency_ms: float = DEFAULT_LATENCY_MS
    queue_limit: int = DEFAULT_QUEUE_LIMIT

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"self-loop link at {self.a!r}")
        if node_key(self.a) > node_key(self.b):
            lo, hi = self.b, self.a
            object.__setattr__(self, "a", lo)
            object.__setattr__(self, "b", hi)
        if self.capacity_pkt_per_ms <= 0:
            raise TopologyError(f"link {self.a}-{self.b}: capacity must be > 0")
        if self.latency_ms < 0:
            raise TopologyError(f"link {self.a}-{self.b}: latency must be >= 0")
        if self.queue_limit < 1:
            raise TopologyError(f"link {self.a}-{self.b}: queue_limit must be >= 1")

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.a, self.b)

    def other(self, node: str) -> str:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise KeyError(f"{node!r} is not an endpoint of {self.a}-{self.b}")


@dataclass(frozen=True)
class ParseReport:
    duplicate_edges_collapsed: int = 0
    self_loops_dropped: int = 0
    connected: bool = True
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class Topology:
    """Immutable switch/host/link graph with an optional controller node."""

    name: str
    switches: frozenset[str]
    hosts: frozenset[str] = frozenset()
    links: tuple[Link, ...] = ()
    controller: str | None = None
    source_format: str = "Synthetic"  # "GML" or "Synthetic"
    report: ParseReport | None = field(default=None, compare=False)

    def __post_init__(self):
        nodes = self.nodes
        seen_pairs = set()
        for link in self.links:
            for end in link.endpoints:
                if end not in nodes:
                    raise TopologyError(f"link endpoint {end!r} is not a declared node")
            if link.endpoints in seen_pairs:
                raise TopologyError(f"duplicate link {link.a}-{link.b}")
            seen_pairs.add(link.endpoints)
        degree = {h: 0 for h in self.hosts}
        for link in self.links:
            for end in link.endpoints:
                if end in degree:
                    degree[end] += 1
        for host, deg in degree.items():
            if deg != 1:
                raise TopologyError(f"host {host!r} must have exactly one link, has {deg}")

    @property
    def nodes(self) -> frozenset[str]:
        extra = {self.controller} if self.controller else set()
        return self.switches | self.hosts | frozenset(extra)

    def link_between(self, a: str, b: str) -> Link | None:
        if node_key(a) > node_key(b):
            a, b = b, a
        for link in self.links:
            if link.a == a and link.b == b:
                return link
        return None

    def host_switch(self, host: str) -> str:
        for link in self.links:
            if host in link.endpoints:
                return link.other(host)
        raise TopologyError(f"host {host!r} has no access link")

    def neighbors(self, node: str) -> list[str]:
        out = [link.other(node) for link in self.links if node in link.endpoints]
        return sorted_nodes(out)


# ---------------------------------------------------------------------------
# GML parsing
# ---------------------------------------------------------------------------

def _tokenize_gml(text: str):
    """Yield (kind, value, line) tokens; kind in {'key','str','num','[',']'} ."""
    line = 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            i += 1
        elif ch in " \t\r":
            i += 1
        elif ch == "#":  # comment to end of line
            while i < n and text[i] != "\n":
                i += 1
        elif ch == "[":
            yield ("[", "[", line)
            i += 1
        elif ch == "]":
            yield ("]", "]", line)
            i += 1
        elif ch == '"':
            j = i + 1
            start_line = line
            while j < n and text[j] != '"':
                if text[j] == "\n":
                    line += 1
                j += 1
            if j >= n:
                raise GmlParseError("unterminated string", start_line)
            yield ("str", text[i + 1:j], start_line)
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in ' \t\r\n[]"#':
                j += 1
            word = text[i:j]
            try:
                num = int(word)
                yield ("num", num, line)
            except ValueError:
                try:
                    num = float(word)
                    yield ("num", num, line)
                except ValueError:
                    yield ("key", word, line)
            i = j


def _parse_gml_value(tokens, idx):
    kind, value, line = tokens[idx]
    if kind in ("str", "num"):
        return value, idx + 1
    if kind == "key":  # bare words (e.g. unquoted labels) pass through as strings
        return value, idx + 1
    if kind == "[":
        items = []
        idx += 1
        while True:
            if idx >= len(tokens):
                raise GmlParseError("unclosed '['", line)
            kind2, value2, line2 = tokens[idx]
            if kind2 == "]":
                return items, idx + 1
            if kind2 != "key":
                raise GmlParseError(f"expected attribute name, got {value2!r}", line2)
            val, idx = _parse_gml_value(tokens, idx + 1)
            items.append((value2, val, line2))
    raise GmlParseError(f"unexpected token {value!r}", line)


def _attr(items: list, key: str, default=None):
    for k, v, _ in items:
        if k == key:
            return v
    return default


def parse_gml(text: str, name: str = "") -> Topology:
    """Parse GML text into a Topology of switches.

    All declared nodes become switches. Duplicate edges are collapsed to one
    link keeping the maximum capacity; self-loops are dropped. Missing
    capacity/latency attributes get defaults. Node ordering is canonical
    (sorted ids) so parsing is order-deterministic.
    """
    tokens = list(_tokenize_gml(text))
    if not tokens:
        raise GmlParseError("empty input", 1)
    idx = 0
    graph_items = None
    while idx < len(tokens):
        kind, value, line = tokens[idx]
        if kind != "key":
            raise GmlParseError(f"expected top-level key, got {value!r}", line)
        val, idx = _parse_gml_value(tokens, idx + 1)
        if value == "graph":
            if not isinstance(val, list):
                raise GmlParseError("'graph' must open a [...] block", line)
            graph_items = val
    if graph_items is None:
        raise GmlParseError("no 'graph [...]' block found", tokens[0][2])

    node_ids: set[str] = set()
    raw_edges = []
    for key, val, line in graph_items:
        if key == "node":
            if not isinstance(val, list):
                raise GmlParseError("'node' must open a [...] block", line)
            nid = _attr(val, "id")
            if nid is None:
                raise GmlParseError("node block missing 'id'", line)
            node_ids.add(str(nid))
        elif key == "edge":
            if not isinstance(val, list):
                raise GmlParseError("'edge' must open a [...] block", line)
            src = _attr(val, "source")
            dst = _attr(val, "target")
            if src is None or dst is None:
                raise GmlParseError("edge block missing source/target", line)
            raw_edges.append((str(src), str(dst), val, line))

    dedup: dict[tuple[str, str], Link] = {}
    duplicates = 0
    self_loops = 0
    for src, dst, items, line in raw_edges:
        for end in (src, dst):
            if end not in node_ids:
                raise TopologyError(
                    f"line {line}: edge references undeclared node {end!r}"
                )
        if src == dst:
            self_loops += 1
            continue
        capacity = float(_attr(items, "capacity", DEFAULT_CAPACITY_PKT_PER_MS))
        latency = float(_attr(items, "latency", DEFAULT_LATENCY_MS))
        queue_limit = int(_attr(items, "queue_limit", DEFAULT_QUEUE_LIMIT))
        link = Link(src, dst, capacity, latency, queue_limit)
        pair = link.endpoints
        if pair in dedup:
            duplicates += 1
            if link.capacity_pkt_per_ms > dedup[pair].capacity_pkt_per_ms:
                dedup[pair] = link
        else:
            dedup[pair] = link

    links = tuple(dedup[pair] for pair in sorted(dedup, key=lambda p: (node_key(p[0]), node_key(p[1]))))
    switches = frozenset(node_ids)
    connected = _is_connected(switches, links)
    warnings = () if connected else ("graph is disconnected",)
    report = ParseReport(
        duplicate_edges_collapsed=duplicates,
        self_loops_dropped=self_loops,
        connected=connected,
        warnings=warnings,
    )
    return Topology(
        name=name,
        switches=switches,
        links=links,
        source_format="GML",
        report=report,
    )


def _is_connected(nodes: frozenset[str], links: tuple[Link, ...]) -> bool:
    if len(nodes) <= 1:
        return True
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for link in links:
        if link.a in adj and link.b in adj:
            adj[link.a].append(link.b)
            adj[link.b].append(link.a)
    start = sorted_nodes(nodes)[0]
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(nodes)


def is_connected(topo: Topology) -> bool:
    return _is_connected(topo.nodes, topo.links)


# ---------------------------------------------------------------------------
# Experiment preparation
# ---------------------------------------------------------------------------

def _access_link(node: str, switch: str, reference_capacity: float) -> Link:
    return Link(
        node,
        switch,
        capacity_pkt_per_ms=reference_capacity * ACCESS_CAPACITY_FACTOR,
        latency_ms=DEFAULT_LATENCY_MS,
        queue_limit=DEFAULT_QUEUE_LIMIT,
    )


def _reference_capacity(topo: Topology) -> float:
    switch_links = [
        l for l in topo.links
        if l.a in topo.switches and l.b in topo.switches
    ]
    if not switch_links:
        return DEFAULT_CAPACITY_PKT_PER_MS
    return max(l.capacity_pkt_per_ms for l in switch_links)


def attach_hosts(topo: Topology, count: int, seed: int) -> Topology:
    """Attach `count` hosts to seeded-uniformly drawn switches.

    Deterministic for a fixed seed: switches are drawn from their sorted
    order with a dedicated RNG, and host ids are assigned sequentially.
    """
    import random

    if count < 0:
        raise TopologyError("count must be >= 0")
    if not topo.switches:
        raise TopologyError("topology has no switches to attach hosts to")
    if count == 0:
        return topo
    rng = random.Random(seed)
    switch_list = sorted_nodes(topo.switches)
    existing = topo.nodes
    ref_cap = _reference_capacity(topo)
    new_hosts = []
    new_links = list(topo.links)
    serial = 1
    for _ in range(count):
        hid = f"h{serial}"
        while hid in existing:
            serial += 1
            hid = f"h{serial}"
        serial += 1
        sw = switch_list[rng.randrange(len(switch_list))]
        new_hosts.append(hid)
        new_links.append(_access_link(hid, sw, ref_cap))
        existing = existing | {hid}
    return replace(
        topo,
        hosts=topo.hosts | frozenset(new_hosts),
        links=tuple(new_links),
    )


def place_controller(topo: Topology, strategy="max_degree") -> Topology:
    """Create the controller node and link it to the selected switch.

    strategy: "max_degree", "centroid", or ("node_id", <switch-id>).
    Ties break to the lowest node id.
    """
    if not _is_connected(topo.switches, tuple(
        l for l in topo.links if l.a in topo.switches and l.b in topo.switches
    )):
        raise TopologyError("controller placement requires a connected switch graph")
    if topo.controller is not None:
        raise TopologyError("controller already placed")

    switch_list = sorted_nodes(topo.switches)
    if isinstance(strategy, tuple) and strategy[0] == "node_id":
        target = str(strategy[1])
        if target not in topo.switches:
            raise TopologyError(f"no switch {target!r} for controller placement")
    elif strategy == "max_degree":
        # degree over the switch fabric; host access links do not count
        degree = {s: 0 for s in switch_list}
        for link in topo.links:
            if link.a in degree and link.b in degree:
                degree[link.a] += 1
                degree[link.b] += 1
        best = max(degree[s] for s in switch_list)
        target = next(s for s in switch_list if degree[s] == best)
    elif strategy == "centroid":
        target = _graph_center(topo, switch_list)
    else:
        raise TopologyError(f"unknown controller placement strategy {strategy!r}")

    ref_cap = _reference_capacity(topo)
    return replace(
        topo,
        controller=CONTROLLER_ID,
        links=topo.links + (_access_link(CONTROLLER_ID, target, ref_cap),),
    )


def _graph_center(topo: Topology, switch_list: list[str]) -> str:
    """Switch minimizing hop eccentricity over the switch graph."""
    from collections import deque

    adj: dict[str, list[str]] = {s: [] for s in switch_list}
    for link in topo.links:
        if link.a in adj and link.b in adj:
            adj[link.a].append(link.b)
            adj[link.b].append(link.a)
    for s in adj:
        adj[s] = sorted_nodes(adj[s])

    best_node, best_ecc = None, None
    for s in switch_list:
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    q.append(v)
        ecc = max(dist.values())
        if best_ecc is None or ecc < best_ecc:
            best_node, best_ecc = s, ecc
    return best_node


def controller_switch(topo: Topology) -> str:
    """The switch the controller node is attached to."""
    if topo.controller is None:
        raise TopologyError("no controller placed")
    return topo.host_switch(topo.controller)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _node_kind(topo: Topology, node: str) -> str:
    if node == topo.controller:
        return "controller"
    if node in topo.hosts:
        return "host"
    return "switch"


def to_canonical_json(topo: Topology) -> str:
    """Stable JSON dump (sorted keys and node order) for golden tests."""
    doc = {
        "name": topo.name,
        "source_format": topo.source_format,
        "controller": topo.controller,
        "nodes": [
            {"id": n, "kind": _node_kind(topo, n)} for n in sorted_nodes(topo.nodes)
        ],
        "links": [
            {
                "a": l.a,
                "b": l.b,
                "capacity_pkt_per_ms": l.capacity_pkt_per_ms,
                "latency_ms": l.latency_ms,
                "queue_limit": l.queue_limit,
            }
            for l in sorted(topo.links, key=lambda l: (node_key(l.a), node_key(l.b)))
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def to_gml(topo: Topology) -> str:
    """Emit the topology as GML (round-trips through parse_gml)."""
    out = ["graph [", f'  name "{topo.name}"']
    for n in sorted_nodes(topo.nodes):
        out.append("  node [")
        out.append(f"    id {n}" if n.isdigit() else f'    id "{n}"')
        out.append(f'    kind "{_node_kind(topo, n)}"')
        out.append("  ]")
    for l in sorted(topo.links, key=lambda l: (node_key(l.a), node_key(l.b))):
        out.append("  edge [")
        out.append(f"    source {l.a}" if l.a.isdigit() else f'    source "{l.a}"')
        out.append(f"    target {l.b}" if l.b.isdigit() else f'    target "{l.b}"')
        out.append(f"    capacity {l.capacity_pkt_per_ms}")
        out.append(f"    latency {l.latency_ms}")
        out.append(f"    queue_limit {l.queue_limit}")
        out.append("  ]")
    out.append("]")
    return "\n".join(out) + "\n"
