"""Route computation: shortest paths, exhaustive simple-path enumeration,
exhaust-and-refill path pools, and bridge-based alternate-path tests."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum

from .topo import Link, Topology, node_key, sorted_nodes


class Metric(str, Enum):
    HOP_COUNT = "hop_count"
    LATENCY_SUM = "latency_sum"
    INVERSE_CAPACITY_MIN = "inverse_capacity_min"


#: Metrics usable as additive per-edge weights (dijkstra/bellman-ford).
ADDITIVE_METRICS = (Metric.HOP_COUNT, Metric.LATENCY_SUM)

DEFAULT_METRIC = Metric.HOP_COUNT


class RoutingError(ValueError):
    pass


def edge_weight(link: Link, metric: Metric) -> float:
    if metric == Metric.HOP_COUNT:
        return 1.0
    if metric == Metric.LATENCY_SUM:
        return link.latency_ms
    raise RoutingError(f"{metric.value} is not an additive edge metric")


def adjacency(topo: Topology) -> dict[str, list[tuple[str, Link]]]:
    """Neighbor lists in ascending node-id order (the determinism anchor)."""
    adj: dict[str, list[tuple[str, Link]]] = {n: [] for n in topo.nodes}
    for link in topo.links:
        adj[link.a].append((link.b, link))
        adj[link.b].append((link.a, link))
    for n in adj:
        adj[n].sort(key=lambda pair: node_key(pair[0]))
    return adj


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    cost: float

    def __post_init__(self):
        if len(self.nodes) < 1 or len(set(self.nodes)) != len(self.nodes):
            raise RoutingError(f"path must be simple and nonempty: {self.nodes}")

    @property
    def edge_count(self) -> int:
        return len(self.nodes) - 1

    def edges(self) -> list[tuple[str, str]]:
        return [
            tuple(sorted((u, v), key=node_key))
            for u, v in zip(self.nodes, self.nodes[1:])
        ]

    def reversed(self) -> "Path":
        return Path(tuple(reversed(self.nodes)), self.cost)


@dataclass
class DistanceMap:
    source: str
    dist: dict[str, float]
    prev: dict[str, str | None]

    def path_to(self, dst: str) -> Path | None:
        if math.isinf(self.dist.get(dst, math.inf)):
            return None
        nodes = [dst]
        while nodes[-1] != self.source:
            nodes.append(self.prev[nodes[-1]])
        nodes.reverse()
        return Path(tuple(nodes), self.dist[dst])


def dijkstra(topo: Topology, source: str, metric: Metric = DEFAULT_METRIC,
             weight_fn=None) -> DistanceMap:
    """Single-source shortest paths; predecessor ties break to lowest node id.

    `weight_fn(link) -> float` overrides the metric when given (weights must
    be non-negative).
    """
    if source not in topo.nodes:
        raise RoutingError(f"unknown source node {source!r}")
    if weight_fn is None:
        if metric not in ADDITIVE_METRICS:
            raise RoutingError(f"{metric.value} is not an additive edge metric")
        weight_fn = lambda link: edge_weight(link, metric)

    adj = adjacency(topo)
    dist: dict[str, float] = {n: math.inf for n in topo.nodes}
    prev: dict[str, str | None] = {n: None for n in topo.nodes}
    dist[source] = 0.0
    heap: list[tuple[float, tuple, str]] = [(0.0, node_key(source), source)]
    done: set[str] = set()
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, link in adj[u]:
            w = weight_fn(link)
            if w < 0:
                raise RoutingError(f"negative weight on link {link.a}-{link.b}")
            alt = d + w
            if alt < dist[v]:
                dist[v] = alt
                prev[v] = u
                heapq.heappush(heap, (alt, node_key(v), v))
            elif alt == dist[v] and prev[v] is not None and node_key(u) < node_key(prev[v]):
                prev[v] = u
    return DistanceMap(source=source, dist=dist, prev=prev)


def shortest_path(topo: Topology, src: str, dst: str,
                  metric: Metric = DEFAULT_METRIC) -> Path | None:
    return dijkstra(topo, src, metric).path_to(dst)


def path_cost(topo: Topology, nodes, metric: Metric = DEFAULT_METRIC) -> float:
    """Cost of a node sequence under the metric; every hop must be a link."""
    nodes = tuple(nodes)
    links = []
    for u, v in zip(nodes, nodes[1:]):
        link = topo.link_between(u, v)
        if link is None:
            raise RoutingError(f"no link between {u!r} and {v!r}")
        links.append(link)
    if metric == Metric.HOP_COUNT:
        return float(len(links))
    if metric == Metric.LATENCY_SUM:
        return sum(l.latency_ms for l in links)
    if metric == Metric.INVERSE_CAPACITY_MIN:
        if not links:
            return 0.0
        return 1.0 / min(l.capacity_pkt_per_ms for l in links)
    raise RoutingError(f"unknown metric {metric!r}")


@dataclass
class EnumerationResult:
    paths: list[Path]
    truncated: bool


def enumerate_all_paths(topo: Topology, src: str, dst: str,
                        max_hops: int, max_paths: int,
                        metric: Metric = DEFAULT_METRIC) -> EnumerationResult:
    """All simple src->dst paths with <= max_hops edges, up to max_paths.

    Deterministic DFS: neighbors are visited in ascending node-id order and
    each branch backtracks by removing the current node from the visited
    set. `truncated` reports whether either cap cut the enumeration short.
    """
    if src == dst:
        raise RoutingError("src and dst must differ")
    if max_hops < 1 or max_paths < 1:
        raise RoutingError("max_hops and max_paths must be >= 1")
    if src not in topo.nodes or dst not in topo.nodes:
        return EnumerationResult([], False)

    adj = adjacency(topo)
    paths: list[Path] = []
    truncated = False
    visited = {src}
    stack_path = [src]

    def dfs(current: str) -> bool:
        """Returns False once max_paths is hit to unwind the recursion."""
        nonlocal truncated
        if current == dst:
            paths.append(Path(tuple(stack_path), path_cost(topo, stack_path, metric)))
            return len(paths) < max_paths
        if len(stack_path) - 1 >= max_hops:
            if any(v not in visited for v, _ in adj[current]):
                truncated = True
            return True
        for v, _ in adj[current]:
            if v in visited:
                continue
            visited.add(v)
            stack_path.append(v)
            keep_going = dfs(v)
            stack_path.pop()
            visited.remove(v)
            if not keep_going:
                return False
        return True

    if not dfs(src):
        truncated = True
    return EnumerationResult(paths, truncated)


# ---------------------------------------------------------------------------
# Path pool (exhaust-and-refill selection)
# ---------------------------------------------------------------------------

DEFAULT_POOL_MAX_PATHS = 64
DEFAULT_POOL_EXTRA_HOPS = 4


@dataclass
class PathPool:
    """Candidate paths for one source-destination pair.

    Selection always takes the minimum-cost path still available this round
    (ties by lexicographic node list), removes it, and refills the available
    set from the full list once it drains.
    """

    sd_pair: tuple[str, str]
    all_paths: tuple[Path, ...]
    available: list[Path] = field(default_factory=list)

    def __post_init__(self):
        if not self.all_paths:
            raise RoutingError(f"empty path pool for {self.sd_pair}")
        if not self.available:
            self.available = list(self.all_paths)

    def __len__(self) -> int:
        return len(self.all_paths)

    @property
    def has_diversity(self) -> bool:
        return len(self.all_paths) >= 2

    def select_next(self) -> Path:
        chosen = min(self.available, key=lambda p: (p.cost, p.nodes))
        self.available.remove(chosen)
        if not self.available:
            self.available = list(self.all_paths)
        return chosen

    def select_next_excluding(self, exclude: Path) -> Path:
        """Min-cost available path that differs from `exclude` when the pool
        holds at least two paths; falls back to plain selection otherwise."""
        if len(self.all_paths) < 2:
            return self.select_next()
        candidates = [p for p in self.available if p.nodes != exclude.nodes]
        if not candidates:
            # only the excluded path remains this round; start the next round
            self.available = list(self.all_paths)
            candidates = [p for p in self.available if p.nodes != exclude.nodes]
        chosen = min(candidates, key=lambda p: (p.cost, p.nodes))
        self.available.remove(chosen)
        if not self.available:
            self.available = list(self.all_paths)
        return chosen


def select_next_path(pool: PathPool) -> Path:
    return pool.select_next()


def build_path_pool(topo: Topology, src: str, dst: str,
                    metric: Metric = DEFAULT_METRIC,
                    max_paths: int = DEFAULT_POOL_MAX_PATHS,
                    extra_hops: int = DEFAULT_POOL_EXTRA_HOPS) -> PathPool | None:
    """Pool of candidate paths capped around the shortest-path length."""
    sp = shortest_path(topo, src, dst)
    if sp is None:
        return None
    result = enumerate_all_paths(
        topo, src, dst,
        max_hops=sp.edge_count + extra_hops,
        max_paths=max_paths,
        metric=metric,
    )
    ordered = tuple(sorted(result.paths, key=lambda p: (p.cost, p.nodes)))
    return PathPool(sd_pair=(src, dst), all_paths=ordered)


# ---------------------------------------------------------------------------
# Bridges and alternate-path analysis
# ---------------------------------------------------------------------------

def bridges(topo: Topology) -> set[tuple[str, str]]:
    """All bridge edges (canonical endpoint order), via iterative Tarjan."""
    adj = adjacency(topo)
    order: dict[str, int] = {}
    low: dict[str, int] = {}
    result: set[tuple[str, str]] = set()
    counter = 0

    for root in sorted_nodes(topo.nodes):
        if root in order:
            continue
        stack: list[tuple[str, str | None, int]] = [(root, None, 0)]
        while stack:
            node, parent, child_idx = stack.pop()
            if child_idx == 0:
                order[node] = low[node] = counter
                counter += 1
            neighbors = adj[node]
            advanced = False
            parent_skipped = False
            for i in range(child_idx, len(neighbors)):
                v = neighbors[i][0]
                if v == parent and not parent_skipped:
                    # skip exactly one edge back to the parent
                    parent_skipped = True
                    continue
                if v in order:
                    low[node] = min(low[node], order[v])
                    continue
                stack.append((node, parent, i + 1))
                stack.append((v, node, 0))
                advanced = True
                break
            if not advanced and parent is not None:
                low[parent] = min(low[parent], low[node])
                if low[node] > order[parent]:
                    result.add(tuple(sorted((parent, node), key=node_key)))
    return result


@dataclass(frozen=True)
class AlternatePathIndex:
    """O(1)-per-pair alternate-path answers for one topology.

    A pair (u, v) has >= 2 distinct simple paths exactly when u and v are
    connected in the graph but NOT connected in the bridges-only forest: a
    bridge-only route is the unique path, while any non-bridge edge on a
    route lies inside a cycle-bearing component and yields a detour.
    """

    graph_component: dict[str, int]
    bridge_component: dict[str, int]

    def connected(self, u: str, v: str) -> bool:
        return self.graph_component[u] == self.graph_component[v]

    def has_alternate(self, u: str, v: str) -> bool:
        if u == v:
            return False
        return (
            self.graph_component[u] == self.graph_component[v]
            and self.bridge_component[u] != self.bridge_component[v]
        )


def _components(nodes: list[str], edges) -> dict[str, int]:
    labels: dict[str, int] = {}
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    comp = 0
    for start in nodes:
        if start in labels:
            continue
        labels[start] = comp
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in labels:
                    labels[v] = comp
                    stack.append(v)
        comp += 1
    return labels


def alternate_path_index(topo: Topology, switches_only: bool = True) -> AlternatePathIndex:
    if switches_only:
        nodes = sorted_nodes(topo.switches)
        node_set = topo.switches
        links = [l for l in topo.links if l.a in node_set and l.b in node_set]
        sub = Topology(name=topo.name, switches=frozenset(node_set),
                       links=tuple(links), source_format=topo.source_format)
    else:
        nodes = sorted_nodes(topo.nodes)
        sub = topo
        links = list(topo.links)
    bridge_set = bridges(sub)
    all_edges = [(l.a, l.b) for l in links]
    bridge_edges = [e for e in all_edges if tuple(sorted(e, key=node_key)) in bridge_set]
    return AlternatePathIndex(
        graph_component=_components(nodes, all_edges),
        bridge_component=_components(nodes, bridge_edges),
    )


def has_alternate_path(topo: Topology, src: str, dst: str) -> bool:
    """True iff at least two distinct simple src-dst paths exist."""
    if src == dst:
        raise RoutingError("src and dst must differ")
    index = alternate_path_index(topo, switches_only=False)
    return index.has_alternate(src, dst)
