"""Programmatic test/demo topologies (switch graphs, no hosts attached)."""

from __future__ import annotations

import random

from .topo import Link, Topology, TopologyError


def _topo(name: str, switch_ids, edges, **link_kw) -> Topology:
    switches = frozenset(str(s) for s in switch_ids)
    links = tuple(Link(str(a), str(b), **link_kw) for a, b in edges)
    return Topology(name=name, switches=switches, links=links, source_format="Synthetic")


def triangle() -> Topology:
    return _topo("triangle", "abc", [("a", "b"), ("b", "c"), ("a", "c")])


def path_graph(n: int) -> Topology:
    ids = [f"s{i}" for i in range(1, n + 1)]
    return _topo(f"path{n}", ids, list(zip(ids, ids[1:])))


def ring(n: int) -> Topology:
    ids = [f"s{i}" for i in range(1, n + 1)]
    edges = list(zip(ids, ids[1:])) + [(ids[-1], ids[0])]
    return _topo(f"ring{n}", ids, edges)


def star(n_leaves: int) -> Topology:
    hub = "s1"
    leaves = [f"s{i}" for i in range(2, n_leaves + 2)]
    return _topo(f"star{n_leaves}", [hub] + leaves, [(hub, leaf) for leaf in leaves])


def complete(n: int) -> Topology:
    ids = [f"s{i}" for i in range(1, n + 1)]
    edges = [(ids[i], ids[j]) for i in range(n) for j in range(i + 1, n)]
    return _topo(f"complete{n}", ids, edges)


def dumbbell(side: int = 3) -> Topology:
    """Two cliques of `side` switches joined by a single bottleneck link."""
    left = [f"l{i}" for i in range(1, side + 1)]
    right = [f"r{i}" for i in range(1, side + 1)]
    edges = [(left[i], left[j]) for i in range(side) for j in range(i + 1, side)]
    edges += [(right[i], right[j]) for i in range(side) for j in range(i + 1, side)]
    edges += [(left[0], right[0])]
    return _topo(f"dumbbell{side}", left + right, edges)


def random_connected(n_switches: int, extra_edges: int, seed: int) -> Topology:
    """Random connected switch graph: a random spanning tree plus extras.

    Deterministic for a fixed seed; node ids are s1..sN.
    """
    if n_switches < 2:
        raise TopologyError("need at least 2 switches")
    rng = random.Random(seed)
    ids = [f"s{i}" for i in range(1, n_switches + 1)]
    edges: set[tuple[str, str]] = set()
    attached = [ids[0]]
    for node in ids[1:]:
        anchor = attached[rng.randrange(len(attached))]
        edges.add(tuple(sorted((node, anchor))))
        attached.append(node)
    all_pairs = [
        (ids[i], ids[j])
        for i in range(n_switches)
        for j in range(i + 1, n_switches)
        if tuple(sorted((ids[i], ids[j]))) not in edges
    ]
    rng.shuffle(all_pairs)
    for pair in all_pairs[:extra_edges]:
        edges.add(tuple(sorted(pair)))
    return _topo(f"rand{n_switches}x{extra_edges}s{seed}", ids, sorted(edges))


BUILTIN_BUILDERS = {
    "triangle": triangle,
    "path4": lambda: path_graph(4),
    "path3": lambda: path_graph(3),
    "ring6": lambda: ring(6),
    "ring8": lambda: ring(8),
    "star6": lambda: star(6),
    "star8": lambda: star(8),
    "dumbbell": lambda: dumbbell(3),
    "complete4": lambda: complete(4),
}


def builtin(name: str) -> Topology:
    try:
        return BUILTIN_BUILDERS[name]()
    except KeyError:
        known = ", ".join(sorted(BUILTIN_BUILDERS))
        raise TopologyError(f"unknown builtin topology {name!r} (known: {known})")
