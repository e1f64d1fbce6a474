"""Scenario configuration: schema, YAML loading, validation, topology prep.

One scenario file describes a complete deterministic experiment: topology
source, seed, horizon, background workload, attacker activity, and defense
settings. Keys carry explicit units (``*_ms``) to keep timing unambiguous.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

import yaml

from . import synthetic
from .mirage import ProbeConfig
from .topo import Topology, attach_hosts, is_connected, parse_gml, place_controller, sorted_nodes


class ScenarioError(ValueError):
    """Invalid scenario config; message names the offending field."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


# ---------------------------------------------------------------------------
# Workload items
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EchoFlow:
    """Ping-paced request/echo flow; the next packet goes out once the
    previous one is answered or times out. This is the measurement shape."""

    flow: str
    src: str
    dst: str
    packets: int
    start_ms: float = 0.0
    timeout_ms: float = 1000.0


@dataclass(frozen=True)
class OneWayFlow:
    """Constant-rate unidirectional flow (background load or attack burst).

    Unless preinstalled, the first packet triggers reactive setup and the
    stream pauses for setup_wait_ms before the remaining packets flow.
    Preinstalled flows model long-established connections whose rules are
    already in every switch (pure data-plane traffic).
    """

    flow: str
    src: str
    dst: str
    packets: int
    rate_pkt_per_ms: float
    start_ms: float = 0.0
    preinstalled: bool = False
    setup_wait_ms: float = 10.0


@dataclass(frozen=True)
class CtrlQueryFlow:
    """Controller-processed request/reply traffic (ARP/DHCP class): every
    packet goes host -> switch -> controller and back, regardless of rules."""

    flow: str
    host: str
    packets: int
    start_ms: float = 0.0
    timeout_ms: float = 1000.0


WorkloadItem = EchoFlow | OneWayFlow | CtrlQueryFlow


# ---------------------------------------------------------------------------
# Attacker / defense specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReconSpec:
    enabled: bool = False
    attacker_host: str | None = None   # None -> first host (sorted)
    reference_peer: str | None = None  # None -> first other host on the same switch
    candidates: tuple[str, ...] | None = None  # None -> all hosts off the attacker switch
    trials: int = 5
    threshold_ms: float = 1.0
    burst_rate_pkt_per_ms: float = 150.0
    burst_duration_ms: float = 16.0
    probe_offset_ms: float = 0.0  # measurement start relative to burst midpoint
    slot_ms: float = 150.0        # spacing between consecutive measurements
    start_ms: float = 10.0


@dataclass(frozen=True)
class FloodSpec:
    enabled: bool = False
    target_links: tuple[tuple[str, str], ...] = ()
    from_recon: bool = False  # derive targets from a recon phase
    rate_pkt_per_ms: float = 200.0
    duration_ms: float = 200.0
    start_ms: float = 10.0
    decoys: tuple[str, ...] | None = None  # None -> all hosts except attacker side


@dataclass(frozen=True)
class DefenseSpec:
    mode: str = "off"  # off | detect | full
    policy: str = "always_on"  # always_on | on_alert
    lambda_threshold: int = 5
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    unique_rule_timeout_ms: float = 50.0
    detect_start_ms: float = 0.0


@dataclass(frozen=True)
class TopologySpec:
    source: str  # "builtin:<name>" or a GML file path
    attach_host_count: int = 0
    attach_seed: int | None = None  # None -> scenario seed
    hosts_at: tuple[tuple[str, int], ...] = ()  # deterministic (switch, count) placement
    controller_strategy: str = "max_degree"  # max_degree | centroid | node_id:<id>


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    horizon_ms: float
    topology: TopologySpec
    workload: tuple[WorkloadItem, ...] = ()
    recon: ReconSpec = field(default_factory=ReconSpec)
    flood: FloodSpec = field(default_factory=FloodSpec)
    defense: DefenseSpec = field(default_factory=DefenseSpec)
    blackholed_switches: tuple[str, ...] = ()
    controller_service_ms: float = 0.5
    buffer_timeout_ms: float = 1000.0
    trace_detail: str = "normal"

    def config_hash(self) -> str:
        blob = json.dumps(_scenario_to_doc(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Topology preparation
# ---------------------------------------------------------------------------

def resolve_topology(spec: TopologySpec, seed: int, base_dir: FsPath | None = None) -> Topology:
    """Build the prepared topology: source graph + hosts + controller."""
    if spec.source.startswith("builtin:"):
        topo = synthetic.builtin(spec.source.split(":", 1)[1])
    else:
        path = FsPath(spec.source)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ScenarioError("topology.source", f"file not found: {path}")
        topo = parse_gml(path.read_text(), name=path.name)

    if spec.hosts_at:
        topo = _attach_hosts_at(topo, spec.hosts_at)
    if spec.attach_host_count:
        attach_seed = spec.attach_seed if spec.attach_seed is not None else seed
        topo = attach_hosts(topo, spec.attach_host_count, attach_seed)

    strategy = spec.controller_strategy
    if strategy.startswith("node_id:"):
        topo = place_controller(topo, ("node_id", strategy.split(":", 1)[1]))
    else:
        topo = place_controller(topo, strategy)
    if not is_connected(topo):
        raise ScenarioError("topology", "prepared topology is not connected")
    return topo


def _attach_hosts_at(topo: Topology, hosts_at) -> Topology:
    from .topo import ACCESS_CAPACITY_FACTOR, DEFAULT_LATENCY_MS, DEFAULT_QUEUE_LIMIT, Link
    from .topo import _reference_capacity  # shared default policy

    ref_cap = _reference_capacity(topo)
    links = list(topo.links)
    hosts = set(topo.hosts)
    serial = 1
    existing = set(topo.nodes)
    for switch, count in hosts_at:
        if switch not in topo.switches:
            raise ScenarioError("topology.hosts_at", f"unknown switch {switch!r}")
        for _ in range(count):
            hid = f"h{serial}"
            while hid in existing:
                serial += 1
                hid = f"h{serial}"
            serial += 1
            hosts.add(hid)
            existing.add(hid)
            links.append(Link(hid, switch,
                              capacity_pkt_per_ms=ref_cap * ACCESS_CAPACITY_FACTOR,
                              latency_ms=DEFAULT_LATENCY_MS,
                              queue_limit=DEFAULT_QUEUE_LIMIT))
    return replace(topo, hosts=frozenset(hosts), links=tuple(links))


# ---------------------------------------------------------------------------
# YAML loading / validation
# ---------------------------------------------------------------------------

def _need(doc: dict, key: str, kind, path: str, default=None, required=False):
    if key not in doc:
        if required:
            raise ScenarioError(f"{path}{key}", "required field is missing")
        return default
    value = doc[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ScenarioError(f"{path}{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _no_unknown(doc: dict, known: set[str], path: str):
    for key in doc:
        if key not in known:
            raise ScenarioError(f"{path}{key}", "unknown field")


def scenario_from_doc(doc: dict, base_dir: FsPath | None = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "scenario must be a mapping")
    _no_unknown(doc, {"name", "seed", "horizon_ms", "topology", "workload", "recon",
                      "flood", "defense", "blackholed_switches", "controller_service_ms",
                      "buffer_timeout_ms", "trace_detail"}, "")
    name = _need(doc, "name", str, "", required=True)
    seed = _need(doc, "seed", int, "", required=True)
    horizon_ms = _need(doc, "horizon_ms", float, "", required=True)
    if horizon_ms <= 0:
        raise ScenarioError("horizon_ms", "must be > 0")

    tdoc = _need(doc, "topology", dict, "", required=True)
    _no_unknown(tdoc, {"source", "attach_host_count", "attach_seed", "hosts_at",
                       "controller_strategy"}, "topology.")
    hosts_at_doc = _need(tdoc, "hosts_at", dict, "topology.", default={})
    hosts_at = tuple(sorted((str(k), int(v)) for k, v in hosts_at_doc.items()))
    topology = TopologySpec(
        source=_need(tdoc, "source", str, "topology.", required=True),
        attach_host_count=_need(tdoc, "attach_host_count", int, "topology.", default=0),
        attach_seed=_need(tdoc, "attach_seed", int, "topology.", default=None),
        hosts_at=hosts_at,
        controller_strategy=_need(tdoc, "controller_strategy", str, "topology.",
                                  default="max_degree"),
    )

    workload = []
    for i, w in enumerate(doc.get("workload", []) or []):
        path = f"workload[{i}]."
        kind = _need(w, "kind", str, path, required=True)
        if kind == "echo":
            _no_unknown(w, {"kind", "flow", "src", "dst", "packets", "start_ms",
                            "timeout_ms"}, path)
            workload.append(EchoFlow(
                flow=_need(w, "flow", str, path, required=True),
                src=str(_need(w, "src", None, path, required=True)),
                dst=str(_need(w, "dst", None, path, required=True)),
                packets=_need(w, "packets", int, path, required=True),
                start_ms=_need(w, "start_ms", float, path, default=0.0),
                timeout_ms=_need(w, "timeout_ms", float, path, default=1000.0),
            ))
        elif kind == "oneway":
            _no_unknown(w, {"kind", "flow", "src", "dst", "packets", "rate_pkt_per_ms",
                            "start_ms", "preinstalled", "setup_wait_ms"}, path)
            workload.append(OneWayFlow(
                flow=_need(w, "flow", str, path, required=True),
                src=str(_need(w, "src", None, path, required=True)),
                dst=str(_need(w, "dst", None, path, required=True)),
                packets=_need(w, "packets", int, path, required=True),
                rate_pkt_per_ms=_need(w, "rate_pkt_per_ms", float, path, required=True),
                start_ms=_need(w, "start_ms", float, path, default=0.0),
                preinstalled=_need(w, "preinstalled", bool, path, default=False),
                setup_wait_ms=_need(w, "setup_wait_ms", float, path, default=10.0),
            ))
        elif kind == "ctrl_query":
            _no_unknown(w, {"kind", "flow", "host", "packets", "start_ms", "timeout_ms"}, path)
            workload.append(CtrlQueryFlow(
                flow=_need(w, "flow", str, path, required=True),
                host=str(_need(w, "host", None, path, required=True)),
                packets=_need(w, "packets", int, path, required=True),
                start_ms=_need(w, "start_ms", float, path, default=0.0),
                timeout_ms=_need(w, "timeout_ms", float, path, default=1000.0),
            ))
        else:
            raise ScenarioError(f"{path}kind", f"unknown workload kind {kind!r}")
    flow_ids = [w.flow for w in workload]
    if len(set(flow_ids)) != len(flow_ids):
        raise ScenarioError("workload", "flow ids must be unique")

    rdoc = doc.get("recon", {}) or {}
    _no_unknown(rdoc, {"enabled", "attacker_host", "reference_peer", "candidates",
                       "trials", "threshold_ms", "burst_rate_pkt_per_ms",
                       "burst_duration_ms", "probe_offset_ms", "slot_ms", "start_ms"},
                "recon.")
    cand = rdoc.get("candidates")
    recon = ReconSpec(
        enabled=_need(rdoc, "enabled", bool, "recon.", default=False),
        attacker_host=rdoc.get("attacker_host"),
        reference_peer=rdoc.get("reference_peer"),
        candidates=tuple(str(c) for c in cand) if cand is not None else None,
        trials=_need(rdoc, "trials", int, "recon.", default=5),
        threshold_ms=_need(rdoc, "threshold_ms", float, "recon.", default=1.0),
        burst_rate_pkt_per_ms=_need(rdoc, "burst_rate_pkt_per_ms", float, "recon.", default=150.0),
        burst_duration_ms=_need(rdoc, "burst_duration_ms", float, "recon.", default=16.0),
        probe_offset_ms=_need(rdoc, "probe_offset_ms", float, "recon.", default=0.0),
        slot_ms=_need(rdoc, "slot_ms", float, "recon.", default=150.0),
        start_ms=_need(rdoc, "start_ms", float, "recon.", default=10.0),
    )
    if recon.enabled and recon.trials < 1:
        raise ScenarioError("recon.trials", "must be >= 1")

    fdoc = doc.get("flood", {}) or {}
    _no_unknown(fdoc, {"enabled", "target_links", "from_recon", "rate_pkt_per_ms",
                       "duration_ms", "start_ms", "decoys"}, "flood.")
    targets = tuple(
        (str(pair[0]), str(pair[1]))
        for pair in (fdoc.get("target_links") or [])
    )
    decoys = fdoc.get("decoys")
    flood = FloodSpec(
        enabled=_need(fdoc, "enabled", bool, "flood.", default=False),
        target_links=targets,
        from_recon=_need(fdoc, "from_recon", bool, "flood.", default=False),
        rate_pkt_per_ms=_need(fdoc, "rate_pkt_per_ms", float, "flood.", default=200.0),
        duration_ms=_need(fdoc, "duration_ms", float, "flood.", default=200.0),
        start_ms=_need(fdoc, "start_ms", float, "flood.", default=10.0),
        decoys=tuple(str(d) for d in decoys) if decoys is not None else None,
    )

    ddoc = doc.get("defense", {}) or {}
    _no_unknown(ddoc, {"mode", "policy", "lambda", "probe_interval_ms",
                       "max_probe_attempts", "batch_size", "unique_rule_timeout_ms",
                       "detect_start_ms"}, "defense.")
    mode = _need(ddoc, "mode", str, "defense.", default="off")
    if mode not in ("off", "detect", "full"):
        raise ScenarioError("defense.mode", f"must be off|detect|full, got {mode!r}")
    policy = _need(ddoc, "policy", str, "defense.", default="always_on")
    if policy not in ("always_on", "on_alert"):
        raise ScenarioError("defense.policy", f"must be always_on|on_alert, got {policy!r}")
    try:
        probe = ProbeConfig(
            probe_interval_ms=_need(ddoc, "probe_interval_ms", float, "defense.", default=2000.0),
            max_probe_attempts=_need(ddoc, "max_probe_attempts", int, "defense.", default=2),
            batch_size=_need(ddoc, "batch_size", int, "defense.", default=0),
        )
    except ValueError as exc:
        raise ScenarioError("defense.probe", str(exc))
    lam = _need(ddoc, "lambda", int, "defense.", default=5)
    if lam < 0:
        raise ScenarioError("defense.lambda", "must be >= 0")
    defense = DefenseSpec(
        mode=mode,
        policy=policy,
        lambda_threshold=lam,
        probe=probe,
        unique_rule_timeout_ms=_need(ddoc, "unique_rule_timeout_ms", float, "defense.",
                                     default=50.0),
        detect_start_ms=_need(ddoc, "detect_start_ms", float, "defense.", default=0.0),
    )

    blackholed = tuple(str(s) for s in (doc.get("blackholed_switches") or []))
    detail = _need(doc, "trace_detail", str, "", default="normal")
    if detail not in ("normal", "full"):
        raise ScenarioError("trace_detail", f"must be normal|full, got {detail!r}")

    return Scenario(
        name=name,
        seed=seed,
        horizon_ms=horizon_ms,
        topology=topology,
        workload=tuple(workload),
        recon=recon,
        flood=flood,
        defense=defense,
        blackholed_switches=blackholed,
        controller_service_ms=_need(doc, "controller_service_ms", float, "", default=0.5),
        buffer_timeout_ms=_need(doc, "buffer_timeout_ms", float, "", default=1000.0),
        trace_detail=detail,
    )


def load_scenario(path: str | FsPath) -> Scenario:
    path = FsPath(path)
    if not path.exists():
        raise ScenarioError("scenario", f"file not found: {path}")
    doc = yaml.safe_load(path.read_text())
    return scenario_from_doc(doc, base_dir=path.parent)


def _scenario_to_doc(sc: Scenario) -> dict:
    """Canonical dict form used for the config hash."""
    def plain(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return {k: plain(getattr(obj, k)) for k in sorted(obj.__dataclass_fields__)}
        if isinstance(obj, (list, tuple)):
            return [plain(x) for x in obj]
        return obj

    return plain(sc)


# Hosts an engine needs for attacker defaults -------------------------------

def default_attacker(topo: Topology, spec: ReconSpec) -> tuple[str, str, tuple[str, ...]]:
    """(attacker, reference peer on same switch, candidate hosts) with
    explicit values passed through and the rest derived deterministically."""
    hosts = sorted_nodes(topo.hosts)
    if not hosts:
        raise ScenarioError("recon", "topology has no hosts")
    attacker = spec.attacker_host or hosts[0]
    if attacker not in topo.hosts:
        raise ScenarioError("recon.attacker_host", f"unknown host {attacker!r}")
    attacker_switch = topo.host_switch(attacker)
    reference = spec.reference_peer
    if reference is None:
        colocated = [h for h in hosts
                     if h != attacker and topo.host_switch(h) == attacker_switch]
        if not colocated:
            raise ScenarioError(
                "recon.reference_peer",
                f"no second host on attacker switch {attacker_switch!r}; "
                "place one or set reference_peer")
        reference = colocated[0]
    elif reference not in topo.hosts:
        raise ScenarioError("recon.reference_peer", f"unknown host {reference!r}")
    if spec.candidates is not None:
        candidates = spec.candidates
        for c in candidates:
            if c not in topo.hosts:
                raise ScenarioError("recon.candidates", f"unknown host {c!r}")
    else:
        candidates = tuple(h for h in hosts
                           if h not in (attacker, reference)
                           and topo.host_switch(h) != attacker_switch)
    return attacker, reference, candidates
