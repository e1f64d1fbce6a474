"""Adversarial path reconnaissance and shared-link flood execution.

The reconnaissance attacker owns one host and knows only its reachable peer
hosts. It times the gap between the first two packets of fresh flows to a
colocated reference peer, with and without a simultaneous data burst along
the path to each candidate peer: only when the burst rides links shared with
the control channel does the first-packet setup round slow down. The flood
phase then drives decoy-to-decoy traffic over the links recon exposed.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace

from .routing import Path, build_path_pool, dijkstra
from .scenario import EchoFlow, OneWayFlow, ReconSpec, FloodSpec, default_attacker
from .simcore.trace import Trace, ms_to_us
from .topo import Topology, node_key

US_PER_MS = 1000


def preferred_path(topo: Topology, src: str, dst: str) -> Path | None:
    """The path the controller (and preinstalled flows) would pick."""
    pool = build_path_pool(topo, src, dst)
    if pool is None:
        return None
    return min(pool.all_paths, key=lambda p: (p.cost, p.nodes))


def congestible_edges(topo: Topology, path_nodes: tuple[str, ...],
                      rate_pkt_per_ms: float) -> list[tuple[str, str]]:
    """Edges a single-source stream at the given rate can actually queue.

    The stream is throttled by each bottleneck it crosses, so only edges
    with strictly slower service than the arriving spacing build backlog.
    Uses the same integer microsecond arithmetic as the link model.
    """
    gap_us = max(1, round(US_PER_MS / rate_pkt_per_ms))
    out = []
    for u, v in zip(path_nodes, path_nodes[1:]):
        link = topo.link_between(u, v)
        service_us = max(1, round(US_PER_MS / link.capacity_pkt_per_ms))
        if service_us > gap_us:
            out.append(tuple(sorted((u, v), key=node_key)))
            gap_us = service_us
    return out


def control_channel_edges(topo: Topology, switch: str) -> set[tuple[str, str]]:
    """Undirected edges of the static switch<->controller route."""
    dm = dijkstra(topo, topo.controller)
    path = dm.path_to(switch)
    if path is None:
        return set()
    return set(path.edges())


def recon_ground_truth(topo: Topology, attacker: str, candidate: str,
                       burst_rate_pkt_per_ms: float) -> tuple[bool, set[tuple[str, str]]]:
    """(is_shared, shared link set) for one candidate, from routing state."""
    data = preferred_path(topo, attacker, candidate)
    if data is None:
        return False, set()
    hot = set(congestible_edges(topo, data.nodes, burst_rate_pkt_per_ms))
    ctrl_edges = control_channel_edges(topo, topo.host_switch(attacker))
    return bool(hot & ctrl_edges), hot & ctrl_edges


# ---------------------------------------------------------------------------
# Recon planning / classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateReading:
    target: str
    baseline_deltas_us: tuple[int, ...]
    burst_deltas_us: tuple[int, ...]
    baseline_delta_us: int  # median
    burst_delta_us: int     # median
    classified_shared: bool


@dataclass(frozen=True)
class ReconResult:
    attacker: str
    reference_peer: str
    threshold_us: int
    candidates: tuple[CandidateReading, ...]
    skipped: tuple[str, ...] = ()
    inferred_links: tuple[tuple[str, str], ...] = ()

    @property
    def classified_shared(self) -> tuple[str, ...]:
        return tuple(c.target for c in self.candidates if c.classified_shared)


@dataclass
class ReconPlan:
    attacker: str
    reference_peer: str
    candidates: tuple[str, ...]
    skipped: tuple[str, ...]
    threshold_us: int
    burst_rate_pkt_per_ms: float
    # candidate -> (baseline flow ids, burst-trial flow ids)
    baseline_flows: dict[str, tuple[str, ...]] = field(default_factory=dict)
    burst_flows: dict[str, tuple[str, ...]] = field(default_factory=dict)
    end_ms: float = 0.0


def plan_recon(topo: Topology, spec: ReconSpec) -> tuple[list, ReconPlan]:
    """Expand a recon spec into scheduled workload items plus bookkeeping.

    Per candidate and trial, one baseline measurement slot and one burst
    slot: the burst starts the slot, the measurement flow begins at the
    burst midpoint (+ configured offset) when the backlog is established.
    """
    attacker, reference, candidates = default_attacker(topo, spec)
    usable, skipped = [], []
    for c in candidates:
        if preferred_path(topo, attacker, c) is None:
            skipped.append(c)
        else:
            usable.append(c)

    plan = ReconPlan(
        attacker=attacker,
        reference_peer=reference,
        candidates=tuple(usable),
        skipped=tuple(skipped),
        threshold_us=ms_to_us(spec.threshold_ms),
        burst_rate_pkt_per_ms=spec.burst_rate_pkt_per_ms,
    )
    items: list = []
    slot = spec.slot_ms
    t = spec.start_ms
    probe_in_slot = spec.burst_duration_ms / 2 + spec.probe_offset_ms
    burst_packets = max(1, round(spec.burst_rate_pkt_per_ms * spec.burst_duration_ms))
    for ci, candidate in enumerate(usable):
        base_ids, burst_ids = [], []
        for k in range(spec.trials):
            fid = f"recon.b{ci}.{k}"
            base_ids.append(fid)
            items.append(EchoFlow(flow=fid, src=attacker, dst=reference,
                                  packets=2, start_ms=t, timeout_ms=slot))
            t += slot
            items.append(OneWayFlow(flow=f"recon.burst{ci}.{k}", src=attacker,
                                    dst=candidate, packets=burst_packets,
                                    rate_pkt_per_ms=spec.burst_rate_pkt_per_ms,
                                    start_ms=t, preinstalled=True))
            fid = f"recon.p{ci}.{k}"
            burst_ids.append(fid)
            items.append(EchoFlow(flow=fid, src=attacker, dst=reference,
                                  packets=2, start_ms=t + probe_in_slot,
                                  timeout_ms=slot))
            t += slot
        plan.baseline_flows[candidate] = tuple(base_ids)
        plan.burst_flows[candidate] = tuple(burst_ids)
    plan.end_ms = t
    return items, plan


def _flow_delta_us(trace: Trace, flow: str) -> int | None:
    """rtt(first packet) - rtt(second packet); None when incomplete."""
    samples = {s.index: s for s in trace.samples_for(flow)}
    if 1 not in samples or 2 not in samples:
        return None
    return samples[1].rtt_us - samples[2].rtt_us


def classify_recon(trace: Trace, plan: ReconPlan) -> ReconResult:
    """Pure sender-side classification: candidate shared iff the median
    burst-trial delta exceeds the median baseline delta by the threshold."""
    readings = []
    for candidate in plan.candidates:
        base = [_flow_delta_us(trace, f) for f in plan.baseline_flows[candidate]]
        burst = [_flow_delta_us(trace, f) for f in plan.burst_flows[candidate]]
        base = [d for d in base if d is not None]
        burst = [d for d in burst if d is not None]
        if not base or not burst:
            readings.append(CandidateReading(candidate, tuple(base), tuple(burst),
                                             0, 0, False))
            continue
        base_med = int(statistics.median(base))
        burst_med = int(statistics.median(burst))
        readings.append(CandidateReading(
            target=candidate,
            baseline_deltas_us=tuple(base),
            burst_deltas_us=tuple(burst),
            baseline_delta_us=base_med,
            burst_delta_us=burst_med,
            classified_shared=(burst_med - base_med) > plan.threshold_us,
        ))
    return ReconResult(
        attacker=plan.attacker,
        reference_peer=plan.reference_peer,
        threshold_us=plan.threshold_us,
        candidates=tuple(readings),
        skipped=plan.skipped,
    )


def evaluate_recon(topo: Topology, result: ReconResult,
                   burst_rate_pkt_per_ms: float) -> dict:
    """Score classifications against routing-table ground truth and map the
    classified-shared candidates to the concrete link set (operator view)."""
    tp = fp = fn = tn = 0
    truth: dict[str, bool] = {}
    inferred: set[tuple[str, str]] = set()
    for reading in result.candidates:
        shared, links = recon_ground_truth(topo, result.attacker, reading.target,
                                           burst_rate_pkt_per_ms)
        truth[reading.target] = shared
        if reading.classified_shared:
            inferred |= links
        if reading.classified_shared and shared:
            tp += 1
        elif reading.classified_shared and not shared:
            fp += 1
        elif not reading.classified_shared and shared:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 1.0
    return {
        "tp": tp, "fp": fp, "fn": fn, "tn": tn,
        "precision": precision, "recall": recall, "accuracy": accuracy,
        "ground_truth": truth,
        "inferred_links": tuple(sorted(inferred)),
    }


# ---------------------------------------------------------------------------
# Flood
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackPlan:
    target_links: tuple[tuple[str, str], ...]
    decoy_hosts: tuple[str, ...]
    rate_pkt_per_ms: float
    duration_ms: float
    uncoverable: tuple[tuple[str, str], ...] = ()
    flows: tuple[str, ...] = ()


def plan_flood(topo: Topology, spec: FloodSpec,
               target_links: tuple[tuple[str, str], ...],
               exclude_hosts: tuple[str, ...] = ()) -> tuple[list, AttackPlan]:
    """Pick decoy pairs whose routes cross each target link and schedule
    constant-rate preinstalled data flows over them."""
    from .topo import sorted_nodes

    decoys = spec.decoys
    if decoys is None:
        decoys = tuple(h for h in sorted_nodes(topo.hosts) if h not in exclude_hosts)
    targets = tuple(tuple(sorted(t, key=node_key)) for t in target_links)

    items: list = []
    flow_ids: list[str] = []
    uncoverable: list[tuple[str, str]] = []
    packets = max(1, round(spec.rate_pkt_per_ms * spec.duration_ms))
    for ti, target in enumerate(sorted(set(targets))):
        chosen = None
        fallback = None
        for i, d1 in enumerate(decoys):
            for d2 in decoys[i + 1:]:
                path = preferred_path(topo, d1, d2)
                if path is None or target not in path.edges():
                    continue
                if target in congestible_edges(topo, path.nodes, spec.rate_pkt_per_ms):
                    chosen = (d1, d2)
                    break
                if fallback is None:
                    fallback = (d1, d2)
            if chosen:
                break
        pair = chosen or fallback
        if pair is None:
            uncoverable.append(target)
            continue
        fid = f"flood.{ti}"
        flow_ids.append(fid)
        items.append(OneWayFlow(flow=fid, src=pair[0], dst=pair[1],
                                packets=packets,
                                rate_pkt_per_ms=spec.rate_pkt_per_ms,
                                start_ms=spec.start_ms, preinstalled=True))
    plan = AttackPlan(
        target_links=tuple(sorted(set(targets))),
        decoy_hosts=tuple(decoys),
        rate_pkt_per_ms=spec.rate_pkt_per_ms,
        duration_ms=spec.duration_ms,
        uncoverable=tuple(uncoverable),
        flows=tuple(flow_ids),
    )
    return items, plan
