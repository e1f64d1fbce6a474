"""Dataset-scale path-diversity analytics and experiment metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .routing import alternate_path_index, enumerate_all_paths
from .simcore.trace import Trace
from .topo import Topology, sorted_nodes


@dataclass(frozen=True)
class DiversityReport:
    topology: str
    pair_count: int
    pairs_with_alternates: int
    percentage: float
    connected: bool
    # per-pair capped simple-path counts, only when a matrix was requested
    switch_order: tuple[str, ...] = ()
    alt_path_matrix: tuple[tuple[int, ...], ...] = ()


def diversity_report(topo: Topology, with_matrix: bool = False,
                     matrix_max_paths: int = 16,
                     matrix_extra_hops: int = 3) -> DiversityReport:
    """Fraction of unordered switch pairs with at least two distinct simple
    paths. Hosts and the controller are excluded from the population.

    The boolean per pair comes from component labels (graph components vs
    bridges-only components), so whole-dataset runs stay cheap; the optional
    matrix holds capped simple-path counts for heatmap export.
    """
    switches = sorted_nodes(topo.switches)
    n = len(switches)
    pair_count = n * (n - 1) // 2
    index = alternate_path_index(topo, switches_only=True)

    by_graph_comp: dict[int, int] = {}
    by_bridge_comp: dict[int, int] = {}
    for s in switches:
        g = index.graph_component[s]
        b = index.bridge_component[s]
        by_graph_comp[g] = by_graph_comp.get(g, 0) + 1
        by_bridge_comp[b] = by_bridge_comp.get(b, 0) + 1
    connected_pairs = sum(c * (c - 1) // 2 for c in by_graph_comp.values())
    unique_route_pairs = sum(c * (c - 1) // 2 for c in by_bridge_comp.values())
    with_alt = connected_pairs - unique_route_pairs

    percentage = 100.0 * with_alt / pair_count if pair_count else 0.0
    matrix: tuple[tuple[int, ...], ...] = ()
    if with_matrix:
        sub = _switch_subgraph(topo)
        rows = []
        for i, u in enumerate(switches):
            row = []
            for j, v in enumerate(switches):
                if i == j:
                    row.append(0)
                elif j < i:
                    row.append(rows[j][i])
                else:
                    sp = _hop_distance(sub, u, v)
                    if sp is None:
                        row.append(0)
                    else:
                        result = enumerate_all_paths(
                            sub, u, v,
                            max_hops=sp + matrix_extra_hops,
                            max_paths=matrix_max_paths)
                        row.append(len(result.paths))
            rows.append(row)
        matrix = tuple(tuple(r) for r in rows)
    return DiversityReport(
        topology=topo.name,
        pair_count=pair_count,
        pairs_with_alternates=with_alt,
        percentage=percentage,
        connected=len(by_graph_comp) <= 1,
        switch_order=tuple(switches) if with_matrix else (),
        alt_path_matrix=matrix,
    )


def _switch_subgraph(topo: Topology) -> Topology:
    links = tuple(l for l in topo.links
                  if l.a in topo.switches and l.b in topo.switches)
    return Topology(name=topo.name, switches=topo.switches, links=links,
                    source_format=topo.source_format)


def _hop_distance(topo: Topology, u: str, v: str) -> int | None:
    from collections import deque

    dist = {u: 0}
    q = deque([u])
    while q:
        x = q.popleft()
        if x == v:
            return dist[x]
        for y in topo.neighbors(x):
            if y not in dist:
                dist[y] = dist[x] + 1
                q.append(y)
    return None


@dataclass(frozen=True)
class DatasetSummary:
    topology_count: int
    zero_redundancy_count: int
    zero_redundancy_names: tuple[str, ...]
    histogram: tuple[tuple[str, int], ...]  # (bucket label, count)


def dataset_classification(reports: list[DiversityReport]) -> DatasetSummary:
    """Dataset roll-up: how many topologies offer no redundant paths at all."""
    if not reports:
        raise ValueError("need at least one report")
    zero = sorted(r.topology for r in reports if r.percentage == 0.0)
    buckets = [("0%", 0), ("(0,25]%", 0), ("(25,50]%", 0), ("(50,75]%", 0),
               ("(75,100)%", 0), ("100%", 0)]
    counts = dict(buckets)
    for r in reports:
        p = r.percentage
        if p == 0.0:
            counts["0%"] += 1
        elif p <= 25.0:
            counts["(0,25]%"] += 1
        elif p <= 50.0:
            counts["(25,50]%"] += 1
        elif p <= 75.0:
            counts["(50,75]%"] += 1
        elif p < 100.0:
            counts["(75,100)%"] += 1
        else:
            counts["100%"] += 1
    return DatasetSummary(
        topology_count=len(reports),
        zero_redundancy_count=len(zero),
        zero_redundancy_names=tuple(zero),
        histogram=tuple((label, counts[label]) for label, _ in buckets),
    )


# ---------------------------------------------------------------------------
# Detection metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    fpr: float
    fnr: float
    fpr_defined: bool = True
    fnr_defined: bool = True
    mean_rt_unresponsive_ms: float | None = None
    mean_rt_responsive_ms: float | None = None
    notes: tuple[str, ...] = ()

    @property
    def population(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def detection_metrics(ground_truth: dict[str, bool],
                      alerted: set[str] | list[str],
                      claimed: dict[str, float] | None = None,
                      mean_rt_unresponsive_ms: float | None = None,
                      mean_rt_responsive_ms: float | None = None) -> DetectionMetrics:
    """Confusion-matrix statistics for a probing campaign.

    ground_truth maps each probed switch to True when it was genuinely
    unreachable. `claimed` optionally carries externally reported ratios
    (accuracy/fpr/fnr); any that disagree with the counts are flagged in
    the notes rather than adopted.
    """
    alerted = set(alerted)
    unknown = alerted - set(ground_truth)
    if unknown:
        raise ValueError(f"alerts for unlabeled switches: {sorted(unknown)}")
    tp = fp = fn = tn = 0
    for switch, unreachable in sorted(ground_truth.items()):
        hit = switch in alerted
        if unreachable and hit:
            tp += 1
        elif not unreachable and hit:
            fp += 1
        elif unreachable and not hit:
            fn += 1
        else:
            tn += 1
    population = tp + fp + fn + tn
    accuracy = (tp + tn) / population if population else 1.0
    fpr_defined = (fp + tn) > 0
    fnr_defined = (fn + tp) > 0
    fpr = fp / (fp + tn) if fpr_defined else 0.0
    fnr = fn / (fn + tp) if fnr_defined else 0.0

    notes = []
    if not fpr_defined:
        notes.append("fpr undefined (no negatives); reported as 0")
    if not fnr_defined:
        notes.append("fnr undefined (no positives); reported as 0")
    if claimed:
        computed = {"accuracy": accuracy, "fpr": fpr, "fnr": fnr}
        for key in sorted(claimed):
            if key not in computed:
                raise ValueError(f"unknown claimed metric {key!r}")
            got = computed[key]
            want = claimed[key]
            if not math.isclose(got, want, abs_tol=5e-3):
                notes.append(
                    f"claimed {key} {want:.2%} inconsistent with counts "
                    f"tp={tp} fp={fp} fn={fn} tn={tn} (computed {got:.2%})")
    return DetectionMetrics(
        tp=tp, fp=fp, fn=fn, tn=tn,
        accuracy=accuracy, fpr=fpr, fnr=fnr,
        fpr_defined=fpr_defined, fnr_defined=fnr_defined,
        mean_rt_unresponsive_ms=mean_rt_unresponsive_ms,
        mean_rt_responsive_ms=mean_rt_responsive_ms,
        notes=tuple(notes),
    )


def detection_metrics_from_trace(trace: Trace, ground_truth: dict[str, bool],
                                 claimed: dict[str, float] | None = None) -> DetectionMetrics:
    alerted = {a["switch"] for a in trace.meta.get("alerts", [])}
    return detection_metrics(ground_truth, alerted, claimed=claimed)


# ---------------------------------------------------------------------------
# Overhead metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OverheadSummary:
    controller_messages: int
    packet_in_total: int
    flow_mods: int
    rules_installed: int
    rules_expired: int
    packet_in_by_flow: dict[str, int]
    install_times_us: tuple[int, ...]
    processing_delays_us: tuple[int, ...]
    per_packet_phase_ratio: float | None


def overhead_metrics(trace: Trace) -> OverheadSummary:
    """Controller load view of one run.

    per_packet_phase_ratio is controller path requests per data packet over
    the unique-rule (per-packet) phase: 1.0 means one request per packet.
    """
    installs = [e["t_us"] for e in trace.events_of("rule_install")]
    delays = [e["delay_us"] for e in trace.events_of("packet_in_handled")]
    per_packet_decisions = [e for e in trace.events_of("rule_decision")
                            if e["per_packet"]]
    ratio = None
    if per_packet_decisions:
        flows = {e["flow"] for e in per_packet_decisions}
        requests = sum(1 for e in per_packet_decisions)
        packets = len({(e["flow"], e["index"]) for e in per_packet_decisions})
        ratio = requests / packets if packets else None
        del flows
    return OverheadSummary(
        controller_messages=trace.controller_messages,
        packet_in_total=trace.counters["packet_in"],
        flow_mods=trace.counters["flow_mod"],
        rules_installed=trace.counters["rules_installed"],
        rules_expired=trace.counters["rules_expired"],
        packet_in_by_flow=dict(sorted(trace.packet_in_by_flow.items())),
        install_times_us=tuple(installs),
        processing_delays_us=tuple(delays),
        per_packet_phase_ratio=ratio,
    )


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def diversity_csv(reports: list[DiversityReport]) -> str:
    rows = ["topology,pair_count,pairs_with_alternates,percentage"]
    for r in reports:
        rows.append(f"{r.topology},{r.pair_count},{r.pairs_with_alternates},"
                    f"{r.percentage:.2f}")
    return "\n".join(rows) + "\n"


def matrix_csv(report: DiversityReport) -> str:
    if not report.alt_path_matrix:
        raise ValueError("report has no matrix (pass with_matrix=True)")
    header = "," + ",".join(report.switch_order)
    rows = [header]
    for name, row in zip(report.switch_order, report.alt_path_matrix):
        rows.append(name + "," + ",".join(str(x) for x in row))
    return "\n".join(rows) + "\n"


def matrix_ppm(report: DiversityReport) -> str:
    """Plain-text portable pixmap of the pair matrix; darker = more paths."""
    if not report.alt_path_matrix:
        raise ValueError("report has no matrix (pass with_matrix=True)")
    n = len(report.switch_order)
    peak = max((max(row) for row in report.alt_path_matrix), default=0) or 1
    lines = ["P2", f"{n} {n}", "255"]
    for row in report.alt_path_matrix:
        lines.append(" ".join(str(255 - (255 * min(x, peak)) // peak) for x in row))
    return "\n".join(lines) + "\n"
