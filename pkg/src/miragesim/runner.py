"""Scenario orchestration: topology prep, attacker expansion, simulation,
and post-run classification/evaluation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path as FsPath

from .attacker import (AttackPlan, ReconResult, classify_recon, evaluate_recon,
                       plan_flood, plan_recon)
from .scenario import DefenseSpec, EchoFlow, Scenario, ScenarioError, TopologySpec, resolve_topology
from .simcore.engine import Simulator
from .simcore.trace import Trace, ms_to_us
from .topo import Topology


@dataclass
class RunResult:
    scenario: Scenario
    topo: Topology
    trace: Trace
    recon: ReconResult | None = None
    recon_eval: dict | None = None
    recon_trace: Trace | None = None  # phase-1 trace when a flood phase ran
    flood_plan: AttackPlan | None = None

    @property
    def alerts(self):
        return self.trace.meta.get("alerts", [])


def run_scenario(scenario: Scenario, base_dir: FsPath | None = None) -> RunResult:
    topo = resolve_topology(scenario.topology, scenario.seed, base_dir)

    recon_plan = None
    workload = list(scenario.workload)
    if scenario.recon.enabled:
        items, recon_plan = plan_recon(topo, scenario.recon)
        if recon_plan.end_ms > scenario.horizon_ms:
            raise ScenarioError(
                "horizon_ms",
                f"recon schedule ends at {recon_plan.end_ms:.0f} ms, beyond the "
                f"{scenario.horizon_ms:.0f} ms horizon")
        workload.extend(items)

    flood_items: list = []
    flood_plan = None
    if scenario.flood.enabled and not scenario.flood.from_recon:
        flood_items, flood_plan = plan_flood(topo, scenario.flood,
                                             scenario.flood.target_links)

    sim = Simulator(topo, replace(scenario,
                                  workload=tuple(workload + flood_items)))
    trace = sim.run()

    result = RunResult(scenario=scenario, topo=topo, trace=trace,
                       flood_plan=flood_plan)
    if recon_plan is not None:
        recon = classify_recon(trace, recon_plan)
        evaluation = evaluate_recon(topo, recon, recon_plan.burst_rate_pkt_per_ms)
        recon = replace(recon, inferred_links=evaluation["inferred_links"])
        result.recon = recon
        result.recon_eval = evaluation

        if scenario.flood.enabled and scenario.flood.from_recon:
            targets = evaluation["inferred_links"]
            flood_items, flood_plan = plan_flood(
                topo, scenario.flood, targets,
                exclude_hosts=(recon.attacker, recon.reference_peer))
            phase2 = Simulator(topo, replace(
                scenario, workload=tuple(list(scenario.workload) + flood_items)))
            result.recon_trace = trace
            result.trace = phase2.run()
            result.flood_plan = flood_plan
    return result


def measure_rtt(topo: Topology, host: str, dst: str, n_packets: int,
                defense: DefenseSpec | None = None,
                extra_workload: tuple = (),
                blackholed: tuple[str, ...] = (),
                horizon_ms: float = 5000.0,
                seed: int = 1,
                timeout_ms: float = 1000.0,
                trace_detail: str = "normal") -> tuple[list, Trace]:
    """Convenience harness: run one echo flow and return its RTT samples.

    The first sample carries the controller round trip (table miss); later
    samples ride installed rules. The topology must be fully prepared.
    """
    scenario = Scenario(
        name=f"measure-{host}-{dst}",
        seed=seed,
        horizon_ms=horizon_ms,
        topology=TopologySpec(source="<in-memory>"),
        workload=(EchoFlow(flow="measure", src=host, dst=dst,
                           packets=n_packets, start_ms=1.0,
                           timeout_ms=timeout_ms),) + tuple(extra_workload),
        defense=defense or DefenseSpec(),
        blackholed_switches=tuple(blackholed),
        trace_detail=trace_detail,
    )
    sim = Simulator(topo, scenario)
    trace = sim.run()
    return trace.samples_for("measure"), trace
