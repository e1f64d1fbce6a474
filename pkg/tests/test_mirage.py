import pytest

from miragesim import synthetic
from miragesim.mirage import (Alert, ProbeConfig, RuleKind, asymmetric_route,
                              on_new_flow_packet, probe_declare_offset_us,
                              probe_send_offsets_us)
from miragesim.routing import build_path_pool
from miragesim.runner import measure_rtt
from miragesim.scenario import (CtrlQueryFlow, DefenseSpec, EchoFlow, Scenario,
                                TopologySpec, _attach_hosts_at)
from miragesim.simcore.engine import Simulator
from miragesim.simcore.trace import ms_to_us
from miragesim.topo import place_controller


def prepared(topo, hosts_at):
    return place_controller(_attach_hosts_at(topo, tuple(hosts_at)), "max_degree")


def scenario_for(**kw) -> Scenario:
    defaults = dict(name="t", seed=3, horizon_ms=1000.0,
                    topology=TopologySpec(source="<mem>"))
    defaults.update(kw)
    return Scenario(**defaults)


# -- probe schedule (pure) ------------------------------------------------------

def test_probe_defaults_match_contract():
    cfg = ProbeConfig()
    assert cfg.probe_interval_ms == 2000.0
    assert cfg.max_probe_attempts == 2
    assert probe_send_offsets_us(cfg) == [0, 2_000_000, 4_000_000]
    assert probe_declare_offset_us(cfg) == 4_000_000


def test_probe_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(probe_interval_ms=0)
    with pytest.raises(ValueError):
        ProbeConfig(max_probe_attempts=0)


# -- Alg.1 behavior in the engine ------------------------------------------------

def test_blackholed_switch_alerted_after_three_probes_at_default_pacing():
    topo = prepared(synthetic.triangle(), [("a", 1)])
    sc = scenario_for(defense=DefenseSpec(mode="detect"),
                      blackholed_switches=("c",), horizon_ms=4500.0)
    trace = Simulator(topo, sc).run()
    alerts = [e for e in trace.events_of("alert") if e["switch"] == "c"]
    assert alerts, "blackholed switch must be alerted"
    first = alerts[0]
    assert first["probes_sent"] == 3
    probe_times = [e["t_us"] for e in trace.events_of("probe_sent")
                   if e["switch"] == "c" and e["cycle"] == 1]
    assert probe_times == [0, 2_000_000, 4_000_000]
    assert first["t_us"] == probe_times[0] + 2 * 2_000_000


def test_responsive_switches_never_alerted_over_many_cycles():
    topo = prepared(synthetic.ring(4), [("s1", 1)])
    probe = ProbeConfig(probe_interval_ms=20.0)
    sc = scenario_for(defense=DefenseSpec(mode="detect", probe=probe),
                      horizon_ms=1000.0)
    trace = Simulator(topo, sc).run()
    cycles = {e["cycle"] for e in trace.events_of("probe_sent")}
    assert len(cycles) >= 10
    assert trace.events_of("alert") == []


def test_congestion_lost_replies_cause_false_positive():
    # hose jams the s2->s1 direction (the reply leg toward the controller at
    # s1): replies queue behind tens of ms of backlog and never make it back
    # within the retry budget, so s2 is alerted although genuinely reachable
    topo = prepared(
        synthetic._topo("thin", ["s1", "s2"], [("s1", "s2")],
                        queue_limit=100_000),
        [("s1", 1), ("s2", 1)])
    from miragesim.scenario import OneWayFlow

    probe = ProbeConfig(probe_interval_ms=20.0)
    sc = scenario_for(
        defense=DefenseSpec(mode="detect", probe=probe, detect_start_ms=60.0),
        workload=(OneWayFlow(flow="jam", src="h2", dst="h1", packets=24_000,
                             rate_pkt_per_ms=200, start_ms=0.0,
                             preinstalled=True),),
        horizon_ms=120.0)
    trace = Simulator(topo, sc).run()
    alerted = {e["switch"] for e in trace.events_of("alert")}
    assert "s2" in alerted          # false positive from congestion
    assert "s1" not in alerted      # colocated switch still answers
    c = trace.counters
    assert c["probe_delivered"] >= 1           # s2 did receive its probes
    assert c["probe_reply"] > c["probe_reply_delivered"]  # replies lost


# -- asymmetric routing / rule decisions (pure ops) -------------------------------

def test_asymmetric_route_on_cycle_differs_per_direction():
    ring = synthetic.ring(4)
    fwd_pool = build_path_pool(ring, "s1", "s3")
    rev_pool = build_path_pool(ring, "s3", "s1")
    fwd, rev, no_div = asymmetric_route(fwd_pool, rev_pool)
    assert not no_div
    assert rev.nodes != tuple(reversed(fwd.nodes))


def test_asymmetric_route_on_tree_coincides_and_flags():
    tree = synthetic.path_graph(4)
    fwd_pool = build_path_pool(tree, "s1", "s4")
    rev_pool = build_path_pool(tree, "s4", "s1")
    fwd, rev, no_div = asymmetric_route(fwd_pool, rev_pool)
    assert no_div
    assert rev.nodes == tuple(reversed(fwd.nodes))


def fresh_pools():
    ring = synthetic.ring(4)
    return build_path_pool(ring, "s1", "s3"), build_path_pool(ring, "s3", "s1")


def test_rule_decisions_follow_lambda_threshold():
    pool_f, pool_r = fresh_pools()
    decisions = [on_new_flow_packet(i, 5, pool_f, pool_r, common_installed=False)
                 for i in range(1, 6)]
    assert all(d.decision == RuleKind.UNIQUE_PER_PACKET for d in decisions)
    assert len({d.forward.nodes for d in decisions}) >= 2  # pool rotation

    sixth = on_new_flow_packet(6, 5, pool_f, pool_r, common_installed=False)
    assert sixth.decision == RuleKind.REQUEST_COMMON
    seventh = on_new_flow_packet(7, 5, pool_f, pool_r, common_installed=True)
    assert seventh.decision == RuleKind.USE_EXISTING_COMMON
    assert seventh.forward is None


def test_lambda_zero_is_plain_reactive():
    pool_f, pool_r = fresh_pools()
    first = on_new_flow_packet(1, 0, pool_f, pool_r, common_installed=False)
    assert first.decision == RuleKind.REQUEST_COMMON
    second = on_new_flow_packet(2, 0, pool_f, pool_r, common_installed=True)
    assert second.decision == RuleKind.USE_EXISTING_COMMON


def test_rule_decision_validation():
    pool_f, pool_r = fresh_pools()
    with pytest.raises(ValueError):
        on_new_flow_packet(0, 5, pool_f, pool_r)
    with pytest.raises(ValueError):
        on_new_flow_packet(1, -1, pool_f, pool_r)


# -- mitigation behavior in the engine --------------------------------------------

def test_always_on_diversity_first_two_packets_take_different_paths():
    topo = prepared(synthetic.ring(6), [("s3", 1), ("s6", 1)])
    samples, trace = measure_rtt(
        topo, "h1", "h2", 3,
        defense=DefenseSpec(mode="full", policy="always_on", lambda_threshold=5))
    decisions = [e for e in trace.events_of("rule_decision") if e["flow"] == "measure"]
    assert decisions[0]["per_packet"]
    assert decisions[1]["per_packet"]
    assert decisions[0]["forward"] != decisions[1]["forward"]


def test_on_alert_policy_without_alert_matches_detect_only_baseline():
    topo = prepared(synthetic.ring(4), [("s1", 1), ("s3", 1)])
    probe = ProbeConfig(probe_interval_ms=100.0)
    base = scenario_for(
        defense=DefenseSpec(mode="detect", probe=probe),
        workload=(EchoFlow(flow="e", src="h1", dst="h2", packets=4, start_ms=1.0),),
        horizon_ms=600.0)
    armed = scenario_for(
        defense=DefenseSpec(mode="full", policy="on_alert", probe=probe),
        workload=(EchoFlow(flow="e", src="h1", dst="h2", packets=4, start_ms=1.0),),
        horizon_ms=600.0)
    t_base = Simulator(topo, base).run()
    t_armed = Simulator(topo, armed).run()
    assert t_armed.events == t_base.events
    assert t_armed.rtt_samples == t_base.rtt_samples


def test_alert_activates_mitigation_under_on_alert_policy():
    topo = prepared(synthetic.ring(4), [("s1", 1)])
    probe = ProbeConfig(probe_interval_ms=20.0)
    sc = scenario_for(
        defense=DefenseSpec(mode="full", policy="on_alert", probe=probe),
        blackholed_switches=("s3",), horizon_ms=300.0)
    trace = Simulator(topo, sc).run()
    alert_t = trace.events_of("alert")[0]["t_us"]
    act = [e for e in trace.events_of("mitigation_activated")]
    assert act and act[0]["t_us"] == alert_t


def test_star_topology_routes_through_per_packet_rules_on_single_path():
    topo = prepared(synthetic.star(4), [("s2", 1), ("s4", 1)])
    samples, trace = measure_rtt(
        topo, "h1", "h2", 8,
        defense=DefenseSpec(mode="full", policy="always_on", lambda_threshold=5))
    decisions = [e for e in trace.events_of("rule_decision") if e["flow"] == "measure"]
    per_packet = [e for e in decisions if e["per_packet"]]
    assert len(per_packet) == 5                      # indexes 1..lambda
    assert len({tuple(e["forward"]) for e in decisions}) == 1  # single path
    # unique rules are single-use: the per-packet entries never survive
    installs = [e for e in trace.events_of("rule_install") if e["per_packet"]]
    assert installs
    sim_end_tables_empty = all(i["index"] is not None for i in installs)
    assert sim_end_tables_empty


def test_lambda_accounting_in_star_flow():
    topo = prepared(synthetic.star(4), [("s2", 1), ("s4", 1)])
    samples, trace = measure_rtt(
        topo, "h1", "h2", 10,
        defense=DefenseSpec(mode="full", policy="always_on", lambda_threshold=5))
    assert len(samples) == 10
    assert trace.packet_in_by_flow["measure"] == 6  # 5 unique + 1 common


def test_ctrl_query_rtt_varies_under_diversity():
    # ARP-class traffic is always controller processed; with pooled control
    # legs of unequal length its round trip differs between attempts
    topo = prepared(synthetic.ring(5), [("s3", 1)])
    sc_off = scenario_for(
        workload=(CtrlQueryFlow(flow="arp", host="h1", packets=6, start_ms=1.0),),
        horizon_ms=800.0)
    sc_on = scenario_for(
        workload=(CtrlQueryFlow(flow="arp", host="h1", packets=6, start_ms=1.0),),
        defense=DefenseSpec(mode="full", policy="always_on"),
        horizon_ms=800.0)
    rtts_off = [s.rtt_us for s in Simulator(topo, sc_off).run().samples_for("arp")]
    rtts_on = [s.rtt_us for s in Simulator(topo, sc_on).run().samples_for("arp")]
    assert len(set(rtts_off)) == 1      # static route: constant
    assert len(set(rtts_on)) >= 2       # pooled legs: varies between attempts


def test_per_packet_rules_never_match_later_packets():
    topo = prepared(synthetic.star(3), [("s2", 1), ("s3", 1)])
    samples, trace = measure_rtt(
        topo, "h1", "h2", 6,
        defense=DefenseSpec(mode="full", policy="always_on", lambda_threshold=3))
    # one controller request per packet during the unique phase, then one
    # common request: any reuse of a unique rule would reduce this count
    assert trace.packet_in_by_flow["measure"] == 4
    assert len(samples) == 6
