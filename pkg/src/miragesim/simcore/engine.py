"""Deterministic discrete-event engine.

Models FIFO link queues, switches with expiring flow tables, and an in-band
controller whose messages share the data links — the substrate the timing
side channel and the flooding attack operate on. All internal time is integer
microseconds; events are processed in (time, seq) order so identical
scenarios produce byte-identical traces.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from ..mirage import Alert, DefenseState, RuleKind, on_new_flow_packet
from ..routing import DEFAULT_METRIC, Path, PathPool, build_path_pool, dijkstra
from ..scenario import CtrlQueryFlow, EchoFlow, OneWayFlow, Scenario
from ..topo import Topology, sorted_nodes
from .trace import Trace, RttSample, ms_to_us

US_PER_MS = 1000

COMMON_RULE_IDLE_TIMEOUT_US = 60_000_000  # generous; horizons are far shorter


@dataclass(frozen=True)
class Packet:
    pid: int
    kind: str      # payload | echo | ctrl_query | ctrl_reply | packet_in | flow_mod
                   # | barrier_ack | packet_out | probe | probe_reply
    plane: str     # data | control
    flow: str
    index: int
    src: str
    dst: str
    direction: str = "fwd"
    payload: tuple = ()


@dataclass
class TableEntry:
    match: tuple  # (flow, direction, index|None)
    next_hop: str
    installed_us: int
    hard_timeout_us: int | None
    idle_timeout_us: int | None
    per_packet: bool
    serial: int
    last_used_us: int = 0

    def expired(self, now: int) -> bool:
        if self.hard_timeout_us is not None and now >= self.installed_us + self.hard_timeout_us:
            return True
        if self.idle_timeout_us is not None and now - self.last_used_us >= self.idle_timeout_us:
            return True
        return False


class Switch:
    """Flow table plus packets buffered while their rules are fetched."""

    def __init__(self, sid: str):
        self.sid = sid
        self.table: dict[tuple, TableEntry] = {}
        self.buffered: dict[tuple, list] = {}  # (flow, dir) -> [(pkt, since_us)]

    def install(self, entry: TableEntry):
        self.table[entry.match] = entry

    def lookup(self, flow: str, direction: str, index: int, now: int) -> TableEntry | None:
        # expiry is evaluated before matching, so an entry dying at time t
        # never matches a packet arriving at t
        for key in ((flow, direction, index), (flow, direction, None)):
            entry = self.table.get(key)
            if entry is None:
                continue
            if entry.expired(now):
                del self.table[key]
                continue
            entry.last_used_us = now
            return entry
        return None

    def consume_if_single_use(self, entry: TableEntry):
        if entry.per_packet and self.table.get(entry.match) is entry:
            del self.table[entry.match]

    def buffer(self, pkt: Packet, now: int):
        self.buffered.setdefault((pkt.flow, pkt.direction), []).append((pkt, now))

    def unbuffer(self, flow: str, direction: str, index: int | None) -> list[Packet]:
        """Pop buffered packets released by a rule for (flow, dir, index)."""
        queue = self.buffered.get((flow, direction), [])
        taken, kept = [], []
        for pkt, since in queue:
            if index is None or pkt.index == index:
                taken.append(pkt)
            else:
                kept.append((pkt, since))
        if kept:
            self.buffered[(flow, direction)] = kept
        elif (flow, direction) in self.buffered:
            del self.buffered[(flow, direction)]
        return taken

    def discard_buffered(self, pkt: Packet) -> bool:
        key = (pkt.flow, pkt.direction)
        queue = self.buffered.get(key, [])
        for i, (candidate, _) in enumerate(queue):
            if candidate.pid == pkt.pid:
                queue.pop(i)
                if not queue:
                    del self.buffered[key]
                return True
        return False


class DirectedLink:
    """One direction of a physical link: FIFO queue + constant service time."""

    __slots__ = ("u", "v", "service_us", "prop_us", "queue_limit", "free_at_us")

    def __init__(self, u: str, v: str, capacity_pkt_per_ms: float,
                 latency_ms: float, queue_limit: int):
        self.u = u
        self.v = v
        self.service_us = max(1, round(US_PER_MS / capacity_pkt_per_ms))
        self.prop_us = ms_to_us(latency_ms)
        self.queue_limit = queue_limit
        self.free_at_us = 0

    def queue_length(self, now: int) -> int:
        backlog = self.free_at_us - now
        if backlog <= 0:
            return 0
        return -(-backlog // self.service_us)  # ceil

    def admit(self, now: int) -> tuple[int, int] | None:
        """(service_start, delivery_time), or None when the queue is full."""
        if self.queue_length(now) >= self.queue_limit:
            return None
        start = max(now, self.free_at_us)
        self.free_at_us = start + self.service_us
        return start, self.free_at_us + self.prop_us


@dataclass
class FlowState:
    flow: str
    kind: str  # echo | oneway | ctrl_query
    src: str
    dst: str
    n_packets: int
    timeout_us: int = 0
    gap_us: int = 0
    preinstalled: bool = False
    setup_wait_us: int = 0
    next_index: int = 1
    sent_us: dict[int, int] = field(default_factory=dict)
    sampled: set[int] = field(default_factory=set)


class Simulator:
    """Single scenario, single-threaded event loop. Scenarios are
    independent; run many simulators in parallel processes if needed."""

    def __init__(self, topo: Topology, scenario: Scenario):
        if topo.controller is None:
            raise ValueError("scenario topology must have a controller placed")
        if scenario.horizon_ms <= 0:
            raise ValueError("horizon must be > 0")
        self.topo = topo
        self.sc = scenario
        self.horizon_us = ms_to_us(scenario.horizon_ms)
        self.trace = Trace(detail=scenario.trace_detail)
        self.trace.meta.update({
            "scenario": scenario.name,
            "seed": scenario.seed,
            "config_hash": scenario.config_hash(),
            "horizon_ms": scenario.horizon_ms,
            "topology": topo.name,
        })

        self._heap: list = []
        self._seq = 0
        self._pid = 0
        self._install_serial = 0
        self._setup_serial = 0
        self._live_packets: set[int] = set()

        self.ctrl = topo.controller
        self.ctrl_service_us = ms_to_us(scenario.controller_service_ms)
        self.ctrl_free_at_us = 0
        self.buffer_timeout_us = ms_to_us(scenario.buffer_timeout_ms)

        self.links: dict[tuple[str, str], DirectedLink] = {}
        for link in topo.links:
            for u, v in ((link.a, link.b), (link.b, link.a)):
                self.links[(u, v)] = DirectedLink(
                    u, v, link.capacity_pkt_per_ms, link.latency_ms, link.queue_limit)

        self.switches = {s: Switch(s) for s in topo.switches}
        self.hosts = set(topo.hosts)
        self.blackholed = set(scenario.blackholed_switches)

        dm = dijkstra(topo, self.ctrl, DEFAULT_METRIC)
        self._route_from_ctrl: dict[str, tuple[str, ...]] = {}
        for s in sorted_nodes(topo.switches):
            path = dm.path_to(s)
            if path is None:
                raise ValueError(f"switch {s} unreachable from controller")
            self._route_from_ctrl[s] = path.nodes

        self.defense = DefenseState(
            mode=scenario.defense.mode,
            policy=scenario.defense.policy,
            lambda_threshold=scenario.defense.lambda_threshold,
            probe=scenario.defense.probe,
            unique_rule_timeout_ms=scenario.defense.unique_rule_timeout_ms,
        )
        self.defense.maybe_activate_at_start()
        if self.defense.mitigation_active:
            self.trace.log(0, "mitigation_activated", policy=self.defense.policy)

        self._pools: dict[tuple[str, str], PathPool | None] = {}
        self.flows: dict[str, FlowState] = {}
        self._flow_common_done: set[tuple[str, str]] = set()
        self._setups: dict[int, dict] = {}
        self._probe_records: dict[str, dict] = {}
        self._probe_cycle = 0

    # ------------------------------------------------------------------
    # scheduling primitives
    # ------------------------------------------------------------------

    def schedule(self, at_us: int, fn):
        heapq.heappush(self._heap, (at_us, self._seq, fn))
        self._seq += 1

    def _new_packet(self, kind: str, plane: str, flow: str, index: int,
                    src: str, dst: str, direction: str = "fwd",
                    payload: tuple = ()) -> Packet:
        self._pid += 1
        pkt = Packet(self._pid, kind, plane, flow, index, src, dst, direction, payload)
        self._live_packets.add(pkt.pid)
        self.trace.bump("packets_created")
        return pkt

    def _delivered(self, pkt: Packet):
        self._live_packets.discard(pkt.pid)
        self.trace.bump("packets_delivered")

    def _drop(self, pkt: Packet, now: int, reason: str, where: str):
        self._live_packets.discard(pkt.pid)
        self.trace.bump("packets_dropped")
        self.trace.log(now, "drop", pid=pkt.pid, pkt_kind=pkt.kind, flow=pkt.flow,
                       index=pkt.index, reason=reason, where=where)

    def _transmit(self, u: str, v: str, pkt: Packet, now: int, on_arrival):
        """Queue pkt on directed link u->v; on_arrival(time) at delivery."""
        link = self.links.get((u, v))
        if link is None:
            raise ValueError(f"no link {u}->{v}")
        admitted = link.admit(now)
        stats = self.trace.link(u, v)
        if admitted is None:
            stats.dropped += 1
            self._drop(pkt, now, "queue_full", f"{u}->{v}")
            return
        start, delivery = admitted
        stats.record_service(start, link.service_us, self.trace.bucket_us)
        self.trace.log_full(now, "enqueue", pid=pkt.pid, link=f"{u}->{v}")

        def arrive(t):
            self.trace.log_full(t, "deliver_hop", pid=pkt.pid, link=f"{u}->{v}")
            on_arrival(t)

        self.schedule(delivery, arrive)

    # ------------------------------------------------------------------
    # control-plane transport (source-routed, shares the data queues)
    # ------------------------------------------------------------------

    def control_route(self, frm: str, to: str) -> tuple[str, ...]:
        """Route for one control message; alternates over the path pool when
        mitigation is active and the pair has diversity."""
        if self.defense.mitigation_active:
            pool = self._pool(frm, to)
            if pool is not None and pool.has_diversity:
                return pool.select_next().nodes
        if frm == self.ctrl:
            return self._route_from_ctrl[to]
        if to == self.ctrl:
            return tuple(reversed(self._route_from_ctrl[frm]))
        raise ValueError("control route must involve the controller")

    def _pool(self, a: str, b: str) -> PathPool | None:
        key = (a, b)
        if key not in self._pools:
            self._pools[key] = build_path_pool(self.topo, a, b)
        return self._pools[key]

    def _send_control(self, kind: str, frm: str, to: str, now: int,
                      flow: str = "-", index: int = 0, payload: tuple = ()) -> Packet:
        route = self.control_route(frm, to)
        pkt = self._new_packet(kind, "control", flow, index, frm, to, payload=payload)
        self._control_hop(pkt, route, 0, now)
        return pkt

    def _control_hop(self, pkt: Packet, route: tuple[str, ...], hop: int, now: int):
        if hop >= len(route) - 1:
            self._arrive_control(pkt, now)
            return
        self._transmit(route[hop], route[hop + 1], pkt, now,
                       lambda t: self._control_hop(pkt, route, hop + 1, t))

    def _arrive_control(self, pkt: Packet, now: int):
        node = pkt.dst
        if node in self.blackholed:
            self._drop(pkt, now, "blackholed_switch", node)
            return
        self._delivered(pkt)
        handler = {
            "packet_in": self._ctrl_recv_packet_in,
            "ctrl_query": self._ctrl_recv_query,
            "barrier_ack": self._ctrl_recv_barrier_ack,
            "probe_reply": self._ctrl_recv_probe_reply,
            "flow_mod": self._switch_recv_flow_mod,
            "packet_out": self._switch_recv_packet_out,
            "probe": self._switch_recv_probe,
            "ctrl_reply": self._switch_recv_ctrl_reply,
        }[pkt.kind]
        handler(pkt, now)

    # ------------------------------------------------------------------
    # data plane
    # ------------------------------------------------------------------

    def _host_send(self, host: str, pkt: Packet, now: int):
        switch = self.topo.host_switch(host)
        self._transmit(host, switch, pkt, now,
                       lambda t: self._arrive_data(pkt, switch, t))

    def _arrive_data(self, pkt: Packet, node: str, now: int):
        if node in self.hosts:
            self._host_receive(pkt, node, now)
            return
        switch = self.switches[node]
        if pkt.kind == "ctrl_query":
            # controller-processed class: the switch relays to the controller
            self._delivered(pkt)
            self.trace.bump("ctrl_query")
            self._send_control("ctrl_query", node, self.ctrl, now,
                               flow=pkt.flow, index=pkt.index,
                               payload=(pkt.flow, pkt.index, pkt.src, node))
            return
        entry = switch.lookup(pkt.flow, pkt.direction, pkt.index, now)
        if entry is not None:
            nh = entry.next_hop
            switch.consume_if_single_use(entry)
            self._transmit(node, nh, pkt, now,
                           lambda t: self._arrive_data(pkt, nh, t))
            return
        # table miss: buffer and ask the controller
        switch.buffer(pkt, now)
        self.schedule(now + self.buffer_timeout_us,
                      lambda t, p=pkt, s=switch: self._buffer_timeout(s, p, t))
        if node in self.blackholed:
            return  # cannot reach the controller; the packet will time out
        flow = self.flows.get(pkt.flow)
        src, dst = (flow.src, flow.dst) if flow else (pkt.src, pkt.dst)
        self.trace.note_packet_in(pkt.flow)
        self.trace.log(now, "packet_in", flow=pkt.flow, index=pkt.index,
                       direction=pkt.direction, switch=node)
        self._send_control("packet_in", node, self.ctrl, now,
                           flow=pkt.flow, index=pkt.index,
                           payload=(pkt.flow, pkt.direction, pkt.index, src, dst, node, now))

    def _buffer_timeout(self, switch: Switch, pkt: Packet, now: int):
        if switch.discard_buffered(pkt):
            self._drop(pkt, now, "buffer_timeout", switch.sid)
            self._note_lost_measurement(pkt, now)

    def _host_receive(self, pkt: Packet, host: str, now: int):
        if pkt.dst != host:
            self._drop(pkt, now, "misrouted", host)
            return
        self._delivered(pkt)
        flow = self.flows.get(pkt.flow)
        if flow is None:
            return
        if pkt.kind == "payload" and flow.kind == "echo":
            echo = self._new_packet("echo", "data", pkt.flow, pkt.index,
                                    src=host, dst=flow.src, direction="rev")
            self._host_send(host, echo, now)
        elif pkt.kind in ("echo", "ctrl_reply") and host == flow.src:
            self._record_sample(flow, pkt.index, now, timed_out=False)

    # ------------------------------------------------------------------
    # measurement bookkeeping
    # ------------------------------------------------------------------

    def _record_sample(self, flow: FlowState, index: int, now: int, timed_out: bool):
        if index in flow.sampled:
            return
        flow.sampled.add(index)
        sent = flow.sent_us[index]
        rtt = (now - sent) if not timed_out else flow.timeout_us
        self.trace.add_sample(RttSample(flow.flow, index, sent, rtt, timed_out))
        if flow.kind in ("echo", "ctrl_query"):
            self._send_next_measured(flow, now)

    def _note_lost_measurement(self, pkt: Packet, now: int):
        """A dropped packet belonging to a measured flow surfaces as a
        timeout sample when its timer fires; nothing to do eagerly."""

    def _sample_timeout(self, flow: FlowState, index: int, now: int):
        if index not in flow.sampled:
            self._record_sample(flow, index, now, timed_out=True)

    # ------------------------------------------------------------------
    # workload
    # ------------------------------------------------------------------

    def _setup_workload(self):
        for item in self.sc.workload:
            if isinstance(item, EchoFlow):
                state = FlowState(item.flow, "echo", item.src, item.dst, item.packets,
                                  timeout_us=ms_to_us(item.timeout_ms))
                self.flows[item.flow] = state
                self.schedule(ms_to_us(item.start_ms),
                              lambda t, s=state: self._send_next_measured(s, t))
            elif isinstance(item, CtrlQueryFlow):
                state = FlowState(item.flow, "ctrl_query", item.host, self.ctrl,
                                  item.packets, timeout_us=ms_to_us(item.timeout_ms))
                self.flows[item.flow] = state
                self.schedule(ms_to_us(item.start_ms),
                              lambda t, s=state: self._send_next_measured(s, t))
            elif isinstance(item, OneWayFlow):
                gap_us = max(1, round(US_PER_MS / item.rate_pkt_per_ms))
                state = FlowState(item.flow, "oneway", item.src, item.dst, item.packets,
                                  gap_us=gap_us, preinstalled=item.preinstalled,
                                  setup_wait_us=ms_to_us(item.setup_wait_ms))
                self.flows[item.flow] = state
                if item.preinstalled:
                    self._preinstall(state)
                self.schedule(ms_to_us(item.start_ms),
                              lambda t, s=state: self._send_next_oneway(s, t))
            else:
                raise TypeError(f"unknown workload item {item!r}")

    def _send_next_measured(self, flow: FlowState, now: int):
        if flow.next_index > flow.n_packets:
            return
        index = flow.next_index
        flow.next_index += 1
        flow.sent_us[index] = now
        if flow.kind == "echo":
            pkt = self._new_packet("payload", "data", flow.flow, index,
                                   src=flow.src, dst=flow.dst, direction="fwd")
        else:  # ctrl_query: addressed to the access switch, relayed onward
            pkt = self._new_packet("ctrl_query", "data", flow.flow, index,
                                   src=flow.src, dst=self.topo.host_switch(flow.src))
        self.schedule(now + flow.timeout_us,
                      lambda t, f=flow, i=index: self._sample_timeout(f, i, t))
        self._host_send(flow.src, pkt, now)

    def _send_next_oneway(self, flow: FlowState, now: int):
        if flow.next_index > flow.n_packets:
            return
        index = flow.next_index
        flow.next_index += 1
        pkt = self._new_packet("payload", "data", flow.flow, index,
                               src=flow.src, dst=flow.dst, direction="fwd")
        self._host_send(flow.src, pkt, now)
        if flow.next_index <= flow.n_packets:
            gap = flow.gap_us
            if not flow.preinstalled and index == 1:
                gap += flow.setup_wait_us  # let reactive setup finish first
            self.schedule(now + gap, lambda t, f=flow: self._send_next_oneway(f, t))

    def _preinstall(self, flow: FlowState):
        """Static rules for long-established (attack) flows: data plane only."""
        pool = self._pool(flow.src, flow.dst)
        if pool is None:
            raise ValueError(f"preinstalled flow {flow.flow}: no route "
                             f"{flow.src}->{flow.dst}")
        path = min(pool.all_paths, key=lambda p: (p.cost, p.nodes))
        for sw, nh in self._switch_hops(path.nodes):
            self._install_entry(sw, (flow.flow, "fwd", None), nh, 0,
                                hard_us=None, idle_us=None, per_packet=False,
                                preinstalled=True)

    # ------------------------------------------------------------------
    # flow tables
    # ------------------------------------------------------------------

    @staticmethod
    def _switch_hops(path_nodes: tuple[str, ...]):
        """(switch, next_hop) pairs along a host..host or node path."""
        hops = []
        for i, node in enumerate(path_nodes[:-1]):
            hops.append((node, path_nodes[i + 1]))
        return [(n, nh) for n, nh in hops if n not in (None,)]

    def _install_entry(self, node: str, match: tuple, next_hop: str, now: int,
                       hard_us: int | None, idle_us: int | None,
                       per_packet: bool, preinstalled: bool = False):
        if node not in self.switches:
            return
        self._install_serial += 1
        entry = TableEntry(match, next_hop, now, hard_us, idle_us,
                           per_packet, self._install_serial, last_used_us=now)
        self.switches[node].install(entry)
        if preinstalled:
            self.trace.bump("rules_preinstalled")
        else:
            self.trace.bump("rules_installed")
            self.trace.log(now, "rule_install", switch=node, flow=match[0],
                           direction=match[1], index=match[2], next_hop=next_hop,
                           per_packet=per_packet)
        if hard_us is not None:
            self.schedule(now + hard_us,
                          lambda t, n=node, e=entry: self._hard_expire(n, e, t))

    def _hard_expire(self, node: str, entry: TableEntry, now: int):
        table = self.switches[node].table
        if table.get(entry.match) is entry:
            del table[entry.match]
            self.trace.bump("rules_expired")
            self.trace.log(now, "rule_expire", switch=node, flow=entry.match[0],
                           direction=entry.match[1], index=entry.match[2])

    # ------------------------------------------------------------------
    # controller behavior
    # ------------------------------------------------------------------

    def _ctrl_service_done(self, now: int) -> int:
        start = max(now, self.ctrl_free_at_us)
        done = start + self.ctrl_service_us
        self.ctrl_free_at_us = done
        return done

    def _ctrl_recv_packet_in(self, pkt: Packet, now: int):
        done = self._ctrl_service_done(now)
        flow, direction, index, src, dst, from_switch, sent_us = pkt.payload
        self.schedule(done, lambda t: self._ctrl_decide(
            flow, direction, index, src, dst, from_switch, sent_us, t))

    def _ctrl_decide(self, flow: str, direction: str, index: int,
                     src: str, dst: str, from_switch: str, requested_us: int,
                     now: int):
        self.trace.log(now, "packet_in_handled", flow=flow, index=index,
                       delay_us=now - requested_us)
        # endpoints as seen from the requesting direction
        if direction == "fwd":
            a, b = src, dst
        else:
            a, b = dst, src
        pool_f = self._pool(a, b)
        pool_r = self._pool(b, a)
        if pool_f is None or pool_r is None:
            self.trace.log(now, "route_unavailable", flow=flow, src=a, dst=b)
            return

        defended = self.defense.mode == "full" and self.defense.mitigation_active
        if defended:
            decision = on_new_flow_packet(
                index, self.defense.lambda_threshold, pool_f, pool_r,
                common_installed=(flow, "common") in self._flow_common_done)
            if decision.decision == RuleKind.USE_EXISTING_COMMON:
                # the switch missed a rule the controller believes installed
                # (expiry race); re-issue the common rule
                fwd, rev = pool_f.select_next(), pool_r.select_next()
                per_packet = False
            else:
                fwd, rev = decision.forward, decision.reverse
                per_packet = decision.decision == RuleKind.UNIQUE_PER_PACKET
        else:
            fwd = min(pool_f.all_paths, key=lambda p: (p.cost, p.nodes))
            rev = fwd.reversed()
            per_packet = False

        match_index = index if per_packet else None
        hard_us = ms_to_us(self.defense.unique_rule_timeout_ms) if per_packet else None
        idle_us = None if per_packet else COMMON_RULE_IDLE_TIMEOUT_US
        if not per_packet:
            self._flow_common_done.add((flow, "common"))

        entries_by_switch: dict[str, list] = {}
        order: list[str] = []
        for nodes, d in ((fwd.nodes, direction), (rev.nodes, _other(direction))):
            for sw, nh in self._switch_hops(nodes):
                if sw not in self.switches:
                    continue
                entries_by_switch.setdefault(sw, []).append(
                    ((flow, d, match_index), nh))
                if sw not in order:
                    order.append(sw)

        self._setup_serial += 1
        setup_id = self._setup_serial
        self._setups[setup_id] = {
            "acks_left": len(order),
            "release": (from_switch, flow, direction, match_index),
        }
        self.trace.log(now, "rule_decision", flow=flow, index=index,
                       per_packet=per_packet,
                       forward=list(fwd.nodes), reverse=list(rev.nodes))
        for sw in order:
            self.trace.bump("flow_mod")
            self._send_control(
                "flow_mod", self.ctrl, sw, now, flow=flow, index=index,
                payload=(setup_id, tuple(entries_by_switch[sw]), hard_us, idle_us,
                         per_packet))

    def _switch_recv_flow_mod(self, pkt: Packet, now: int):
        setup_id, entries, hard_us, idle_us, per_packet = pkt.payload
        for match, nh in entries:
            self._install_entry(pkt.dst, match, nh, now, hard_us, idle_us, per_packet)
        self.trace.bump("barrier_ack")
        self._send_control("barrier_ack", pkt.dst, self.ctrl, now,
                           flow=pkt.flow, index=pkt.index, payload=(setup_id,))

    def _ctrl_recv_barrier_ack(self, pkt: Packet, now: int):
        (setup_id,) = pkt.payload
        setup = self._setups.get(setup_id)
        if setup is None:
            return
        setup["acks_left"] -= 1
        if setup["acks_left"] > 0:
            return
        del self._setups[setup_id]
        ingress, flow, direction, match_index = setup["release"]
        self.trace.bump("packet_out")
        self._send_control("packet_out", self.ctrl, ingress, now,
                           flow=flow, payload=(flow, direction, match_index))

    def _switch_recv_packet_out(self, pkt: Packet, now: int):
        flow, direction, match_index = pkt.payload
        switch = self.switches[pkt.dst]
        for buffered in switch.unbuffer(flow, direction, match_index):
            self._arrive_data(buffered, pkt.dst, now)

    def _ctrl_recv_query(self, pkt: Packet, now: int):
        done = self._ctrl_service_done(now)
        flow, index, host, from_switch = pkt.payload
        self.schedule(done, lambda t: self._ctrl_answer_query(
            flow, index, host, from_switch, t))

    def _ctrl_answer_query(self, flow: str, index: int, host: str,
                           from_switch: str, now: int):
        self.trace.bump("ctrl_reply")
        self._send_control("ctrl_reply", self.ctrl, from_switch, now,
                           flow=flow, index=index, payload=(flow, index, host))

    def _switch_recv_ctrl_reply(self, pkt: Packet, now: int):
        flow, index, host = pkt.payload
        reply = self._new_packet("ctrl_reply", "data", flow, index,
                                 src=pkt.dst, dst=host, direction="rev")
        self._transmit(pkt.dst, host, reply, now,
                       lambda t: self._arrive_data(reply, host, t))

    # ------------------------------------------------------------------
    # detection probes
    # ------------------------------------------------------------------

    def _start_probe_cycle(self, now: int):
        self._probe_cycle += 1
        cycle = self._probe_cycle
        switches = sorted_nodes(self.topo.switches)
        size = self.defense.probe.batch_size or len(switches)
        batches = [switches[i:i + size] for i in range(0, len(switches), size)]
        self._run_probe_batch(cycle, batches, 0, now, cycle_start=now)

    def _run_probe_batch(self, cycle: int, batches: list, batch_idx: int,
                         now: int, cycle_start: int):
        if batch_idx >= len(batches):
            interval = self.defense.probe.probe_interval_us
            next_start = max(cycle_start + interval, now)
            self.schedule(next_start, lambda t: self._start_probe_cycle(t))
            return
        batch = batches[batch_idx]
        pending = {"left": len(batch)}

        def on_resolved(t):
            pending["left"] -= 1
            if pending["left"] == 0:
                self._run_probe_batch(cycle, batches, batch_idx + 1, t, cycle_start)

        for s in batch:
            record = {"responded": False, "resolved": False, "cycle": cycle,
                      "probes": 0, "first_send": now}
            self._probe_records[s] = record
            self._probe_send(s, record, now)
            interval = self.defense.probe.probe_interval_us
            for k in range(1, self.defense.probe.max_probe_attempts + 1):
                self.schedule(now + k * interval,
                              lambda t, sw=s, r=record, kk=k, cb=on_resolved:
                              self._probe_check(sw, r, kk, cb, t))

    def _probe_send(self, switch: str, record: dict, now: int):
        record["probes"] += 1
        self.trace.bump("probe_sent")
        self.trace.log(now, "probe_sent", switch=switch, cycle=record["cycle"],
                       attempt=record["probes"])
        self._send_control("probe", self.ctrl, switch, now,
                           payload=(record["cycle"], record["probes"], switch))

    def _probe_check(self, switch: str, record: dict, attempt: int,
                     on_resolved, now: int):
        if record["resolved"]:
            return
        if record["responded"]:
            record["resolved"] = True
            on_resolved(now)
            return
        self._probe_send(switch, record, now)
        if attempt == self.defense.probe.max_probe_attempts:
            record["resolved"] = True
            alert = Alert(switch=switch, declared_at_us=now,
                          probes_sent=record["probes"])
            was_active = self.defense.mitigation_active
            self.defense.on_alert(alert)
            self.trace.bump("alerts")
            self.trace.log(now, "alert", switch=switch,
                           probes_sent=record["probes"],
                           first_send_us=record["first_send"])
            if self.defense.mitigation_active and not was_active:
                self.trace.log(now, "mitigation_activated", policy=self.defense.policy)
            on_resolved(now)

    def _switch_recv_probe(self, pkt: Packet, now: int):
        cycle, attempt, switch = pkt.payload
        self.trace.bump("probe_delivered")
        self.trace.bump("probe_reply")
        self._send_control("probe_reply", switch, self.ctrl, now,
                           payload=(cycle, attempt, switch))

    def _ctrl_recv_probe_reply(self, pkt: Packet, now: int):
        cycle, attempt, switch = pkt.payload
        self.trace.bump("probe_reply_delivered")
        record = self._probe_records.get(switch)
        if record is not None and record["cycle"] == cycle and not record["resolved"]:
            record["responded"] = True
            self.trace.log(now, "probe_response", switch=switch, cycle=cycle,
                           attempt=attempt)

    # ------------------------------------------------------------------
    # run loop
    # ------------------------------------------------------------------

    def run(self) -> Trace:
        self._setup_workload()
        if self.defense.probing_enabled:
            self.schedule(ms_to_us(self.sc.defense.detect_start_ms),
                          lambda t: self._start_probe_cycle(t))
        while self._heap:
            at_us, _, fn = heapq.heappop(self._heap)
            if at_us > self.horizon_us:
                break
            fn(at_us)
        c = self.trace.counters
        in_flight = c["packets_created"] - c["packets_delivered"] - c["packets_dropped"]
        assert in_flight == len(self._live_packets), "packet accounting broken"
        assert in_flight >= 0
        self.trace.meta["alerts"] = [
            {"switch": a.switch, "declared_at_us": a.declared_at_us,
             "probes_sent": a.probes_sent}
            for a in self.defense.alerts
        ]
        return self.trace


def _other(direction: str) -> str:
    return "rev" if direction == "fwd" else "fwd"
