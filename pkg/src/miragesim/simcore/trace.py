"""Event log, counters, and timing samples produced by a simulation run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

US_PER_MS = 1000


def ms_to_us(ms: float) -> int:
    return int(round(ms * US_PER_MS))


def us_to_ms_str(us: int) -> str:
    """Exact decimal millisecond rendering (no float round-trip)."""
    sign = "-" if us < 0 else ""
    us = abs(us)
    return f"{sign}{us // US_PER_MS}.{us % US_PER_MS:03d}"


@dataclass(frozen=True)
class RttSample:
    flow: str
    index: int
    sent_us: int
    rtt_us: int
    timed_out: bool = False


@dataclass
class LinkStats:
    sent: int = 0
    dropped: int = 0
    busy_us: int = 0
    busy_by_bucket: dict[int, int] = field(default_factory=dict)

    def record_service(self, start_us: int, service_us: int, bucket_us: int):
        self.sent += 1
        self.busy_us += service_us
        bucket = start_us // bucket_us
        self.busy_by_bucket[bucket] = self.busy_by_bucket.get(bucket, 0) + service_us


class Trace:
    """Ordered event log plus aggregate counters for one run.

    detail="normal" logs control-plane activity, drops, samples, and flow
    lifecycles; detail="full" additionally logs every link delivery (used by
    ordering tests; too chatty for flood workloads).
    """

    def __init__(self, detail: str = "normal", bucket_ms: float = 1.0):
        if detail not in ("normal", "full"):
            raise ValueError(f"unknown trace detail {detail!r}")
        self.detail = detail
        self.bucket_us = ms_to_us(bucket_ms)
        self.events: list[dict] = []
        self.rtt_samples: list[RttSample] = []
        self.link_stats: dict[tuple[str, str], LinkStats] = {}
        self.counters: dict[str, int] = {
            "packets_created": 0,
            "packets_delivered": 0,
            "packets_dropped": 0,
            "packet_in": 0,
            "flow_mod": 0,
            "barrier_ack": 0,
            "packet_out": 0,
            "probe_sent": 0,
            "probe_reply": 0,
            "ctrl_query": 0,
            "ctrl_reply": 0,
            "rules_installed": 0,
            "rules_expired": 0,
            "alerts": 0,
        }
        self.packet_in_by_flow: dict[str, int] = {}
        self.meta: dict = {}

    # -- events ------------------------------------------------------------

    def log(self, time_us: int, kind: str, **fields):
        event = {"t_us": time_us, "kind": kind}
        event.update(fields)
        self.events.append(event)

    def log_full(self, time_us: int, kind: str, **fields):
        if self.detail == "full":
            self.log(time_us, kind, **fields)

    def bump(self, counter: str, n: int = 1):
        self.counters[counter] = self.counters.get(counter, 0) + n

    def note_packet_in(self, flow: str):
        self.bump("packet_in")
        self.packet_in_by_flow[flow] = self.packet_in_by_flow.get(flow, 0) + 1

    def add_sample(self, sample: RttSample):
        self.rtt_samples.append(sample)
        self.log(sample.sent_us + sample.rtt_us, "rtt_sample", flow=sample.flow,
                 index=sample.index, rtt_us=sample.rtt_us, timed_out=sample.timed_out)

    def link(self, u: str, v: str) -> LinkStats:
        key = (u, v)
        if key not in self.link_stats:
            self.link_stats[key] = LinkStats()
        return self.link_stats[key]

    # -- derived views -----------------------------------------------------

    @property
    def controller_messages(self) -> int:
        c = self.counters
        return (c["packet_in"] + c["flow_mod"] + c["barrier_ack"] + c["packet_out"]
                + c["probe_sent"] + c["probe_reply"] + c["ctrl_query"] + c["ctrl_reply"])

    def samples_for(self, flow: str) -> list[RttSample]:
        return [s for s in self.rtt_samples if s.flow == flow]

    def events_of(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["kind"] == kind]

    def utilization(self, u: str, v: str, t_from_us: int, t_to_us: int) -> float:
        """Mean busy fraction of the directed link over [t_from, t_to)."""
        stats = self.link_stats.get((u, v))
        if stats is None or t_to_us <= t_from_us:
            return 0.0
        b0, b1 = t_from_us // self.bucket_us, (t_to_us - 1) // self.bucket_us
        busy = sum(stats.busy_by_bucket.get(b, 0) for b in range(b0, b1 + 1))
        return busy / (t_to_us - t_from_us)

    # -- serialization -----------------------------------------------------

    def summary(self) -> dict:
        c = dict(self.counters)
        in_flight = c["packets_created"] - c["packets_delivered"] - c["packets_dropped"]
        return {
            "meta": dict(sorted(self.meta.items())),
            "counters": dict(sorted(c.items())),
            "packets_in_flight_at_horizon": in_flight,
            "controller_messages": self.controller_messages,
            "packet_in_by_flow": dict(sorted(self.packet_in_by_flow.items())),
            "rtt_sample_count": len(self.rtt_samples),
            "event_count": len(self.events),
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps({"summary": self.summary()}, sort_keys=True)]
        for event in self.events:
            lines.append(json.dumps(event, sort_keys=True))
        return "\n".join(lines) + "\n"

    def links_csv(self) -> str:
        rows = ["src,dst,sent,dropped,busy_us"]
        for (u, v) in sorted(self.link_stats):
            s = self.link_stats[(u, v)]
            rows.append(f"{u},{v},{s.sent},{s.dropped},{s.busy_us}")
        return "\n".join(rows) + "\n"

    def rtt_csv(self) -> str:
        rows = ["flow,index,sent_ms,rtt_ms,timed_out"]
        for s in self.rtt_samples:
            rows.append(
                f"{s.flow},{s.index},{us_to_ms_str(s.sent_us)},"
                f"{us_to_ms_str(s.rtt_us)},{int(s.timed_out)}"
            )
        return "\n".join(rows) + "\n"
