"""Defense logic: unreachability probing, asymmetric path selection, and
short-lived per-packet rule decisions with the unique-rule threshold."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .routing import Path, PathPool


@dataclass(frozen=True)
class ProbeConfig:
    """Detection probe pacing.

    With the defaults (2 s interval, 2 retry attempts) an unresponsive
    switch receives 3 probes and is declared non-reachable exactly
    2 * probe_interval after the first send.
    """

    probe_interval_ms: float = 2000.0
    max_probe_attempts: int = 2
    batch_size: int = 0  # 0 = probe all switches per cycle

    def __post_init__(self):
        if self.probe_interval_ms <= 0:
            raise ValueError("probe_interval_ms must be > 0")
        if self.max_probe_attempts < 1:
            raise ValueError("max_probe_attempts must be >= 1")
        if self.batch_size < 0:
            raise ValueError("batch_size must be >= 0")

    @property
    def probe_interval_us(self) -> int:
        return int(round(self.probe_interval_ms * 1000))


@dataclass(frozen=True)
class Alert:
    switch: str
    declared_at_us: int
    probes_sent: int


def probe_send_offsets_us(cfg: ProbeConfig) -> list[int]:
    """Simulated-time offsets (from cycle start) of each probe to a switch
    that never responds: the initial send plus one per retry attempt."""
    return [k * cfg.probe_interval_us for k in range(cfg.max_probe_attempts + 1)]


def probe_declare_offset_us(cfg: ProbeConfig) -> int:
    """Offset at which a silent switch is declared non-reachable."""
    return cfg.max_probe_attempts * cfg.probe_interval_us


class RuleKind(str, Enum):
    UNIQUE_PER_PACKET = "unique_per_packet"
    REQUEST_COMMON = "request_common"
    USE_EXISTING_COMMON = "use_existing_common"


@dataclass(frozen=True)
class RuleDecision:
    packet_index: int
    decision: RuleKind
    forward: Path | None
    reverse: Path | None
    no_diversity: bool = False


def asymmetric_route(forward_pool: PathPool, reverse_pool: PathPool) -> tuple[Path, Path, bool]:
    """Forward and reverse paths for one request.

    The reverse selection excludes the reversed forward path whenever the
    pool holds at least two paths; with a single path both directions
    coincide and the no-diversity flag is set.
    """
    forward = forward_pool.select_next()
    if reverse_pool.has_diversity:
        reverse = reverse_pool.select_next_excluding(forward.reversed())
        return forward, reverse, False
    reverse = reverse_pool.select_next()
    return forward, reverse, not forward_pool.has_diversity


def on_new_flow_packet(index: int, lambda_threshold: int,
                       forward_pool: PathPool, reverse_pool: PathPool,
                       common_installed: bool = False) -> RuleDecision:
    """Per-packet rule decision for an active defense.

    Packets 1..lambda get unique single-use rules on pool-rotated paths
    (the single path when no diversity exists); later packets ride a common
    rule, requested once and then reused.
    """
    if index < 1:
        raise ValueError("packet index is 1-based")
    if lambda_threshold < 0:
        raise ValueError("lambda threshold must be >= 0")
    if index <= lambda_threshold:
        forward, reverse, no_div = asymmetric_route(forward_pool, reverse_pool)
        return RuleDecision(index, RuleKind.UNIQUE_PER_PACKET, forward, reverse, no_div)
    if common_installed:
        return RuleDecision(index, RuleKind.USE_EXISTING_COMMON, None, None)
    forward, reverse, no_div = asymmetric_route(forward_pool, reverse_pool)
    return RuleDecision(index, RuleKind.REQUEST_COMMON, forward, reverse, no_div)


@dataclass
class DefenseState:
    """Controller-owned defense state inside one simulation."""

    mode: str = "off"  # off | detect | full
    policy: str = "always_on"  # always_on | on_alert
    lambda_threshold: int = 5
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    unique_rule_timeout_ms: float = 50.0
    mitigation_active: bool = False
    activated_at_us: int | None = None
    alerts: list[Alert] = field(default_factory=list)

    @property
    def probing_enabled(self) -> bool:
        return self.mode in ("detect", "full")

    def maybe_activate_at_start(self):
        if self.mode == "full" and self.policy == "always_on":
            self.mitigation_active = True
            self.activated_at_us = 0

    def on_alert(self, alert: Alert):
        self.alerts.append(alert)
        if self.mode == "full" and not self.mitigation_active:
            self.mitigation_active = True
            self.activated_at_us = alert.declared_at_us
