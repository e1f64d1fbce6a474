"""Deterministic in-band SDN simulator and topology-diversity toolkit.

Implements shared-link timing reconnaissance and flooding against an
in-band control channel, the probe/path-diversity/short-lived-rule
defenses, and dataset-scale path-diversity analytics.
"""

from .topo import Link, Topology, parse_gml, attach_hosts, place_controller
from .routing import (Metric, Path, PathPool, dijkstra, enumerate_all_paths,
                      has_alternate_path, path_cost, select_next_path)
from .scenario import Scenario, load_scenario
from .runner import run_scenario, measure_rtt

__all__ = [
    "Link", "Topology", "parse_gml", "attach_hosts", "place_controller",
    "Metric", "Path", "PathPool", "dijkstra", "enumerate_all_paths",
    "has_alternate_path", "path_cost", "select_next_path",
    "Scenario", "load_scenario", "run_scenario", "measure_rtt",
]

__version__ = "0.1.0"
