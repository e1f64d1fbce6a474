from .engine import DirectedLink, Packet, Simulator, Switch, TableEntry
from .trace import RttSample, Trace, ms_to_us, us_to_ms_str

__all__ = ["DirectedLink", "Packet", "Simulator", "Switch", "TableEntry",
           "RttSample", "Trace", "ms_to_us", "us_to_ms_str"]
