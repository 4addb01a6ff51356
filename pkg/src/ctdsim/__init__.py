"""Discrete-event simulator for collaboratively-triggered alert dissemination."""

from .engine import EventLog, ScenarioConfig, ScenarioError, Simulator, run, select_senders
from .metrics import MetricsReport, collect, relative_messages, select_edge_nodes
from .mobility import MobilityTrace, generate_random_waypoint, load_trace, static_trace
from .model import Alert, AlertCategory, AlertKey, Position, alert_key, parse_category
from .protocol import PROTOCOLS, ProtocolParams
from .radio import RadioConfig

__all__ = [
    "Alert", "AlertCategory", "AlertKey", "EventLog", "MetricsReport", "MobilityTrace",
    "PROTOCOLS", "Position", "ProtocolParams", "RadioConfig", "ScenarioConfig",
    "ScenarioError", "Simulator", "alert_key", "collect", "generate_random_waypoint",
    "load_trace", "parse_category", "relative_messages", "run", "select_edge_nodes",
    "select_senders", "static_trace",
]
