"""Reduce event logs to message counts, delivery ratio and delays."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Iterable, Optional

import numpy as np

from .mobility import MobilityTrace
from .model import MS_PER_S, MSG_ALERT, MSG_REPLY, MSG_REQUEST, NodeId, Position, SimTime

if TYPE_CHECKING:
    from .engine import EventLog

CSV_FIELDS = (
    "protocol", "n_nodes", "n_senders", "pa", "seed",
    "msgs_request", "msgs_reply", "msgs_alert", "msgs_total", "msgs_hello",
    "delivery_ratio", "far_edge_delay_ms", "coverage_time_ms", "disseminated", "relative_pct",
)


@dataclass(frozen=True)
class MetricsReport:
    msgs_request: int
    msgs_reply: int
    msgs_alert: int
    msgs_hello: int
    delivery_ratio: float
    far_edge_delay_ms: Optional[SimTime]
    coverage_time_ms: Optional[SimTime]
    disseminated: bool

    @property
    def msgs_total(self) -> int:
        # hellos are tallied but not part of message efficiency
        return self.msgs_request + self.msgs_reply + self.msgs_alert

    def as_dict(self) -> dict:
        d = asdict(self)
        d["msgs_total"] = self.msgs_total
        return d


def select_edge_nodes(trace: MobilityTrace, t0: SimTime,
                      event_location: Position) -> tuple[NodeId, NodeId]:
    """Node nearest the event, and node nearest the box corner farthest from it."""
    if trace.n_nodes < 2:
        raise ValueError("edge nodes need at least 2 nodes")
    pos = trace.positions_at(t0 / MS_PER_S)
    ex, ey = event_location
    a = int(np.argmin(np.hypot(pos[:, 0] - ex, pos[:, 1] - ey)))
    corners = [(0.0, 0.0), (trace.width, 0.0), (0.0, trace.height), (trace.width, trace.height)]
    cx, cy = max(corners, key=lambda c: (c[0] - ex) ** 2 + (c[1] - ey) ** 2)
    dist_b = np.hypot(pos[:, 0] - cx, pos[:, 1] - cy)
    dist_b[a] = np.inf
    return a, int(np.argmin(dist_b))


def collect(log: "EventLog", a: Optional[NodeId] = None, b: Optional[NodeId] = None,
            n_nodes: Optional[int] = None) -> MetricsReport:
    """Compute a :class:`MetricsReport` from a log.

    Times are measured from the first detection. A node's receipt time is
    the earlier of its own detection and its first app delivery; senders
    therefore count as delivered. Coverage time is the latest receipt among
    nodes that got the alert over the network.
    """
    meta = log.meta
    if n_nodes is None:
        n_nodes = int(meta["n_nodes"])
    if b is None and "edge_b" in meta:
        b = int(meta["edge_b"])
    counts = {MSG_REQUEST: 0, MSG_REPLY: 0, MSG_ALERT: 0}
    hellos = 0
    receipt: dict[NodeId, SimTime] = {}
    delivered: set[NodeId] = set()
    first_detect: Optional[SimTime] = None
    for r in log.records:
        kind = r.kind
        if kind == "tx":
            counts[r.msg_type] += 1
        elif kind == "hello":
            hellos += 1
        elif kind == "detect" or kind == "deliver":
            if kind == "detect" and first_detect is None:
                first_detect = r.t
            if kind == "deliver":
                delivered.add(r.node)
            if r.node not in receipt or r.t < receipt[r.node]:
                receipt[r.node] = r.t
    far = cover = None
    if first_detect is not None:
        if b is not None and b in receipt:
            far = receipt[b] - first_detect
        if delivered:
            cover = max(receipt[n] for n in delivered) - first_detect
    return MetricsReport(
        msgs_request=counts[MSG_REQUEST],
        msgs_reply=counts[MSG_REPLY],
        msgs_alert=counts[MSG_ALERT],
        msgs_hello=hellos,
        delivery_ratio=len(receipt) / n_nodes if n_nodes else 0.0,
        far_edge_delay_ms=far,
        coverage_time_ms=cover,
        disseminated=counts[MSG_ALERT] > 0,
    )


def relative_messages(run: MetricsReport, baseline: MetricsReport) -> float:
    """Percentage of the baseline's message total used by ``run``."""
    if baseline.msgs_total <= 0:
        raise ValueError("baseline has zero messages; relative percentage undefined")
    return 100.0 * run.msgs_total / baseline.msgs_total


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def csv_row(report: MetricsReport, meta: dict, relative_pct: Optional[float] = None) -> dict:
    row = {
        "protocol": meta["protocol"],
        "n_nodes": meta["n_nodes"],
        "n_senders": meta["n_senders"],
        "pa": meta["pa"],
        "seed": meta["seed"],
        **report.as_dict(),
        "relative_pct": relative_pct,
    }
    return {k: _fmt(row[k]) for k in CSV_FIELDS}


def mean_std(values: Iterable[float]) -> tuple[float, float]:
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0
