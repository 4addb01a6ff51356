"""Deterministic discrete-event loop and scenario construction."""
from __future__ import annotations

import dataclasses
import hashlib
import heapq
import io
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, TextIO

import numpy as np

from .metrics import select_edge_nodes
from .mobility import MobilityTrace, generate_random_waypoint, load_trace
from .model import (
    MS_PER_S,
    Alert,
    AlertCategory,
    AlertMsg,
    AssessReply,
    AssessRequest,
    FloodId,
    Hello,
    NodeId,
    Position,
    SimTime,
    alert_key,
)
from .protocol import (
    PROTOCOLS,
    Broadcast,
    DeliverToApp,
    Node,
    ProtocolParams,
    SetTimer,
    Unicast,
    make_node,
)
from .radio import RadioConfig, neighbor_array, schedule_unicast


class ScenarioError(ValueError):
    pass


# RNG stream ids, one SeedSequence branch each
STREAM_MOBILITY, STREAM_SENDERS, STREAM_ASSESS = 0, 1, 2

# simultaneous-event priority
RANK_DELIVERY, RANK_TIMER, RANK_HELLO, RANK_DETECT = 0, 1, 2, 3


@dataclass
class ScenarioConfig:
    protocol: str = "ctd_query"
    n_nodes: int = 200
    width_m: float = 500.0
    height_m: float = 500.0
    speed_min: float = 0.1
    speed_max: float = 1.2
    trace_file: Optional[str] = None
    trace: Optional[MobilityTrace] = field(default=None, repr=False, compare=False)
    radio: RadioConfig = field(default_factory=RadioConfig)
    params: ProtocolParams = field(default_factory=ProtocolParams)
    hello_enabled: Optional[bool] = None  # None: only for ctd_passive
    n_senders: int = 1
    sender_radius_m: float = 100.0
    T_ms: SimTime = 1000
    category: AlertCategory = AlertCategory.TRAFFIC
    location: Optional[Position] = None  # None: pivot sender's position
    t0_ms: SimTime = 60_000
    duration_ms: SimTime = 1_800_000
    seed: int = 0

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @property
    def hellos(self) -> bool:
        if self.hello_enabled is None:
            return self.protocol == "ctd_passive"
        return self.hello_enabled

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ScenarioError(
                f"unknown protocol {self.protocol!r} (expected one of: {', '.join(PROTOCOLS)})"
            )
        if self.n_senders < 1:
            raise ScenarioError("n_senders must be >= 1")
        if self.trace is None and self.trace_file is None and self.n_senders > self.n_nodes:
            raise ScenarioError(f"n_senders={self.n_senders} exceeds n_nodes={self.n_nodes}")
        if self.duration_ms < 0 or self.t0_ms < 0 or self.T_ms < 0:
            raise ScenarioError("times must be non-negative")

    def build_trace(self) -> MobilityTrace:
        if self.trace is not None:
            return self.trace
        if self.trace_file is not None:
            with open(self.trace_file) as fh:
                return load_trace(fh)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, STREAM_MOBILITY]))
        return generate_random_waypoint(
            (self.width_m, self.height_m),
            self.n_nodes,
            self.duration_ms / MS_PER_S,
            (self.speed_min, self.speed_max),
            rng,
        )


class Record(NamedTuple):
    t: SimTime
    kind: str  # detect | tx | hello | deliver
    node: NodeId
    msg_type: Optional[int]
    key: str

    def line(self) -> str:
        mt = "-" if self.msg_type is None else str(self.msg_type)
        return f"{self.t}\t{self.kind}\t{self.node}\t{mt}\t{self.key}"


@dataclass
class EventLog:
    meta: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def transmissions(self, include_hello: bool = False) -> list[Record]:
        kinds = ("tx", "hello") if include_hello else ("tx",)
        return [r for r in self.records if r.kind in kinds]

    def write(self, stream: TextIO) -> None:
        for k in sorted(self.meta):
            stream.write(f"# {k}={self.meta[k]}\n")
        for r in self.records:
            stream.write(r.line())
            stream.write("\n")

    def to_text(self) -> str:
        buf = io.StringIO()
        self.write(buf)
        return buf.getvalue()

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    @classmethod
    def read(cls, stream: TextIO) -> "EventLog":
        log = cls()
        for raw in stream:
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("# "):
                k, _, v = line[2:].partition("=")
                log.meta[k] = v
                continue
            t, kind, node, mt, key = line.split("\t")
            log.records.append(Record(int(t), kind, int(node), None if mt == "-" else int(mt), key))
        return log


def select_senders(trace: MobilityTrace, n_senders: int, radius_m: float, t0: SimTime,
                   T_ms: SimTime, rng: np.random.Generator) -> list[tuple[NodeId, SimTime]]:
    """Pick a physically close cluster of senders and their staggered detection times.

    The pivot is uniform among nodes with at least ``n_senders - 1`` peers
    within ``radius_m``; the rest are its nearest peers (ties by id).
    """
    if n_senders > trace.n_nodes:
        raise ScenarioError(
            f"cannot place {n_senders} senders among {trace.n_nodes} nodes; lower n_senders"
        )
    pos = trace.positions_at(t0 / MS_PER_S)
    d = np.hypot(pos[:, None, 0] - pos[None, :, 0], pos[:, None, 1] - pos[None, :, 1])
    np.fill_diagonal(d, np.inf)
    peers = (d <= radius_m).sum(axis=1)
    candidates = np.flatnonzero(peers >= n_senders - 1)
    if candidates.size == 0:
        raise ScenarioError(
            f"no cluster of {n_senders} nodes within {radius_m} m at t0; lower n_senders"
        )
    pivot = int(candidates[rng.integers(candidates.size)])
    order = np.lexsort((np.arange(trace.n_nodes), d[pivot]))
    chosen = [pivot] + [int(j) for j in order[: n_senders - 1]]
    return [(node, t0 + i * T_ms) for i, node in enumerate(chosen)]


class Simulator:
    """Runs one scenario; use :func:`run` unless you need the node states."""

    def __init__(self, config: ScenarioConfig, trace: Optional[MobilityTrace] = None):
        config.validate()
        self.config = config
        self.trace = trace if trace is not None else config.build_trace()
        n = self.trace.n_nodes
        if config.n_senders > n:
            raise ScenarioError(f"n_senders={config.n_senders} exceeds trace's {n} nodes")
        self.radio = config.radio
        self.params = config.params
        needs_rng = 0.0 < config.params.pa < 1.0
        self.nodes: list[Node] = [
            make_node(
                config.protocol, i, config.params,
                np.random.default_rng(np.random.SeedSequence([config.seed, STREAM_ASSESS, i]))
                if needs_rng else None,
            )
            for i in range(n)
        ]
        self.log = EventLog()
        self._queue: list = []
        self._seq = 0
        self.now: SimTime = 0
        self.senders: list[tuple[NodeId, SimTime]] = []
        self.event_location: Optional[Position] = None

    def _push(self, t: SimTime, rank: int, node: int, payload) -> None:
        heapq.heappush(self._queue, (t, rank, node, self._seq, payload))
        self._seq += 1

    def _key_str(self, alert: Alert) -> str:
        return str(alert_key(alert, self.params.identity_policy, self.params.cell_m))

    def setup(self) -> None:
        cfg = self.config
        meta = self.log.meta
        meta.update(protocol=cfg.protocol, n_nodes=self.trace.n_nodes, n_senders=cfg.n_senders,
                    pa=cfg.params.pa, seed=cfg.seed, duration_ms=cfg.duration_ms,
                    t0_ms=cfg.t0_ms, T_ms=cfg.T_ms, W_ms=cfg.params.W_ms,
                    range_m=cfg.radio.range_m, hop_latency_ms=cfg.radio.hop_latency_ms)
        if cfg.duration_ms <= 0:
            return
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, STREAM_SENDERS]))
        self.senders = select_senders(self.trace, cfg.n_senders, cfg.sender_radius_m,
                                      cfg.t0_ms, cfg.T_ms, rng)
        pivot = self.senders[0][0]
        loc = cfg.location
        if loc is None:
            loc = self.trace.position_at(pivot, cfg.t0_ms / MS_PER_S)
        self.event_location = Position(float(loc[0]), float(loc[1]))
        meta["senders"] = ",".join(str(s) for s, _ in self.senders)
        meta["event_location"] = f"{self.event_location.x:.3f},{self.event_location.y:.3f}"
        if self.trace.n_nodes >= 2:
            a, b = select_edge_nodes(self.trace, cfg.t0_ms, self.event_location)
            meta["edge_a"], meta["edge_b"] = a, b
        for node, t in self.senders:
            self._push(t, RANK_DETECT, node, Alert(cfg.category, self.event_location, t))
        if cfg.hellos:
            self._push(0, RANK_HELLO, -1, None)

    def run(self) -> EventLog:
        self.setup()
        duration = self.config.duration_ms
        queue = self._queue
        nodes = self.nodes
        records = self.log.records
        while queue:
            t, rank, node, _, payload = heapq.heappop(queue)
            if t >= duration:
                break
            self.now = t
            if rank == RANK_DELIVERY:
                if node < 0:
                    self._hello_round_delivery(t, payload)
                else:
                    self._execute(node, t, nodes[node].receive(payload, t))
            elif rank == RANK_TIMER:
                self._execute(node, t, nodes[node].on_timer(payload, t))
            elif rank == RANK_DETECT:
                records.append(Record(t, "detect", node, None, self._key_str(payload)))
                self._execute(node, t, nodes[node].on_detect(payload, t))
            else:
                self._hello_round(t)
        return self.log

    def _hello_round(self, t: SimTime) -> None:
        # all nodes beacon on a shared grid t = k * interval
        batch = []
        records = self.log.records
        for node in self.nodes:
            for cmd in node.emit_hello(t):
                records.append(Record(t, "hello", node.id, None, "-"))
                batch.append((node.id, neighbor_array(node.id, t, self.trace, self.radio)))
        self._push(t + self.radio.hop_latency_ms, RANK_DELIVERY, -1, batch)
        self._push(t + self.params.hello_interval_ms, RANK_HELLO, -1, None)

    def _hello_round_delivery(self, t: SimTime, batch) -> None:
        nodes = self.nodes
        for sender, receivers in batch:
            hello = Hello(sender)
            for r in receivers.tolist():
                nodes[r].on_hello(hello, t)

    def _execute(self, node: NodeId, t: SimTime, commands) -> None:
        records = self.log.records
        for cmd in commands:
            if isinstance(cmd, Broadcast):
                msg = cmd.msg
                records.append(Record(t, "tx", node, msg.msg_type, self._msg_key(msg)))
                at = t + self.radio.hop_latency_ms
                for r in neighbor_array(node, t, self.trace, self.radio).tolist():
                    self._push(at, RANK_DELIVERY, r, msg)
            elif isinstance(cmd, Unicast):
                msg = cmd.msg
                records.append(Record(t, "tx", node, msg.msg_type, self._msg_key(msg)))
                d = schedule_unicast(node, cmd.dest, msg, t, self.trace, self.radio)
                if d is not None:
                    self._push(d.deliver_at, RANK_DELIVERY, d.receiver, msg)
            elif isinstance(cmd, SetTimer):
                self._push(cmd.at, RANK_TIMER, node, cmd.tag)
            elif isinstance(cmd, DeliverToApp):
                unit = cmd.unit
                key = f"{self._key_str(cmd.alert)}/{unit}" if isinstance(unit, FloodId) else str(unit)
                records.append(Record(t, "deliver", node, None, key))
            else:
                raise TypeError(f"unknown command {cmd!r}")

    def _msg_key(self, msg) -> str:
        if isinstance(msg, AlertMsg):
            if msg.flood_id is not None:
                return f"{self._key_str(msg.alert)}/{msg.flood_id}"
            return self._key_str(msg.alert)
        if isinstance(msg, AssessRequest):
            return self._key_str(msg.alert)
        if isinstance(msg, AssessReply):
            return f"to{msg.destination}:{'+' if msg.reply else '-'}"
        return "-"


def run(config: ScenarioConfig, trace: Optional[MobilityTrace] = None) -> EventLog:
    """Run one scenario to completion and return its event log."""
    return Simulator(config, trace).run()
