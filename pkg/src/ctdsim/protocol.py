"""Per-node protocol state machines.

Handlers never touch the network or the clock. Each one takes an input
event plus the current time and returns a list of commands
(:class:`Broadcast`, :class:`Unicast`, :class:`SetTimer`,
:class:`DeliverToApp`) for the engine to execute.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Optional, Union

import numpy as np

from .model import (
    Alert,
    AlertKey,
    AlertMsg,
    AssessReply,
    AssessRequest,
    FloodId,
    Hello,
    Message,
    NodeId,
    SimTime,
    alert_key,
)

PROTOCOLS = ("baseline", "ctd_query", "ctd_passive")


@dataclass(frozen=True)
class ProtocolParams:
    W_ms: SimTime = 100
    S_ms: SimTime = 30 * 60 * 1000
    pa: float = 1.0
    hello_interval_ms: SimTime = 1000
    hello_expiry_intervals: int = 3
    identity_policy: str = "category"
    cell_m: float = 200.0

    def __post_init__(self):
        if not 0.0 <= self.pa <= 1.0:
            raise ValueError(f"pa must be in [0, 1], got {self.pa}")
        if self.W_ms < 0 or self.S_ms < 0:
            raise ValueError("W and S must be non-negative")
        if self.hello_interval_ms <= 0 or self.hello_expiry_intervals < 1:
            raise ValueError("hello interval and expiry must be positive")

    @property
    def hello_expiry_ms(self) -> SimTime:
        return self.hello_interval_ms * self.hello_expiry_intervals


# --- commands ---------------------------------------------------------------

@dataclass(frozen=True)
class Broadcast:
    msg: Message


@dataclass(frozen=True)
class Unicast:
    dest: NodeId
    msg: Message


@dataclass(frozen=True)
class SetTimer:
    at: SimTime
    tag: Hashable


@dataclass(frozen=True)
class DeliverToApp:
    alert: Alert
    unit: Hashable


Command = Union[Broadcast, Unicast, SetTimer, DeliverToApp]


# --- stores -------------------------------------------------------------------

class SeenStore:
    """Flood units remembered for ``window`` ms after first sighting."""

    def __init__(self, window: SimTime):
        self.window = window
        self._first: dict[Hashable, SimTime] = {}

    def __contains__(self, unit) -> bool:  # ignores expiry, use contains()
        return unit in self._first

    def contains(self, unit: Hashable, now: SimTime) -> bool:
        t = self._first.get(unit)
        if t is None:
            return False
        if now - t > self.window:
            del self._first[unit]
            return False
        return True

    def add(self, unit: Hashable, now: SimTime) -> None:
        self._first[unit] = now

    def __len__(self) -> int:
        return len(self._first)


class NeighborTable:
    """Last hello time per peer; only peers heard within ``expiry`` count."""

    def __init__(self, expiry: SimTime):
        self.expiry = expiry
        self.last_hello: dict[NodeId, SimTime] = {}

    def refresh(self, peer: NodeId, now: SimTime) -> None:
        self.last_hello[peer] = now

    def count(self, now: SimTime) -> int:
        exp = self.expiry
        return sum(1 for t in self.last_hello.values() if now - t <= exp)


@dataclass
class ProposalRecord:
    key: AlertKey
    alert: Alert
    first_seen: SimTime
    supporter_count: int = 1
    disseminated: bool = False


@dataclass
class PendingQuery:
    alert: Alert
    sent_at: SimTime
    deadline: SimTime
    positive: int = 0
    negative: int = 0


def most_positive(positive: int, negative: int) -> bool:
    """Strict majority; no replies and ties both mean no dissemination."""
    return positive > negative


def passive_threshold_met(supporters: int, neighbors: int) -> bool:
    return 2 * supporters > neighbors


# --- nodes ----------------------------------------------------------------------

@dataclass
class Node:
    id: NodeId
    params: ProtocolParams = field(default_factory=ProtocolParams)
    rng: Optional[np.random.Generator] = None
    proposals: dict = field(default_factory=dict)
    seen: SeenStore = field(init=False)
    neighbors: NeighborTable = field(init=False)
    pending: dict = field(default_factory=dict)
    detected: set = field(default_factory=set)

    protocol = ""

    def __post_init__(self):
        self.seen = SeenStore(self.params.S_ms)
        self.neighbors = NeighborTable(self.params.hello_expiry_ms)

    def key_of(self, alert: Alert) -> AlertKey:
        return alert_key(alert, self.params.identity_policy, self.params.cell_m)

    def proposal(self, key: AlertKey, now: SimTime) -> Optional[ProposalRecord]:
        rec = self.proposals.get(key)
        if rec is not None and now - rec.first_seen > self.params.S_ms:
            del self.proposals[key]
            return None
        return rec

    def assess(self, alert: Alert) -> bool:
        """Fresh acceptance draw, true with probability ``pa``."""
        pa = self.params.pa
        if pa >= 1.0:
            return True
        if pa <= 0.0:
            return False
        if self.rng is None:
            raise RuntimeError(f"node {self.id}: pa={pa} needs an rng")
        return bool(self.rng.random() < pa)

    def receive(self, msg: Message, now: SimTime) -> list[Command]:
        if isinstance(msg, AlertMsg):
            return self.on_alert(msg, now)
        if isinstance(msg, AssessRequest):
            return self.on_request(msg, now)
        if isinstance(msg, AssessReply):
            return self.on_reply(msg, now)
        if isinstance(msg, Hello):
            return self.on_hello(msg, now)
        raise TypeError(f"unexpected message {msg!r}")

    def on_detect(self, alert: Alert, now: SimTime) -> list[Command]:
        raise NotImplementedError

    def on_request(self, req: AssessRequest, now: SimTime) -> list[Command]:
        return []

    def on_reply(self, reply: AssessReply, now: SimTime) -> list[Command]:
        return []

    def on_timer(self, tag: Hashable, now: SimTime) -> list[Command]:
        return []

    def on_alert(self, msg: AlertMsg, now: SimTime) -> list[Command]:
        """Controlled flooding: deliver and re-broadcast each flood unit once."""
        unit = msg.flood_id if msg.flood_id is not None else self.key_of(msg.alert)
        if self.seen.contains(unit, now):
            return []
        self.seen.add(unit, now)
        rec = self.proposals.get(unit)
        if rec is not None:
            rec.disseminated = True
        return [DeliverToApp(msg.alert, unit), Broadcast(msg)]

    def on_hello(self, hello: Hello, now: SimTime) -> list[Command]:
        self.neighbors.refresh(hello.sender, now)
        return []

    def emit_hello(self, now: SimTime) -> list[Command]:
        return [Broadcast(Hello(self.id))]

    def neighbor_count(self, now: SimTime) -> int:
        return self.neighbors.count(now)

    def _known(self, key: AlertKey, now: SimTime) -> bool:
        return self.proposal(key, now) is not None or self.seen.contains(key, now)

    def _disseminate(self, rec: ProposalRecord, now: SimTime) -> list[Command]:
        rec.disseminated = True
        self.seen.add(rec.key, now)
        cmds: list[Command] = [Broadcast(AlertMsg(rec.alert))]
        if rec.key not in self.detected:
            cmds.insert(0, DeliverToApp(rec.alert, rec.key))
        return cmds


class BaselineNode(Node):
    """Flooding without assessment; every detection starts its own flood."""

    protocol = "baseline"

    def __post_init__(self):
        super().__post_init__()
        self._own = SeenStore(self.params.S_ms)

    def on_detect(self, alert: Alert, now: SimTime) -> list[Command]:
        key = self.key_of(alert)
        if self._own.contains(key, now):
            return []
        self._own.add(key, now)
        self.detected.add(key)
        flood = FloodId(self.id, now)
        self.seen.add(flood, now)
        return [Broadcast(AlertMsg(alert, flood))]


class QueryNode(Node):
    """Query-based assessment: request, collect replies for W, flood on majority."""

    protocol = "ctd_query"

    def on_detect(self, alert: Alert, now: SimTime) -> list[Command]:
        key = self.key_of(alert)
        if self._known(key, now):
            return []
        self.detected.add(key)
        self.proposals[key] = ProposalRecord(key, alert, now)
        deadline = now + self.params.W_ms
        self.pending[key] = PendingQuery(alert, now, deadline)
        return [Broadcast(AssessRequest(self.id, alert)), SetTimer(deadline, key)]

    def on_request(self, req: AssessRequest, now: SimTime) -> list[Command]:
        key = self.key_of(req.alert)
        if self._known(key, now):
            return []
        self.proposals[key] = ProposalRecord(key, req.alert, now)
        ok = self.assess(req.alert)
        return [Unicast(req.sender, AssessReply(req.sender, self.id, ok))]

    def on_reply(self, reply: AssessReply, now: SimTime) -> list[Command]:
        # replies carry no alert field; credit the most recent open query
        if reply.destination != self.id:
            return []
        open_q = [q for q in self.pending.values() if q.sent_at <= now <= q.deadline]
        if not open_q:
            return []
        q = max(open_q, key=lambda q: q.sent_at)
        if reply.reply:
            q.positive += 1
        else:
            q.negative += 1
        return []

    def on_timer(self, tag: Hashable, now: SimTime) -> list[Command]:
        return self.decide(tag, now)

    def decide(self, key: AlertKey, now: SimTime) -> list[Command]:
        q = self.pending.pop(key, None)
        if q is None or not most_positive(q.positive, q.negative):
            return []
        if self.seen.contains(key, now):
            return []
        rec = self.proposals.get(key)
        if rec is None:
            rec = self.proposals[key] = ProposalRecord(key, q.alert, q.sent_at)
        return self._disseminate(rec, now)


class PassiveNode(Node):
    """Passive assessment: count proposals, flood once supporters exceed half the neighbors."""

    protocol = "ctd_passive"

    def _check(self, rec: ProposalRecord, now: SimTime) -> list[Command]:
        if passive_threshold_met(rec.supporter_count, self.neighbor_count(now)):
            return self._disseminate(rec, now)
        return []

    def on_detect(self, alert: Alert, now: SimTime) -> list[Command]:
        key = self.key_of(alert)
        if self.seen.contains(key, now):
            return []
        rec = self.proposal(key, now)
        if rec is None:
            rec = self.proposals[key] = ProposalRecord(key, alert, now)
        elif rec.disseminated or key in self.detected:
            return []
        else:
            rec.supporter_count += 1
        self.detected.add(key)
        return [Broadcast(AssessRequest(self.id, rec.alert))] + self._check(rec, now)

    def on_request(self, req: AssessRequest, now: SimTime) -> list[Command]:
        # proposals are never relayed; rejected ones are simply not counted
        if not self.assess(req.alert):
            return []
        key = self.key_of(req.alert)
        if self.seen.contains(key, now):
            return []
        rec = self.proposal(key, now)
        if rec is None:
            rec = self.proposals[key] = ProposalRecord(key, req.alert, now)
        elif rec.disseminated:
            return []
        else:
            rec.supporter_count += 1
        return self._check(rec, now)


NODE_CLASSES = {cls.protocol: cls for cls in (BaselineNode, QueryNode, PassiveNode)}


def make_node(protocol: str, node_id: NodeId, params: ProtocolParams,
              rng: Optional[np.random.Generator] = None) -> Node:
    try:
        cls = NODE_CLASSES[protocol]
    except KeyError:
        raise ValueError(
            f"unknown protocol {protocol!r} (expected one of: {', '.join(PROTOCOLS)})"
        ) from None
    return cls(node_id, params, rng)
