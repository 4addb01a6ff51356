"""Shared vocabulary: alert categories, alerts, identity keys and messages.

Simulated time is an ``int`` number of milliseconds since scenario start.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

SimTime = int  # milliseconds
NodeId = int

MS_PER_S = 1000


class AlertCategory(enum.IntEnum):
    TRAFFIC = 0
    PUBLIC_TRANSPORT = 1
    CROWDS = 2
    CRIME = 3
    NATURE = 4
    STREET_SHOW = 5

    @property
    def canonical(self) -> str:
        return self.name.lower()


class UnknownCategoryError(ValueError):
    pass


def parse_category(text: str) -> AlertCategory:
    token = text.strip()
    try:
        return AlertCategory[token.upper()]
    except KeyError:
        valid = ", ".join(c.canonical for c in AlertCategory)
        raise UnknownCategoryError(
            f"unknown alert category {token!r} (expected one of: {valid})"
        ) from None


class Position(NamedTuple):
    x: float
    y: float

    def distance(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Alert:
    category: AlertCategory
    location: Position
    created_at: SimTime


IDENTITY_POLICIES = ("category", "category+cell")


class AlertKey(NamedTuple):
    category: AlertCategory
    cell: Optional[tuple[int, int]] = None

    def __str__(self) -> str:
        if self.cell is None:
            return self.category.canonical
        return f"{self.category.canonical}@{self.cell[0]},{self.cell[1]}"


def alert_key(alert: Alert, policy: str = "category", cell_m: float = 200.0) -> AlertKey:
    """Dedup identity of an alert.

    ``"category"`` compares incident codes only. ``"category+cell"`` also
    buckets the location into a square grid of side ``cell_m`` so that
    same-category incidents far apart are kept distinct.
    """
    if policy == "category":
        return AlertKey(alert.category)
    if policy == "category+cell":
        cx = math.floor(alert.location.x / cell_m)
        cy = math.floor(alert.location.y / cell_m)
        return AlertKey(alert.category, (cx, cy))
    raise ValueError(f"unknown identity policy {policy!r}")


class FloodId(NamedTuple):
    """Per-origin flood tag used by the no-assessment baseline."""

    origin: NodeId
    detected_at: SimTime

    def __str__(self) -> str:
        return f"o{self.origin}@{self.detected_at}"


# message type codes; 0/1/2 follow the on-air layout, hello is not an assessment message
MSG_REQUEST = 0
MSG_REPLY = 1
MSG_ALERT = 2
MSG_HELLO = 255


@dataclass(frozen=True)
class Hello:
    sender: NodeId
    msg_type = MSG_HELLO


@dataclass(frozen=True)
class AssessRequest:
    sender: NodeId
    alert: Alert
    msg_type = MSG_REQUEST


@dataclass(frozen=True)
class AssessReply:
    destination: NodeId
    sender: NodeId
    reply: bool
    msg_type = MSG_REPLY


@dataclass(frozen=True)
class AlertMsg:
    # no sender field: identical alerts from different transmitters are equal
    alert: Alert
    flood_id: Optional[FloodId] = None
    msg_type = MSG_ALERT


Message = Union[Hello, AssessRequest, AssessReply, AlertMsg]


# --- wire encoding --------------------------------------------------------

_HDR = struct.Struct("!B")
_NODE = struct.Struct("!I")
_ALERT = struct.Struct("!BddQ")
_REPLY = struct.Struct("!II?")
_FLOOD = struct.Struct("!IQ")


def _pack_alert(alert: Alert) -> bytes:
    return _ALERT.pack(int(alert.category), alert.location.x, alert.location.y, alert.created_at)


def _unpack_alert(buf: bytes, offset: int) -> Alert:
    cat, x, y, ts = _ALERT.unpack_from(buf, offset)
    return Alert(AlertCategory(cat), Position(x, y), ts)


def encode(msg: Message) -> bytes:
    head = _HDR.pack(msg.msg_type)
    if isinstance(msg, Hello):
        return head + _NODE.pack(msg.sender)
    if isinstance(msg, AssessRequest):
        return head + _NODE.pack(msg.sender) + _pack_alert(msg.alert)
    if isinstance(msg, AssessReply):
        return head + _REPLY.pack(msg.destination, msg.sender, msg.reply)
    if isinstance(msg, AlertMsg):
        body = head + _pack_alert(msg.alert)
        if msg.flood_id is not None:
            body += _FLOOD.pack(*msg.flood_id)
        return body
    raise TypeError(f"not a message: {msg!r}")


def decode(buf: bytes) -> Message:
    (code,) = _HDR.unpack_from(buf, 0)
    off = _HDR.size
    if code == MSG_HELLO:
        return Hello(_NODE.unpack_from(buf, off)[0])
    if code == MSG_REQUEST:
        (sender,) = _NODE.unpack_from(buf, off)
        return AssessRequest(sender, _unpack_alert(buf, off + _NODE.size))
    if code == MSG_REPLY:
        dest, sender, reply = _REPLY.unpack_from(buf, off)
        return AssessReply(dest, sender, reply)
    if code == MSG_ALERT:
        alert = _unpack_alert(buf, off)
        off += _ALERT.size
        flood = FloodId(*_FLOOD.unpack_from(buf, off)) if len(buf) > off else None
        return AlertMsg(alert, flood)
    raise ValueError(f"unknown message type code {code}")
