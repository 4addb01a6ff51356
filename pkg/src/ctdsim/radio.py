"""Unit-disk radio with reliable broadcast and fixed per-hop latency."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mobility import MobilityTrace
from .model import MS_PER_S, Message, NodeId, SimTime


@dataclass(frozen=True)
class RadioConfig:
    range_m: float = 100.0
    hop_latency_ms: SimTime = 2

    def __post_init__(self):
        if not self.range_m > 0:
            raise ValueError("radio range must be positive")
        if self.hop_latency_ms < 0:
            raise ValueError("hop latency must be non-negative")


@dataclass(frozen=True)
class Delivery:
    receiver: NodeId
    msg: Message
    deliver_at: SimTime


def neighbor_array(node: NodeId, t: SimTime, trace: MobilityTrace, cfg: RadioConfig) -> np.ndarray:
    """Sorted ids of nodes within range of ``node`` at ``t`` (ms), self excluded."""
    pos = trace.positions_at(t / MS_PER_S)
    d2 = np.square(pos[:, 0] - pos[node, 0]) + np.square(pos[:, 1] - pos[node, 1])
    mask = d2 <= cfg.range_m * cfg.range_m
    mask[node] = False
    return np.flatnonzero(mask)


def neighbors_of(node: NodeId, t: SimTime, trace: MobilityTrace, cfg: RadioConfig) -> set[NodeId]:
    if not 0 <= node < trace.n_nodes:
        raise KeyError(f"unknown node {node}")
    return set(neighbor_array(node, t, trace, cfg).tolist())


def in_range(a: NodeId, b: NodeId, t: SimTime, trace: MobilityTrace, cfg: RadioConfig) -> bool:
    pos = trace.positions_at(t / MS_PER_S)
    dx, dy = pos[a] - pos[b]
    return dx * dx + dy * dy <= cfg.range_m * cfg.range_m


def schedule_broadcast(sender: NodeId, msg: Message, t: SimTime, trace: MobilityTrace,
                       cfg: RadioConfig) -> list[Delivery]:
    at = t + cfg.hop_latency_ms
    return [Delivery(r, msg, at) for r in neighbor_array(sender, t, trace, cfg).tolist()]


def schedule_unicast(sender: NodeId, dest: NodeId, msg: Message, t: SimTime,
                     trace: MobilityTrace, cfg: RadioConfig) -> Optional[Delivery]:
    if dest == sender or not in_range(sender, dest, t, trace, cfg):
        return None
    return Delivery(dest, msg, t + cfg.hop_latency_ms)
