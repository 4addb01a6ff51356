import math
from collections import Counter

import numpy as np

from ctdsim import ScenarioConfig, static_trace


def clique_positions(n, center=(250.0, 250.0), radius=10.0):
    cx, cy = center
    return [(cx + radius * math.cos(2 * math.pi * i / n), cy + radius * math.sin(2 * math.pi * i / n))
            for i in range(n)]


def clique_config(n, protocol, n_senders=1, **kw):
    kw.setdefault("t0_ms", 5000)
    kw.setdefault("duration_ms", kw["t0_ms"] + n_senders * kw.get("T_ms", 1000) + 3000)
    trace = static_trace(clique_positions(n), 500, 500)
    return ScenarioConfig(protocol=protocol, trace=trace, n_senders=n_senders, **kw)


def tx_multiset(log):
    return Counter((r.t, r.node, r.msg_type, r.key) for r in log.records if r.kind == "tx")


def first_deliveries(log):
    out = {}
    for r in log.records:
        if r.kind == "deliver":
            out.setdefault(r.node, r.t)
    return out


def senders_of(log):
    return [int(s) for s in log.meta["senders"].split(",")]


def connected_rgg(n, width, height, range_m, seed=0):
    """Uniform random positions, redrawn until the unit-disk graph is connected."""
    rng = np.random.default_rng(seed)
    while True:
        pos = rng.uniform((0, 0), (width, height), size=(n, 2))
        d = np.hypot(pos[:, None, 0] - pos[None, :, 0], pos[:, None, 1] - pos[None, :, 1])
        adj = d <= range_m
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adj[i]):
                if j not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        if len(seen) == n:
            return [tuple(p) for p in pos]
