"""Node positions over time: trace files and a random-waypoint generator.

Trace times are in seconds (float); the engine converts from milliseconds.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO

import numpy as np

from .model import Position


class TraceError(ValueError):
    """Raised for malformed or invariant-violating mobility traces."""


@dataclass(frozen=True)
class Waypoint:
    t: float
    pos: Position


@dataclass
class MobilityTrace:
    """Per-node piecewise-linear trajectories inside a ``width x height`` box.

    ``times``/``xs``/``ys`` are ``(n_nodes, k_max)`` arrays padded by
    repeating each node's last waypoint at ``+inf`` time, which makes
    vectorised interpolation over all nodes a couple of numpy calls.
    """

    width: float
    height: float
    waypoints: list[list[Waypoint]]
    duration: float = 0.0
    _times: np.ndarray = field(init=False, repr=False)
    _xs: np.ndarray = field(init=False, repr=False)
    _ys: np.ndarray = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not self.waypoints:
            raise TraceError("trace has no nodes")
        k = max(len(w) for w in self.waypoints)
        n = len(self.waypoints)
        self._times = np.full((n, k), np.inf)
        self._xs = np.empty((n, k))
        self._ys = np.empty((n, k))
        for i, wps in enumerate(self.waypoints):
            if not wps:
                raise TraceError(f"node {i} has no waypoints")
            m = len(wps)
            self._times[i, :m] = [w.t for w in wps]
            self._xs[i, :m] = [w.pos.x for w in wps]
            self._ys[i, :m] = [w.pos.y for w in wps]
            self._xs[i, m:] = wps[-1].pos.x
            self._ys[i, m:] = wps[-1].pos.y
        if not self.duration:
            self.duration = float(max(w[-1].t for w in self.waypoints))
        self._single = k == 1

    @property
    def n_nodes(self) -> int:
        return len(self.waypoints)

    def positions_at(self, t: float) -> np.ndarray:
        """``(n_nodes, 2)`` array of every node's position at ``t`` seconds."""
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        if self._single:
            out = np.column_stack((self._xs[:, 0], self._ys[:, 0]))
        else:
            out = _interp_rows(self._times, self._xs, self._ys, t)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[t] = out
        return out

    def position_at(self, node: int, t: float) -> Position:
        if not 0 <= node < self.n_nodes:
            raise KeyError(f"unknown node {node}")
        wps = self.waypoints[node]
        if t <= wps[0].t:
            return wps[0].pos
        if t >= wps[-1].t:
            return wps[-1].pos
        ts = self._times[node, : len(wps)]
        j = int(np.searchsorted(ts, t, side="right"))
        a, b = wps[j - 1], wps[j]
        if t == a.t:
            return a.pos
        f = (t - a.t) / (b.t - a.t)
        return Position(a.pos.x + f * (b.pos.x - a.pos.x), a.pos.y + f * (b.pos.y - a.pos.y))


def _interp_rows(times: np.ndarray, xs: np.ndarray, ys: np.ndarray, t: float) -> np.ndarray:
    # index of the last waypoint with time <= t, clamped to the first one
    j = np.maximum((times <= t).sum(axis=1) - 1, 0)
    rows = np.arange(times.shape[0])
    j1 = np.minimum(j + 1, times.shape[1] - 1)
    t0, t1 = times[rows, j], times[rows, j1]
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(np.isfinite(t1) & (t1 > t0) & (t >= t0), (t - t0) / (t1 - t0), 0.0)
    f = np.clip(f, 0.0, 1.0)
    x = xs[rows, j] + f * (xs[rows, j1] - xs[rows, j])
    y = ys[rows, j] + f * (ys[rows, j1] - ys[rows, j])
    return np.column_stack((x, y))


def static_trace(positions: Sequence[tuple[float, float]], width: float, height: float,
                 duration: float = 0.0) -> MobilityTrace:
    """Trace where every node sits still at the given coordinates."""
    wps = [[Waypoint(0.0, Position(float(x), float(y)))] for x, y in positions]
    trace = MobilityTrace(width, height, wps, duration)
    validate_trace(trace)
    return trace


def validate_trace(trace: MobilityTrace, max_speed: Optional[float] = None,
                   tol: float = 1e-9) -> None:
    """Check ordering, bounds and (optionally) segment speeds; raise ``TraceError``."""
    if trace.width <= 0 or trace.height <= 0:
        raise TraceError("bounds must have positive area")
    for node, wps in enumerate(trace.waypoints):
        if not wps:
            raise TraceError(f"node {node} has no waypoints")
        for a, b in zip(wps, wps[1:]):
            if not b.t > a.t:
                raise TraceError(f"node {node}: non-monotone timestamps {a.t} -> {b.t}")
            if max_speed is not None:
                v = a.pos.distance(b.pos) / (b.t - a.t)
                if v > max_speed + tol:
                    raise TraceError(f"node {node}: segment speed {v:.6f} m/s exceeds {max_speed}")
        for w in wps:
            if not (0.0 <= w.pos.x <= trace.width and 0.0 <= w.pos.y <= trace.height):
                raise TraceError(f"node {node}: position {tuple(w.pos)} outside bounds")


def segment_speeds(trace: MobilityTrace) -> np.ndarray:
    """All segment speeds in m/s, re-derived from the emitted waypoints."""
    out = []
    for wps in trace.waypoints:
        for a, b in zip(wps, wps[1:]):
            out.append(a.pos.distance(b.pos) / (b.t - a.t))
    return np.asarray(out, dtype=float)


# --- trace file format -----------------------------------------------------

def load_trace(stream: TextIO | str) -> MobilityTrace:
    """Parse a trace file: ``bounds W H`` then ``t node x y`` records.

    Node ids are renumbered densely in order of first appearance.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    bounds = None
    per_node: dict[int, list[Waypoint]] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if bounds is None:
            if len(parts) != 3 or parts[0] != "bounds":
                raise TraceError(f"line {lineno}: expected 'bounds <width_m> <height_m>'")
            try:
                bounds = (float(parts[1]), float(parts[2]))
            except ValueError:
                raise TraceError(f"line {lineno}: malformed bounds") from None
            if bounds[0] <= 0 or bounds[1] <= 0:
                raise TraceError(f"line {lineno}: bounds must have positive area")
            continue
        if len(parts) != 4:
            raise TraceError(f"line {lineno}: expected '<t> <node> <x> <y>'")
        try:
            t, node, x, y = float(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])
        except ValueError:
            raise TraceError(f"line {lineno}: malformed record {line!r}") from None
        if not np.isfinite([t, x, y]).all() or t < 0:
            raise TraceError(f"line {lineno}: non-finite or negative value")
        if not (0.0 <= x <= bounds[0] and 0.0 <= y <= bounds[1]):
            raise TraceError(f"line {lineno}: position ({x}, {y}) outside bounds")
        wps = per_node.setdefault(node, [])
        if wps and not t > wps[-1].t:
            raise TraceError(f"line {lineno}: non-monotone timestamp for node {node}")
        wps.append(Waypoint(t, Position(x, y)))
    if bounds is None:
        raise TraceError("missing 'bounds' header")
    if not per_node:
        raise TraceError("trace has no nodes")
    # dicts keep insertion order, i.e. first appearance
    return MobilityTrace(bounds[0], bounds[1], list(per_node.values()))


def dump_trace(trace: MobilityTrace, stream: TextIO) -> None:
    stream.write(f"bounds {trace.width!r} {trace.height!r}\n")
    for node, wps in enumerate(trace.waypoints):
        for w in wps:
            stream.write(f"{w.t!r} {node} {w.pos.x!r} {w.pos.y!r}\n")


def dumps_trace(trace: MobilityTrace) -> str:
    buf = io.StringIO()
    dump_trace(trace, buf)
    return buf.getvalue()


# --- random waypoint --------------------------------------------------------

def generate_random_waypoint(bounds: tuple[float, float], n_nodes: int, duration: float,
                             speed_range: tuple[float, float] = (0.1, 1.2),
                             rng: Optional[np.random.Generator] = None) -> MobilityTrace:
    """Random waypoint without pauses, truncated at ``duration`` seconds."""
    width, height = bounds
    if width <= 0 or height <= 0:
        raise TraceError("bounds must have positive area")
    vmin, vmax = speed_range
    if not 0 < vmin <= vmax:
        raise ValueError(f"invalid speed range {speed_range}")
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    waypoints = []
    for _ in range(n_nodes):
        x, y = rng.uniform(0, width), rng.uniform(0, height)
        t = 0.0
        wps = [Waypoint(0.0, Position(float(x), float(y)))]
        while t < duration:
            nx, ny = rng.uniform(0, width), rng.uniform(0, height)
            v = rng.uniform(vmin, vmax)
            dist = float(np.hypot(nx - x, ny - y))
            if dist == 0.0:
                continue
            arrive = t + dist / v
            if arrive > duration:
                f = (duration - t) / (arrive - t)
                nx, ny, arrive = x + f * (nx - x), y + f * (ny - y), duration
            wps.append(Waypoint(float(arrive), Position(float(nx), float(ny))))
            x, y, t = nx, ny, arrive
        waypoints.append(wps)
    return MobilityTrace(float(width), float(height), waypoints, float(duration))

