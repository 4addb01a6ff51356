"""Flat ``key = value`` scenario and sweep configuration files."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, TextIO

from .engine import ScenarioConfig
from .model import IDENTITY_POLICIES, Position, parse_category
from .protocol import PROTOCOLS


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _protocol(text: str) -> str:
    if text not in PROTOCOLS:
        raise ValueError(f"unknown protocol {text!r} (valid: {', '.join(PROTOCOLS)})")
    return text


def _policy(text: str) -> str:
    if text not in IDENTITY_POLICIES:
        raise ValueError(f"unknown identity policy {text!r} (valid: {', '.join(IDENTITY_POLICIES)})")
    return text


def _location(text: str) -> Optional[Position]:
    if text == "auto":
        return None
    x, _, y = text.partition(",")
    return Position(float(x), float(y))


def _ms_from_s(text: str) -> int:
    return round(float(text) * 1000)


def _hello(text: str) -> Optional[bool]:
    return None if text == "auto" else _bool(text)


def _list(conv: Callable) -> Callable:
    def parse(text: str) -> list:
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return [conv(t) for t in items]
    return parse


def _seeds(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ValueError("empty seed list")
    return out


# key -> (target, converter); target is "field" or "radio.field" / "params.field"
SCENARIO_KEYS: dict[str, tuple[str, Callable]] = {
    "protocol": ("protocol", _protocol),
    "n_nodes": ("n_nodes", int),
    "n_senders": ("n_senders", int),
    "seed": ("seed", int),
    "duration_s": ("duration_ms", _ms_from_s),
    "mobility.width_m": ("width_m", float),
    "mobility.height_m": ("height_m", float),
    "mobility.speed_min": ("speed_min", float),
    "mobility.speed_max": ("speed_max", float),
    "mobility.trace": ("trace_file", str),
    "radio.range_m": ("radio.range_m", float),
    "radio.hop_latency_ms": ("radio.hop_latency_ms", int),
    "ctd.T_ms": ("T_ms", int),
    "ctd.W_ms": ("params.W_ms", int),
    "ctd.S_min": ("params.S_ms", lambda v: round(float(v) * 60_000)),
    "ctd.pa": ("params.pa", float),
    "hello.interval_ms": ("params.hello_interval_ms", int),
    "hello.expiry_intervals": ("params.hello_expiry_intervals", int),
    "hello.enabled": ("hello_enabled", _hello),
    "event.category": ("category", parse_category),
    "event.location": ("location", _location),
    "event.t0_s": ("t0_ms", _ms_from_s),
    "sender.cluster_radius_m": ("sender_radius_m", float),
    "identity.policy": ("params.identity_policy", _policy),
    "identity.cell_m": ("params.cell_m", float),
}

SWEEP_KEYS: dict[str, Callable] = {
    "sweep.protocol": _list(_protocol),
    "sweep.n_nodes": _list(int),
    "sweep.n_senders": _list(int),
    "sweep.pa": _list(float),
    "sweep.seeds": _seeds,
    "sweep.relative": _bool,
}


@dataclass
class SweepSpec:
    base: ScenarioConfig
    protocol: list = field(default_factory=list)
    n_nodes: list = field(default_factory=list)
    n_senders: list = field(default_factory=list)
    pa: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    relative: Optional[bool] = None  # None: whenever baseline is swept

    def __post_init__(self):
        b = self.base
        self.protocol = self.protocol or [b.protocol]
        self.n_nodes = self.n_nodes or [b.n_nodes]
        self.n_senders = self.n_senders or [b.n_senders]
        self.pa = self.pa or [b.params.pa]
        self.seeds = self.seeds or [b.seed]

    @property
    def wants_relative(self) -> bool:
        return "baseline" in self.protocol if self.relative is None else self.relative

    def validate(self) -> None:
        if self.relative and "baseline" not in self.protocol:
            raise ConfigError("relative metrics requested but 'baseline' is not in sweep.protocol")

    def size(self) -> int:
        return (len(self.protocol) * len(self.n_nodes) * len(self.n_senders)
                * len(self.pa) * len(self.seeds))


def parse_pairs(stream: TextIO) -> list[tuple[int, str, str]]:
    pairs = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        pairs.append((lineno, key.strip(), value.strip()))
    return pairs


def _apply(cfg: ScenarioConfig, target: str, value) -> ScenarioConfig:
    head, _, attr = target.partition(".")
    if not attr:
        return dataclasses.replace(cfg, **{head: value})
    sub = dataclasses.replace(getattr(cfg, head), **{attr: value})
    return dataclasses.replace(cfg, **{head: sub})


def load_config(stream: TextIO, base_dir: Optional[str] = None) -> tuple[ScenarioConfig, SweepSpec]:
    """Parse a config stream into a base scenario and the sweep axes it declares."""
    cfg = ScenarioConfig()
    sweep: dict = {}
    for lineno, key, value in parse_pairs(stream):
        try:
            if key in SCENARIO_KEYS:
                target, conv = SCENARIO_KEYS[key]
                v = conv(value)
                if key == "mobility.trace" and base_dir and not os.path.isabs(v):
                    v = os.path.join(base_dir, v)
                cfg = _apply(cfg, target, v)
            elif key in SWEEP_KEYS:
                sweep[key.split(".", 1)[1]] = SWEEP_KEYS[key](value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    spec = SweepSpec(cfg, **sweep)
    return cfg, spec


def load_config_file(path: str) -> tuple[ScenarioConfig, SweepSpec]:
    with open(path) as fh:
        return load_config(fh, base_dir=os.path.dirname(os.path.abspath(path)))
