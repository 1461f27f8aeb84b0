"""TOML scenario files.

Layout::

    mode = "deterministic"            # or "hybrid"

    [topology]
    devices = ["d1"]
    bss = ["b1"]
    clouds = ["c1"]
    device_to_bs = { d1 = "b1" }
    bs_to_cloud = { b1 = "c1" }

    [topology.compute.d1]
    rate = 2.0
    latency = 1.0

    [topology.links.d1]               # keyed by the child node
    type = "rayleigh"                 # rate_latency | constant | rayleigh
    symbols_per_slot = 1.0
    mean_snr = 10.0
    slot_duration = 0.01

    [flow]
    source = "d1"
    rounds = 1
    epsilon = 1e-3

    [flow.uplink]
    rate = 1.0
    burst = 4.0                       # add peak and max_packet for a T-SPEC

    [sweep]
    param = "compute.c1.rate"
    values = [1, 2, 3]

    [sim]
    slots = 10000
    seed = 1

Every problem found is reported, each prefixed with the line it refers to.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .curves import RateLatency, TokenBucket, TSpec
from .errors import ConfigError, CurveError
from .scenario import FlowSpec, Mode, UbiITopology, apply_param, validate_topology
from .sim import POLICIES
from .snrnc import ConstantSnr, FadingChannel, RayleighSnr


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class SimSpec:
    slots: int = 10**5
    seeds: tuple[int, ...] = (0,)
    slot_duration: Optional[float] = None
    policy: str = "greedy"


@dataclass(frozen=True)
class ScenarioConfig:
    mode: Mode
    topology: UbiITopology
    flow: FlowSpec
    sweep: Optional[SweepSpec] = None
    sim: Optional[SimSpec] = None


class _Lines:
    """Maps dotted key paths to the line that defines them."""

    _header = re.compile(r"^\s*\[\s*([^\[\]]+?)\s*\]\s*(#.*)?$")
    _key = re.compile(r'^\s*("?)([A-Za-z0-9_\-]+)\1\s*=')

    def __init__(self, text: str):
        self.where: dict[str, int] = {}
        prefix = ""
        for no, line in enumerate(text.splitlines(), start=1):
            m = self._header.match(line)
            if m:
                prefix = ".".join(p.strip().strip('"') for p in m.group(1).split("."))
                self.where.setdefault(prefix, no)
                continue
            m = self._key.match(line)
            if m:
                self.where.setdefault(f"{prefix}.{m.group(2)}" if prefix else m.group(2), no)

    def line(self, path: str) -> Optional[int]:
        parts = path.split(".")
        while parts:
            no = self.where.get(".".join(parts))
            if no is not None:
                return no
            parts.pop()
        return None

    def msg(self, path: str, text: str) -> str:
        no = self.line(path)
        return f"line {no}: {path}: {text}" if no else f"{path}: {text}"


class _Reader:
    def __init__(self, text: str):
        self.lines = _Lines(text)
        self.errors: list[str] = []

    def err(self, path: str, text: str) -> None:
        self.errors.append(self.lines.msg(path, text))

    def table(self, data: dict, key: str, path: str, required: bool = True) -> Optional[dict]:
        v = data.get(key)
        if v is None:
            if required:
                self.err(path, "missing section")
            return None
        if not isinstance(v, dict):
            self.err(path, "must be a table")
            return None
        return v

    def unknown(self, data: dict, allowed: set[str], path: str) -> None:
        for k in data:
            if k not in allowed:
                self.err(f"{path}.{k}" if path else k, "unknown key")

    def number(
        self, data: dict, key: str, path: str, default: Any = ..., minimum: float = 0.0, strict: bool = False
    ) -> Optional[float]:
        full = f"{path}.{key}"
        if key not in data:
            if default is ...:
                self.err(full, "missing required number")
                return None
            return default
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.err(full, f"must be a finite number, got {v!r}")
            return None
        if v < minimum or (strict and v == minimum):
            self.err(full, f"must be {'>' if strict else '>='} {minimum}, got {v!r}")
            return None
        return float(v)

    def string(self, data: dict, key: str, path: str, default: Any = ...) -> Optional[str]:
        full = f"{path}.{key}" if path else key
        if key not in data:
            if default is ...:
                self.err(full, "missing required string")
                return None
            return default
        v = data[key]
        if not isinstance(v, str):
            self.err(full, f"must be a string, got {v!r}")
            return None
        return v

    def ids(self, data: dict, key: str, path: str) -> tuple[str, ...]:
        v = data.get(key, [])
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            self.err(f"{path}.{key}", "must be a list of strings")
            return ()
        return tuple(v)

    def mapping(self, data: dict, key: str, path: str) -> dict[str, str]:
        v = data.get(key, {})
        if not isinstance(v, dict) or not all(isinstance(x, str) for x in v.values()):
            self.err(f"{path}.{key}", "must be a table of id = id")
            return {}
        return dict(v)


def _rate_latency(r: _Reader, d: dict, path: str) -> Optional[RateLatency]:
    rate = r.number(d, "rate", path, strict=True)
    lat = r.number(d, "latency", path, default=0.0)
    if rate is None or lat is None:
        return None
    return RateLatency(rate, lat)


def _link(r: _Reader, d: dict, path: str):
    kind = r.string(d, "type", path, default="rate_latency")
    if kind == "rate_latency":
        r.unknown(d, {"type", "rate", "latency"}, path)
        return _rate_latency(r, d, path)
    if kind in ("constant", "rayleigh"):
        snr_key = "snr" if kind == "constant" else "mean_snr"
        r.unknown(d, {"type", "symbols_per_slot", "slot_duration", snr_key}, path)
        w = r.number(d, "symbols_per_slot", path, default=1.0, strict=True)
        tau = r.number(d, "slot_duration", path, default=1.0, strict=True)
        g = r.number(d, snr_key, path, strict=True)
        if None in (w, tau, g):
            return None
        model = ConstantSnr(g) if kind == "constant" else RayleighSnr(g)
        return FadingChannel(w, model, tau)
    if kind is not None:
        r.err(f"{path}.type", f"expected rate_latency, constant or rayleigh, got {kind!r}")
    return None


def _envelope(r: _Reader, d: dict, path: str) -> Optional[Union[TokenBucket, TSpec]]:
    kind = r.string(d, "type", path, default="tspec" if "peak" in d else "token_bucket")
    if kind == "token_bucket":
        r.unknown(d, {"type", "rate", "burst"}, path)
        rate, burst = r.number(d, "rate", path), r.number(d, "burst", path)
        return None if None in (rate, burst) else TokenBucket(rate, burst)
    if kind == "tspec":
        r.unknown(d, {"type", "rate", "burst", "peak", "max_packet"}, path)
        vals = [r.number(d, k, path) for k in ("peak", "max_packet", "rate", "burst")]
        if None in vals:
            return None
        try:
            return TSpec(*vals)
        except CurveError as exc:
            r.err(path, str(exc))
            return None
    r.err(f"{path}.type", f"expected token_bucket or tspec, got {kind!r}")
    return None


def _topology(r: _Reader, d: dict) -> Optional[UbiITopology]:
    p = "topology"
    r.unknown(d, {"devices", "bss", "clouds", "device_to_bs", "bs_to_cloud", "compute", "links", "ubii_level"}, p)
    compute, links = {}, {}
    broken: set[str] = set()
    for node, spec in (r.table(d, "compute", f"{p}.compute") or {}).items():
        rl = None
        if not isinstance(spec, dict):
            r.err(f"{p}.compute.{node}", "must be a table")
        else:
            r.unknown(spec, {"rate", "latency"}, f"{p}.compute.{node}")
            rl = _rate_latency(r, spec, f"{p}.compute.{node}")
        if rl is None:
            broken.add(node)
        else:
            compute[node] = rl
    for node, spec in (r.table(d, "links", f"{p}.links") or {}).items():
        link = None
        if not isinstance(spec, dict):
            r.err(f"{p}.links.{node}", "must be a table")
        else:
            link = _link(r, spec, f"{p}.links.{node}")
        if link is None:
            broken.add(node)
        else:
            links[node] = link
    level = d.get("ubii_level", 1)
    if isinstance(level, bool) or not isinstance(level, int):
        r.err(f"{p}.ubii_level", f"must be an integer, got {level!r}")
        level = 1
    t = UbiITopology(
        r.ids(d, "devices", p),
        r.ids(d, "bss", p),
        r.ids(d, "clouds", p),
        r.mapping(d, "device_to_bs", p),
        r.mapping(d, "bs_to_cloud", p),
        compute,
        links,
        level,
    )
    for v in validate_topology(t):
        # a missing server for a node whose entry failed to parse is already reported
        if v.split()[0] in broken and (" compute " in v or " link" in v):
            continue
        r.err(_topology_path(v, r), v)
    return t


def _topology_path(violation: str, r: _Reader) -> str:
    node = violation.split()[0]
    for sec in ("device_to_bs", "bs_to_cloud", "compute", "links"):
        path = f"topology.{sec}.{node}"
        if path in r.lines.where:
            return path
    return "topology"


def _flow(r: _Reader, d: dict) -> Optional[FlowSpec]:
    p = "flow"
    r.unknown(d, {"source", "uplink", "downlink", "rounds", "epsilon", "wireless_sigma"}, p)
    src = r.string(d, "source", p)
    up = r.table(d, "uplink", f"{p}.uplink")
    down = r.table(d, "downlink", f"{p}.downlink")
    up_env = _envelope(r, up, f"{p}.uplink") if up is not None else None
    down_env = _envelope(r, down, f"{p}.downlink") if down is not None else None
    rounds = d.get("rounds", 1)
    if isinstance(rounds, bool) or not isinstance(rounds, int) or rounds < 1:
        r.err(f"{p}.rounds", f"must be an integer >= 1, got {rounds!r}")
        rounds = None
    eps = r.number(d, "epsilon", p, default=None, strict=True)
    if eps is not None and eps >= 1:
        r.err(f"{p}.epsilon", f"must be < 1, got {eps!r}")
        eps = None
    sigma = r.number(d, "wireless_sigma", p, default=0.0)
    if None in (src, up_env, down_env, rounds, sigma):
        return None
    return FlowSpec(src, up_env, down_env, rounds, eps, sigma)


def _sweep(r: _Reader, d: dict) -> Optional[SweepSpec]:
    r.unknown(d, {"param", "values"}, "sweep")
    param = r.string(d, "param", "sweep")
    vals = d.get("values")
    if not isinstance(vals, list) or not vals or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals
    ):
        r.err("sweep.values", "must be a non-empty list of numbers")
        return None
    return None if param is None else SweepSpec(param, tuple(float(v) for v in vals))


def _sim(r: _Reader, d: dict) -> Optional[SimSpec]:
    p = "sim"
    r.unknown(d, {"slots", "seed", "seeds", "slot_duration", "policy"}, p)
    slots = d.get("slots", 10**5)
    if isinstance(slots, bool) or not isinstance(slots, int) or slots < 1:
        r.err(f"{p}.slots", f"must be an integer >= 1, got {slots!r}")
        return None
    if "seed" in d and "seeds" in d:
        r.err(f"{p}.seeds", "give seed or seeds, not both")
        return None
    raw = d.get("seeds", [d["seed"]] if "seed" in d else None)
    if raw is None:
        r.err(f"{p}.seed", "a seed is required for reproducible simulation")
        return None
    if not isinstance(raw, list) or not raw or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in raw):
        r.err(f"{p}.seeds", "seeds must be non-negative integers")
        return None
    tau = r.number(d, "slot_duration", p, default=None, strict=True)
    policy = r.string(d, "policy", p, default="greedy")
    if policy not in POLICIES:
        r.err(f"{p}.policy", f"expected one of {POLICIES}, got {policy!r}")
        return None
    return SimSpec(slots, tuple(raw), tau, policy)


def parse_config(text: str) -> ScenarioConfig:
    """Parse and fully validate a scenario. Raises :class:`ConfigError` listing every problem."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from exc
    r = _Reader(text)
    r.unknown(data, {"mode", "topology", "flow", "sweep", "sim"}, "")
    mode_s = r.string(data, "mode", "", default="deterministic")
    mode = None
    if mode_s is not None:
        try:
            mode = Mode(mode_s)
        except ValueError:
            r.err("mode", f"expected deterministic or hybrid, got {mode_s!r}")
    top = r.table(data, "topology", "topology")
    flow_d = r.table(data, "flow", "flow")
    try:
        topology = _topology(r, top) if top is not None else None
        flow = _flow(r, flow_d) if flow_d is not None else None
    except CurveError as exc:
        r.errors.append(str(exc))
        topology = flow = None
    sweep_d = r.table(data, "sweep", "sweep", required=False)
    sim_d = r.table(data, "sim", "sim", required=False)
    sweep = _sweep(r, sweep_d) if sweep_d is not None else None
    sim = _sim(r, sim_d) if sim_d is not None else None
    if topology is not None and flow is not None and not r.errors:
        if flow.source not in topology.devices:
            r.err("flow.source", f"unknown device {flow.source}")
        if mode is Mode.HYBRID:
            if flow.epsilon is None:
                r.err("flow.epsilon", "hybrid mode requires epsilon")
            if not isinstance(topology.links.get(flow.source), FadingChannel):
                r.err(f"topology.links.{flow.source}", "hybrid mode needs a constant or rayleigh access link")
        elif isinstance(topology.links.get(flow.source), FadingChannel) and isinstance(
            topology.links[flow.source].snr, RayleighSnr
        ):
            r.err(f"topology.links.{flow.source}", "a rayleigh access link needs mode = \"hybrid\"")
        if sweep is not None:
            try:
                apply_param(topology, flow, sweep.param, sweep.values[0])
            except ConfigError as exc:
                r.err("sweep.param", "; ".join(exc.errors))
            except CurveError as exc:
                r.err("sweep.values", str(exc))
    if r.errors:
        raise ConfigError(r.errors)
    assert mode is not None and topology is not None and flow is not None
    return ScenarioConfig(mode, topology, flow, sweep, sim)


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_config(text)
