"""UbiI topology and end-to-end service delay.

A task leaves a mobile device, crosses the access link to its base station,
the backhaul to a cloud, and the result comes back along the same path.
Compute stages and wired links are rate-latency servers; the access link may
be a fading channel, analysed either as an equivalent rate-latency server
(deterministic mode, constant SNR only) or stochastically (hybrid mode).
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from .curves import RateLatency, TokenBucket, TSpec
from .detnc import Envelope, Stage, Tandem, envelope_delay
from .errors import ConfigError, InstabilityError, QuantileCapError, TopologyError
from .snrnc import ConstantSnr, FadingChannel, RayleighSnr, SnrArrival, ThetaSearch, delay_quantile

Link = Union[RateLatency, FadingChannel]


class Mode(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class UbiITopology:
    """Devices, base stations and clouds with their servers.

    ``links`` is keyed by the child node: a device id maps to its access link,
    a BS id to its backhaul link.
    """

    devices: tuple[str, ...]
    bss: tuple[str, ...]
    clouds: tuple[str, ...]
    device_to_bs: Mapping[str, str]
    bs_to_cloud: Mapping[str, str]
    compute: Mapping[str, RateLatency] = field(default_factory=dict)
    links: Mapping[str, Link] = field(default_factory=dict)
    ubii_level: int = 1

    def __post_init__(self) -> None:
        for name in ("devices", "bss", "clouds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("device_to_bs", "bs_to_cloud", "compute", "links"):
            object.__setattr__(self, name, dict(getattr(self, name)))

    @classmethod
    def chain(
        cls,
        device: RateLatency,
        bs: RateLatency,
        cloud: RateLatency,
        access: Link,
        backhaul: RateLatency,
        ubii_level: int = 1,
    ) -> "UbiITopology":
        """One device, one BS, one cloud (ids d1, b1, c1)."""
        return cls(
            ("d1",),
            ("b1",),
            ("c1",),
            {"d1": "b1"},
            {"b1": "c1"},
            {"d1": device, "b1": bs, "c1": cloud},
            {"d1": access, "b1": backhaul},
            ubii_level,
        )


def validate_topology(t: UbiITopology) -> list[str]:
    """Every constraint violation, naming the node ids involved. Empty means valid."""
    out: list[str] = []
    seen: dict[str, str] = {}
    for kind, ids in (("device", t.devices), ("bs", t.bss), ("cloud", t.clouds)):
        for i in ids:
            if i in seen:
                out.append(f"{i} declared as both {seen[i]} and {kind}" if seen[i] != kind else f"{i} declared twice")
            seen.setdefault(i, kind)
    bss, clouds = set(t.bss), set(t.clouds)
    for d in t.devices:
        if d not in t.device_to_bs:
            out.append(f"{d} unassigned: device has no BS")
        elif t.device_to_bs[d] not in bss:
            out.append(f"{d} assigned to unknown BS {t.device_to_bs[d]}")
    for b in t.bss:
        if b not in t.bs_to_cloud:
            out.append(f"{b} unassigned: BS has no cloud")
        elif t.bs_to_cloud[b] not in clouds:
            out.append(f"{b} assigned to unknown cloud {t.bs_to_cloud[b]}")
    for d in t.device_to_bs:
        if d not in set(t.devices):
            out.append(f"mapping for unknown device {d}")
    for b in t.bs_to_cloud:
        if b not in bss:
            out.append(f"mapping for unknown BS {b}")
    for n in (*t.devices, *t.bss, *t.clouds):
        if n not in t.compute:
            out.append(f"{n} has no compute server")
        elif not isinstance(t.compute[n], RateLatency):
            out.append(f"{n} compute server must be rate-latency")
    for n in t.compute:
        if n not in seen:
            out.append(f"compute server for unknown node {n}")
    for d in t.devices:
        if d not in t.links:
            out.append(f"{d} has no access link")
        elif not isinstance(t.links[d], (RateLatency, FadingChannel)):
            out.append(f"{d} access link has unsupported type")
    for b in t.bss:
        if b not in t.links:
            out.append(f"{b} has no backhaul link")
        elif isinstance(t.links[b], FadingChannel):
            out.append(f"{b} backhaul link must be wired (rate-latency), wireless links only join device and BS")
        elif not isinstance(t.links[b], RateLatency):
            out.append(f"{b} backhaul link has unsupported type")
    for n in t.links:
        if n not in set(t.devices) | bss:
            out.append(f"link for unknown or cloud node {n}")
    if not 1 <= t.ubii_level <= 4:
        out.append(f"ubii_level must be 1-4, got {t.ubii_level}")
    return out


@dataclass(frozen=True)
class FlowSpec:
    source: str
    uplink: Envelope
    downlink: Envelope
    rounds: int = 1
    epsilon: Optional[float] = None
    wireless_sigma: float = 0.0

    def __post_init__(self) -> None:
        for name in ("uplink", "downlink"):
            if not isinstance(getattr(self, name), (TokenBucket, TSpec)):
                raise ConfigError(f"{name} envelope must be a token bucket or T-SPEC")
        if not (isinstance(self.rounds, int) and self.rounds >= 1):
            raise ConfigError(f"rounds must be an integer >= 1, got {self.rounds!r}")
        if self.epsilon is not None and not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.wireless_sigma >= 0:
            raise ConfigError("wireless_sigma must be >= 0")


@dataclass(frozen=True)
class FlowPath:
    uplink: Tandem
    downlink: Tandem
    wireless: Optional[FadingChannel]


@dataclass(frozen=True)
class DelayReport:
    mode: Mode
    uplink_s: float
    compute_s: float
    downlink_s: float
    wireless_quantile_s: float
    per_round_s: float
    rounds: int
    total_s: float
    epsilon: Optional[float] = None

    def as_row(self) -> dict[str, object]:
        return {
            "mode": self.mode.value,
            "uplink_s": self.uplink_s,
            "compute_s": self.compute_s,
            "downlink_s": self.downlink_s,
            "wireless_quantile_s": self.wireless_quantile_s,
            "per_round_s": self.per_round_s,
            "rounds": self.rounds,
            "total_s": self.total_s,
            "epsilon": "" if self.epsilon is None else self.epsilon,
        }


def access_as_rate_latency(ch: FadingChannel) -> RateLatency:
    """Constant-SNR channel as a server: ``c`` bits per slot, released at slot ends."""
    if not isinstance(ch.snr, ConstantSnr):
        raise ConfigError("a Rayleigh access link needs hybrid mode; deterministic mode accepts constant SNR only")
    return RateLatency(ch.mean_capacity() / ch.slot_duration, ch.slot_duration)


def _require_valid(t: UbiITopology) -> None:
    problems = validate_topology(t)
    if problems:
        raise TopologyError(problems)


def flow_path(t: UbiITopology, f: FlowSpec, mode: Mode = Mode.DETERMINISTIC) -> FlowPath:
    """Uplink ``[device, access, BS, backhaul, cloud]``; downlink is its reverse.

    In hybrid mode the access stage is left out of both tandems and returned
    as the wireless hop instead.
    """
    mode = Mode(mode)
    _require_valid(t)
    if f.source not in t.devices:
        raise TopologyError(f"unknown source device {f.source}")
    d = f.source
    b = t.device_to_bs[d]
    c = t.bs_to_cloud[b]
    access = t.links[d]
    wireless: Optional[FadingChannel] = None
    stages = [Stage(t.compute[d], "device", d)]
    if mode is Mode.HYBRID:
        if not isinstance(access, FadingChannel):
            raise ConfigError(f"hybrid mode needs a fading access link at {d}")
        wireless = access
    else:
        server = access_as_rate_latency(access) if isinstance(access, FadingChannel) else access
        stages.append(Stage(server, "access", f"{d}-{b}"))
    stages += [
        Stage(t.compute[b], "bs", b),
        Stage(t.links[b], "backhaul", f"{b}-{c}"),
        Stage(t.compute[c], "cloud", c),
    ]
    up = Tandem(tuple(stages))
    return FlowPath(up, up.reversed(), wireless)


def _wireless_quantile_s(env: Envelope, ch: FadingChannel, f: FlowSpec, eps: float, search: ThetaSearch) -> float:
    a = SnrArrival(rho=env.rate * ch.slot_duration, sigma=f.wireless_sigma)
    return delay_quantile(a, ch, eps, search) * ch.slot_duration


def service_delay(
    t: UbiITopology,
    f: FlowSpec,
    mode: Mode = Mode.DETERMINISTIC,
    search: ThetaSearch = ThetaSearch(),
) -> DelayReport:
    """Per-direction bounds and the rounds-scaled total.

    Hybrid totals hold with probability at least ``1 - epsilon``: each of the
    ``2 * rounds`` wireless crossings is given ``epsilon / (2 * rounds)``.
    """
    mode = Mode(mode)
    if mode is Mode.HYBRID and f.epsilon is None:
        raise ConfigError("hybrid mode requires flow.epsilon")
    path = flow_path(t, f, mode)
    up = envelope_delay(f.uplink, path.uplink)
    down = envelope_delay(f.downlink, path.downlink)
    compute_only = Tandem(tuple(n for n in path.uplink.nodes if n.role in ("device", "bs", "cloud")))
    compute = envelope_delay(f.uplink, compute_only)
    wq = 0.0
    if mode is Mode.HYBRID:
        assert path.wireless is not None and f.epsilon is not None
        eps = f.epsilon / (2 * f.rounds)
        wq = max(
            _wireless_quantile_s(f.uplink, path.wireless, f, eps, search),
            _wireless_quantile_s(f.downlink, path.wireless, f, eps, search),
        )
    per_round = up + down + 2 * wq
    return DelayReport(
        mode=mode,
        uplink_s=up,
        compute_s=compute,
        downlink_s=down,
        wireless_quantile_s=wq,
        per_round_s=per_round,
        rounds=f.rounds,
        total_s=f.rounds * per_round,
        epsilon=f.epsilon if mode is Mode.HYBRID else None,
    )


# -- sweeps ------------------------------------------------------------------------

_ENVELOPE_FIELDS = {"rate", "burst", "peak", "max_packet"}
_FLOW_FIELDS = {"rounds", "epsilon", "wireless_sigma"}


def _set_link(link: Link, attr: str, value: float) -> Link:
    if isinstance(link, RateLatency):
        if attr not in ("rate", "latency"):
            raise ConfigError(f"rate-latency link has no field {attr!r}")
        return dataclasses.replace(link, **{attr: value})
    if attr in ("symbols_per_slot", "slot_duration"):
        return dataclasses.replace(link, **{attr: value})
    if attr == "mean_snr" and isinstance(link.snr, RayleighSnr):
        return dataclasses.replace(link, snr=RayleighSnr(value))
    if attr == "snr" and isinstance(link.snr, ConstantSnr):
        return dataclasses.replace(link, snr=ConstantSnr(value))
    raise ConfigError(f"fading link has no field {attr!r}")


def _set_envelope(env: Envelope, attr: str, value: float) -> Envelope:
    if attr not in _ENVELOPE_FIELDS or not hasattr(env, attr):
        raise ConfigError(f"{type(env).__name__} has no field {attr!r}")
    return dataclasses.replace(env, **{attr: value})


def apply_param(t: UbiITopology, f: FlowSpec, path: str, value: float) -> tuple[UbiITopology, FlowSpec]:
    """Return copies with one numeric field replaced.

    Paths: ``compute.<node>.rate|latency``, ``link.<node>.<field>``,
    ``flow.uplink|downlink.<field>`` and ``flow.rounds|epsilon|wireless_sigma``.
    """
    parts = path.split(".")
    if len(parts) == 3 and parts[0] == "compute":
        _, node, attr = parts
        if node not in t.compute or attr not in ("rate", "latency"):
            raise ConfigError(f"unknown parameter path {path!r}")
        compute = dict(t.compute)
        compute[node] = dataclasses.replace(compute[node], **{attr: value})
        return dataclasses.replace(t, compute=compute), f
    if len(parts) == 3 and parts[0] == "link":
        _, node, attr = parts
        if node not in t.links:
            raise ConfigError(f"unknown parameter path {path!r}")
        links = dict(t.links)
        links[node] = _set_link(links[node], attr, value)
        return dataclasses.replace(t, links=links), f
    if len(parts) == 3 and parts[0] == "flow" and parts[1] in ("uplink", "downlink"):
        env = _set_envelope(getattr(f, parts[1]), parts[2], value)
        return t, dataclasses.replace(f, **{parts[1]: env})
    if len(parts) == 2 and parts[0] == "flow" and parts[1] in _FLOW_FIELDS:
        if parts[1] == "rounds":
            if value != int(value):
                raise ConfigError("rounds must be an integer")
            value = int(value)
        return t, dataclasses.replace(f, **{parts[1]: value})
    raise ConfigError(f"unknown parameter path {path!r}")


@dataclass(frozen=True)
class SweepRow:
    param: str
    value: float
    report: Optional[DelayReport]
    reason: str = ""

    @property
    def stable(self) -> bool:
        return self.report is not None


def sweep(
    t: UbiITopology,
    f: FlowSpec,
    param: str,
    values: Sequence[float],
    mode: Mode = Mode.DETERMINISTIC,
    search: ThetaSearch = ThetaSearch(),
) -> list[SweepRow]:
    """One independent analysis per value, in input order.

    Unstable rows carry ``report=None`` and the reason instead of aborting;
    an unknown path or an invalid value raises.
    """
    rows = []
    for v in values:
        try:
            t2, f2 = apply_param(t, f, param, v)
            rows.append(SweepRow(param, v, service_delay(t2, f2, mode, search)))
        except (InstabilityError, QuantileCapError) as exc:
            rows.append(SweepRow(param, v, None, str(exc)))
    return rows


def total_column(rows: Sequence[SweepRow]) -> list[float]:
    return [r.report.total_s if r.report else math.nan for r in rows]
