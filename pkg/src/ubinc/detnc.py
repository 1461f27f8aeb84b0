"""Deterministic analysis of a tandem of rate-latency servers.

The end-to-end service curve of servers in series is their min-plus
convolution, which for rate-latency servers collapses to the smallest rate
and the summed latencies. The two traffic cases handled here are a leaky
bucket (:func:`case1_delay`) and a VBR / T-SPEC envelope (:func:`case2_delay`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

from .curves import (
    Curve,
    CurveLike,
    RateLatency,
    TokenBucket,
    TSpec,
    as_curve,
    h_dev,
    min_plus_deconv,
    v_dev,
)
from .errors import CurveError, InstabilityError

ROLES = ("device", "bs", "cloud", "compute", "backhaul", "access")

Envelope = Union[TokenBucket, TSpec]


@dataclass(frozen=True)
class Stage:
    server: RateLatency
    role: str = "compute"
    name: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.server, RateLatency):
            raise CurveError(f"tandem stages must be RateLatency servers, got {self.server!r}")
        if self.role not in ROLES:
            raise CurveError(f"unknown stage role {self.role!r}; expected one of {ROLES}")

    @property
    def label(self) -> str:
        return f"{self.role}:{self.name}" if self.name else self.role


@dataclass(frozen=True)
class Tandem:
    """Servers crossed in order by one flow."""

    nodes: tuple[Stage, ...]

    def __post_init__(self) -> None:
        nodes = tuple(n if isinstance(n, Stage) else Stage(n) for n in self.nodes)
        if not nodes:
            raise CurveError("a tandem needs at least one node")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def of(cls, *servers: RateLatency, role: str = "compute") -> "Tandem":
        return cls(tuple(Stage(s, role) for s in servers))

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    @property
    def min_rate(self) -> float:
        return min(n.server.rate for n in self.nodes)

    @property
    def total_latency(self) -> float:
        return math.fsum(n.server.latency for n in self.nodes)

    def reversed(self) -> "Tandem":
        return Tandem(tuple(reversed(self.nodes)))

    def bottleneck(self, rate: float) -> Stage:
        """First stage slower than ``rate`` (or the slowest stage)."""
        for n in self.nodes:
            if n.server.rate < rate:
                return n
        return min(self.nodes, key=lambda n: n.server.rate)


@dataclass(frozen=True)
class NodeAnalysis:
    index: int
    stage: Stage
    input_envelope: Curve
    delay_bound: float
    backlog_bound: float
    output_envelope: Curve


def e2e_service_curve(tandem: Tandem) -> RateLatency:
    return RateLatency(tandem.min_rate, tandem.total_latency)


def _check_rate(rate: float, tandem: Tandem) -> None:
    if rate > tandem.min_rate:
        stage = tandem.bottleneck(rate)
        raise InstabilityError(
            f"arrival rate {rate} exceeds service rate {stage.server.rate} at {stage.label}",
            stage=stage.label,
        )


def case1_delay(tb: TokenBucket, tandem: Tandem) -> float:
    """Delay bound of leaky-bucket traffic: total latency + burst / bottleneck rate."""
    _check_rate(tb.rate, tandem)
    return h_dev(tb, e2e_service_curve(tandem))


def case2_delay(ts: TSpec, tandem: Tandem) -> float:
    """Delay bound of T-SPEC traffic through the tandem.

    With ``R`` the bottleneck rate and ``T`` the summed latency this is
    ``T + (M + (b - M)(p - R)/(p - r)) / R`` while the peak exceeds ``R`` and
    ``T + M/R`` otherwise. ``p == r`` collapses to a token bucket of burst M.
    """
    _check_rate(ts.rate, tandem)
    return h_dev(ts, e2e_service_curve(tandem))


def envelope_delay(env: Envelope, tandem: Tandem) -> float:
    if isinstance(env, TokenBucket):
        return case1_delay(env, tandem)
    if isinstance(env, TSpec):
        return case2_delay(env, tandem)
    raise TypeError(f"unsupported envelope {env!r}")


def _zero_origin(c: Curve) -> Curve:
    # an arrival curve may always be taken as 0 at t=0
    return Curve(0.0, c.segments)


def per_node_analysis(alpha: CurveLike, tandem: Tandem) -> list[NodeAnalysis]:
    """Hop-by-hop delay and backlog bounds using propagated output envelopes.

    Node k sees ``alpha ⊘ (beta_1 ⊗ ... ⊗ beta_{k-1})``. Summing the per-node
    delays gives a bound no better than the end-to-end one.
    """
    arrival = alpha
    prefix: RateLatency | None = None
    out = []
    for k, stage in enumerate(tandem.nodes):
        try:
            if prefix is None:
                envelope = as_curve(arrival)
            else:
                envelope = _zero_origin(min_plus_deconv(arrival, prefix))
            beta = stage.server
            delay = h_dev(envelope, beta.curve())
            backlog = v_dev(envelope, beta.curve())
            output = _zero_origin(min_plus_deconv(envelope, beta.curve()))
        except InstabilityError as exc:
            raise InstabilityError(f"hop {k} ({stage.label}): {exc}", stage=stage.label) from exc
        out.append(NodeAnalysis(k, stage, envelope, delay, backlog, output))
        prefix = beta if prefix is None else RateLatency(min(prefix.rate, beta.rate), prefix.latency + beta.latency)
    return out


def sum_of_node_delays(nodes: Iterable[NodeAnalysis]) -> float:
    return math.fsum(n.delay_bound for n in nodes)
