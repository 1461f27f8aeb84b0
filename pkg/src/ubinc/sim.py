"""Fluid slot simulator used to check the analytic bounds empirically.

Cumulative processes are piecewise-linear functions stored as ``(times,
values)`` arrays. A source trace is sampled at slot boundaries and linearly
interpolated inside each slot. Rate-latency servers are simulated exactly in
continuous time (constant rate ``R`` plus a pipeline delay ``T``); fading
servers work on their own slot grid with a Lindley recursion.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .curves import RateLatency, TokenBucket, TSpec
from .errors import CurveError
from .snrnc import FadingChannel

Envelope = Union[TokenBucket, TSpec]
POLICIES = ("greedy", "on-off")


@dataclass(frozen=True, eq=False)
class SourceTrace:
    """Cumulative arrivals ``A(k * slot_duration)`` for ``k = 0 .. slots``."""

    cumulative: np.ndarray
    slot_duration: float
    policy: str
    seed: Optional[int]
    envelope: Envelope

    @property
    def slots(self) -> int:
        return len(self.cumulative) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.cumulative)) * self.slot_duration


def _affine_pieces(env: Envelope) -> list[tuple[float, float]]:
    """(burst, rate) pairs whose minimum is the envelope for t > 0."""
    if isinstance(env, TokenBucket):
        return [(env.burst, env.rate)]
    return [(env.max_packet, env.peak), (env.burst, env.rate)]


def generate_source(
    envelope: Envelope,
    policy: str = "greedy",
    slots: int = 10**5,
    seed: Optional[int] = None,
    slot_duration: float = 1.0,
    on_probability: float = 0.3,
) -> SourceTrace:
    """Greedy traces sample the envelope itself; on-off traces are random
    bursts passed through one token bucket per affine piece of the envelope."""
    if slots < 1:
        raise CurveError("slots must be >= 1")
    if policy not in POLICIES:
        raise CurveError(f"unknown source policy {policy!r}; expected one of {POLICIES}")
    tau = slot_duration
    if policy == "greedy":
        ks = np.arange(slots + 1) * tau
        a = np.array([0.0] + [envelope.eval(t) for t in ks[1:]])
        return SourceTrace(a, tau, policy, seed, envelope)

    rng = np.random.default_rng(seed)
    pieces = _affine_pieces(envelope)
    tokens = [b for b, _ in pieces]
    peak = envelope.eval(tau)
    on = rng.random(slots) < on_probability
    want = np.where(on, rng.uniform(0.0, 2.0 * peak, slots), 0.0)
    x = np.empty(slots)
    for k in range(slots):
        avail = [tok + r * tau for tok, (_, r) in zip(tokens, pieces)]
        xk = min(want[k], *avail)
        x[k] = xk
        tokens = [min(b, av - xk) for av, (b, _) in zip(avail, pieces)]
    a = np.concatenate(([0.0], np.cumsum(x)))
    return SourceTrace(a, tau, policy, seed, envelope)


def envelope_violation(trace: SourceTrace, envelope: Optional[Envelope] = None) -> float:
    """``max over s < t of A(t) - A(s) - alpha(t - s)`` at slot boundaries.

    For a concave envelope the per-piece maximum is a running-minimum scan.
    Linear interpolation inside slots cannot do worse than the boundaries.
    """
    env = envelope or trace.envelope
    a = trace.cumulative
    k = np.arange(len(a)) * trace.slot_duration
    worst = -math.inf
    for b, r in _affine_pieces(env):
        g = a - r * k
        prev_min = np.minimum.accumulate(g)[:-1]
        worst = max(worst, float(np.max(g[1:] - prev_min)) - b)
    return worst


# -- servers -----------------------------------------------------------------------


@dataclass(frozen=True)
class RateLatencyServer:
    rate: float
    latency: float = 0.0

    def __post_init__(self) -> None:
        RateLatency(self.rate, self.latency)

    @classmethod
    def of(cls, rl: RateLatency) -> "RateLatencyServer":
        return cls(rl.rate, rl.latency)


@dataclass(frozen=True)
class FadingServer:
    channel: FadingChannel
    seed: int = 0


ServerModel = Union[RateLatencyServer, FadingServer]


def _rate_latency_output(ts: np.ndarray, vs: np.ndarray, s: RateLatencyServer) -> tuple[np.ndarray, np.ndarray]:
    """Departures of a constant-rate-``R`` queue, delayed by ``T``.

    Backlog follows a Lindley recursion on each linear input segment, with a
    breakpoint added where the queue empties. Working with per-segment
    increments keeps the result accurate even for very fast servers.
    """
    R = s.rate
    t_in, a_in = ts.tolist(), vs.tolist()
    out_t, out_a, out_q = [t_in[0]], [a_in[0]], [0.0]
    q = 0.0
    for i in range(1, len(t_in)):
        dt = t_in[i] - t_in[i - 1]
        da = a_in[i] - a_in[i - 1]
        nq = q + da - R * dt
        if nq <= 0.0:
            if q > 0.0 and dt > 0.0:
                tz = q / (R - da / dt)
                if 0.0 < tz < dt:
                    out_t.append(t_in[i - 1] + tz)
                    out_a.append(a_in[i - 1] + da / dt * tz)
                    out_q.append(0.0)
            nq = 0.0
        q = nq
        out_t.append(t_in[i])
        out_a.append(a_in[i])
        out_q.append(q)
    t_out = np.array(out_t)
    d = np.maximum.accumulate(np.array(out_a) - np.array(out_q))
    if s.latency > 0:
        t_out = np.concatenate(([0.0], t_out + s.latency))
        d = np.concatenate(([0.0], d))
    return t_out, d


def _sample(ts: np.ndarray, vs: np.ndarray, grid: np.ndarray) -> np.ndarray:
    return np.interp(grid, ts, vs)


def _fading_output(
    ts: np.ndarray, vs: np.ndarray, s: FadingServer, max_drain_slots: int
) -> tuple[np.ndarray, np.ndarray, str]:
    ch = s.channel
    tau = ch.slot_duration
    rng = np.random.default_rng(s.seed)
    n = int(math.ceil(ts[-1] / tau - 1e-12))
    grid = np.arange(n + 1) * tau
    a = _sample(ts, vs, grid)
    caps = ch.sample_capacity(rng, n).tolist()
    qs = [0.0]
    backlog = 0.0
    for x, c in zip(np.diff(a).tolist(), caps):
        backlog = max(0.0, backlog + x - c)
        qs.append(backlog)
    q = np.array(qs)
    d_tail: list[np.ndarray] = []
    drained = 0
    while backlog > 1e-12 * max(1.0, a[-1]) and drained < max_drain_slots:
        chunk = min(max(256, drained), max_drain_slots - drained)
        c = ch.sample_capacity(rng, chunk)
        left = backlog - np.cumsum(c)
        served = a[-1] - np.maximum(left, 0.0)
        d_tail.append(served)
        drained += chunk
        backlog = max(float(left[-1]), 0.0)
    dep = np.concatenate([a - q, *d_tail])
    dep = np.maximum.accumulate(np.minimum(dep, a[-1]))
    times = np.arange(len(dep)) * tau
    diag = ""
    if backlog > 1e-12 * max(1.0, a[-1]):
        diag = f"fading server did not drain within {max_drain_slots} extra slots (backlog {backlog:.6g} bits): overload"
    return times, dep, diag


def _lower_inverse(ts: np.ndarray, vs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``min{t : D(t) >= x}`` per entry (``inf`` when never reached)."""
    idx = np.searchsorted(vs, x, side="left")
    out = np.full(len(x), math.inf)
    ok = idx < len(vs)
    first = ok & (idx == 0)
    out[first] = ts[0]
    mid = ok & (idx > 0)
    i = idx[mid]
    v0, v1 = vs[i - 1], vs[i]
    out[mid] = ts[i - 1] + (x[mid] - v0) / (v1 - v0) * (ts[i] - ts[i - 1])
    return out


@dataclass(frozen=True, eq=False)
class SimResult:
    delays: np.ndarray
    max_delay: float
    distribution: np.ndarray
    slots: int
    seeds: tuple[Optional[int], ...]
    slot_duration: float
    arrivals: np.ndarray
    departures: np.ndarray
    censored: int = 0
    diagnostic: str = ""

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SimResult):
            return NotImplemented
        return (
            self.slots == other.slots
            and self.seeds == other.seeds
            and self.slot_duration == other.slot_duration
            and self.censored == other.censored
            and self.diagnostic == other.diagnostic
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("delays", "distribution", "arrivals", "departures")
            )
            and (self.max_delay == other.max_delay)
        )

    def violation_frequency(self, w_seconds: float) -> float:
        return float(np.mean(self.delays > w_seconds + 1e-9 * max(1.0, w_seconds)))


def run_tandem_sim(
    src: SourceTrace,
    servers: Sequence[ServerModel],
    slot_duration: Optional[float] = None,
    max_drain_slots: Optional[int] = None,
) -> SimResult:
    """Push the trace through FIFO servers in order and measure virtual delays.

    The delay of the bits arrived by ``k * slot_duration`` is the time until
    the last server has released them all. If a fading server cannot drain
    its backlog, the result is returned with a diagnostic and the undrained
    samples are counted as censored (delay ``inf``).
    """
    if not servers:
        raise CurveError("run_tandem_sim needs at least one server")
    tau = src.slot_duration if slot_duration is None else slot_duration
    if not math.isclose(tau, src.slot_duration):
        raise CurveError(f"slot_duration {tau} differs from the trace's {src.slot_duration}")
    a = src.cumulative
    total = float(a[-1])
    ts, vs = src.times, a
    drain = max_drain_slots if max_drain_slots is not None else max(10 * src.slots, 1000)
    diag = []
    seeds: list[Optional[int]] = [src.seed]
    for s in servers:
        if isinstance(s, RateLatencyServer):
            # flat tail long enough for this stage to empty
            ts = np.append(ts, ts[-1] + vs[-1] / s.rate + tau)
            vs = np.append(vs, vs[-1])
            ts, vs = _rate_latency_output(ts, vs, s)
        elif isinstance(s, FadingServer):
            ts = np.append(ts, ts[-1] + s.channel.slot_duration)
            vs = np.append(vs, vs[-1])
            ts, vs, d = _fading_output(ts, vs, s, drain)
            seeds.append(s.seed)
            if d:
                diag.append(d)
        else:
            raise CurveError(f"unknown server model {s!r}")

    sample_t = src.times[1:]
    target = a[1:]
    tol = 1e-12 * max(1.0, total)
    reach = _lower_inverse(ts, vs, target - tol)
    delays = np.maximum(reach - sample_t, 0.0)
    censored = int(np.sum(~np.isfinite(delays)))
    departures = _sample(ts, vs, src.times)
    return SimResult(
        delays=delays,
        max_delay=float(np.max(delays)),
        distribution=np.sort(delays),
        slots=src.slots,
        seeds=tuple(seeds),
        slot_duration=tau,
        arrivals=a.copy(),
        departures=departures,
        censored=censored,
        diagnostic="; ".join(diag),
    )


# -- verdicts ----------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    kind: str
    passed: bool
    observed: float
    limit: float
    detail: str = ""

    def line(self) -> str:
        return f"{self.kind}: {'PASS' if self.passed else 'FAIL'} observed={self.observed!r} limit={self.limit!r} {self.detail}".rstrip()


def validate_bounds(
    res: SimResult,
    deterministic_bound: Optional[float] = None,
    quantile: Optional[tuple[float, float]] = None,
    allowance: Optional[float] = None,
) -> list[Verdict]:
    """Compare a simulation with analytic bounds.

    The deterministic check allows ``allowance`` (default one slot) for slot
    sampling. The stochastic check takes ``(w_seconds, epsilon)`` and passes
    when the violation frequency is within a 95% binomial margin of epsilon.
    """
    if deterministic_bound is None and quantile is None:
        raise CurveError("validate_bounds needs a deterministic bound or a quantile")
    out = []
    if deterministic_bound is not None:
        slack = res.slot_duration if allowance is None else allowance
        limit = deterministic_bound + slack
        out.append(
            Verdict(
                "deterministic",
                bool(res.max_delay <= limit * (1 + 1e-12)),
                res.max_delay,
                limit,
                f"bound={deterministic_bound!r}",
            )
        )
    if quantile is not None:
        w, eps = quantile
        n = len(res.delays)
        freq = res.violation_frequency(w)
        limit = eps + 1.96 * math.sqrt(eps * (1 - eps) / n)
        out.append(Verdict("stochastic", freq <= limit, freq, limit, f"w={w!r} epsilon={eps!r} n={n}"))
    return out


def write_trace(res: SimResult, path: Union[str, Path]) -> None:
    """CSV with one row per slot boundary ``k >= 1``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["slot", "cum_arrivals_bits", "cum_departures_bits", "delay_s"])
        for k in range(1, res.slots + 1):
            wr.writerow([k, repr(float(res.arrivals[k])), repr(float(res.departures[k])), repr(float(res.delays[k - 1]))])
