"""Piecewise-linear min-plus curves.

A :class:`Curve` is a non-decreasing function on ``[0, inf)`` made of a value
at the origin plus a list of linear segments ``(start_time, start_value,
slope)``; the last segment runs to infinity. Values may be ``+inf`` (needed
for the neutral element of convolution) and finite jumps are only allowed at
``t = 0`` (arrival-curve burst convention). Everything is in bits and seconds.

The three named families used throughout the package (:class:`TokenBucket`,
:class:`RateLatency`, :class:`TSpec`) convert to curves with ``.curve()``;
the operators accept either and use closed forms when they recognise the
pair.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass
from typing import Union

from .errors import CurveError, DomainError, InstabilityError

INF = math.inf

Segment = tuple[float, float, float]


def _tol(x: float) -> float:
    return 1e-9 * max(1.0, abs(x))


def _same(a: float, b: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= _tol(max(abs(a), abs(b)))


def _line(v: float, k: float, dt: float) -> float:
    """Value ``v + k*dt`` with the +inf conventions (dt >= 0)."""
    if math.isinf(v):
        return INF
    if math.isinf(k):
        return INF if dt > 0 else v
    return v + k * dt


@dataclass(frozen=True)
class Curve:
    """Non-decreasing piecewise-linear function on ``[0, inf)``."""

    origin_value: float
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        segs = tuple((float(s), float(v), float(k)) for s, v, k in self.segments)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "origin_value", float(self.origin_value))
        self._validate()

    def _validate(self) -> None:
        segs = self.segments
        if not segs:
            raise CurveError("curve needs at least one segment")
        if segs[0][0] != 0.0:
            raise CurveError("first segment must start at t=0")
        o = self.origin_value
        if math.isnan(o) or math.isinf(o) or o < 0:
            raise CurveError(f"origin value must be finite and >= 0, got {o}")
        prev_end = o
        infinite = False
        for i, (s, v, k) in enumerate(segs):
            if math.isnan(s) or math.isnan(v) or math.isnan(k):
                raise CurveError("NaN in curve segment")
            if i and s <= segs[i - 1][0]:
                raise CurveError("segment start times must be strictly increasing")
            if v < 0 or k < 0:
                raise CurveError(f"segment {i} has negative value or slope")
            if infinite and not math.isinf(v):
                raise CurveError("curve returns to finite values after +inf")
            if not math.isinf(v):
                if v < prev_end - _tol(prev_end):
                    raise CurveError(f"curve decreases at t={s}")
                if i and v > prev_end + _tol(prev_end):
                    raise CurveError(f"finite jump at t={s}; jumps are only allowed at t=0")
            if math.isinf(v) or math.isinf(k):
                infinite = True
            if i + 1 < len(segs):
                prev_end = _line(v, k, segs[i + 1][0] - s)

    # -- evaluation -------------------------------------------------------

    def _index(self, t: float) -> int:
        starts = [s for s, _, _ in self.segments]
        return bisect.bisect_right(starts, t) - 1

    def eval(self, t: float) -> float:
        if t < 0 or math.isnan(t):
            raise DomainError(f"curves are defined on [0, inf), got t={t}")
        if t == 0:
            return self.origin_value
        s, v, k = self.segments[self._index(t)]
        return _line(v, k, t - s)

    __call__ = eval

    def left_limit(self, t: float) -> float:
        """Limit from the left at ``t > 0``."""
        if t <= 0:
            raise DomainError("left limit needs t > 0")
        starts = [s for s, _, _ in self.segments]
        i = bisect.bisect_left(starts, t) - 1
        s, v, k = self.segments[i]
        return _line(v, k, t - s)

    def right_limit(self, t: float) -> float:
        if t < 0:
            raise DomainError("right limit needs t >= 0")
        s, v, k = self.segments[self._index(t)]
        if math.isinf(k) or math.isinf(v):
            return INF
        return v + k * (t - s)

    # -- shape queries ----------------------------------------------------

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(s for s, _, _ in self.segments)

    @property
    def final_slope(self) -> float:
        """Long-run rate; ``inf`` when the curve eventually becomes infinite."""
        _, v, k = self.segments[-1]
        return INF if math.isinf(v) or math.isinf(k) else k

    @property
    def infinite_from(self) -> float:
        """Earliest breakpoint after which the curve is infinite (``inf`` if never)."""
        for s, v, k in self.segments:
            if math.isinf(v) or math.isinf(k):
                return s
        return INF

    @property
    def finite_until(self) -> float:
        """Supremum of times where the curve is finite."""
        return self.infinite_from

    def is_convex(self) -> bool:
        if self.origin_value != 0 or self.segments[0][1] != 0:
            return False
        slopes = [k for _, _, k in self.segments]
        return all(b >= a - _tol(a) for a, b in zip(slopes, slopes[1:]))

    def sup_value(self) -> float:
        if self.final_slope > 0:
            return INF
        s, v, _ = self.segments[-1]
        return v


# -- named curve families -----------------------------------------------------


@dataclass(frozen=True)
class TokenBucket:
    """Leaky-bucket envelope: 0 at t=0, ``burst + rate*t`` afterwards."""

    rate: float
    burst: float

    def __post_init__(self) -> None:
        if not (self.rate >= 0 and self.burst >= 0) or math.isinf(self.rate) or math.isinf(self.burst):
            raise CurveError(f"token bucket needs finite rate>=0 and burst>=0, got {self}")

    def curve(self) -> Curve:
        return Curve(0.0, ((0.0, self.burst, self.rate),))

    def eval(self, t: float) -> float:
        return self.curve().eval(t)

    __call__ = eval


@dataclass(frozen=True)
class RateLatency:
    """Rate-latency service curve ``rate * max(0, t - latency)``."""

    rate: float
    latency: float

    def __post_init__(self) -> None:
        if not (self.rate > 0 and self.latency >= 0) or math.isinf(self.rate) or math.isinf(self.latency):
            raise CurveError(f"rate-latency curve needs rate>0 and latency>=0, got {self}")

    def curve(self) -> Curve:
        if self.latency == 0:
            return Curve(0.0, ((0.0, 0.0, self.rate),))
        return Curve(0.0, ((0.0, 0.0, 0.0), (self.latency, 0.0, self.rate)))

    def eval(self, t: float) -> float:
        if t < 0:
            raise DomainError(f"curves are defined on [0, inf), got t={t}")
        return self.rate * max(0.0, t - self.latency)

    __call__ = eval


@dataclass(frozen=True)
class TSpec:
    """VBR envelope ``min(max_packet + peak*t, burst + rate*t)`` for t > 0."""

    peak: float
    max_packet: float
    rate: float
    burst: float

    def __post_init__(self) -> None:
        vals = (self.peak, self.max_packet, self.rate, self.burst)
        if any(math.isnan(x) or math.isinf(x) for x in vals):
            raise CurveError(f"T-SPEC parameters must be finite, got {self}")
        if not (self.peak >= self.rate >= 0):
            raise CurveError(f"T-SPEC needs peak >= rate >= 0, got {self}")
        if not (self.burst >= self.max_packet >= 0):
            raise CurveError(f"T-SPEC needs burst >= max_packet >= 0, got {self}")

    def curve(self) -> Curve:
        p, m, r, b = self.peak, self.max_packet, self.rate, self.burst
        if p == r or b == m:
            return Curve(0.0, ((0.0, m, r),))
        cross = (b - m) / (p - r)
        return Curve(0.0, ((0.0, m, p), (cross, m + p * cross, r)))

    def as_token_bucket(self) -> TokenBucket | None:
        """The equivalent token bucket when the peak constraint never binds."""
        if self.peak == self.rate:
            return TokenBucket(self.rate, self.max_packet)
        if self.burst == self.max_packet:
            return TokenBucket(self.rate, self.burst)
        return None

    def eval(self, t: float) -> float:
        return self.curve().eval(t)

    __call__ = eval


CurveLike = Union[Curve, TokenBucket, RateLatency, TSpec]


def as_curve(c: CurveLike) -> Curve:
    if isinstance(c, Curve):
        return c
    return c.curve()


def delta0() -> Curve:
    """Neutral element of min-plus convolution (0 at t=0, +inf after)."""
    return Curve(0.0, ((0.0, 0.0, INF),))


def zero_curve() -> Curve:
    return Curve(0.0, ((0.0, 0.0, 0.0),))


def affine(rate: float, burst: float = 0.0) -> Curve:
    return TokenBucket(rate, burst).curve()


def eval_curve(c: CurveLike, t: float) -> float:
    return as_curve(c).eval(t)


# -- piece machinery ------------------------------------------------------------
#
# Every operator is computed as an envelope (min or max) of partial linear
# functions ("pieces") defined on closed intervals. A point piece has t0 == t1
# and only matters at the origin, since the curve stores right limits elsewhere.


@dataclass(frozen=True)
class _Piece:
    t0: float
    t1: float
    v0: float
    slope: float

    def at(self, t: float) -> float:
        return self.v0 + self.slope * (t - self.t0)

    @property
    def is_point(self) -> bool:
        return self.t1 <= self.t0


def _pieces(c: Curve) -> list[_Piece]:
    out = [_Piece(0.0, 0.0, c.origin_value, 0.0)]
    segs = c.segments
    for i, (s, v, k) in enumerate(segs):
        if math.isinf(v):
            break
        end = segs[i + 1][0] if i + 1 < len(segs) else INF
        if math.isinf(k):
            out.append(_Piece(s, s, v, 0.0))
            break
        out.append(_Piece(s, end, v, k))
    return out


def _clip(t0: float, t1: float, tr: float, vr: float, slope: float) -> _Piece | None:
    """Piece on [t0, t1] through (tr, vr), clipped to t >= 0."""
    if t1 < 0 or t1 < t0:
        return None
    lo = max(t0, 0.0)
    return _Piece(lo, t1, vr + slope * (lo - tr), slope)


def _dedupe_times(times: list[float]) -> list[float]:
    out: list[float] = []
    for t in sorted(times):
        if out and t - out[-1] <= 1e-12 * max(1.0, abs(t)):
            continue
        out.append(t)
    return out


def _envelope(pieces: list[_Piece], lower: bool) -> list[Segment]:
    """Segments (right limits) of the min/max of partial linear pieces on (0, inf).

    Intervals no piece covers get +inf for a lower envelope and are reported
    with value NaN for an upper one (caller decides).
    """
    spans = [p for p in pieces if not p.is_point]
    times = [0.0]
    for p in spans:
        times.append(p.t0)
        if not math.isinf(p.t1):
            times.append(p.t1)
    for p, q in itertools.combinations(spans, 2):
        if p.slope == q.slope:
            continue
        lo, hi = max(p.t0, q.t0), min(p.t1, q.t1)
        if hi <= lo:
            continue
        x = (q.v0 - p.v0 + p.slope * p.t0 - q.slope * q.t0) / (p.slope - q.slope)
        if lo < x < hi:
            times.append(x)
    ts = _dedupe_times([t for t in times if t >= 0])
    segs: list[Segment] = []
    for i, tau in enumerate(ts):
        nxt = ts[i + 1] if i + 1 < len(ts) else INF
        mid = tau + max(1.0, abs(tau)) if math.isinf(nxt) else 0.5 * (tau + nxt)
        best: _Piece | None = None
        best_val = 0.0
        for p in spans:
            if p.t0 < mid < p.t1:
                val = p.at(mid)
                if best is None or (val < best_val if lower else val > best_val):
                    best, best_val = p, val
        if best is None:
            segs.append((tau, INF if lower else math.nan, 0.0))
        else:
            segs.append((tau, best.at(tau), best.slope))
    return segs


def _build(origin: float, segs: list[Segment], floor_zero: bool = False) -> Curve:
    """Normalise raw envelope segments into a valid Curve.

    Snaps float noise at breakpoints, merges collinear segments, stops at the
    first infinite segment and (for deconvolution) floors values at zero.
    """
    pts: list[Segment] = []
    for i, (s, v, k) in enumerate(segs):
        end = segs[i + 1][0] if i + 1 < len(segs) else INF
        if math.isnan(v):
            v, k = 0.0, 0.0
        if math.isinf(v):
            pts.append((s, INF, 0.0))
            break
        if not math.isinf(k):
            k = 0.0 if k < 1e-12 else k
        if floor_zero and v < 0:
            cross = s - v / k if 0 < k < INF else INF
            if cross < end:
                pts.append((s, 0.0, 0.0))
                s, v = cross, 0.0
            else:
                v, k = 0.0, 0.0
        pts.append((s, max(v, 0.0), k))
    out: list[Segment] = []
    for s, v, k in pts:
        if out:
            ps, pv, pk = out[-1]
            if math.isinf(pv) or math.isinf(pk):
                break
            end = pv + pk * (s - ps)
            if not math.isinf(v) and (v < end or _same(v, end)):
                v = end
            if not math.isinf(v) and v == end and (k == pk or (not math.isinf(k) and _same(k, pk))):
                continue
        out.append((s, v, k))
    origin = max(origin, 0.0) if floor_zero else origin
    if not math.isinf(out[0][1]) and origin > out[0][1]:
        origin = out[0][1]
    return Curve(origin, tuple(out))


# -- operators ------------------------------------------------------------------


def min_plus_conv(f: CurveLike, g: CurveLike) -> Curve:
    """Min-plus convolution ``inf_{0<=s<=t} f(s) + g(t-s)``."""
    if isinstance(f, RateLatency) and isinstance(g, RateLatency):
        return RateLatency(min(f.rate, g.rate), f.latency + g.latency).curve()
    if isinstance(f, TokenBucket) and isinstance(g, TokenBucket):
        return pointwise_min(f, g)
    fc, gc = as_curve(f), as_curve(g)
    pieces = []
    for p in _pieces(fc):
        for q in _pieces(gc):
            pieces.extend(_conv_pair(p, q))
    origin = fc.origin_value + gc.origin_value
    return _build(origin, _envelope(pieces, lower=True))


def _conv_pair(p: _Piece, q: _Piece) -> list[_Piece]:
    t0, v0 = p.t0 + q.t0, p.v0 + q.v0
    if p.is_point:
        return [_Piece(t0, p.t0 + q.t1, v0, q.slope)]
    if q.is_point:
        return [_Piece(t0, p.t1 + q.t0, v0, p.slope)]
    first, second = (p, q) if p.slope <= q.slope else (q, p)
    len1 = first.t1 - first.t0
    out = [_Piece(t0, t0 + len1, v0, first.slope)]
    if not math.isinf(len1):
        t1 = t0 + len1
        out.append(_Piece(t1, t1 + (second.t1 - second.t0), v0 + first.slope * len1, second.slope))
    return out


def min_plus_deconv(f: CurveLike, g: CurveLike) -> Curve:
    """Min-plus deconvolution ``sup_{s>=0} f(t+s) - g(s)``, floored at 0.

    Raises :class:`InstabilityError` when the supremum is infinite for every t.
    """
    if isinstance(f, TokenBucket) and isinstance(g, RateLatency):
        if f.rate > g.rate:
            raise InstabilityError(f"arrival rate {f.rate} exceeds service rate {g.rate}")
        b = f.burst + f.rate * g.latency
        return Curve(b, ((0.0, b, f.rate),))
    fc, gc = as_curve(f), as_curve(g)
    g_end = gc.finite_until
    f_inf = fc.infinite_from
    if math.isinf(g_end) and (fc.final_slope > gc.final_slope or not math.isinf(f_inf)):
        raise InstabilityError(
            f"deconvolution unbounded: arrival rate {fc.final_slope} exceeds service rate {gc.final_slope}"
        )
    pieces = []
    for p in _pieces(fc):
        for q in _pieces(gc):
            pieces.extend(_deconv_pair(p, q))
    origin = _sup_diff(fc, gc)
    segs = _envelope(pieces, lower=False)
    if not math.isinf(f_inf):
        cut = max(0.0, f_inf - g_end)
        segs = [sg for sg in segs if sg[0] < cut] + [(cut, INF, 0.0)]
        if cut == 0.0:
            segs = [(0.0, INF, 0.0)]
    return _build(origin, segs, floor_zero=True)


def _deconv_pair(p: _Piece, q: _Piece) -> list[_Piece]:
    a, b, vp, kp = p.t0, p.t1, p.v0, p.slope
    c, d, vq, kq = q.t0, q.t1, q.v0, q.slope

    def f_at(u: float) -> float:
        return vp + kp * (u - a)

    def g_at(s: float) -> float:
        return vq + kq * (s - c)

    raw: list[_Piece | None] = []
    if p.is_point:
        # s = a - t must lie in [c, d]
        raw.append(_clip(a - d, a - c, a - c, vp - vq, kq))
    elif q.is_point:
        raw.append(_clip(a - c, b - c, a - c, vp - vq, kp))
    elif kp > kq:
        # objective increases with s: push s to its upper limit
        if math.isinf(b) and math.isinf(d):
            raise InstabilityError("deconvolution unbounded: final arrival rate exceeds final service rate")
        if not math.isinf(d):
            raw.append(_clip(a - d, b - d, a - d, f_at(a) - g_at(d), kp))
        if not math.isinf(b):
            raw.append(_clip(b - d, b - c, b - c, f_at(b) - g_at(c), kq))
    else:
        raw.append(_clip(a - c, b - c, a - c, vp - vq, kp))
        raw.append(_clip(a - d, a - c, a - c, vp - vq, kq))
    return [x for x in raw if x is not None]


def pointwise_min(f: CurveLike, g: CurveLike) -> Curve:
    fc, gc = as_curve(f), as_curve(g)
    pieces = _pieces(fc) + _pieces(gc)
    origin = min(fc.origin_value, gc.origin_value)
    return _build(origin, _envelope(pieces, lower=True))


# -- deviations -----------------------------------------------------------------


def _check_stable(ac: Curve, sc: Curve) -> None:
    ra, rs = ac.final_slope, sc.final_slope
    if math.isinf(ra):
        if not math.isinf(rs):
            raise InstabilityError("arrival curve becomes infinite but service does not")
        return
    if ra > rs:
        raise InstabilityError(f"arrival rate {ra} exceeds service rate {rs}")
    if ra == 0 and rs == 0 and ac.sup_value() > sc.sup_value():
        raise InstabilityError("arrival envelope exceeds the total service ever offered")


def _lower_inverse(c: Curve, y: float) -> float:
    """``inf{u >= 0 : c(u) >= y}``."""
    if y <= c.origin_value:
        return 0.0
    segs = c.segments
    for i, (s, v, k) in enumerate(segs):
        end = segs[i + 1][0] if i + 1 < len(segs) else INF
        if v >= y or math.isinf(k):
            return s
        if k > 0:
            u = s + (y - v) / k
            if u <= end:
                return u
    return INF


def _upper_inverse(c: Curve, y: float) -> float:
    """``inf{u >= 0 : c(u) > y}``."""
    if c.origin_value > y:
        return 0.0
    segs = c.segments
    for i, (s, v, k) in enumerate(segs):
        end = segs[i + 1][0] if i + 1 < len(segs) else INF
        if v > y or math.isinf(k):
            return s
        if k > 0:
            u = s + (y - v) / k
            if u < end:
                return u
    return INF


def h_dev(alpha: CurveLike, beta: CurveLike) -> float:
    """Horizontal deviation (worst-case delay) between arrival and service curves."""
    if isinstance(beta, RateLatency):
        if isinstance(alpha, TokenBucket):
            if alpha.rate > beta.rate:
                raise InstabilityError(f"arrival rate {alpha.rate} exceeds service rate {beta.rate}")
            return beta.latency + alpha.burst / beta.rate
        if isinstance(alpha, TSpec):
            return tspec_delay(alpha, beta.rate, beta.latency)
    ac, sc = as_curve(alpha), as_curve(beta)
    _check_stable(ac, sc)

    # candidate abscissae: alpha breakpoints and the times alpha crosses a
    # breakpoint value of beta; between them t -> beta^-1(alpha(t)) - t is affine
    levels = set()
    for i, (s, v, k) in enumerate(sc.segments):
        if not math.isinf(v):
            levels.add(v)
        if i + 1 < len(sc.segments) and not math.isinf(k) and not math.isinf(v):
            levels.add(v + k * (sc.segments[i + 1][0] - s))
    cands = {0.0}
    segs = ac.segments
    for i, (s, v, k) in enumerate(segs):
        cands.add(s)
        end = segs[i + 1][0] if i + 1 < len(segs) else INF
        if k > 0 and not math.isinf(k) and not math.isinf(v):
            for y in levels:
                t = s + (y - v) / k
                if s < t < end:
                    cands.add(t)
    best = 0.0
    for t in sorted(cands):
        vals = [ac.eval(t)]
        rising = False
        if t > 0:
            vals.append(ac.left_limit(t))
        _, v0, k0 = segs[ac._index(t)]
        right = ac.right_limit(t)
        vals.append(right)
        rising = k0 > 0
        for y in vals:
            best = max(best, _lower_inverse(sc, y) - t)
        if rising and not math.isinf(right):
            best = max(best, _upper_inverse(sc, right) - t)
        if math.isinf(best):
            raise InstabilityError("horizontal deviation is unbounded")
    return max(0.0, best)


def _sup_diff(ac: Curve, sc: Curve) -> float:
    """``sup_t ac(t) - sc(t)`` over breakpoints and one-sided limits (may be -inf)."""
    best = -INF
    for t in sorted(set(ac.breakpoints) | set(sc.breakpoints) | {0.0}):
        pairs = [(ac.eval(t), sc.eval(t)), (ac.right_limit(t), sc.right_limit(t))]
        if t > 0:
            pairs.append((ac.left_limit(t), sc.left_limit(t)))
        for a, b in pairs:
            if math.isinf(b):
                continue
            if math.isinf(a):
                return INF
            best = max(best, a - b)
    return best


def v_dev(alpha: CurveLike, beta: CurveLike) -> float:
    """Vertical deviation (worst-case backlog) between arrival and service curves."""
    if isinstance(alpha, TokenBucket) and isinstance(beta, RateLatency):
        if alpha.rate > beta.rate:
            raise InstabilityError(f"arrival rate {alpha.rate} exceeds service rate {beta.rate}")
        return alpha.burst + alpha.rate * beta.latency
    ac, sc = as_curve(alpha), as_curve(beta)
    _check_stable(ac, sc)
    best = _sup_diff(ac, sc)
    if math.isinf(best) and best > 0:
        raise InstabilityError("vertical deviation is unbounded")
    return max(0.0, best)


def tspec_delay(ts: TSpec, rate: float, latency: float) -> float:
    """Closed-form delay of a T-SPEC through ``RateLatency(rate, latency)``."""
    if ts.rate > rate:
        raise InstabilityError(f"sustained rate {ts.rate} exceeds service rate {rate}")
    tb = ts.as_token_bucket()
    if tb is not None:
        return latency + tb.burst / rate
    p, m, r, b = ts.peak, ts.max_packet, ts.rate, ts.burst
    if p <= rate:
        return latency + m / rate
    return latency + (m + (b - m) * (p - rate) / (p - r)) / rate
