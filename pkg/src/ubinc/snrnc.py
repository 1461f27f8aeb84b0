"""SNR-domain analysis of the fading device <-> base-station hop.

Bit-domain processes map to the SNR domain through ``x -> exp(x)``, so a
slot that carries ``w * ln(1 + snr)`` bits offers SNR-domain service
``(1 + snr) ** w``. Mellin transforms of that service give a Chernoff-type
kernel bounding the probability that a bit waits more than ``w`` slots.

All moments are handled through their logarithms: ``exp(bits)`` overflows
long before any realistic traffic volume.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Union

import mpmath
import numpy as np

from .curves import CurveLike, as_curve
from .errors import CurveError, InstabilityError, QuantileCapError, SnrRangeError

_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class ConstantSnr:
    gamma: float

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise CurveError(f"SNR must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class RayleighSnr:
    """Rayleigh block fading: the SNR of each slot is exponential with this mean."""

    mean: float

    def __post_init__(self) -> None:
        if not self.mean > 0:
            raise CurveError(f"mean SNR must be > 0, got {self.mean}")


SnrModel = Union[ConstantSnr, RayleighSnr]


@dataclass(frozen=True)
class FadingChannel:
    """Per-slot capacity ``symbols_per_slot * ln(1 + snr)`` bits, i.i.d. across slots."""

    symbols_per_slot: float
    snr: SnrModel
    slot_duration: float = 1.0

    def __post_init__(self) -> None:
        if not self.symbols_per_slot > 0:
            raise CurveError("symbols_per_slot must be > 0")
        if not self.slot_duration > 0:
            raise CurveError("slot_duration must be > 0")
        if not isinstance(self.snr, (ConstantSnr, RayleighSnr)):
            raise CurveError(f"unknown SNR model {self.snr!r}")

    @classmethod
    def constant_capacity(cls, bits_per_slot: float, slot_duration: float = 1.0) -> "FadingChannel":
        return cls(1.0, ConstantSnr(math.expm1(bits_per_slot)), slot_duration)

    @property
    def is_deterministic(self) -> bool:
        return isinstance(self.snr, ConstantSnr)

    def mean_capacity(self) -> float:
        """Expected bits per slot."""
        w = self.symbols_per_slot
        if isinstance(self.snr, ConstantSnr):
            return w * math.log1p(self.snr.gamma)
        x = 1.0 / self.snr.mean
        # E[ln(1+g)] = e^x E1(x) for exponential g with mean 1/x
        return w * float(mpmath.exp(x) * mpmath.e1(x))

    def sample_capacity(self, rng: np.random.Generator, n: int) -> np.ndarray:
        w = self.symbols_per_slot
        if isinstance(self.snr, ConstantSnr):
            return np.full(n, w * math.log1p(self.snr.gamma))
        return w * np.log1p(rng.exponential(self.snr.mean, size=n))


@dataclass(frozen=True)
class SnrArrival:
    """Arrivals whose SNR-domain moments obey ``E[e^{theta A(s,t)}] <= e^{theta (rho (t-s) + sigma)}``.

    ``rho`` is in bits per slot, ``sigma`` in bits.
    """

    rho: float
    sigma: float = 0.0
    theta_range: tuple[float, float] = (0.0, math.inf)

    def __post_init__(self) -> None:
        if not (self.rho >= 0 and self.sigma >= 0):
            raise CurveError(f"rho and sigma must be >= 0, got {self}")
        lo, hi = self.theta_range
        if not (0 <= lo < hi):
            raise CurveError(f"theta range must be an open interval in (0, inf), got {self.theta_range}")


@dataclass(frozen=True)
class ThetaSearch:
    theta_min: float = 1e-3
    theta_max: float = 50.0
    tolerance: float = 1e-6
    max_iter: int = 200
    grid_points: int = 64

    def __post_init__(self) -> None:
        if not 0 < self.theta_min < self.theta_max:
            raise CurveError("need 0 < theta_min < theta_max")


# -- Mellin transforms -------------------------------------------------------------


@functools.lru_cache(maxsize=65536)
def log_mellin_rayleigh(nu: float, gamma_bar: float) -> float:
    """``log E[(1 + g)**nu]`` for ``g`` exponential with mean ``gamma_bar``."""
    if not gamma_bar > 0:
        raise CurveError(f"mean SNR must be > 0, got {gamma_bar}")
    if nu == 0:
        return 0.0
    x = mpmath.mpf(1) / gamma_bar
    val = x + nu * mpmath.log(gamma_bar) + mpmath.log(mpmath.gammainc(nu + 1, x))
    return float(val)


def mellin_rayleigh(nu: float, gamma_bar: float) -> float:
    """``E[(1 + g)**nu] = e^{1/gamma_bar} gamma_bar^nu Gamma(nu + 1, 1/gamma_bar)``."""
    lv = log_mellin_rayleigh(nu, gamma_bar)
    if lv > _LOG_MAX:
        raise SnrRangeError(f"E[(1+snr)^{nu}] overflows for mean SNR {gamma_bar}")
    return math.exp(lv)


def log_mellin_service(ch: FadingChannel, theta: float) -> float:
    """``log M_S(1 - theta) = log E[(1 + snr)^(-theta w)]``."""
    nu = -theta * ch.symbols_per_slot
    if isinstance(ch.snr, ConstantSnr):
        return nu * math.log1p(ch.snr.gamma)
    return log_mellin_rayleigh(nu, ch.snr.mean)


def mellin_service(ch: FadingChannel, theta: float) -> float:
    if not theta > 0:
        raise CurveError("theta must be > 0")
    lv = log_mellin_service(ch, theta)
    if lv > _LOG_MAX:
        raise SnrRangeError("Mellin transform overflows")
    return math.exp(lv)


def stability_margin(a: SnrArrival, ch: FadingChannel, theta: float) -> float:
    """``e^{theta rho} M_S(1 - theta)``; the kernel is finite iff this is < 1."""
    return math.exp(min(theta * a.rho + log_mellin_service(ch, theta), _LOG_MAX))


# -- violation kernel --------------------------------------------------------------


def log_violation_kernel(a: SnrArrival, ch: FadingChannel, w_slots: int, theta: float) -> float:
    """Log of the steady-state kernel at a fixed theta (``inf`` when unstable).

    With ``m = e^{theta rho} M`` the kernel is
    ``e^{theta sigma} M^w * sum_{u>=1} m^u = e^{theta sigma} M^w m / (1 - m)``.
    The ``u = 0`` term is dropped: a bit can never wait on traffic that
    arrives after it, so that event has probability zero.
    """
    log_m_s = log_mellin_service(ch, theta)
    log_m = theta * a.rho + log_m_s
    if log_m >= 0:
        return math.inf
    return theta * a.sigma + w_slots * log_m_s + log_m - math.log(-math.expm1(log_m))


def _theta_bounds(a: SnrArrival, s: ThetaSearch) -> tuple[float, float]:
    lo = max(s.theta_min, a.theta_range[0])
    hi = min(s.theta_max, a.theta_range[1])
    if a.theta_range[0] >= s.theta_min:
        lo = a.theta_range[0] * (1 + 1e-9) + 1e-12
    if a.theta_range[1] <= s.theta_max:
        hi = a.theta_range[1] * (1 - 1e-9)
    if not lo < hi:
        raise CurveError("theta search range does not intersect the arrival's validity range")
    return lo, hi


def _golden_min(f, lo: float, hi: float, tol: float, max_iter: int) -> tuple[float, float]:
    inv_phi = (math.sqrt(5) - 1) / 2
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, abs(c)):
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - inv_phi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv_phi * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def optimize_theta(a: SnrArrival, ch: FadingChannel, w_slots: int, s: ThetaSearch = ThetaSearch()) -> tuple[float, float]:
    """Minimise the log kernel over theta: log grid, then golden section.

    Returns ``(theta, log_kernel)``. Raises :class:`InstabilityError` when no
    theta in range satisfies the stability condition.
    """
    lo, hi = _theta_bounds(a, s)
    grid = np.geomspace(lo, hi, s.grid_points)
    vals = [log_violation_kernel(a, ch, w_slots, float(th)) for th in grid]
    i = int(np.argmin(vals))
    if math.isinf(vals[i]):
        raise InstabilityError(
            f"no theta in [{lo:g}, {hi:g}] gives a stable kernel (rho={a.rho} bits/slot, "
            f"mean capacity {ch.mean_capacity():.6g} bits/slot)",
            stage="wireless",
        )
    left = float(grid[max(i - 1, 0)])
    right = float(grid[min(i + 1, len(grid) - 1)])
    th, val = _golden_min(lambda x: log_violation_kernel(a, ch, w_slots, x), left, right, s.tolerance, s.max_iter)
    if val <= vals[i]:
        return th, val
    return float(grid[i]), vals[i]


def delay_violation_bound(a: SnrArrival, ch: FadingChannel, w_slots: int, s: ThetaSearch = ThetaSearch()) -> float:
    """Upper bound on P(delay > w_slots), clamped to 1."""
    if w_slots < 0:
        raise CurveError("w_slots must be >= 0")
    _, lk = optimize_theta(a, ch, w_slots, s)
    return min(1.0, math.exp(lk)) if lk < 0 else 1.0


def delay_quantile(
    a: SnrArrival,
    ch: FadingChannel,
    epsilon: float,
    s: ThetaSearch = ThetaSearch(),
    cap: int = 10**6,
) -> int:
    """Smallest integer slot count whose violation bound is <= epsilon."""
    if not 0 < epsilon <= 1:
        raise CurveError(f"epsilon must lie in (0, 1], got {epsilon}")

    def ok(w: int) -> bool:
        return delay_violation_bound(a, ch, w, s) <= epsilon

    if ok(0):
        return 0
    lo, hi = 0, 1
    while not ok(hi):
        lo, hi = hi, hi * 2
        if hi > cap:
            raise QuantileCapError(f"delay quantile exceeds {cap} slots at epsilon={epsilon}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# -- bit domain -> SNR domain ------------------------------------------------------


@dataclass(frozen=True)
class SnrEnvelope:
    """``t -> exp(curve(t))``, stored by its bit-domain exponent."""

    log_curve: object = field()

    def log_eval(self, t: float) -> float:
        return self.log_curve.eval(t)

    def eval(self, t: float) -> float:
        x = self.log_curve.eval(t)
        return math.inf if x > _LOG_MAX else math.exp(x)

    __call__ = eval


def bit_to_snr(c: CurveLike) -> SnrEnvelope:
    return SnrEnvelope(as_curve(c))
