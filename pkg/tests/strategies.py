"""Hypothesis strategies for random piecewise-linear curves.

Parameters are drawn on a quarter-unit lattice so that breakpoints stay
well separated and float noise does not dominate the comparisons.
"""

from __future__ import annotations

from hypothesis import strategies as st

from ubinc.curves import Curve, RateLatency

quarter = st.integers(min_value=0, max_value=40).map(lambda k: k / 4)
pos_quarter = st.integers(min_value=1, max_value=40).map(lambda k: k / 4)


@st.composite
def service_curves(draw, max_segments=3):
    """Convex curves with f(0)=0: a latency then increasing slopes."""
    latency = draw(quarter)
    n = draw(st.integers(1, max_segments))
    slopes = sorted(draw(st.lists(pos_quarter, min_size=n, max_size=n, unique=True)))
    lengths = draw(st.lists(pos_quarter, min_size=n - 1, max_size=n - 1))
    segs = []
    t, v = 0.0, 0.0
    if latency > 0:
        segs.append((0.0, 0.0, 0.0))
        t = latency
    for i, k in enumerate(slopes):
        segs.append((t, v, k))
        if i < n - 1:
            v += k * lengths[i]
            t += lengths[i]
    return Curve(0.0, tuple(segs))


@st.composite
def arrival_curves(draw, max_segments=3):
    """Concave curves with a burst at 0+ and decreasing slopes."""
    burst = draw(quarter)
    n = draw(st.integers(1, max_segments))
    slopes = sorted(draw(st.lists(quarter, min_size=n, max_size=n, unique=True)), reverse=True)
    lengths = draw(st.lists(pos_quarter, min_size=n - 1, max_size=n - 1))
    segs = []
    t, v = 0.0, burst
    for i, k in enumerate(slopes):
        segs.append((t, v, k))
        if i < n - 1:
            v += k * lengths[i]
            t += lengths[i]
    return Curve(0.0, tuple(segs))


@st.composite
def general_curves(draw, max_segments=4):
    """Arbitrary non-decreasing continuous-on-(0,inf) curves with a jump at 0."""
    jump = draw(quarter)
    n = draw(st.integers(1, max_segments))
    slopes = draw(st.lists(quarter, min_size=n, max_size=n))
    lengths = draw(st.lists(pos_quarter, min_size=n - 1, max_size=n - 1))
    segs = []
    t, v = 0.0, jump
    for i, k in enumerate(slopes):
        segs.append((t, v, k))
        if i < n - 1:
            v += k * lengths[i]
            t += lengths[i]
    # merge equal consecutive slopes are legal; Curve accepts them
    return Curve(0.0, tuple(segs))


rate_latencies = st.builds(
    RateLatency,
    rate=pos_quarter,
    latency=quarter,
)
