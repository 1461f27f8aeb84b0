import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ubinc.curves import RateLatency, TokenBucket, TSpec, h_dev, min_plus_conv
from ubinc.detnc import Tandem, case1_delay
from ubinc.errors import ConfigError, InstabilityError, TopologyError
from ubinc.scenario import (
    DelayReport,
    FlowSpec,
    Mode,
    UbiITopology,
    apply_param,
    flow_path,
    service_delay,
    sweep,
    total_column,
    validate_topology,
)
from ubinc.snrnc import FadingChannel, RayleighSnr

from oracles import grid_hdev

FAST = RateLatency(1e9, 0.0)


def golden(**kw):
    return UbiITopology.chain(RateLatency(2, 1), RateLatency(3, 2), RateLatency(5, 0.5), FAST, FAST, **kw)


GOLDEN_FLOW = FlowSpec("d1", TokenBucket(1, 4), TokenBucket(0.5, 2))


def convolved(tandem):
    c = tandem.nodes[0].server.curve()
    for n in tandem.nodes[1:]:
        c = min_plus_conv(c, n.server.curve())
    return c


class TestValidate:
    def test_ok(self):
        assert validate_topology(golden()) == []

    def test_unassigned_device(self):
        t = dataclasses.replace(golden(), device_to_bs={})
        assert any("d1 unassigned" in v for v in validate_topology(t))

    def test_unknown_cloud(self):
        t = dataclasses.replace(golden(), bs_to_cloud={"b1": "c9"})
        assert any("c9" in v and "b1" in v for v in validate_topology(t))

    def test_wireless_backhaul_rejected(self):
        links = {"d1": FAST, "b1": FadingChannel(1.0, RayleighSnr(10))}
        assert any("b1" in v and "wired" in v for v in validate_topology(dataclasses.replace(golden(), links=links)))

    def test_reports_everything(self):
        t = UbiITopology(("d1", "d2"), ("b1",), ("c1",), {"d1": "b9"}, {}, {}, {}, ubii_level=7)
        v = validate_topology(t)
        assert any("d2 unassigned" in x for x in v)
        assert any("b9" in x for x in v)
        assert any("b1 unassigned" in x for x in v)
        assert any("ubii_level" in x for x in v)
        assert len(v) >= 8

    def test_shared_bs(self):
        t = UbiITopology(
            ("d1", "d2"), ("b1",), ("c1",), {"d1": "b1", "d2": "b1"}, {"b1": "c1"},
            {n: RateLatency(1, 0) for n in ("d1", "d2", "b1", "c1")},
            {"d1": FAST, "d2": FAST, "b1": FAST},
        )
        assert validate_topology(t) == []


class TestFlowPath:
    def test_order(self):
        p = flow_path(golden(), GOLDEN_FLOW)
        assert [n.role for n in p.uplink] == ["device", "access", "bs", "backhaul", "cloud"]
        assert p.downlink.nodes == tuple(reversed(p.uplink.nodes))
        assert p.wireless is None

    def test_hybrid_excludes_wireless(self):
        ch = FadingChannel(1.0, RayleighSnr(10.0))
        t = dataclasses.replace(golden(), links={"d1": ch, "b1": FAST})
        p = flow_path(t, GOLDEN_FLOW, Mode.HYBRID)
        assert [n.role for n in p.uplink] == ["device", "bs", "backhaul", "cloud"]
        assert p.wireless == ch

    def test_unknown_device(self):
        with pytest.raises(TopologyError):
            flow_path(golden(), dataclasses.replace(GOLDEN_FLOW, source="d7"))

    def test_invalid_topology(self):
        with pytest.raises(TopologyError) as exc:
            flow_path(dataclasses.replace(golden(), device_to_bs={}), GOLDEN_FLOW)
        assert any("d1" in e for e in exc.value.errors)

    def test_rayleigh_needs_hybrid(self):
        t = dataclasses.replace(golden(), links={"d1": FadingChannel(1.0, RayleighSnr(10.0)), "b1": FAST})
        with pytest.raises(ConfigError):
            flow_path(t, GOLDEN_FLOW)

    def test_constant_channel_deterministic(self):
        ch = FadingChannel.constant_capacity(4.0, slot_duration=0.5)
        t = dataclasses.replace(golden(), links={"d1": ch, "b1": FAST})
        access = flow_path(t, GOLDEN_FLOW).uplink.nodes[1].server
        assert access.rate == pytest.approx(8.0) and access.latency == 0.5


class TestServiceDelay:
    def test_golden(self):
        r = service_delay(golden(), GOLDEN_FLOW)
        assert (r.uplink_s, r.downlink_s, r.total_s) == (5.5, 4.5, 10.0)
        assert r.per_round_s == 10.0 and r.wireless_quantile_s == 0.0 and r.epsilon is None

    def test_golden_vs_hdev_oracle(self):
        p = flow_path(golden(), GOLDEN_FLOW)
        assert grid_hdev(TokenBucket(1, 4), convolved(p.uplink), 30.0, 1e-3) == pytest.approx(5.5, abs=2e-3)
        assert grid_hdev(TokenBucket(0.5, 2), convolved(p.downlink), 30.0, 1e-3) == pytest.approx(4.5, abs=2e-3)

    def test_rounds(self):
        r = service_delay(golden(), dataclasses.replace(GOLDEN_FLOW, rounds=3))
        assert r.total_s == 30.0

    def test_compute_component(self):
        r = service_delay(golden(), GOLDEN_FLOW)
        assert r.compute_s == case1_delay(TokenBucket(1, 4), Tandem.of(RateLatency(2, 1), RateLatency(3, 2), RateLatency(5, 0.5)))

    def test_hybrid_constant_channel(self):
        ch = FadingChannel.constant_capacity(2.0)
        t = dataclasses.replace(golden(), links={"d1": ch, "b1": FAST})
        f = dataclasses.replace(GOLDEN_FLOW, epsilon=1e-3)
        r = service_delay(t, f, Mode.HYBRID)
        assert r.wireless_quantile_s == 0.0
        assert r.total_s == 10.0
        assert r.epsilon == 1e-3

    def test_hybrid_rayleigh(self):
        ch = FadingChannel(1.0, RayleighSnr(10.0), slot_duration=0.01)
        t = dataclasses.replace(golden(), links={"d1": ch, "b1": FAST})
        r = service_delay(t, dataclasses.replace(GOLDEN_FLOW, epsilon=1e-3, rounds=2), Mode.HYBRID)
        assert r.wireless_quantile_s > 0
        assert r.total_s == pytest.approx(2 * (r.uplink_s + r.downlink_s + 2 * r.wireless_quantile_s))

    def test_hybrid_needs_epsilon(self):
        ch = FadingChannel(1.0, RayleighSnr(10.0))
        t = dataclasses.replace(golden(), links={"d1": ch, "b1": FAST})
        with pytest.raises(ConfigError):
            service_delay(t, GOLDEN_FLOW, Mode.HYBRID)

    def test_hybrid_needs_fading_link(self):
        with pytest.raises(ConfigError):
            service_delay(golden(), dataclasses.replace(GOLDEN_FLOW, epsilon=0.01), Mode.HYBRID)

    def test_instability_names_stage(self):
        with pytest.raises(InstabilityError) as exc:
            service_delay(golden(), dataclasses.replace(GOLDEN_FLOW, uplink=TokenBucket(4, 1)))
        assert exc.value.stage == "device:d1"

    def test_flow_validation(self):
        with pytest.raises(ConfigError):
            FlowSpec("d1", TokenBucket(1, 4), TokenBucket(1, 4), rounds=0)
        with pytest.raises(ConfigError):
            FlowSpec("d1", TokenBucket(1, 4), TokenBucket(1, 4), epsilon=1.0)

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.tuples(st.floats(1.1, 6), st.floats(0, 3)), min_size=5, max_size=5),
        st.floats(0.05, 1.0),
        st.floats(0, 8),
        st.integers(1, 5),
    )
    def test_report_consistency_and_permutation(self, servers, r, b, rounds):
        rl = [RateLatency(R, T) for R, T in servers]
        t = UbiITopology.chain(*rl)
        f = FlowSpec("d1", TokenBucket(r, b), TSpec(peak=r + 1, max_packet=min(b, 1.0), rate=r, burst=b), rounds)
        rep = service_delay(t, f)
        assert rep.total_s == pytest.approx(rounds * (rep.uplink_s + rep.downlink_s), rel=1e-12)
        assert min(rep.uplink_s, rep.downlink_s, rep.compute_s) >= 0
        p = flow_path(t, f)
        assert rep.uplink_s == pytest.approx(h_dev(f.uplink.curve(), convolved(p.uplink)), rel=1e-9)
        for perm in itertools.islice(itertools.permutations(p.uplink.nodes), 0, 120, 17):
            assert case1_delay(f.uplink, Tandem(perm)) == pytest.approx(rep.uplink_s, rel=1e-12)


class TestSweep:
    def test_cloud_rate_non_increasing(self):
        rows = sweep(golden(), GOLDEN_FLOW, "compute.c1.rate", list(range(1, 11)))
        assert all(r.stable for r in rows)  # R = 1 equals the uplink rate: still stable
        tot = total_column(rows)
        assert np.all(np.diff(tot) <= 1e-12)
        assert tot[0] > tot[-1]

    def test_burst_affine(self):
        rows = sweep(golden(), GOLDEN_FLOW, "flow.uplink.burst", list(range(11)))
        tot = np.array(total_column(rows))
        assert np.allclose(np.diff(tot), 1 / 2, rtol=1e-9)

    def test_peak_non_decreasing(self):
        f = dataclasses.replace(GOLDEN_FLOW, uplink=TSpec(peak=2, max_packet=1, rate=1, burst=5))
        rows = sweep(golden(), f, "flow.uplink.peak", list(np.linspace(2, 8, 13)))
        assert np.all(np.diff(total_column(rows)) >= -1e-12)

    def test_unstable_row_marked(self):
        rows = sweep(golden(), GOLDEN_FLOW, "flow.uplink.rate", [0.5, 1.0, 3.0])
        assert [r.stable for r in rows] == [True, True, False]
        assert "device:d1" in rows[2].reason or "d1" in rows[2].reason

    def test_unknown_path(self):
        for p in ("compute.zz.rate", "compute.c1.speed", "flow.uplink.peak", "foo", "link.d1.mean_snr"):
            with pytest.raises(ConfigError):
                sweep(golden(), GOLDEN_FLOW, p, [1.0])

    def test_apply_param_fields(self):
        t, f = apply_param(golden(), GOLDEN_FLOW, "link.b1.latency", 0.25)
        assert t.links["b1"] == RateLatency(1e9, 0.25)
        _, f = apply_param(golden(), GOLDEN_FLOW, "flow.rounds", 4.0)
        assert f.rounds == 4 and isinstance(f.rounds, int)
        ch = FadingChannel(1.0, RayleighSnr(10.0))
        t = dataclasses.replace(golden(), links={"d1": ch, "b1": FAST})
        t2, _ = apply_param(t, GOLDEN_FLOW, "link.d1.mean_snr", 20.0)
        assert t2.links["d1"].snr == RayleighSnr(20.0)

    def test_rows_in_input_order(self):
        vals = [5.0, 2.0, 9.0]
        assert [r.value for r in sweep(golden(), GOLDEN_FLOW, "compute.b1.rate", vals)] == vals


def test_report_row_keys():
    r = service_delay(golden(), GOLDEN_FLOW)
    assert isinstance(r, DelayReport)
    assert list(r.as_row()) == [
        "mode", "uplink_s", "compute_s", "downlink_s", "wireless_quantile_s",
        "per_round_s", "rounds", "total_s", "epsilon",
    ]
