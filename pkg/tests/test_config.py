import pytest

from conftest import CONFIGS
from ubinc.config import load_config, parse_config
from ubinc.curves import RateLatency, TokenBucket, TSpec
from ubinc.errors import ConfigError
from ubinc.scenario import Mode
from ubinc.snrnc import FadingChannel, RayleighSnr

MINIMAL = """
[topology]
devices = ["d1"]
bss = ["b1"]
clouds = ["c1"]
device_to_bs = { d1 = "b1" }
bs_to_cloud = { b1 = "c1" }

[topology.compute.d1]
rate = 2.0
latency = 1.0

[topology.compute.b1]
rate = 3.0

[topology.compute.c1]
rate = 5.0
latency = 0.5

[topology.links.d1]
rate = 1e9

[topology.links.b1]
rate = 1e9

[flow]
source = "d1"

[flow.uplink]
rate = 1.0
burst = 4.0

[flow.downlink]
rate = 0.5
burst = 2.0
"""


def errors_of(text):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    return exc.value.errors


def test_minimal():
    cfg = parse_config(MINIMAL)
    assert cfg.mode is Mode.DETERMINISTIC
    assert cfg.topology.compute["b1"] == RateLatency(3.0, 0.0)
    assert cfg.flow.uplink == TokenBucket(1.0, 4.0)
    assert cfg.sweep is None and cfg.sim is None


def test_golden_files_parse():
    for name in ("case1", "case1_rounds3", "case2", "hybrid"):
        load_config(CONFIGS / f"{name}.toml")
    cfg = load_config(CONFIGS / "case2.toml")
    assert cfg.flow.uplink == TSpec(peak=4.0, max_packet=1.0, rate=1.0, burst=5.0)
    assert cfg.sim.seeds == (1, 2, 3) and cfg.sim.policy == "on-off"
    hy = load_config(CONFIGS / "hybrid.toml")
    assert hy.mode is Mode.HYBRID
    assert hy.topology.links["d1"] == FadingChannel(1.0, RayleighSnr(10.0), 0.01)


def test_negative_burst_names_field_and_line():
    text = MINIMAL.replace("burst = 4.0", "burst = -1")
    (e,) = errors_of(text)
    line = next(i for i, l in enumerate(text.splitlines(), 1) if l == "burst = -1")
    assert e.startswith(f"line {line}: flow.uplink.burst")


def test_undefined_bs():
    errs = errors_of(MINIMAL.replace('d1 = "b1"', 'd1 = "b9"'))
    assert any("d1" in e and "b9" in e for e in errs)
    assert all(e.startswith("line ") for e in errs)


def test_unknown_keys():
    errs = errors_of(MINIMAL.replace("[flow]\n", "[flow]\ncolour = 3\n") + "\n[extra]\nx = 1\n")
    assert any("flow.colour: unknown key" in e for e in errs)
    assert any("extra: unknown key" in e for e in errs)


def test_malformed_fixture_reports_everything():
    with pytest.raises(ConfigError) as exc:
        load_config(CONFIGS / "malformed.toml")
    errs = exc.value.errors
    assert len(errs) == 3
    assert any("speed" in e for e in errs)
    assert any("b7" in e for e in errs)
    assert any("flow.uplink.burst" in e for e in errs)


def test_syntax_error():
    errs = errors_of(MINIMAL + "\n[flow\n")
    assert "syntax error" in errs[0] and "line" in errs[0]


def test_missing_sections_and_file():
    errs = errors_of('mode = "deterministic"\n')
    assert any("topology" in e for e in errs) and any("flow" in e for e in errs)
    with pytest.raises(ConfigError):
        load_config(CONFIGS / "does_not_exist.toml")


@pytest.mark.parametrize(
    "patch, needle",
    [
        (('mode = "deterministic"', 'mode = "chaotic"'), "mode"),
        (("[flow]\n", "[flow]\nrounds = 0\n"), "flow.rounds"),
        (("[flow]\n", "[flow]\nepsilon = 1.5\n"), "flow.epsilon"),
        (("rate = 3.0", "rate = 0.0"), "topology.compute.b1.rate"),
        (("rate = 3.0", 'rate = "fast"'), "topology.compute.b1.rate"),
        (('source = "d1"', 'source = "d5"'), "flow.source"),
    ],
)
def test_schema_errors(patch, needle):
    text = 'mode = "deterministic"\n' + MINIMAL
    errs = errors_of(text.replace(*patch, 1))
    assert any(needle in e for e in errs), errs


def test_hybrid_requirements():
    text = 'mode = "hybrid"\n' + MINIMAL
    errs = errors_of(text)
    assert any("epsilon" in e for e in errs)
    assert any("topology.links.d1" in e for e in errs)


def test_rayleigh_requires_hybrid():
    text = MINIMAL.replace("[topology.links.d1]\nrate = 1e9", '[topology.links.d1]\ntype = "rayleigh"\nmean_snr = 10.0')
    errs = errors_of(text)
    assert any("hybrid" in e for e in errs)


def test_sweep_and_sim_sections():
    text = MINIMAL + '\n[sweep]\nparam = "compute.c1.rate"\nvalues = [1, 2]\n\n[sim]\nslots = 50\nseeds = [3, 4]\n'
    cfg = parse_config(text)
    assert cfg.sweep.values == (1.0, 2.0)
    assert cfg.sim.slots == 50 and cfg.sim.seeds == (3, 4)
    assert any("sweep.param" in e for e in errors_of(text.replace("compute.c1.rate", "compute.c9.rate")))
    assert any("sim.seed" in e for e in errors_of(text.replace("seeds = [3, 4]\n", "")))
    assert any("sim.policy" in e for e in errors_of(text + 'policy = "lazy"\n'))
