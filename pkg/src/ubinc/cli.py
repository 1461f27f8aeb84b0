"""``ubinc analyze|sweep|simulate --config FILE [--out CSV]``.

Exit status: 0 success, 1 configuration error, 2 instability, 3 a
simulation verdict failed. Without ``--out`` the CSV goes to
``$UBINC_OUTPUT_DIR`` (default: the current directory) as
``<config-stem>_<command>.csv``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ScenarioConfig, SimSpec, load_config
from .errors import ConfigError, CurveError, InstabilityError, QuantileCapError
from .scenario import Mode, flow_path, service_delay, sweep
from .sim import FadingServer, RateLatencyServer, generate_source, run_tandem_sim, validate_bounds, write_trace
from .snrnc import FadingChannel, SnrArrival, delay_quantile

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_FAIL = 0, 1, 2, 3
OUTPUT_DIR_ENV = "UBINC_OUTPUT_DIR"

ANALYZE_COLUMNS = [
    "mode", "uplink_s", "compute_s", "downlink_s", "wireless_quantile_s",
    "per_round_s", "rounds", "total_s", "epsilon",
]
SWEEP_COLUMNS = ["param", "value", "uplink_s", "downlink_s", "wireless_quantile_s", "total_s", "stable"]
SIM_COLUMNS = ["seed", "check", "passed", "observed", "limit", "max_delay_s", "slots"]


def fmt(v: object) -> str:
    """Shortest round-trip text for floats; ``repr`` keeps CSV loss-free."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=columns)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: fmt(r.get(k)) for k in columns})


def _out_path(args: argparse.Namespace) -> Path:
    if args.out:
        return Path(args.out)
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    return base / f"{Path(args.config).stem}_{args.command}.csv"


def cmd_analyze(cfg: ScenarioConfig, out: Path) -> int:
    rep = service_delay(cfg.topology, cfg.flow, cfg.mode)
    print(f"mode          {rep.mode.value}")
    print(f"uplink        {rep.uplink_s!r} s")
    print(f"compute       {rep.compute_s!r} s (inside the tandems, not added)")
    print(f"downlink      {rep.downlink_s!r} s")
    if rep.mode is Mode.HYBRID:
        print(f"wireless      {rep.wireless_quantile_s!r} s per crossing, epsilon {rep.epsilon!r}")
    print(f"per round     {rep.per_round_s!r} s")
    print(f"total         {rep.total_s!r} s over {rep.rounds} round(s)")
    _write_csv(out, ANALYZE_COLUMNS, [rep.as_row()])
    return EXIT_OK


def cmd_sweep(cfg: ScenarioConfig, out: Path) -> int:
    if cfg.sweep is None:
        raise ConfigError("the sweep command needs a [sweep] section")
    rows = sweep(cfg.topology, cfg.flow, cfg.sweep.param, list(cfg.sweep.values), cfg.mode)
    table = []
    for r in rows:
        row = {"param": r.param, "value": r.value, "stable": r.stable}
        if r.report is not None:
            rep = r.report
            row.update(
                uplink_s=rep.uplink_s,
                downlink_s=rep.downlink_s,
                wireless_quantile_s=rep.wireless_quantile_s,
                total_s=rep.total_s,
            )
            print(f"{r.param} = {r.value!r}: total {rep.total_s!r} s")
        else:
            print(f"{r.param} = {r.value!r}: unstable ({r.reason})")
        table.append(row)
    _write_csv(out, SWEEP_COLUMNS, table)
    return EXIT_OK


def _sim_runs(cfg: ScenarioConfig, spec: SimSpec, seed: int, trace: Optional[Path]):
    """Yield ``(check, verdict, result)`` for one seed."""
    t, f = cfg.topology, cfg.flow
    rep = service_delay(t, f, cfg.mode)
    path = flow_path(t, f, cfg.mode)
    access = t.links[f.source]
    default_tau = access.slot_duration if isinstance(access, FadingChannel) else 1.0
    tau = spec.slot_duration or default_tau

    servers = []
    for stage in path.uplink:
        if stage.role == "access" and isinstance(access, FadingChannel):
            servers.append(FadingServer(access, seed + 1))
        else:
            servers.append(RateLatencyServer.of(stage.server))
    src = generate_source(f.uplink, spec.policy, spec.slots, seed=seed, slot_duration=tau)
    res = run_tandem_sim(src, servers)
    if trace is not None:
        write_trace(res, trace)
    (v,) = validate_bounds(res, deterministic_bound=rep.uplink_s)
    yield "uplink", v, res

    if cfg.mode is Mode.HYBRID:
        assert path.wireless is not None and f.epsilon is not None
        ch = path.wireless
        a = SnrArrival(rho=f.uplink.rate * ch.slot_duration, sigma=f.wireless_sigma)
        w = delay_quantile(a, ch, f.epsilon) * ch.slot_duration
        src = generate_source(f.uplink, spec.policy, spec.slots, seed=seed, slot_duration=ch.slot_duration)
        res = run_tandem_sim(src, [FadingServer(ch, seed + 1)])
        (v,) = validate_bounds(res, quantile=(w, f.epsilon))
        yield "wireless", v, res


def cmd_simulate(cfg: ScenarioConfig, out: Path, seed: Optional[int], trace: Optional[Path]) -> int:
    if cfg.sim is None:
        raise ConfigError("the simulate command needs a [sim] section")
    spec = cfg.sim if seed is None else replace(cfg.sim, seeds=(seed,))
    rows, failed = [], False
    for i, s in enumerate(spec.seeds):
        for check, v, res in _sim_runs(cfg, spec, s, trace if i == 0 else None):
            print(f"seed {s} {check} {v.line()}")
            if res.diagnostic:
                print(f"seed {s} {check} diagnostic: {res.diagnostic}")
            failed |= not v.passed
            rows.append(
                {
                    "seed": s,
                    "check": check,
                    "passed": v.passed,
                    "observed": v.observed,
                    "limit": v.limit,
                    "max_delay_s": res.max_delay,
                    "slots": res.slots,
                }
            )
    _write_csv(out, SIM_COLUMNS, rows)
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ubinc", description="Service-delay bounds for device/BS/cloud tandems.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("analyze", "compute the delay report"),
        ("sweep", "vary one parameter and tabulate the bounds"),
        ("simulate", "check the bounds against a fluid simulation"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="scenario TOML file")
        sp.add_argument("--out", help=f"CSV output path (default: ${OUTPUT_DIR_ENV}/<stem>_{name}.csv)")
        sp.add_argument("--seed", type=int, help="override the configured seeds")
        if name == "simulate":
            sp.add_argument("--trace", help="write the per-slot trace of the first run to this CSV")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = _out_path(args)
        if args.command == "analyze":
            return cmd_analyze(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        return cmd_simulate(cfg, out, args.seed, Path(args.trace) if args.trace else None)
    except (InstabilityError, QuantileCapError) as exc:
        stage = getattr(exc, "stage", None)
        print(f"unstable{f' at {stage}' if stage else ''}: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CurveError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
