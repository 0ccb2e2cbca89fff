#!/usr/bin/env python3
"""Command-line driver for rate tables, classical DKCA runs, MPS evolution, sweeps, oracle checks and fits."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Any

# Ensure project root (where env_support.py lives) is importable when this file is
# invoked as `python tools/qca_cli.py` from the repo root.
PROJECT_ROOT = Path(__file__).resolve().parent.parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from env_support import read_key_value_file

from dpqca.analysis import classical_critical_scan, fit_delta, locate_critical
from dpqca.config import FitMethod, RatePreset, RunSettings, ScheduleMode, TruncationMode, load_settings
from dpqca.dkca import DensityTrace, dk_density_trace
from dpqca.errors import QCAError
from dpqca.evolution import ACTIVE, evolve, finite_evolve
from dpqca.logging_hooks import LoggingHook, configure_logging
from dpqca.model import (
    DKCARule,
    RateEntry,
    ThreeCellParams,
    dp_bond_rule,
    dp_site_rule,
    preset_rates,
    steady_state_3cell,
)
from dpqca.mps import init_product_state
from dpqca.observables import TrajectorySeries
from dpqca.oracle import ACCEPTANCE_GRID, compare_finite_chain, oracle_report, single_rule_concurrence
from dpqca.superop import ScheduleConfig, build_round_gates, export_gate
from dpqca.sweep import SweepConfig, sweep


def parse_floats(raw: str) -> list[float]:
    try:
        return [float(v) for v in raw.strip("[]").split(",") if v.strip()]
    except ValueError as exc:
        raise SystemExit(f"Invalid number list '{raw}'") from exc


def load_config(args: argparse.Namespace) -> dict[str, str]:
    if not args.config:
        return {}
    try:
        return read_key_value_file(args.config)
    except FileNotFoundError as exc:
        raise SystemExit(str(exc)) from exc


def resolve_settings(args: argparse.Namespace) -> RunSettings:
    try:
        settings = load_settings(Path(args.env_file))
    except ValueError as exc:
        raise SystemExit(str(exc)) from exc
    if args.out:
        settings.output_dir = Path(args.out)
    if args.seed is not None:
        settings.seed = args.seed
    if args.threads is not None:
        settings.threads = max(1, args.threads)
    if args.log_level:
        settings.log_level = args.log_level.upper()
    if args.progress:
        settings.progress = True
    return settings


def build_params(args: argparse.Namespace) -> ThreeCellParams:
    if getattr(args, "params", None):
        return ThreeCellParams.load(args.params)
    if args.p is None:
        raise SystemExit("Provide --p or --params")
    return preset_rates(args.preset, args.p, args.omega)


def build_schedule(args: argparse.Namespace) -> ScheduleConfig:
    return ScheduleConfig(mode=ScheduleMode(args.mode), tau=args.tau, trotter_constant=args.trotter_constant)


def dump_json(payload: Any, path: Path | None = None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=str)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
        print(f"Wrote {path}")
    else:
        print(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def describe_steady_state(entry: RateEntry) -> dict[str, Any]:
    state = steady_state_3cell(entry)
    return {"rho11": state.rho11, "rho01": [state.rho01.real, state.rho01.imag]}


def cmd_rates(args: argparse.Namespace, settings: RunSettings) -> None:
    params = build_params(args)
    payload = {
        "params": params.to_mapping(),
        "digest": params.digest(),
        "steady_states": {label.code: describe_steady_state(entry) for label, entry in params.entries()},
    }
    if args.save:
        params.save(args.save)
        print(f"Saved rate table to {args.save}")
    dump_json(payload)


def build_dkca_rule(args: argparse.Namespace) -> DKCARule:
    if args.rule == "bond":
        if args.q is None:
            raise SystemExit("--rule bond needs --q")
        return dp_bond_rule(args.q)
    if args.rule == "raw":
        if args.y is None:
            raise SystemExit("--rule raw needs --y (and optionally --x, --z)")
        return DKCARule(args.x, args.y, args.y if args.z is None else args.z)
    return dp_site_rule(args.p)


def cmd_dkca(args: argparse.Namespace, settings: RunSettings) -> None:
    out_dir = settings.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.scan:
        scan = classical_critical_scan(
            parse_floats(args.scan),
            args.length,
            args.rounds,
            args.seeds,
            seed=settings.seed,
            workers=settings.threads,
            progress=settings.progress,
        )
        dump_json(scan.to_dict(), out_dir / "dkca_scan.json")
        return

    rule = build_dkca_rule(args)
    trace = dk_density_trace(
        rule,
        args.length,
        args.rounds,
        args.seeds,
        seed=settings.seed,
        initial=args.initial if args.initial == "full" else float(args.initial),
        workers=settings.threads,
        progress=settings.progress,
    )
    if args.csv:
        path = Path(args.csv)
        path.parent.mkdir(parents=True, exist_ok=True)
    else:
        path = out_dir / f"dkca_x{rule.x:.4f}_y{rule.y:.4f}_z{rule.z:.4f}.csv"
    trace.to_csv(path)
    print(f"Wrote {path} (final density {trace.mean_density[-1]:.6g})")


def cmd_evolve(args: argparse.Namespace, settings: RunSettings) -> None:
    params = build_params(args)
    schedule = build_schedule(args)
    gates = build_round_gates(params, schedule)
    out_dir = settings.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    metadata = {
        "p": params.p,
        "omega": params.omega,
        "mode": schedule.mode.value,
        "preset": params.preset,
        "D": args.bond,
        "truncation": args.truncation,
        "svd_cutoff": args.svd_cutoff,
        "schedule": schedule.to_dict(params.p),
    }
    common = dict(
        hooks=[LoggingHook(every=max(1, args.rounds // 20))],
        stride=args.stride,
        time_per_round=schedule.time_per_round(params.p),
        progress=settings.progress,
        params_digest=params.digest(),
        metadata=metadata,
    )
    if args.export_gates:
        for name, gate in zip(("V", "W"), gates):
            export_gate(gate, out_dir / f"gate_{name}.bin")

    if args.finite:
        _, series = finite_evolve(args.finite, gates, args.rounds, max_bond=args.bond, **common)
    else:
        state = init_product_state(
            ACTIVE, max_bond=args.bond, svd_cutoff=args.svd_cutoff, truncation=TruncationMode(args.truncation)
        )
        _, series = evolve(
            state,
            gates,
            args.rounds,
            checkpoint=Path(args.checkpoint) if args.checkpoint else None,
            checkpoint_every=args.checkpoint_every,
            resume=Path(args.resume) if args.resume else None,
            schedule=schedule.to_dict(params.p),
            **common,
        )
    stem = args.name or f"trajectory_p{params.p if params.p is not None else 0:.4f}_w{params.omega:.3f}"
    series.to_csv(out_dir / f"{stem}.csv")
    series.to_json(out_dir / f"{stem}.json")
    print(f"Wrote {out_dir / stem}.csv (final n={series.final.n:.6g}, S={series.final.S:.6g})")


def cmd_sweep(args: argparse.Namespace, settings: RunSettings) -> None:
    values = load_config(args)
    overrides: dict[str, Any] = {"output_dir": settings.output_dir}
    if args.ps:
        overrides["ps"] = tuple(sorted(parse_floats(args.ps)))
    if args.omega is not None:
        overrides["omega"] = args.omega
    if args.bond is not None:
        overrides["max_bond"] = args.bond
    if args.rounds is not None:
        overrides["rounds"] = args.rounds
    if args.mode or args.tau is not None:
        overrides["schedule"] = ScheduleConfig(
            mode=ScheduleMode(args.mode or values.get("mode", ScheduleMode.CONTINUOUS.value)),
            tau=args.tau,
            trotter_constant=args.trotter_constant,
        )
    config = SweepConfig.from_mapping(values, **overrides)
    result = sweep(config, workers=settings.threads, progress=settings.progress)
    summary = result.summary()
    print(f"p_c={summary.get('p_c')} failures={len(result.failures)} -> {settings.output_dir}")


def cmd_oracle(args: argparse.Namespace, settings: RunSettings) -> None:
    grid = ACCEPTANCE_GRID
    if args.ps or args.omegas:
        grid = tuple(
            (p, w) for p in parse_floats(args.ps or "0.3,0.5,0.7,0.9") for w in parse_floats(args.omegas or "0,0.05,0.1")
        )
    payload: dict[str, Any] = {"steady_states": oracle_report(grid, preset=args.preset)}
    payload["concurrence"] = single_rule_concurrence(preset_rates(args.preset, 0.8, 0.1), tau=10.0)
    if args.compare_rounds:
        comparisons = []
        for mode in ScheduleMode:
            for omega in (0.0, 0.1):
                params = preset_rates(args.preset, args.compare_p, omega)
                result = compare_finite_chain(
                    params, ScheduleConfig(mode=mode), n_sites=args.compare_sites, rounds=args.compare_rounds
                )
                comparisons.append({"mode": mode.value, "omega": omega, "p": args.compare_p, **result})
        payload["finite_chain"] = comparisons
    dump_json(payload, settings.output_dir / "oracle.json" if args.out else None)
    if not payload["steady_states"]["passed"]:
        raise SystemExit(f"Steady-state residual {payload['steady_states']['max_residual']:.3g} above tolerance")


def read_curve(path: Path) -> DensityTrace | TrajectorySeries:
    with path.open(newline="") as handle:
        header = next(csv.reader(handle), [])
    if "mean_density" in header:
        return DensityTrace.from_csv(path)
    return TrajectorySeries.from_csv(path)


def cmd_fit(args: argparse.Namespace, settings: RunSettings) -> None:
    payload: dict[str, Any] = {}
    if args.grid:
        points = []
        for item in args.grid:
            if "=" not in item:
                raise SystemExit(f"Invalid grid entry '{item}'. Expected p=path format.")
            p, path = item.split("=", 1)
            points.append((float(p), read_curve(Path(path))))
        points.sort(key=lambda item: item[0])
        payload["p_c"] = locate_critical(points, window=args.window)
    if args.input:
        fit = fit_delta(read_curve(Path(args.input)), window=args.window, method=args.method, p_c=payload.get("p_c"))
        payload["fit"] = fit.to_dict()
    if not payload:
        raise SystemExit("Provide --input and/or --grid p=path entries.")
    dump_json(payload)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def add_rate_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--p", type=float, help="Site-DP probability")
    parser.add_argument("--omega", type=float, default=0.0, help="Drive amplitude Omega = theta/2 on neighborhood 11")
    parser.add_argument("--preset", choices=[p.value for p in RatePreset], default=RatePreset.TABLE.value)
    parser.add_argument("--params", help="Rate table file (key=value) instead of --p/--omega")


def add_schedule_arguments(parser: argparse.ArgumentParser, *, mode_default: str | None) -> None:
    parser.add_argument("--mode", choices=[m.value for m in ScheduleMode], default=mode_default)
    parser.add_argument("--tau", type=float, help="Explicit layer duration (overrides the mode default)")
    parser.add_argument("--trotter-constant", type=float, default=0.0025, help="C in tau^2 p (1 - p) = C")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--env-file", default=".env", help="Path to .env with QCA_* settings")
    parser.add_argument("--config", help="key=value file with the sweep grid and schedule (read by `sweep` only)")
    parser.add_argument("--out", help="Output directory (falls back to QCA_OUTPUT_DIR)")
    parser.add_argument("--seed", type=int, help="Base random seed (falls back to QCA_SEED)")
    parser.add_argument("--threads", type=int, help="Worker processes (falls back to QCA_THREADS)")
    parser.add_argument("--log-level", help="Logging level (falls back to QCA_LOG_LEVEL)")
    parser.add_argument("--progress", action="store_true", help="Show progress bars")

    subparsers = parser.add_subparsers(dest="command", required=True)

    rates = subparsers.add_parser("rates", help="Print the three-cell rate table and its steady states")
    add_rate_arguments(rates)
    rates.add_argument("--save", help="Write the rate table to this key=value file")
    rates.set_defaults(func=cmd_rates)

    dkca = subparsers.add_parser("dkca", help="Classical Domany-Kinzel density trace or critical scan")
    dkca.add_argument("--rule", choices=["site", "bond", "raw"], default="site", help="Rule family (default: site DP)")
    dkca.add_argument("--p", type=float, default=0.705, help="Site-DP probability (x=0, y=z=p)")
    dkca.add_argument("--q", type=float, help="Bond-DP probability (x=0, y=q, z=q(2-q))")
    dkca.add_argument("--x", type=float, default=0.0, help="Raw rule: activation with no active neighbour")
    dkca.add_argument("--y", type=float, help="Raw rule: activation with one active neighbour")
    dkca.add_argument("--z", type=float, help="Raw rule: activation with two active neighbours (default y)")
    dkca.add_argument("--length", type=int, default=4096)
    dkca.add_argument("--rounds", type=int, default=4000)
    dkca.add_argument("--seeds", type=int, default=50)
    dkca.add_argument("--initial", default="full", help='"full" or an activation density in (0, 1]')
    dkca.add_argument("--scan", help="Comma-separated site-DP p grid; locate p_c and fit delta")
    dkca.add_argument("--csv", help="Density-trace CSV path (default: <out>/dkca_x.._y.._z...csv)")
    dkca.set_defaults(func=cmd_dkca)

    ev = subparsers.add_parser("evolve", help="Evolve the all-active state with iTEBD (or a finite chain)")
    add_rate_arguments(ev)
    add_schedule_arguments(ev, mode_default=ScheduleMode.CONTINUOUS.value)
    ev.add_argument("-D", "--bond", type=int, default=64, help="Maximum bond dimension")
    ev.add_argument("--rounds", type=int, default=100)
    ev.add_argument("--stride", type=int, default=1, help="Record observables every N rounds")
    ev.add_argument("--svd-cutoff", type=float, default=0.0)
    ev.add_argument("--truncation", choices=[t.value for t in TruncationMode], default=TruncationMode.FIXED.value)
    ev.add_argument("--finite", type=int, help="Open chain with this many coarse sites instead of iTEBD")
    ev.add_argument("--checkpoint", help="Checkpoint file (.npz)")
    ev.add_argument("--checkpoint-every", type=int, default=0)
    ev.add_argument("--resume", help="Resume from a checkpoint file")
    ev.add_argument("--export-gates", action="store_true", help="Dump V and W as binary gate files")
    ev.add_argument("--name", help="Output file stem")
    ev.set_defaults(func=cmd_evolve)

    sw = subparsers.add_parser("sweep", help="iTEBD sweep over a p grid; writes CSVs and a JSON summary")
    sw.add_argument("--ps", help="Comma-separated p grid")
    sw.add_argument("--omega", type=float)
    add_schedule_arguments(sw, mode_default=None)
    sw.add_argument("-D", "--bond", type=int)
    sw.add_argument("--rounds", type=int)
    sw.set_defaults(func=cmd_sweep)

    oracle = subparsers.add_parser("oracle", help="Dense checks: steady states, concurrence, finite-chain agreement")
    oracle.add_argument("--ps", help="Comma-separated p grid")
    oracle.add_argument("--omegas", help="Comma-separated Omega grid")
    oracle.add_argument("--preset", choices=[p.value for p in RatePreset], default=RatePreset.TABLE.value)
    oracle.add_argument("--compare-rounds", type=int, default=0, help="Also compare the finite MPS over N rounds")
    oracle.add_argument("--compare-sites", type=int, default=3)
    oracle.add_argument("--compare-p", type=float, default=0.7)
    oracle.set_defaults(func=cmd_oracle)

    fit = subparsers.add_parser("fit", help="Fit delta on a trajectory CSV and/or locate p_c over a grid")
    fit.add_argument("--input", help="Trajectory or DKCA CSV")
    fit.add_argument("--grid", action="append", help="p=path entries (repeatable) for locating p_c")
    fit.add_argument("--window", type=float, default=0.5, help="Tail fraction of log-time")
    fit.add_argument("--method", choices=[m.value for m in FitMethod], default=FitMethod.POWER_LAW.value)
    fit.set_defaults(func=cmd_fit)

    return parser


def main(argv: list[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = resolve_settings(args)
    configure_logging(settings.log_level)
    try:
        args.func(args, settings)
    except QCAError as exc:
        raise SystemExit(f"{type(exc).__name__}: {exc}") from exc


if __name__ == "__main__":
    main()
