"""
Command line for the three-computer EPR experiment.

    python -m cli.app oracle --a 0 --b 0.3141593
    python -m cli.app bell [--mode net] [--share-stream] [--verify]
    python -m cli.app ghz [--drop "(3)"]
    python -m cli.app run-role --role station --station-id 1 ...

JSON goes to stdout, status lines to stderr.
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path
from typing import Dict, List, Optional

sys.path.append(str(Path(__file__).parent.parent))

from epr.config import RunConfig, load_run_config
from epr.errors import ConfigError, GeometryError, ProtocolError, VerificationError
from epr.experiment import TrialRecord, run_scheme, scheme_seeds
from epr.geometry import Direction
from epr.ghz import cross_particle_system, format_assignment, full_attribution_system, solve
from epr.network import run_collector, run_experiment_net, run_source, run_station
from epr.oracle import exact_corr, exact_joint
from epr.reporting import (build_report, read_trial_csv, trial_csv_path, verify_report,
                           write_report, write_trial_csv)
from epr.wire import RunManifest, require_audit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_VERIFICATION = 4
EXIT_IO = 5


def status(message: str):
    print(message, file=sys.stderr)


def run_id_for(seed: int, tag: str) -> str:
    return f"run-{seed}-{tag}"


def cmd_oracle(args: argparse.Namespace) -> int:
    a, b = Direction.from_angle(args.a), Direction.from_angle(args.b)
    out = {
        "a_rad": a.angle_rad,
        "b_rad": b.angle_rad,
        "joint": exact_joint(a, b).to_dict(),
        "corr": exact_corr(a, b),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _run_local(config: RunConfig) -> Dict[str, List[TrialRecord]]:
    a, b, c = config.directions
    return run_scheme(a, b, c, config.n_trials, config.seed, config.share_stream)


def _run_net(config: RunConfig) -> Dict[str, List[TrialRecord]]:
    a, b, c = config.directions
    seeds = scheme_seeds(config.seed, config.share_stream)
    runs = {}
    with tempfile.TemporaryDirectory(prefix="epr-net-") as work:
        transcript_dir = (Path(config.transcript_dir) if config.transcript_dir
                          else Path(work) / "transcripts").resolve()
        for tag, seed in seeds.items():
            manifest = RunManifest.for_experiment(tag, a, b, c, seed, config.n_trials,
                                                  run_id_for(config.seed, tag))
            status(f"🛰️  Experiment {tag}: net run {manifest.run_id} on {config.host}:{config.port_base}")
            csv_path = run_experiment_net(manifest, Path(work), trial_csv_path(config.trial_csv_dir, tag).resolve(),
                                          config.host, config.port_base, config.timeout_s,
                                          transcript_dir, verbose=True)
            require_audit(transcript_dir, manifest.run_id)
            status(f"   ✅ locality audit passed for {manifest.run_id}")
            runs[tag] = read_trial_csv(csv_path)
    return runs


def cmd_bell(args: argparse.Namespace) -> int:
    config = load_run_config(
        {
            "a_rad": args.a, "b_rad": args.b, "c_rad": args.c, "n_trials": args.n,
            "seed": args.seed, "mode": args.mode, "share_stream": args.share_stream or None,
            "out": args.out, "csv_dir": args.csv_dir, "host": args.host,
            "port_base": args.port_base, "transcript_dir": args.transcript,
        },
        config_path=args.config,
    )
    a, b, c = config.directions

    status("=" * 70)
    status(f"🔬 Bell test: a={a} b={b} c={c} n={config.n_trials} seed={config.seed} "
           f"mode={config.mode} share_stream={config.share_stream}")
    status("=" * 70)

    if config.mode == "net":
        runs = _run_net(config)
    else:
        runs = _run_local(config)
        for tag, records in runs.items():
            write_trial_csv(records, trial_csv_path(config.trial_csv_dir, tag))

    report = build_report(a, b, c, runs, config.seed, config.share_stream)
    path = write_report(report, config.report_path)
    status(f"\n💾 Report saved to {path}")
    status(f"📐 exact violation:     {report['exact']['violation']:+.5f}")
    emp = report["empirical"]
    status(f"📊 empirical violation: {emp['violation']:+.5f} +/- {emp['combined_stderr']:.5f}")

    if args.verify:
        verify_report(report, config.trial_csv_dir)
        status("✅ report verified against the trial CSVs")
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_ghz(args: argparse.Namespace) -> int:
    system = full_attribution_system() if args.full or args.drop else cross_particle_system()
    if args.drop:
        try:
            system = system.without(*args.drop)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    result = solve(system)
    print(f"constraints: {' '.join(system.labels)}")
    if result.satisfiable:
        print("SATISFIABLE")
        print(f"witness: {format_assignment(result.witness)}")
    else:
        print("UNSATISFIABLE")
        for assignment, label in result.certificate:
            print(f"{format_assignment(assignment)}  violates {label}")
    return EXIT_OK


def cmd_run_role(args: argparse.Namespace) -> int:
    transcript = Path(args.transcript) if args.transcript else None
    if args.role == "station":
        if args.station_id is None:
            raise ConfigError("--station-id is required for the station role")
        run_station(args.station_id, args.host, args.port_base, args.timeout, transcript)
        return EXIT_OK

    if args.manifest is None:
        raise ConfigError(f"--manifest is required for the {args.role} role")
    manifest = RunManifest.from_json(Path(args.manifest).read_text(encoding="utf-8"))
    if args.role == "source":
        run_source(manifest, args.host, args.port_base, args.timeout, transcript)
    else:
        if args.csv is None:
            raise ConfigError("--csv is required for the collector role")
        run_collector(manifest, args.host, args.port_base, Path(args.csv), args.timeout, transcript)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epr", description="Classical three-computer EPR experiment")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", help="closed-form joint statistics for two settings")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bell", help="run experiments I, II, III and write the Bell report")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("local", "net"))
    p.add_argument("--share-stream", action="store_true")
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--csv-dir", help="directory for the trial CSVs")
    p.add_argument("--host")
    p.add_argument("--port-base", type=int)
    p.add_argument("--transcript", help="directory for wire transcripts (net mode)")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--verify", action="store_true", help="recompute the report after writing it")
    p.set_defaults(func=cmd_bell)

    p = sub.add_parser("ghz", help="exhaustive check of the simultaneous value attributions")
    p.add_argument("--full", action="store_true", help="add the same-particle attributions")
    p.add_argument("--drop", nargs="+", metavar="LABEL", help="drop constraints from the full system")
    p.set_defaults(func=cmd_ghz)

    p = sub.add_parser("run-role", help="run one role process of a net-mode experiment")
    p.add_argument("--role", choices=("source", "station", "collector"), required=True)
    p.add_argument("--station-id", type=int, choices=(1, 2))
    p.add_argument("--manifest")
    p.add_argument("--csv")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port-base", type=int, required=True)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--transcript")
    p.set_defaults(func=cmd_run_role)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProtocolError as e:
        status(f"❌ protocol error: {e}")
        return EXIT_PROTOCOL
    except VerificationError as e:
        status(f"❌ verification failed: {e}")
        return EXIT_VERIFICATION
    except (ConfigError, GeometryError, ValueError) as e:
        status(f"❌ config error: {e}")
        return EXIT_CONFIG
    except OSError as e:
        status(f"❌ I/O error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
