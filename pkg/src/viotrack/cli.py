"""Command-line entry point: ``python -m viotrack {run,grid,record,replay,serve}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .backend import BackendConfig, serve
from .netlink import DEFAULT_PORT, FramingError, ProtocolError, SocketServer

logger = logging.getLogger("viotrack")


def _add_run_options(p: argparse.ArgumentParser):
    p.add_argument("--script", default="trans-easy", choices=harness.SCRIPTS)
    p.add_argument("--frame-rate", type=float, default=60.0)
    p.add_argument("--imu-rate", type=float, default=200.0)
    p.add_argument("--backend", default="gt", choices=harness.BACKENDS)
    p.add_argument("--transport", default="sim", choices=("sim", "tcp"))
    p.add_argument("--addr", default=None, help="backend HOST:PORT for --transport tcp")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--disable-bscm", action="store_true")
    p.add_argument("--disable-pia", action="store_true")
    p.add_argument("--disable-backend", action="store_true")


def _add_output_options(p: argparse.ArgumentParser):
    p.add_argument("--out", default=None, help="report path (stdout if omitted)")
    p.add_argument("--series", default=None, help="per-frame error series CSV path")
    p.add_argument("--format", default="csv", choices=("csv", "json"))


def _config(args) -> harness.ExperimentConfig:
    return harness.ExperimentConfig(
        script=args.script, frame_rate=args.frame_rate, imu_rate=args.imu_rate, backend=args.backend,
        transport=args.transport, addr=args.addr, seed=args.seed, duration=args.duration,
        disable_bscm=args.disable_bscm, disable_pia=args.disable_pia, disable_backend=args.disable_backend,
    )


def _emit(reports, args):
    if args.out is None:
        text = harness.summary_csv(reports) if args.format == "csv" else harness.report_json(reports)
        sys.stdout.write(text)
        if getattr(args, "series", None):
            Path(args.series).write_text(harness.series_csv(reports[0]))
        return
    harness.emit_report(reports, args.format, args.out, series_path=getattr(args, "series", None))


def cmd_run(args):
    _emit([harness.run_experiment(_config(args))], args)


def cmd_grid(args):
    configs = harness.grid_configs(seed=args.seed, duration=args.duration)
    reports = harness.run_grid(configs, workers=args.workers)
    _emit(reports, args)


def cmd_record(args):
    report = harness.record_sequence(_config(args), args.path)
    sys.stdout.write(harness.summary_csv([report]))


def cmd_replay(args):
    _emit([harness.replay_sequence(args.path)], args)


def cmd_serve(args):
    cfg = BackendConfig(args.backend, rng_seed=args.seed)
    server = SocketServer(args.addr)
    host, port = server.address
    print(f"listening on {host}:{port}", flush=True)
    served = 0
    try:
        while args.max_connections is None or served < args.max_connections:
            conn = server.accept()
            with conn:
                try:
                    n = serve(conn, cfg)
                    logger.info("connection closed after %d replies", n)
                except (FramingError, ProtocolError, ConnectionError) as exc:
                    logger.warning("connection dropped: %s", exc)
            served += 1
    except KeyboardInterrupt:
        pass
    finally:
        server.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viotrack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    _add_run_options(p)
    _add_output_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="run the backend x frame rate x script sweep")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="csv", choices=("csv", "json"))
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("record", help="run an experiment and save its sequence file")
    p.add_argument("path")
    _add_run_options(p)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("replay", help="re-run the tracker on a sequence file")
    p.add_argument("path")
    _add_output_options(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="serve pose requests over TCP")
    p.add_argument("--addr", default=f"127.0.0.1:{DEFAULT_PORT}")
    p.add_argument("--backend", default="gt", choices=harness.BACKENDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-connections", type=int, default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"viotrack: error: {exc}", file=sys.stderr)
        return 2
    return 0
