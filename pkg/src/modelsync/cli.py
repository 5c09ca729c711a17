"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 format error, 3 connection error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from typing import Optional

from .persistence import FormatError, export_plantuml, load_snapshot, snapshot_to_bytes
from .scenario import ScenarioInvalid, parse_scenario
from .server import ServerConfig
from .simulator import NetConfig, report_bytes, run

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_CONNECTION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="modelsync", description="Collaborative diagram session engine")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    serve = sub.add_parser("serve", help="run the session server")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--max-members", type=int, default=16)
    serve.add_argument("--rate-limit", type=float, default=20.0, help="movement/presence packets per second")

    bot = sub.add_parser("bot", help="run a scripted bot against a live server")
    bot.add_argument("--server", required=True, help="server URL, e.g. ws://127.0.0.1:8765")
    bot.add_argument("--script", required=True, help="script file (JSON)")
    bot.add_argument("--name", required=True)

    sim = sub.add_parser("sim", help="run a scenario in the deterministic simulator")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--latency", type=float, default=0.0, help="base latency in ms")
    sim.add_argument("--jitter", type=float, default=0.0, help="uniform +/- jitter in ms")
    sim.add_argument("--loss", type=float, default=0.0, help="movement/presence loss probability")
    sim.add_argument("--seed", type=int, default=0)

    export = sub.add_parser("export", help="export a snapshot file")
    export.add_argument("--snapshot", required=True)
    export.add_argument("--format", choices=["plantuml", "json"], default="plantuml")

    snap = sub.add_parser("snapshot", help="capture a live server's snapshot")
    snap.add_argument("--server", required=True)
    snap.add_argument("--out", required=True)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "bot":
            return _cmd_bot(args)
        if args.command == "sim":
            return _cmd_sim(args)
        if args.command == "export":
            return _cmd_export(args)
        if args.command == "snapshot":
            return _cmd_snapshot(args)
    except (FormatError, ScenarioInvalid, json.JSONDecodeError) as err:
        sys.stderr.write(f"format error: {err}\n")
        return EXIT_FORMAT
    except FileNotFoundError as err:
        sys.stderr.write(f"format error: {err}\n")
        return EXIT_FORMAT
    except ValueError as err:  # out-of-range flag values (loss, rates, ...)
        sys.stderr.write(f"usage error: {err}\n")
        return EXIT_USAGE
    except (ConnectionError, OSError, asyncio.TimeoutError) as err:
        sys.stderr.write(f"connection error: {err}\n")
        return EXIT_CONNECTION
    return EXIT_USAGE


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    config = ServerConfig(
        presence_rate_limit=args.rate_limit,
        movement_rate_limit=args.rate_limit,
        max_members=args.max_members,
    )
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def _load_json(path: str):
    with open(path, "rb") as fh:
        return json.loads(fh.read().decode("utf-8"))


def _cmd_bot(args: argparse.Namespace) -> int:
    from .livebot import run_script
    from .scenario import parse_bot_script

    script = parse_bot_script(args.name, _load_json(args.script))
    try:
        asyncio.run(run_script(args.server, script))
    except Exception as err:  # connection-layer failures from the ws stack
        if isinstance(err, (FormatError, ScenarioInvalid)):
            raise
        sys.stderr.write(f"connection error: {err}\n")
        return EXIT_CONNECTION
    return EXIT_OK


def _cmd_sim(args: argparse.Namespace) -> int:
    scenario = parse_scenario(_load_json(args.scenario))
    net = NetConfig(
        base_latency_ms=args.latency,
        jitter_ms=args.jitter,
        movement_loss_prob=args.loss,
        seed=args.seed,
    )
    report = run(scenario, net)
    sys.stdout.write(report_bytes(report).decode("utf-8") + "\n")
    return EXIT_OK


def _cmd_export(args: argparse.Namespace) -> int:
    with open(args.snapshot, "rb") as fh:
        doc = load_snapshot(fh.read())
    if args.format == "plantuml":
        sys.stdout.write(export_plantuml(doc.model))
    else:
        sys.stdout.write(snapshot_to_bytes(doc).decode("utf-8") + "\n")
    return EXIT_OK


def _cmd_snapshot(args: argparse.Namespace) -> int:
    from .livebot import fetch_snapshot

    try:
        data = asyncio.run(fetch_snapshot(args.server))
    except Exception as err:
        sys.stderr.write(f"connection error: {err}\n")
        return EXIT_CONNECTION
    with open(args.out, "wb") as fh:
        fh.write(data)
    sys.stderr.write(f"snapshot written to {args.out}\n")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
