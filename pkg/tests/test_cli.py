"""CLI subcommands, exit codes, and a live server round-trip."""

from __future__ import annotations

import asyncio
import json
import socket
import threading
import time
from pathlib import Path

import pytest

from modelsync.cli import EXIT_CONNECTION, EXIT_FORMAT, EXIT_OK, EXIT_USAGE, main
from modelsync.persistence import load_snapshot
from modelsync.scenario import element_id

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def test_sim_subcommand_writes_report(capsys, tmp_path):
    rc = main([
        "sim", "--scenario", str(SCENARIOS / "five_class_build.json"),
        "--latency", "50", "--jitter", "20", "--loss", "0.1", "--seed", "3",
    ])
    assert rc == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["converged"] is True
    assert report["events_broadcast"] > 0


def test_sim_determinism_via_cli(capsys):
    args = ["sim", "--scenario", str(SCENARIOS / "five_class_build.json"), "--seed", "9"]
    assert main(args) == EXIT_OK
    first = capsys.readouterr().out
    assert main(args) == EXIT_OK
    second = capsys.readouterr().out
    assert first == second


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["sim"])  # missing required --scenario
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == EXIT_USAGE


def test_format_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    assert main(["sim", "--scenario", str(bad)]) == EXIT_FORMAT
    missing = tmp_path / "missing.json"
    assert main(["export", "--snapshot", str(missing)]) == EXIT_FORMAT
    notsnap = tmp_path / "notsnap.json"
    notsnap.write_text('{"schema_version": 9}')
    assert main(["export", "--snapshot", str(notsnap)]) == EXIT_FORMAT


def test_out_of_range_flag_is_usage_error(capsys):
    rc = main(["sim", "--scenario", str(SCENARIOS / "five_class_build.json"), "--loss", "1.5"])
    assert rc == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_connection_error_exit_code(tmp_path):
    script = tmp_path / "script.json"
    script.write_text('[{"op": "join"}]')
    # nothing listens on this port
    rc = main(["bot", "--server", "ws://127.0.0.1:9", "--script", str(script), "--name", "ghost"])
    assert rc == EXIT_CONNECTION
    rc = main(["snapshot", "--server", "ws://127.0.0.1:9", "--out", str(tmp_path / "s.json")])
    assert rc == EXIT_CONNECTION


def _free_port() -> int:
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


@pytest.fixture(scope="module")
def live_server():
    import uvicorn

    from modelsync.server import ServerConfig
    from modelsync.service.app import create_app

    port = _free_port()
    config = uvicorn.Config(
        create_app(ServerConfig()), host="127.0.0.1", port=port, log_level="warning"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("uvicorn did not start")
        time.sleep(0.02)
    yield f"ws://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def test_live_bot_and_snapshot_round_trip(live_server, tmp_path, capsys):
    script = tmp_path / "builder.json"
    script.write_text(json.dumps({
        "script": [
            {"t": 0, "op": "join"},
            {"t": 50, "op": "submit", "event": {
                "op": "CreateClass", "id": "live-box", "name": "LiveBox",
                "pose": {"position": {"x": 1, "y": 0.5, "z": 2}, "orientation": {"x": 0, "y": 0, "z": 0, "w": 1}},
            }},
            {"t": 150, "op": "grab", "object": "live-box"},
            {"t": 400, "op": "move", "object": "live-box",
             "to": {"position": {"x": 2, "y": 0.5, "z": 3}, "orientation": {"x": 0, "y": 0, "z": 0, "w": 1}},
             "duration_ms": 200, "rate_hz": 20},
            {"t": 700, "op": "release", "object": "live-box",
             "pose": {"position": {"x": 2, "y": 0.5, "z": 3}, "orientation": {"x": 0, "y": 0, "z": 0, "w": 1}}},
        ],
    }))
    rc = main(["bot", "--server", live_server, "--script", str(script), "--name", "builder"])
    assert rc == EXIT_OK

    out = tmp_path / "snap.json"
    rc = main(["snapshot", "--server", live_server, "--out", str(out)])
    assert rc == EXIT_OK
    doc = load_snapshot(out.read_bytes())
    box = doc.model.classes[element_id("live-box")]
    assert box.name == "LiveBox"
    assert (box.pose.position.x, box.pose.position.z) == (2.0, 3.0)  # release pose committed

    rc = main(["export", "--snapshot", str(out), "--format", "plantuml"])
    assert rc == EXIT_OK
    assert "class LiveBox" in capsys.readouterr().out
