"""Scenario files: scripted bot sessions for the network simulator.

A scenario is a JSON document:

    {"name": "...", "bots": [{"name": "alice", "presence_hz": 0, "script": [...]}]}

Script entries are actions with an optional absolute virtual time "t" (ms,
non-decreasing per bot). Without "t" an action runs when the previous one
completes; "wait" and "move" advance the bot's cursor by their duration.

Element ids in scripts may be UUIDs or short symbolic names; symbolic names
map to stable UUIDs (uuid5 under a fixed namespace) so replays and the
resulting models are reproducible byte-for-byte.
"""

from __future__ import annotations

import base64
import uuid
from dataclasses import dataclass, field
from typing import Any, Optional

from .model import ModelEvent, Pose, event_from_jsonable, pose_from_jsonable

SCENARIO_ID_NAMESPACE = uuid.UUID("6c5d7f3a-9d0e-4b2a-8f67-5a3b1c2d4e90")


class ScenarioInvalid(Exception):
    pass


def element_id(ref: str) -> uuid.UUID:
    """Resolve a script element reference: UUID text or a symbolic name."""
    try:
        return uuid.UUID(ref)
    except (ValueError, AttributeError, TypeError):
        return uuid.uuid5(SCENARIO_ID_NAMESPACE, ref)


@dataclass(frozen=True)
class Action:
    op: str
    at_ms: float  # resolved absolute virtual time
    event: Optional[ModelEvent] = None  # submit
    object: Optional[uuid.UUID] = None  # grab/move/release
    pose: Optional[Pose] = None  # move target, release final pose, teleport controller
    duration_ms: float = 0.0  # move
    rate_hz: float = 20.0  # move packet rate
    data: bytes = b""  # speak
    max_range: float = 20.0  # teleport


@dataclass(frozen=True)
class BotScript:
    name: str
    presence_hz: float
    actions: tuple[Action, ...]
    end_ms: float


@dataclass(frozen=True)
class Scenario:
    name: str
    bots: tuple[BotScript, ...]

    @property
    def end_ms(self) -> float:
        return max((b.end_ms for b in self.bots), default=0.0)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ScenarioInvalid(msg)


def _num(obj: dict, key: str, default: Optional[float] = None, minimum: float = 0.0) -> float:
    v = obj.get(key, default)
    _require(v is not None, f"missing field '{key}'")
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), f"field '{key}' must be a number")
    _require(v >= minimum, f"field '{key}' must be >= {minimum}")
    return float(v)


def _resolve_event(raw: Any) -> ModelEvent:
    _require(isinstance(raw, dict), "submit 'event' must be an object")
    mapped = dict(raw)
    for key in ("id", "source", "target"):
        if key in mapped:
            _require(isinstance(mapped[key], str), f"event field '{key}' must be a string")
            mapped[key] = str(element_id(mapped[key]))
    try:
        return event_from_jsonable(mapped)
    except ValueError as exc:
        raise ScenarioInvalid(f"bad event: {exc}") from exc


def _parse_pose(raw: Any, what: str) -> Pose:
    try:
        return pose_from_jsonable(raw)
    except ValueError as exc:
        raise ScenarioInvalid(f"bad {what} pose: {exc}") from exc


_KNOWN_OPS = {"join", "leave", "wait", "submit", "grab", "move", "release", "speak", "teleport"}


def _parse_script(name: str, entries: Any) -> tuple[tuple[Action, ...], float]:
    _require(isinstance(entries, list), f"bot '{name}' script must be an array")
    actions: list[Action] = []
    cursor = 0.0
    last_explicit = -1.0
    last_object: Optional[uuid.UUID] = None
    for i, entry in enumerate(entries):
        _require(isinstance(entry, dict), f"bot '{name}' script[{i}] must be an object")
        op = entry.get("op")
        _require(op in _KNOWN_OPS, f"bot '{name}' script[{i}]: unknown op {op!r}")
        if "t" in entry:
            t = _num(entry, "t")
            _require(t >= last_explicit, f"bot '{name}' script[{i}]: timestamps must be non-decreasing")
            last_explicit = t
            cursor = max(cursor, t)
        at = cursor
        if op == "wait":
            cursor += _num(entry, "ms")
            continue
        if op in ("join", "leave"):
            actions.append(Action(op=op, at_ms=at))
        elif op == "submit":
            actions.append(Action(op=op, at_ms=at, event=_resolve_event(entry.get("event"))))
        elif op == "grab":
            obj = entry.get("object")
            _require(isinstance(obj, str), f"bot '{name}' script[{i}]: grab needs 'object'")
            last_object = element_id(obj)
            actions.append(Action(op=op, at_ms=at, object=last_object))
        elif op == "move":
            obj = entry.get("object")
            target = last_object if obj is None else element_id(obj)
            _require(target is not None, f"bot '{name}' script[{i}]: move without a prior grab")
            duration = _num(entry, "duration_ms", default=500.0, minimum=0.0)
            rate = _num(entry, "rate_hz", default=20.0, minimum=0.001)
            actions.append(
                Action(
                    op=op,
                    at_ms=at,
                    object=target,
                    pose=_parse_pose(entry.get("to"), "move target"),
                    duration_ms=duration,
                    rate_hz=rate,
                )
            )
            cursor += duration
        elif op == "release":
            obj = entry.get("object")
            target = last_object if obj is None else element_id(obj)
            _require(target is not None, f"bot '{name}' script[{i}]: release without a prior grab")
            pose = _parse_pose(entry["pose"], "release") if "pose" in entry else None
            actions.append(Action(op=op, at_ms=at, object=target, pose=pose))
        elif op == "speak":
            raw = entry.get("data_b64")
            _require(isinstance(raw, str), f"bot '{name}' script[{i}]: speak needs 'data_b64'")
            try:
                data = base64.b64decode(raw, validate=True)
            except Exception as exc:
                raise ScenarioInvalid(f"bot '{name}' script[{i}]: bad base64: {exc}") from exc
            actions.append(Action(op=op, at_ms=at, data=data))
        elif op == "teleport":
            actions.append(
                Action(
                    op=op,
                    at_ms=at,
                    pose=_parse_pose(entry.get("controller"), "teleport controller"),
                    max_range=_num(entry, "max_range", default=20.0, minimum=0.001),
                )
            )
    return tuple(actions), cursor


def parse_bot_script(name: str, doc: Any) -> BotScript:
    """Parse a single-bot script document: either a JSON array of entries or
    an object {"script": [...], "presence_hz": n}."""
    if isinstance(doc, dict):
        entries = doc.get("script", [])
        presence_hz = _num(doc, "presence_hz", default=0.0)
    else:
        entries, presence_hz = doc, 0.0
    actions, cursor = _parse_script(name, entries)
    end = max([cursor] + [a.at_ms + a.duration_ms for a in actions]) if actions else cursor
    return BotScript(name=name, presence_hz=presence_hz, actions=actions, end_ms=end)


def parse_scenario(doc: Any) -> Scenario:
    _require(isinstance(doc, dict), "scenario must be a JSON object")
    bots_raw = doc.get("bots")
    _require(isinstance(bots_raw, list) and bots_raw, "scenario needs a non-empty 'bots' array")
    name = doc.get("name", "scenario")
    _require(isinstance(name, str), "'name' must be a string")
    bots: list[BotScript] = []
    seen = set()
    for raw in bots_raw:
        _require(isinstance(raw, dict), "each bot must be an object")
        bot_name = raw.get("name")
        _require(isinstance(bot_name, str) and bot_name, "each bot needs a 'name'")
        _require(bot_name not in seen, f"duplicate bot name {bot_name!r}")
        seen.add(bot_name)
        presence_hz = _num(raw, "presence_hz", default=0.0)
        actions, cursor = _parse_script(bot_name, raw.get("script", []))
        end = max([cursor] + [a.at_ms + a.duration_ms for a in actions]) if actions else cursor
        bots.append(
            BotScript(name=bot_name, presence_hz=presence_hz, actions=actions, end_ms=end)
        )
    return Scenario(name=name, bots=tuple(bots))
