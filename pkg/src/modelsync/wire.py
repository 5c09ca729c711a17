"""Bit-exact message encoding for the two synchronization channels.

Binary, little-endian, fixed layout for the high-rate lossy channel:

    movement (50 B):  magic 0x4D | kind 0x01 | subject 16 | seq u32 | pos 3*f32 | quat 4*f32
    presence (108 B): magic 0x4D | kind 0x02 | user 16    | seq u32 | head pose 28
                      | left pose 28 | right pose 28 | left gesture u8 | right gesture u8

Control messages (reliable channel) are a 0x45 magic byte followed by UTF-8
JSON with a "type" discriminator, rendered canonically so identical messages
are identical bytes. One encoded message = one transport frame.
"""

from __future__ import annotations

import base64
import math
import struct
import uuid
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Any, Optional, Union

from . import canonical
from .model import (
    ClassModel,
    ModelEvent,
    Pose,
    Quat,
    SessionId,
    UserId,
    Vec3,
    event_from_jsonable,
    event_to_jsonable,
    id_from_jsonable,
    id_to_jsonable,
    model_from_jsonable,
    model_to_jsonable,
    pose_from_jsonable,
    pose_to_jsonable,
    text_ok,
)

MAGIC_BINARY = 0x4D
MAGIC_CONTROL = 0x45
KIND_MOVEMENT = 0x01
KIND_PRESENCE = 0x02

MOVEMENT_SIZE = 50
PRESENCE_SIZE = 108

_MOVE = struct.Struct("<BB16sI3f4f")
_PRES = struct.Struct("<BB16sI7f7f7fBB")
assert _MOVE.size == MOVEMENT_SIZE and _PRES.size == PRESENCE_SIZE


class WireErrorKind(str, Enum):
    BAD_MAGIC = "BadMagic"
    BAD_KIND = "BadKind"
    BAD_LENGTH = "BadLength"
    NON_FINITE = "NonFinite"
    BAD_GESTURE = "BadGesture"
    MALFORMED_JSON = "MalformedJson"
    UNKNOWN_TYPE = "UnknownType"
    SCHEMA_VIOLATION = "SchemaViolation"


class WireError(Exception):
    def __init__(self, kind: WireErrorKind, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind.value}" + (f": {detail}" if detail else ""))


class GestureState(IntEnum):
    RELAXED = 0
    POINT = 1
    GRAB = 2
    THUMBS_UP = 3


@dataclass(frozen=True)
class MovementPacket:
    subject: uuid.UUID
    seq: int  # per-subject, per-owner monotone u32
    pose: Pose


@dataclass(frozen=True)
class PresencePacket:
    user: UserId
    seq: int
    head: Pose
    left_hand: Pose
    right_hand: Pose
    left_gesture: GestureState
    right_gesture: GestureState


def encode_movement(p: MovementPacket) -> bytes:
    pos, q = p.pose.position, p.pose.orientation
    return _MOVE.pack(
        MAGIC_BINARY, KIND_MOVEMENT, p.subject.bytes, p.seq,
        pos.x, pos.y, pos.z, q.x, q.y, q.z, q.w,
    )


def decode_movement(data: bytes) -> MovementPacket:
    if len(data) != MOVEMENT_SIZE:
        raise WireError(WireErrorKind.BAD_LENGTH, f"{len(data)} != {MOVEMENT_SIZE}")
    magic, kind, subject, seq, px, py, pz, qx, qy, qz, qw = _MOVE.unpack(data)
    if magic != MAGIC_BINARY:
        raise WireError(WireErrorKind.BAD_MAGIC, f"0x{magic:02X}")
    if kind != KIND_MOVEMENT:
        raise WireError(WireErrorKind.BAD_KIND, f"0x{kind:02X}")
    return MovementPacket(
        subject=uuid.UUID(bytes=subject),
        seq=seq,
        pose=_pose(px, py, pz, qx, qy, qz, qw),
    )


def encode_presence(p: PresencePacket) -> bytes:
    def flat(pose: Pose) -> tuple[float, ...]:
        return (
            pose.position.x, pose.position.y, pose.position.z,
            pose.orientation.x, pose.orientation.y, pose.orientation.z, pose.orientation.w,
        )

    return _PRES.pack(
        MAGIC_BINARY, KIND_PRESENCE, p.user.bytes, p.seq,
        *flat(p.head), *flat(p.left_hand), *flat(p.right_hand),
        int(p.left_gesture), int(p.right_gesture),
    )


def decode_presence(data: bytes) -> PresencePacket:
    if len(data) != PRESENCE_SIZE:
        raise WireError(WireErrorKind.BAD_LENGTH, f"{len(data)} != {PRESENCE_SIZE}")
    fields = _PRES.unpack(data)
    magic, kind, user, seq = fields[0], fields[1], fields[2], fields[3]
    if magic != MAGIC_BINARY:
        raise WireError(WireErrorKind.BAD_MAGIC, f"0x{magic:02X}")
    if kind != KIND_PRESENCE:
        raise WireError(WireErrorKind.BAD_KIND, f"0x{kind:02X}")
    lg, rg = fields[25], fields[26]
    for g in (lg, rg):
        if g not in (0, 1, 2, 3):
            raise WireError(WireErrorKind.BAD_GESTURE, str(g))
    poses = [_pose(*fields[4 + i * 7: 11 + i * 7]) for i in range(3)]
    return PresencePacket(
        user=uuid.UUID(bytes=user),
        seq=seq,
        head=poses[0],
        left_hand=poses[1],
        right_hand=poses[2],
        left_gesture=GestureState(lg),
        right_gesture=GestureState(rg),
    )


def _pose(px: float, py: float, pz: float, qx: float, qy: float, qz: float, qw: float) -> Pose:
    for v in (px, py, pz, qx, qy, qz, qw):
        if not math.isfinite(v):
            raise WireError(WireErrorKind.NON_FINITE)
    return Pose(Vec3(px, py, pz), Quat(qx, qy, qz, qw))


# --- control messages ---------------------------------------------------------


@dataclass(frozen=True)
class Join:
    display_name: str


@dataclass(frozen=True)
class Welcome:
    user_id: UserId
    snapshot_session: SessionId
    snapshot_model: ClassModel
    last_seq: int
    members: dict[UserId, str]  # user -> display_name
    ownership: dict[uuid.UUID, UserId]  # element -> owner


@dataclass(frozen=True)
class EventSubmit:
    client_tag: int
    event: ModelEvent


@dataclass(frozen=True)
class EventBroadcast:
    seq: int
    actor: UserId
    event: ModelEvent
    client_tag: Optional[int] = None  # present only on the submitter's copy


@dataclass(frozen=True)
class Nack:
    reason: str
    client_tag: Optional[int] = None


@dataclass(frozen=True)
class GrabRequest:
    object: uuid.UUID


@dataclass(frozen=True)
class GrabGrant:
    object: uuid.UUID
    owner: UserId


@dataclass(frozen=True)
class GrabDeny:
    object: uuid.UUID
    owner: UserId


@dataclass(frozen=True)
class Release:
    object: uuid.UUID
    final_pose: Pose


@dataclass(frozen=True)
class PeerJoined:
    user_id: UserId
    display_name: str


@dataclass(frozen=True)
class PeerLeft:
    user_id: UserId


@dataclass(frozen=True)
class VoiceFrame:
    data: bytes  # opaque codec payload, relayed verbatim
    sender: Optional[UserId] = None  # set by the server when forwarding


@dataclass(frozen=True)
class Leave:
    pass


ControlMessage = Union[
    Join, Welcome, EventSubmit, EventBroadcast, Nack,
    GrabRequest, GrabGrant, GrabDeny, Release,
    PeerJoined, PeerLeft, VoiceFrame, Leave,
]


def control_to_jsonable(m: ControlMessage) -> dict[str, Any]:
    if isinstance(m, Join):
        return {"type": "Join", "display_name": m.display_name}
    if isinstance(m, Welcome):
        return {
            "type": "Welcome",
            "user_id": id_to_jsonable(m.user_id),
            "snapshot": {
                "schema_version": 1,
                "session": id_to_jsonable(m.snapshot_session),
                "model": model_to_jsonable(m.snapshot_model),
                "last_seq": m.last_seq,
            },
            "last_seq": m.last_seq,
            "members": {id_to_jsonable(u): {"display_name": n} for u, n in m.members.items()},
            "ownership": {id_to_jsonable(e): id_to_jsonable(u) for e, u in m.ownership.items()},
        }
    if isinstance(m, EventSubmit):
        return {"type": "EventSubmit", "client_tag": m.client_tag, "event": event_to_jsonable(m.event)}
    if isinstance(m, EventBroadcast):
        out: dict[str, Any] = {
            "type": "EventBroadcast",
            "seq": m.seq,
            "actor": id_to_jsonable(m.actor),
            "event": event_to_jsonable(m.event),
        }
        if m.client_tag is not None:
            out["client_tag"] = m.client_tag
        return out
    if isinstance(m, Nack):
        out = {"type": "Nack", "reason": m.reason}
        if m.client_tag is not None:
            out["client_tag"] = m.client_tag
        return out
    if isinstance(m, GrabRequest):
        return {"type": "GrabRequest", "object": id_to_jsonable(m.object)}
    if isinstance(m, GrabGrant):
        return {"type": "GrabGrant", "object": id_to_jsonable(m.object), "owner": id_to_jsonable(m.owner)}
    if isinstance(m, GrabDeny):
        return {"type": "GrabDeny", "object": id_to_jsonable(m.object), "owner": id_to_jsonable(m.owner)}
    if isinstance(m, Release):
        return {"type": "Release", "object": id_to_jsonable(m.object), "final_pose": pose_to_jsonable(m.final_pose)}
    if isinstance(m, PeerJoined):
        return {"type": "PeerJoined", "user_id": id_to_jsonable(m.user_id), "display_name": m.display_name}
    if isinstance(m, PeerLeft):
        return {"type": "PeerLeft", "user_id": id_to_jsonable(m.user_id)}
    if isinstance(m, VoiceFrame):
        out = {"type": "VoiceFrame", "data": base64.b64encode(m.data).decode("ascii")}
        if m.sender is not None:
            out["sender"] = id_to_jsonable(m.sender)
        return out
    if isinstance(m, Leave):
        return {"type": "Leave"}
    raise TypeError(f"unknown control message {type(m).__name__}")


def encode_control(m: ControlMessage) -> bytes:
    return bytes([MAGIC_CONTROL]) + canonical.dumps_bytes(control_to_jsonable(m))


def decode_control(data: bytes) -> ControlMessage:
    if len(data) < 1 or data[0] != MAGIC_CONTROL:
        raise WireError(WireErrorKind.BAD_MAGIC)
    try:
        body = canonical.loads(data[1:])
    except (ValueError, UnicodeDecodeError) as exc:
        raise WireError(WireErrorKind.MALFORMED_JSON, str(exc)) from exc
    if not isinstance(body, dict):
        raise WireError(WireErrorKind.SCHEMA_VIOLATION, "body must be an object")
    mtype = body.get("type")
    parser = _CONTROL_PARSERS.get(mtype)
    if parser is None:
        raise WireError(WireErrorKind.UNKNOWN_TYPE, repr(mtype))
    try:
        return parser(body)
    except ValueError as exc:
        raise WireError(WireErrorKind.SCHEMA_VIOLATION, str(exc)) from exc


def _fields(body: dict[str, Any], *required: str, optional: tuple[str, ...] = ()) -> dict[str, Any]:
    allowed = {"type", *required, *optional}
    unknown = set(body) - allowed
    if unknown:
        raise ValueError(f"unexpected fields: {sorted(unknown)}")
    missing = [k for k in required if k not in body]
    if missing:
        raise ValueError(f"missing fields: {missing}")
    return body


def _u64(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{name} must be an integer")
    if not 0 <= value < 2**64:
        raise ValueError(f"{name} out of u64 range")
    return value


def _display_name(value: Any) -> str:
    if not isinstance(value, str) or not text_ok(value, 64, allow_empty=False):
        raise ValueError(f"bad display name {value!r}")
    return value


def _parse_join(body: dict[str, Any]) -> Join:
    b = _fields(body, "display_name")
    return Join(display_name=_display_name(b["display_name"]))


def _parse_welcome(body: dict[str, Any]) -> Welcome:
    b = _fields(body, "user_id", "snapshot", "last_seq", "members", "ownership")
    snap = b["snapshot"]
    if not isinstance(snap, dict):
        raise ValueError("snapshot must be an object")
    if set(snap) != {"schema_version", "session", "model", "last_seq"}:
        raise ValueError("bad snapshot fields")
    if snap["schema_version"] != 1:
        raise ValueError(f"unsupported snapshot schema_version {snap['schema_version']!r}")
    members_raw = b["members"]
    ownership_raw = b["ownership"]
    if not isinstance(members_raw, dict) or not isinstance(ownership_raw, dict):
        raise ValueError("members/ownership must be objects")
    members: dict[UserId, str] = {}
    for key, entry in members_raw.items():
        if not isinstance(entry, dict) or set(entry) != {"display_name"}:
            raise ValueError("bad member entry")
        members[id_from_jsonable(key)] = _display_name(entry["display_name"])
    return Welcome(
        user_id=id_from_jsonable(b["user_id"]),
        snapshot_session=id_from_jsonable(snap["session"]),
        snapshot_model=model_from_jsonable(snap["model"]),
        last_seq=_u64(b["last_seq"], "last_seq"),
        members=members,
        ownership={id_from_jsonable(k): id_from_jsonable(v) for k, v in ownership_raw.items()},
    )


def _parse_event_submit(body: dict[str, Any]) -> EventSubmit:
    b = _fields(body, "client_tag", "event")
    return EventSubmit(client_tag=_u64(b["client_tag"], "client_tag"), event=event_from_jsonable(b["event"]))


def _parse_event_broadcast(body: dict[str, Any]) -> EventBroadcast:
    b = _fields(body, "seq", "actor", "event", optional=("client_tag",))
    tag = b.get("client_tag")
    return EventBroadcast(
        seq=_u64(b["seq"], "seq"),
        actor=id_from_jsonable(b["actor"]),
        event=event_from_jsonable(b["event"]),
        client_tag=None if tag is None else _u64(tag, "client_tag"),
    )


def _parse_nack(body: dict[str, Any]) -> Nack:
    b = _fields(body, "reason", optional=("client_tag",))
    if not isinstance(b["reason"], str):
        raise ValueError("reason must be a string")
    tag = b.get("client_tag")
    return Nack(reason=b["reason"], client_tag=None if tag is None else _u64(tag, "client_tag"))


def _parse_release(body: dict[str, Any]) -> Release:
    b = _fields(body, "object", "final_pose")
    return Release(object=id_from_jsonable(b["object"]), final_pose=pose_from_jsonable(b["final_pose"]))


def _parse_voice(body: dict[str, Any]) -> VoiceFrame:
    b = _fields(body, "data", optional=("sender",))
    if not isinstance(b["data"], str):
        raise ValueError("data must be a base64 string")
    try:
        payload = base64.b64decode(b["data"], validate=True)
    except Exception as exc:
        raise ValueError(f"bad base64 payload: {exc}") from exc
    sender = b.get("sender")
    return VoiceFrame(data=payload, sender=None if sender is None else id_from_jsonable(sender))


_CONTROL_PARSERS = {
    "Join": _parse_join,
    "Welcome": _parse_welcome,
    "EventSubmit": _parse_event_submit,
    "EventBroadcast": _parse_event_broadcast,
    "Nack": _parse_nack,
    "GrabRequest": lambda b: GrabRequest(object=id_from_jsonable(_fields(b, "object")["object"])),
    "GrabGrant": lambda b: GrabGrant(
        object=id_from_jsonable(_fields(b, "object", "owner")["object"]),
        owner=id_from_jsonable(b["owner"]),
    ),
    "GrabDeny": lambda b: GrabDeny(
        object=id_from_jsonable(_fields(b, "object", "owner")["object"]),
        owner=id_from_jsonable(b["owner"]),
    ),
    "Release": _parse_release,
    "PeerJoined": lambda b: PeerJoined(
        user_id=id_from_jsonable(_fields(b, "user_id", "display_name")["user_id"]),
        display_name=_display_name(b["display_name"]),
    ),
    "PeerLeft": lambda b: PeerLeft(user_id=id_from_jsonable(_fields(b, "user_id")["user_id"])),
    "VoiceFrame": _parse_voice,
    "Leave": lambda b: (_fields(b), Leave())[1],
}


# --- generic frame dispatch -----------------------------------------------------

Frame = Union[MovementPacket, PresencePacket, ControlMessage]


def decode_frame(data: bytes) -> Frame:
    """Decode any transport frame by magic/kind."""
    if not data:
        raise WireError(WireErrorKind.BAD_LENGTH, "empty frame")
    if data[0] == MAGIC_CONTROL:
        return decode_control(data)
    if data[0] != MAGIC_BINARY:
        raise WireError(WireErrorKind.BAD_MAGIC, f"0x{data[0]:02X}")
    if len(data) < 2:
        raise WireError(WireErrorKind.BAD_LENGTH, "truncated frame")
    if data[1] == KIND_MOVEMENT:
        return decode_movement(data)
    if data[1] == KIND_PRESENCE:
        return decode_presence(data)
    raise WireError(WireErrorKind.BAD_KIND, f"0x{data[1]:02X}")


def encode_frame(frame: Frame) -> bytes:
    if isinstance(frame, MovementPacket):
        return encode_movement(frame)
    if isinstance(frame, PresencePacket):
        return encode_presence(frame)
    return encode_control(frame)


def fresher(last_seq: Optional[int], incoming_seq: int) -> bool:
    """Freshness filter: accept only a strictly newer sequence number.

    Plain integer comparison, no wraparound: a u32 per-subject counter would
    need >4e9 packets in one session to wrap, which is out of contract.
    """
    return last_seq is None or incoming_seq > last_seq
