"""Authoritative session host.

One session is one logical serial event loop: every handler below must be
invoked in a single total order (that order IS the conflict resolution), and
each returns the full list of (recipient, frame) outputs so any transport --
the in-process simulator or the WebSocket service -- can deliver them while
preserving per-connection FIFO.
"""

from __future__ import annotations

import logging
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import canonical
from .model import (
    ClassModel,
    CommitPose,
    DeleteClass,
    ElementId,
    ErrorCode,
    ModelError,
    ModelEvent,
    Pose,
    SequencedEvent,
    SessionId,
    UserId,
    apply_event,
    text_ok,
)
from .wire import (
    ControlMessage,
    EventBroadcast,
    EventSubmit,
    Frame,
    GrabDeny,
    GrabGrant,
    GrabRequest,
    Join,
    Leave,
    MovementPacket,
    Nack,
    PeerJoined,
    PeerLeft,
    PresencePacket,
    Release,
    VoiceFrame,
    Welcome,
    fresher,
)

logger = logging.getLogger("modelsync.server")

Outputs = list[tuple[UserId, Frame]]


@dataclass
class ServerConfig:
    presence_rate_limit: float = 20.0  # packets/second per user
    movement_rate_limit: float = 20.0  # packets/second per owned object
    max_members: int = 16

    def __post_init__(self) -> None:
        if self.presence_rate_limit <= 0 or self.movement_rate_limit <= 0 or self.max_members <= 0:
            raise ValueError("ServerConfig values must be positive")


@dataclass
class MemberInfo:
    display_name: str
    last_presence: Optional[PresencePacket] = None


@dataclass
class SessionState:
    session: SessionId
    model: ClassModel = field(default_factory=ClassModel.empty)
    next_seq: int = 1
    event_log: list[SequencedEvent] = field(default_factory=list)
    ownership: dict[ElementId, UserId] = field(default_factory=dict)
    members: dict[UserId, MemberInfo] = field(default_factory=dict)
    movement_seq: dict[ElementId, Optional[int]] = field(default_factory=dict)


@dataclass
class ServerMetrics:
    joins: int = 0
    leaves: int = 0
    events_broadcast: int = 0
    nacks: dict[str, int] = field(default_factory=dict)
    movement_received: int = 0
    movement_forwarded: int = 0
    movement_dropped: dict[str, int] = field(
        default_factory=lambda: {"not_owner": 0, "stale": 0, "rate_limited": 0}
    )
    presence_received: int = 0
    presence_forwarded: int = 0
    presence_dropped: dict[str, int] = field(
        default_factory=lambda: {"not_owner": 0, "stale": 0, "rate_limited": 0}
    )
    voice_forwarded: int = 0

    def as_jsonable(self) -> dict:
        return {
            "joins": self.joins,
            "leaves": self.leaves,
            "events_broadcast": self.events_broadcast,
            "nacks": dict(self.nacks),
            "movement": {
                "received": self.movement_received,
                "forwarded": self.movement_forwarded,
                "dropped": dict(self.movement_dropped),
            },
            "presence": {
                "received": self.presence_received,
                "forwarded": self.presence_forwarded,
                "dropped": dict(self.presence_dropped),
            },
            "voice_forwarded": self.voice_forwarded,
        }


@dataclass
class _Bucket:
    tokens: float
    last_ms: float


class SessionServer:
    """Reference representation plus the handlers that mutate it."""

    def __init__(
        self,
        config: Optional[ServerConfig] = None,
        session_id: Optional[SessionId] = None,
        id_factory: Optional[Callable[[], uuid.UUID]] = None,
    ):
        self.config = config or ServerConfig()
        self._new_id = id_factory or uuid.uuid4
        self.state = SessionState(session=session_id or self._new_id())
        self.metrics = ServerMetrics()
        self.transient_poses: dict[ElementId, Pose] = {}
        self._presence_buckets: dict[UserId, _Bucket] = {}
        self._movement_buckets: dict[ElementId, _Bucket] = {}

    # --- membership ---------------------------------------------------------

    def handle_join(self, display_name: str) -> tuple[Optional[UserId], Frame, Outputs]:
        """Returns (user id or None when rejected, reply to the joining
        connection, outputs to existing members)."""
        st = self.state
        if len(st.members) >= self.config.max_members:
            self._log("join_rejected", reason=ErrorCode.SESSION_FULL.value)
            return None, Nack(reason=ErrorCode.SESSION_FULL.value), []
        if not text_ok(display_name, 64, allow_empty=False):
            return None, Nack(reason=ErrorCode.INVALID_TEXT.value), []
        user = self._new_id()
        others = list(st.members)
        st.members[user] = MemberInfo(display_name=display_name)
        self.metrics.joins += 1
        self._log("join", user=str(user), display_name=display_name, members=len(st.members))
        welcome = Welcome(
            user_id=user,
            snapshot_session=st.session,
            snapshot_model=st.model,
            last_seq=st.next_seq - 1,
            members={u: m.display_name for u, m in st.members.items()},
            ownership=dict(st.ownership),
        )
        return user, welcome, [(peer, PeerJoined(user_id=user, display_name=display_name)) for peer in others]

    def handle_disconnect(self, user: UserId) -> Outputs:
        """Release everything the user held (durably, at the last transient
        pose), then announce the departure."""
        st = self.state
        if user not in st.members:
            return []
        abandoned = sorted((e for e, owner in st.ownership.items() if owner == user), key=str)
        for element in abandoned:
            del st.ownership[element]
        del st.members[user]
        self._presence_buckets.pop(user, None)
        self.metrics.leaves += 1
        outputs: Outputs = []
        for element in abandoned:
            pose = self.transient_poses.get(element)
            if pose is None:
                pose = st.model.classes[element].pose
            outputs.extend(self._sequence(user, CommitPose(id=element, pose=pose), client_tag=None))
        outputs.extend((peer, PeerLeft(user_id=user)) for peer in st.members)
        self._log("leave", user=str(user), abandoned=len(abandoned), members=len(st.members))
        return outputs

    # --- reliable channel -----------------------------------------------------

    def handle_control(self, sender: UserId, msg: ControlMessage) -> Outputs:
        if sender not in self.state.members:
            return []
        if isinstance(msg, EventSubmit):
            return self._handle_event(sender, msg)
        if isinstance(msg, GrabRequest):
            return self._handle_grab(sender, msg.object)
        if isinstance(msg, Release):
            return self._handle_release(sender, msg)
        if isinstance(msg, VoiceFrame):
            return self._handle_voice(sender, msg)
        if isinstance(msg, (Join, Leave)):
            return []  # join/leave are transport-level; nothing to do here
        self._log("ignored_message", sender=str(sender), type=type(msg).__name__)
        return []

    def _handle_event(self, sender: UserId, submit: EventSubmit) -> Outputs:
        ev = submit.event
        if isinstance(ev, CommitPose) and self.state.ownership.get(ev.id) != sender:
            return self._nack(sender, ErrorCode.NOT_OWNER, submit.client_tag)
        try:
            return self._sequence(sender, ev, client_tag=submit.client_tag)
        except ModelError as err:
            return self._nack(sender, err.code, submit.client_tag)

    def _sequence(self, actor: UserId, ev: ModelEvent, client_tag: Optional[int]) -> Outputs:
        """Validate against the reference model, assign the next seq, apply,
        and broadcast to every member (the submitter's copy carries its tag).

        Raises ModelError without consuming a seq when validation fails.
        """
        st = self.state
        new_model = apply_event(st.model, ev)  # may raise
        seq = st.next_seq
        st.next_seq += 1
        st.model = new_model
        st.event_log.append(SequencedEvent(seq=seq, actor=actor, event=ev))
        if isinstance(ev, (CommitPose, DeleteClass)):
            # Any sequenced CommitPose ends ownership of its subject; deletes
            # cascade the ownership/streaming state as well.
            st.ownership.pop(ev.id, None)
            st.movement_seq.pop(ev.id, None)
            self.transient_poses.pop(ev.id, None)
            self._movement_buckets.pop(ev.id, None)
        self.metrics.events_broadcast += 1
        self._log("event", seq=seq, actor=str(actor), op=type(ev).__name__)
        return [
            (member, EventBroadcast(seq=seq, actor=actor, event=ev,
                                    client_tag=client_tag if member == actor else None))
            for member in st.members
        ]

    def _handle_grab(self, sender: UserId, element: ElementId) -> Outputs:
        st = self.state
        if element not in st.model.classes:
            return self._nack(sender, ErrorCode.UNKNOWN_ELEMENT, None)
        owner = st.ownership.get(element)
        if owner is not None:
            self._log("grab_denied", user=str(sender), object=str(element), owner=str(owner))
            return [(sender, GrabDeny(object=element, owner=owner))]
        st.ownership[element] = sender
        st.movement_seq[element] = None  # fresh epoch for the new owner
        self._movement_buckets.pop(element, None)
        self.transient_poses[element] = st.model.classes[element].pose
        self._log("grab", user=str(sender), object=str(element))
        return [(member, GrabGrant(object=element, owner=sender)) for member in st.members]

    def _handle_release(self, sender: UserId, msg: Release) -> Outputs:
        if self.state.ownership.get(msg.object) != sender:
            return self._nack(sender, ErrorCode.NOT_OWNER, None)
        # Ownership implies existence, so this cannot raise.
        return self._sequence(sender, CommitPose(id=msg.object, pose=msg.final_pose), client_tag=None)

    def _handle_voice(self, sender: UserId, frame: VoiceFrame) -> Outputs:
        tagged = VoiceFrame(data=frame.data, sender=sender)
        outputs = [(peer, tagged) for peer in self.state.members if peer != sender]
        self.metrics.voice_forwarded += len(outputs)
        return outputs  # relayed bit-identically, never echoed, never logged

    def _nack(self, sender: UserId, code: ErrorCode, client_tag: Optional[int]) -> Outputs:
        self.metrics.nacks[code.value] = self.metrics.nacks.get(code.value, 0) + 1
        self._log("nack", user=str(sender), reason=code.value)
        return [(sender, Nack(reason=code.value, client_tag=client_tag))]

    # --- lossy channel ----------------------------------------------------------

    def handle_movement(self, sender: UserId, packet: MovementPacket, now_ms: float) -> Outputs:
        """Forward iff the sender owns the subject, the packet is fresh, and
        the per-object rate budget allows it; drops are silent but counted."""
        st = self.state
        self.metrics.movement_received += 1
        if st.ownership.get(packet.subject) != sender:
            return self._drop("movement", "not_owner", sender)
        if not fresher(st.movement_seq.get(packet.subject), packet.seq):
            return self._drop("movement", "stale", sender)
        if not _take(self._movement_buckets, packet.subject, self.config.movement_rate_limit, now_ms):
            return self._drop("movement", "rate_limited", sender)
        st.movement_seq[packet.subject] = packet.seq
        self.transient_poses[packet.subject] = packet.pose
        self.metrics.movement_forwarded += 1
        return [(peer, packet) for peer in st.members if peer != sender]

    def handle_presence(self, sender: UserId, packet: PresencePacket, now_ms: float) -> Outputs:
        st = self.state
        self.metrics.presence_received += 1
        member = st.members.get(sender)
        if member is None or packet.user != sender:
            return self._drop("presence", "not_owner", sender)
        last = member.last_presence.seq if member.last_presence is not None else None
        if not fresher(last, packet.seq):
            return self._drop("presence", "stale", sender)
        if not _take(self._presence_buckets, sender, self.config.presence_rate_limit, now_ms):
            return self._drop("presence", "rate_limited", sender)
        member.last_presence = packet
        self.metrics.presence_forwarded += 1
        return [(peer, packet) for peer in st.members if peer != sender]

    def _drop(self, channel: str, cause: str, sender: UserId) -> Outputs:
        if channel == "movement":
            self.metrics.movement_dropped[cause] += 1
        else:
            self.metrics.presence_dropped[cause] += 1
        self._log("drop", channel=channel, cause=cause, user=str(sender))
        return []

    # --- misc ----------------------------------------------------------------------

    def _log(self, kind: str, **fields: object) -> None:
        if logger.isEnabledFor(logging.INFO):
            logger.info(canonical.dumps({"at": kind, "session": str(self.state.session), **fields}))


def _take(buckets: dict, key, rate: float, now_ms: float) -> bool:
    """Token bucket with one second of burst capacity."""
    cap = max(1.0, rate)
    b = buckets.get(key)
    if b is None:
        buckets[key] = _Bucket(tokens=cap - 1.0, last_ms=now_ms)
        return True
    b.tokens = min(cap, b.tokens + (now_ms - b.last_ms) * rate / 1000.0)
    b.last_ms = now_ms
    if b.tokens >= 1.0:
        b.tokens -= 1.0
        return True
    return False
