"""Shared builders for the test suite: seeded random poses, models, messages."""

from __future__ import annotations

import math
import uuid
from random import Random

from modelsync.model import (
    ClassModel,
    CommitPose,
    ConnectorKind,
    CreateClass,
    CreateConnector,
    DeleteClass,
    DeleteConnector,
    ModelEvent,
    Pose,
    Quat,
    RenameClass,
    SequencedEvent,
    SetAttributes,
    SetMethods,
    Vec3,
    apply_event,
)
from modelsync.wire import (
    EventBroadcast,
    EventSubmit,
    GestureState,
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
)

WORDS = ["Vehicle", "Car", "Truck", "Engine", "Wheel", "Driver", "Route", "Depot", "Cargo", "Axle"]


def rng_uuid(rng: Random) -> uuid.UUID:
    return uuid.UUID(bytes=rng.getrandbits(128).to_bytes(16, "big"), version=4)


def rng_vec3(rng: Random, scale: float = 10.0) -> Vec3:
    return Vec3(rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale))


def rng_quat(rng: Random) -> Quat:
    x, y, z, w = (rng.gauss(0, 1) for _ in range(4))
    n = math.sqrt(x * x + y * y + z * z + w * w) or 1.0
    return Quat(x / n, y / n, z / n, w / n)


def rng_pose(rng: Random, scale: float = 10.0) -> Pose:
    return Pose(rng_vec3(rng, scale), rng_quat(rng))


def rng_name(rng: Random) -> str:
    return rng.choice(WORDS) + str(rng.randrange(1000))


def rng_movement(rng: Random) -> MovementPacket:
    return MovementPacket(subject=rng_uuid(rng), seq=rng.randrange(2**32), pose=rng_pose(rng))


def rng_presence(rng: Random) -> PresencePacket:
    return PresencePacket(
        user=rng_uuid(rng),
        seq=rng.randrange(2**32),
        head=rng_pose(rng),
        left_hand=rng_pose(rng),
        right_hand=rng_pose(rng),
        left_gesture=GestureState(rng.randrange(4)),
        right_gesture=GestureState(rng.randrange(4)),
    )


def rng_event(rng: Random, known_ids: list[uuid.UUID]) -> ModelEvent:
    """A random event; references known ids when any exist."""
    def pick() -> uuid.UUID:
        return rng.choice(known_ids) if known_ids else rng_uuid(rng)

    roll = rng.random()
    if roll < 0.35 or not known_ids:
        return CreateClass(id=rng_uuid(rng), name=rng_name(rng), pose=rng_pose(rng))
    if roll < 0.45:
        return DeleteClass(id=pick())
    if roll < 0.58:
        return RenameClass(id=pick(), name=rng_name(rng))
    if roll < 0.68:
        return SetAttributes(id=pick(), lines=tuple(f"+ f{i}: int" for i in range(rng.randrange(4))))
    if roll < 0.76:
        return SetMethods(id=pick(), lines=tuple(f"+ m{i}()" for i in range(rng.randrange(4))))
    if roll < 0.88:
        return CreateConnector(
            id=rng_uuid(rng),
            kind=rng.choice(list(ConnectorKind)),
            source=pick(),
            target=pick(),
        )
    if roll < 0.94:
        return DeleteConnector(id=pick())
    return CommitPose(id=pick(), pose=rng_pose(rng))


def rng_model(rng: Random, n_events: int = 30) -> ClassModel:
    """Build a model by replaying random events, skipping rejected ones."""
    model = ClassModel.empty()
    ids: list[uuid.UUID] = []
    for _ in range(n_events):
        ev = rng_event(rng, ids)
        try:
            model = apply_event(model, ev)
        except Exception:
            continue
        if isinstance(ev, (CreateClass, CreateConnector)):
            ids.append(ev.id)
    return model


def rng_control(rng: Random, max_tag: int = 2**63):
    """A random control message of a random variant.

    max_tag bounds client_tag values; interop fixtures for clients with
    double-precision JSON numbers pass 2**53.
    """
    roll = rng.randrange(13)
    if roll == 0:
        return Join(display_name=rng_name(rng))
    if roll == 1:
        return Welcome(
            user_id=rng_uuid(rng),
            snapshot_session=rng_uuid(rng),
            snapshot_model=rng_model(rng, n_events=rng.randrange(8)),
            last_seq=rng.randrange(1000),
            members={rng_uuid(rng): rng_name(rng) for _ in range(rng.randrange(4))},
            ownership={rng_uuid(rng): rng_uuid(rng) for _ in range(rng.randrange(3))},
        )
    if roll == 2:
        return EventSubmit(client_tag=rng.randrange(max_tag), event=rng_event(rng, []))
    if roll == 3:
        return EventBroadcast(
            seq=rng.randrange(1, 2**40),
            actor=rng_uuid(rng),
            event=rng_event(rng, []),
            client_tag=rng.randrange(max_tag) if rng.random() < 0.5 else None,
        )
    if roll == 4:
        return Nack(reason=rng.choice(["UnknownElement", "DuplicateId", "NotOwner"]),
                    client_tag=rng.randrange(max_tag) if rng.random() < 0.5 else None)
    if roll == 5:
        return GrabRequest(object=rng_uuid(rng))
    if roll == 6:
        return GrabGrant(object=rng_uuid(rng), owner=rng_uuid(rng))
    if roll == 7:
        return GrabDeny(object=rng_uuid(rng), owner=rng_uuid(rng))
    if roll == 8:
        return Release(object=rng_uuid(rng), final_pose=rng_pose(rng))
    if roll == 9:
        return PeerJoined(user_id=rng_uuid(rng), display_name=rng_name(rng))
    if roll == 10:
        return PeerLeft(user_id=rng_uuid(rng))
    if roll == 11:
        return VoiceFrame(
            data=bytes(rng.randrange(256) for _ in range(rng.randrange(64))),
            sender=rng_uuid(rng) if rng.random() < 0.5 else None,
        )
    return Leave()


def sequenced(events: list[ModelEvent], actor: uuid.UUID, start: int = 1) -> list[SequencedEvent]:
    return [SequencedEvent(seq=start + i, actor=actor, event=ev) for i, ev in enumerate(events)]
