"""Client-side session state: committed replica, optimistic overlay, live poses.

The committed model is exclusively a fold of server-ordered broadcasts; local
edits live in a pending FIFO that is replayed on top of committed state for
display only and drained by ack (echoed broadcast) or nack. A replica is
single-threaded by contract: one owner context mutates it and calls view().
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Optional, Union

from .model import (
    ClassModel,
    ClassNode,
    CommitPose,
    DeleteClass,
    ElementId,
    ModelError,
    ModelEvent,
    Pose,
    UserId,
    apply_event,
    event_subject,
)
from .wire import (
    ControlMessage,
    EventBroadcast,
    EventSubmit,
    GestureState,
    GrabDeny,
    GrabGrant,
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

# Watermark sentinel: movement for a subject is blocked between its CommitPose
# and the next GrabGrant (the committed pose is authoritative in that window).
_BLOCKED = object()


class SequenceGap(Exception):
    """Broadcast seq skipped ahead; the replica must resync via rejoin."""


class LocalValidationFailed(Exception):
    def __init__(self, err: ModelError):
        self.err = err
        super().__init__(str(err))


@dataclass
class PeerState:
    display_name: str
    presence: Optional[PresencePacket] = None


@dataclass
class PendingEntry:
    client_tag: int
    event: ModelEvent


@dataclass(frozen=True)
class AvatarView:
    user: UserId
    display_name: str
    head: Optional[Pose]
    left_hand: Optional[Pose]
    right_hand: Optional[Pose]
    left_gesture: GestureState
    right_gesture: GestureState


@dataclass(frozen=True)
class RenderView:
    """Pure projection of a replica; holds no state of its own."""

    model: ClassModel  # committed + pending overlay, live poses applied
    pending_elements: frozenset[ElementId]
    avatars: tuple[AvatarView, ...]
    held_by: dict[ElementId, UserId]


class ClientReplica:
    def __init__(self, me: UserId, display_name: str = ""):
        self.me = me
        self.display_name = display_name
        self.committed = ClassModel.empty()
        self.last_applied_seq = 0
        self.pending: list[PendingEntry] = []
        # element -> (freshness watermark: int | None | _BLOCKED, live pose)
        self.live_poses: dict[ElementId, tuple[object, Optional[Pose]]] = {}
        self.peers: dict[UserId, PeerState] = {}
        self.held: set[ElementId] = set()
        self.owners: dict[ElementId, UserId] = {}
        self.apply_errors: list[ModelError] = []
        self.voice_received: list[tuple[UserId, bytes]] = []
        self.denies: list[GrabDeny] = []
        self._next_tag = 1
        self._movement_seq_out: dict[ElementId, int] = {}  # never reset; per-subject monotone

    # --- outgoing ---------------------------------------------------------

    def submit_local(self, event: ModelEvent) -> EventSubmit:
        """Queue a local edit and produce its EventSubmit.

        Validates best-effort against the effective view; committed state is
        untouched (optimism lives only in the view).
        """
        try:
            apply_event(self._overlay_model(), event)
        except ModelError as err:
            raise LocalValidationFailed(err) from err
        tag = self._next_tag
        self._next_tag += 1
        self.pending.append(PendingEntry(client_tag=tag, event=event))
        return EventSubmit(client_tag=tag, event=event)

    def next_movement(self, subject: ElementId, pose: Pose) -> MovementPacket:
        """Build the next movement packet for a held subject."""
        seq = self._movement_seq_out.get(subject, 0) + 1
        self._movement_seq_out[subject] = seq
        return MovementPacket(subject=subject, seq=seq, pose=pose)

    def make_release(self, subject: ElementId, final_pose: Pose) -> Release:
        """Build a Release and optimistically drop the held flag."""
        self.held.discard(subject)
        return Release(object=subject, final_pose=final_pose)

    # --- incoming ---------------------------------------------------------

    def on_control(self, msg: ControlMessage) -> None:
        if isinstance(msg, Welcome):
            self._on_welcome(msg)
        elif isinstance(msg, EventBroadcast):
            self.on_broadcast(msg)
        elif isinstance(msg, Nack):
            self.on_nack(msg)
        elif isinstance(msg, GrabGrant):
            self.owners[msg.object] = msg.owner
            self.live_poses[msg.object] = (None, None)  # fresh watermark for the new epoch
            if msg.owner == self.me:
                self.held.add(msg.object)
        elif isinstance(msg, GrabDeny):
            self.denies.append(msg)
        elif isinstance(msg, PeerJoined):
            self.peers[msg.user_id] = PeerState(display_name=msg.display_name)
        elif isinstance(msg, PeerLeft):
            self.peers.pop(msg.user_id, None)
            self.owners = {e: u for e, u in self.owners.items() if u != msg.user_id}
        elif isinstance(msg, VoiceFrame):
            if msg.sender is not None:
                self.voice_received.append((msg.sender, msg.data))
        # Join/EventSubmit/GrabRequest/Release/Leave are client->server only.

    def _on_welcome(self, w: Welcome) -> None:
        self.me = w.user_id
        self.committed = w.snapshot_model
        self.last_applied_seq = w.last_seq
        self.pending.clear()
        self.live_poses.clear()
        self.held = {e for e, u in w.ownership.items() if u == self.me}
        self.owners = dict(w.ownership)
        self.peers = {u: PeerState(display_name=n) for u, n in w.members.items() if u != w.user_id}

    def on_broadcast(self, b: EventBroadcast) -> None:
        if b.seq != self.last_applied_seq + 1:
            raise SequenceGap(f"expected {self.last_applied_seq + 1}, got {b.seq}")
        try:
            self.committed = apply_event(self.committed, b.event)
        except ModelError as err:
            self.apply_errors.append(err)  # recorded, not fatal
        self.last_applied_seq = b.seq
        if b.client_tag is not None and b.actor == self.me:
            self._drop_pending(b.client_tag)
        if isinstance(b.event, CommitPose):
            # Committed pose is authoritative again: clear the live pose and
            # block stragglers until the next grant opens a new epoch.
            self.live_poses[b.event.id] = (_BLOCKED, None)
            self.owners.pop(b.event.id, None)
            self.held.discard(b.event.id)
        elif isinstance(b.event, DeleteClass):
            self.live_poses.pop(b.event.id, None)
            self.owners.pop(b.event.id, None)
            self.held.discard(b.event.id)

    def on_nack(self, n: Nack) -> None:
        if n.client_tag is not None:
            self._drop_pending(n.client_tag)  # unknown tags are ignored

    def _drop_pending(self, tag: int) -> None:
        for i, entry in enumerate(self.pending):
            if entry.client_tag == tag:
                del self.pending[i]
                return

    def on_movement(self, packet: Union[MovementPacket, PresencePacket]) -> None:
        """Latest-state-wins application of a lossy-channel packet."""
        if isinstance(packet, MovementPacket):
            mark, _ = self.live_poses.get(packet.subject, (None, None))
            if mark is _BLOCKED:
                return
            if fresher(mark, packet.seq):
                self.live_poses[packet.subject] = (packet.seq, packet.pose)
        else:
            peer = self.peers.get(packet.user)
            if peer is None:
                peer = PeerState(display_name="")  # join race: entry auto-created
                self.peers[packet.user] = peer
            last = peer.presence.seq if peer.presence is not None else None
            if fresher(last, packet.seq):
                peer.presence = packet

    # --- view --------------------------------------------------------------

    def _overlay_model(self) -> ClassModel:
        model = self.committed
        for entry in self.pending:
            try:
                model = apply_event(model, entry.event)
            except ModelError:
                pass  # a racing remote edit invalidated it; ack/nack will settle it
        return model

    def view(self) -> RenderView:
        model = self._overlay_model()
        classes = dict(model.classes)
        for element, (_, pose) in self.live_poses.items():
            node = classes.get(element)
            if pose is not None and node is not None:
                classes[element] = _with_pose(node, pose)
        avatars = []
        for user, peer in sorted(self.peers.items(), key=lambda kv: str(kv[0])):
            p = peer.presence
            avatars.append(
                AvatarView(
                    user=user,
                    display_name=peer.display_name,
                    head=p.head if p else None,
                    left_hand=p.left_hand if p else None,
                    right_hand=p.right_hand if p else None,
                    left_gesture=p.left_gesture if p else GestureState.RELAXED,
                    right_gesture=p.right_gesture if p else GestureState.RELAXED,
                )
            )
        return RenderView(
            model=ClassModel(classes, dict(model.connectors)),
            pending_elements=frozenset(event_subject(e.event) for e in self.pending),
            avatars=tuple(avatars),
            held_by=dict(self.owners),
        )


def _with_pose(node: ClassNode, pose: Pose) -> ClassNode:
    return ClassNode(
        id=node.id,
        name=node.name,
        attributes=node.attributes,
        methods=node.methods,
        pose=pose,
        extent=node.extent,
    )
