"""Client replica: optimistic overlay, ack/nack, live poses, convergence."""

from __future__ import annotations

import uuid
from random import Random

import pytest

from modelsync.model import (
    CommitPose,
    CreateClass,
    IDENTITY_POSE,
    RenameClass,
    Vec3,
)
from modelsync.persistence import canonical_model_bytes
from modelsync.replica import ClientReplica, LocalValidationFailed, SequenceGap
from modelsync.wire import (
    EventBroadcast,
    GestureState,
    GrabGrant,
    MovementPacket,
    Nack,
    PresencePacket,
)

from util import rng_pose

ME = uuid.uuid5(uuid.NAMESPACE_DNS, "me")
PEER = uuid.uuid5(uuid.NAMESPACE_DNS, "peer")
CLS = uuid.uuid5(uuid.NAMESPACE_DNS, "cls")


def bcast(seq, actor, event, tag=None):
    return EventBroadcast(seq=seq, actor=actor, event=event, client_tag=tag)


def test_submit_keeps_committed_untouched():
    r = ClientReplica(me=ME)
    submit = r.submit_local(CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE))
    assert len(r.pending) == 1
    assert r.committed.classes == {}
    assert submit.client_tag == r.pending[0].client_tag


def test_view_shows_optimistic_overlay():
    r = ClientReplica(me=ME)
    r.submit_local(CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE))
    view = r.view()
    assert CLS in view.model.classes
    assert CLS in view.pending_elements
    assert r.committed.classes == {}


def test_two_rapid_submits_fifo_distinct_tags():
    r = ClientReplica(me=ME)
    s1 = r.submit_local(CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE))
    s2 = r.submit_local(RenameClass(id=CLS, name="Car"))
    assert [e.client_tag for e in r.pending] == [s1.client_tag, s2.client_tag]
    assert s1.client_tag != s2.client_tag


def test_local_validation_rejects_bad_submit():
    r = ClientReplica(me=ME)
    with pytest.raises(LocalValidationFailed):
        r.submit_local(RenameClass(id=CLS, name="NoSuchClass"))
    assert r.pending == []


def test_own_echo_acks_pending():
    r = ClientReplica(me=ME)
    submit = r.submit_local(CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE))
    r.on_broadcast(bcast(1, ME, submit.event, tag=submit.client_tag))
    assert r.pending == []
    assert r.committed.classes[CLS].name == "Vehicle"
    assert r.last_applied_seq == 1


def test_remote_event_leaves_pending_alone():
    r = ClientReplica(me=ME)
    r.submit_local(CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE))
    other = uuid.uuid5(uuid.NAMESPACE_DNS, "other-class")
    r.on_broadcast(bcast(1, PEER, CreateClass(id=other, name="Remote", pose=IDENTITY_POSE)))
    assert len(r.pending) == 1
    assert other in r.committed.classes


def test_interleaved_renames_converge_to_last_broadcast():
    # fold oracle: committed equals the replayed broadcast order; once pending
    # drains, the view equals committed
    r = ClientReplica(me=ME)
    r.on_broadcast(bcast(1, PEER, CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE)))
    mine = r.submit_local(RenameClass(id=CLS, name="Mine"))
    r.on_broadcast(bcast(2, PEER, RenameClass(id=CLS, name="Theirs")))
    r.on_broadcast(bcast(3, ME, mine.event, tag=mine.client_tag))
    r.on_broadcast(bcast(4, PEER, RenameClass(id=CLS, name="Final")))
    assert r.pending == []
    assert r.committed.classes[CLS].name == "Final"
    assert canonical_model_bytes(r.view().model) == canonical_model_bytes(r.committed)


def test_sequence_gap_is_fatal():
    r = ClientReplica(me=ME)
    r.on_broadcast(bcast(1, PEER, CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE)))
    with pytest.raises(SequenceGap):
        r.on_broadcast(bcast(3, PEER, RenameClass(id=CLS, name="Skip")))


def test_nack_reverts_optimistic_effect():
    r = ClientReplica(me=ME)
    submit = r.submit_local(CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE))
    assert CLS in r.view().model.classes
    r.on_nack(Nack(reason="DuplicateId", client_tag=submit.client_tag))
    assert r.pending == []
    assert CLS not in r.view().model.classes


def test_nack_with_stale_tag_is_ignored():
    r = ClientReplica(me=ME)
    r.submit_local(CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE))
    r.on_nack(Nack(reason="DuplicateId", client_tag=999_999))
    assert len(r.pending) == 1


def test_submit_nack_resubmit_scenario():
    r = ClientReplica(me=ME)
    first = r.submit_local(CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE))
    r.on_nack(Nack(reason="DuplicateId", client_tag=first.client_tag))
    second = r.submit_local(CreateClass(id=CLS, name="Fixed", pose=IDENTITY_POSE))
    r.on_broadcast(bcast(1, ME, second.event, tag=second.client_tag))
    assert r.pending == []
    view = r.view()
    assert view.model.classes[CLS].name == "Fixed"
    assert canonical_model_bytes(view.model) == canonical_model_bytes(r.committed)


def test_movement_freshness_latest_wins():
    r = ClientReplica(me=ME)
    r.on_broadcast(bcast(1, PEER, CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE)))
    rng = Random(1)
    poses = {seq: rng_pose(rng) for seq in (1, 3, 2)}
    for seq in (1, 3, 2):
        r.on_movement(MovementPacket(subject=CLS, seq=seq, pose=poses[seq]))
    assert r.view().model.classes[CLS].pose == poses[3]


def test_presence_from_unknown_peer_autocreates_entry():
    r = ClientReplica(me=ME)
    packet = PresencePacket(
        user=PEER, seq=1, head=IDENTITY_POSE, left_hand=IDENTITY_POSE, right_hand=IDENTITY_POSE,
        left_gesture=GestureState.POINT, right_gesture=GestureState.RELAXED,
    )
    r.on_movement(packet)
    assert PEER in r.peers
    avatars = r.view().avatars
    assert len(avatars) == 1 and avatars[0].left_gesture is GestureState.POINT


def test_commit_pose_clears_live_pose_and_blocks_stragglers():
    r = ClientReplica(me=ME)
    r.on_broadcast(bcast(1, PEER, CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE)))
    r.on_control(GrabGrant(object=CLS, owner=PEER))
    rng = Random(2)
    r.on_movement(MovementPacket(subject=CLS, seq=5, pose=rng_pose(rng)))
    committed_pose = rng_pose(rng)
    r.on_broadcast(bcast(2, PEER, CommitPose(id=CLS, pose=committed_pose)))
    assert r.view().model.classes[CLS].pose == committed_pose
    # a straggler forwarded before the release must not resurrect a live pose
    r.on_movement(MovementPacket(subject=CLS, seq=9, pose=rng_pose(rng)))
    assert r.view().model.classes[CLS].pose == committed_pose
    assert CLS not in r.view().held_by


def test_grab_grant_opens_new_movement_epoch():
    r = ClientReplica(me=ME)
    r.on_broadcast(bcast(1, PEER, CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE)))
    r.on_control(GrabGrant(object=CLS, owner=PEER))
    rng = Random(3)
    r.on_movement(MovementPacket(subject=CLS, seq=50, pose=rng_pose(rng)))
    r.on_broadcast(bcast(2, PEER, CommitPose(id=CLS, pose=IDENTITY_POSE)))
    r.on_control(GrabGrant(object=CLS, owner=PEER))  # re-grab resets the watermark
    fresh = rng_pose(rng)
    r.on_movement(MovementPacket(subject=CLS, seq=1, pose=fresh))
    assert r.view().model.classes[CLS].pose == fresh
    assert r.view().held_by == {CLS: PEER}


def test_view_is_pure():
    r = ClientReplica(me=ME)
    r.on_broadcast(bcast(1, PEER, CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE)))
    r.submit_local(RenameClass(id=CLS, name="Mine"))
    one = r.view()
    two = r.view()
    assert canonical_model_bytes(one.model) == canonical_model_bytes(two.model)
    assert one.pending_elements == two.pending_elements


def test_identical_streams_converge_byte_identically():
    rng = Random(4)
    actors = [uuid.uuid5(uuid.NAMESPACE_DNS, f"actor{i}") for i in range(3)]
    replicas = [ClientReplica(me=actors[0]), ClientReplica(me=actors[1])]
    from util import rng_event
    from modelsync.model import ClassModel, apply_event, ModelError

    reference = ClassModel.empty()
    ids = []
    seq = 0
    for _ in range(150):
        ev = rng_event(rng, ids)
        try:
            reference = apply_event(reference, ev)
        except ModelError:
            continue
        if isinstance(ev, (CreateClass,)):
            ids.append(ev.id)
        seq += 1
        for r in replicas:
            r.on_broadcast(bcast(seq, rng.choice(actors), ev))
    a, b = (canonical_model_bytes(r.committed) for r in replicas)
    assert a == b == canonical_model_bytes(reference)


def test_held_tracking_through_grant_and_release():
    r = ClientReplica(me=ME)
    r.on_broadcast(bcast(1, PEER, CreateClass(id=CLS, name="Vehicle", pose=IDENTITY_POSE)))
    r.on_control(GrabGrant(object=CLS, owner=ME))
    assert CLS in r.held
    release = r.make_release(CLS, IDENTITY_POSE)
    assert release.object == CLS
    assert CLS not in r.held


def test_next_movement_seq_is_monotone_across_grabs():
    r = ClientReplica(me=ME)
    seqs = [r.next_movement(CLS, IDENTITY_POSE).seq for _ in range(5)]
    assert seqs == [1, 2, 3, 4, 5]
