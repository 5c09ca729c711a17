/** Replica state machine: overlay, ack/nack, freshness, ownership handoff. */

import { describe, expect, it } from "vitest";

import { Replica, SequenceGap, LocalValidationFailed } from "../src/replica.js";
import type { ControlMessage, ModelEvent, Pose } from "../src/wire.js";
import { IDENTITY_POSE } from "../src/wire.js";

const ME = "aaaaaaaa-aaaa-4aaa-8aaa-aaaaaaaaaaaa";
const PEER = "bbbbbbbb-bbbb-4bbb-8bbb-bbbbbbbbbbbb";
const CLS = "cccccccc-cccc-4ccc-8ccc-cccccccccccc";

function poseAt(x: number, z: number): Pose {
  return { position: { x, y: 0.5, z }, orientation: { x: 0, y: 0, z: 0, w: 1 } };
}

function welcome(replica: Replica, me = ME): void {
  const msg: ControlMessage = {
    type: "Welcome",
    user_id: me,
    snapshot: {
      schema_version: 1,
      session: PEER,
      model: { classes: {}, connectors: {} },
      last_seq: 0,
    },
    last_seq: 0,
    members: { [me]: { display_name: "me" } },
    ownership: {},
  };
  replica.onControl(msg);
}

function bcast(replica: Replica, seq: number, actor: string, event: ModelEvent, tag?: number): void {
  replica.onControl({ type: "EventBroadcast", seq, actor, event, client_tag: tag });
}

const create: ModelEvent = { op: "CreateClass", id: CLS, name: "Vehicle", pose: IDENTITY_POSE };

describe("replica", () => {
  it("keeps committed untouched while pending shows in the view", () => {
    const r = new Replica();
    welcome(r);
    const submit = r.submitLocal(create);
    expect(r.committed.classes.size).toBe(0);
    expect(r.view().model.classes.has(CLS)).toBe(true);
    expect(r.view().pendingElements.has(CLS)).toBe(true);
    expect(submit.client_tag).toBeGreaterThan(0);
  });

  it("acks pending on its own echo", () => {
    const r = new Replica();
    welcome(r);
    const submit = r.submitLocal(create);
    bcast(r, 1, ME, create, submit.client_tag);
    expect(r.pending.length).toBe(0);
    expect(r.committed.classes.get(CLS)?.name).toBe("Vehicle");
    expect(r.lastAppliedSeq).toBe(1);
  });

  it("rejects locally-invalid submissions", () => {
    const r = new Replica();
    welcome(r);
    expect(() => r.submitLocal({ op: "RenameClass", id: CLS, name: "Nope" })).toThrow(
      LocalValidationFailed,
    );
  });

  it("raises on a sequence gap", () => {
    const r = new Replica();
    welcome(r);
    bcast(r, 1, PEER, create);
    expect(() => bcast(r, 3, PEER, { op: "RenameClass", id: CLS, name: "Skip" })).toThrow(SequenceGap);
  });

  it("nack reverts the optimistic effect", () => {
    const r = new Replica();
    welcome(r);
    const submit = r.submitLocal(create);
    r.onControl({ type: "Nack", reason: "DuplicateId", client_tag: submit.client_tag });
    expect(r.view().model.classes.has(CLS)).toBe(false);
  });

  it("converges to the last broadcast value (LWW)", () => {
    const r = new Replica();
    welcome(r);
    bcast(r, 1, PEER, create);
    const mine = r.submitLocal({ op: "RenameClass", id: CLS, name: "Mine" });
    bcast(r, 2, PEER, { op: "RenameClass", id: CLS, name: "Theirs" });
    bcast(r, 3, ME, { op: "RenameClass", id: CLS, name: "Mine" }, mine.client_tag);
    bcast(r, 4, PEER, { op: "RenameClass", id: CLS, name: "Final" });
    expect(r.pending.length).toBe(0);
    expect(r.committed.classes.get(CLS)?.name).toBe("Final");
    expect(r.view().model.classes.get(CLS)?.name).toBe("Final");
  });

  it("applies only fresher movement, latest wins", () => {
    const r = new Replica();
    welcome(r);
    bcast(r, 1, PEER, create);
    for (const seq of [1, 3, 2]) {
      r.onMovement({ subject: CLS, seq, pose: poseAt(seq, 0) });
    }
    expect(r.view().model.classes.get(CLS)?.pose.position.x).toBe(3);
  });

  it("CommitPose clears the live pose and blocks stragglers until regrant", () => {
    const r = new Replica();
    welcome(r);
    bcast(r, 1, PEER, create);
    r.onControl({ type: "GrabGrant", object: CLS, owner: PEER });
    r.onMovement({ subject: CLS, seq: 5, pose: poseAt(9, 9) });
    bcast(r, 2, PEER, { op: "CommitPose", id: CLS, pose: poseAt(1, 1) });
    r.onMovement({ subject: CLS, seq: 9, pose: poseAt(8, 8) }); // straggler
    expect(r.view().model.classes.get(CLS)?.pose.position.x).toBe(1);
    expect(r.view().heldBy.has(CLS)).toBe(false);
    r.onControl({ type: "GrabGrant", object: CLS, owner: PEER });
    r.onMovement({ subject: CLS, seq: 1, pose: poseAt(4, 4) }); // fresh epoch
    expect(r.view().model.classes.get(CLS)?.pose.position.x).toBe(4);
  });

  it("auto-creates a peer from presence during a join race", () => {
    const r = new Replica();
    welcome(r);
    r.onPresence({
      user: PEER,
      seq: 1,
      head: poseAt(2, 3),
      left_hand: IDENTITY_POSE,
      right_hand: IDENTITY_POSE,
      left_gesture: 1,
      right_gesture: 0,
    });
    expect(r.peers.get(PEER)?.presence?.head.position.x).toBe(2);
  });

  it("initializes from a Welcome snapshot", () => {
    const r = new Replica();
    r.onControl({
      type: "Welcome",
      user_id: ME,
      snapshot: {
        schema_version: 1,
        session: PEER,
        model: {
          classes: {
            [CLS]: {
              id: CLS,
              name: "FromSnap",
              attributes: ["+ a: int"],
              methods: [],
              pose: poseAt(1, 2),
              extent: { x: 1, y: 1, z: 0.4 },
            },
          },
          connectors: {},
        },
        last_seq: 41,
      },
      last_seq: 41,
      members: { [ME]: { display_name: "me" }, [PEER]: { display_name: "peer" } },
      ownership: { [CLS]: PEER },
    });
    expect(r.lastAppliedSeq).toBe(41);
    expect(r.committed.classes.get(CLS)?.name).toBe("FromSnap");
    expect(r.owners.get(CLS)).toBe(PEER);
    expect(r.peers.has(PEER)).toBe(true);
    expect(r.peers.has(ME)).toBe(false);
  });

  it("movement seq out is monotone across grabs", () => {
    const r = new Replica();
    const seqs = [1, 2, 3].map(() => r.nextMovement(CLS, IDENTITY_POSE).seq);
    expect(seqs).toEqual([1, 2, 3]);
  });
});
