/**
 * Client replica: committed model folded from server broadcasts, a pending
 * FIFO replayed on top for display only, and freshness-filtered live poses.
 * Mirrors the engine's replica semantics over the same wire contract.
 */

import {
  applyEvent,
  type ClassModel,
  emptyModel,
  eventSubject,
  ModelError,
  modelFromJson,
} from "./model.js";
import type {
  ControlMessage,
  ModelEvent,
  MovementPacket,
  Pose,
  PresencePacket,
} from "./wire.js";
import { fresher } from "./wire.js";

export class SequenceGap extends Error {}

export class LocalValidationFailed extends Error {
  constructor(public err: ModelError) {
    super(err.message);
  }
}

interface PendingEntry {
  clientTag: number;
  event: ModelEvent;
}

interface LiveEntry {
  mark: number | null | "blocked";
  pose: Pose | null;
}

export interface PeerState {
  displayName: string;
  presence: PresencePacket | null;
}

export interface RenderView {
  model: ClassModel; // committed + pending overlay, live poses applied
  pendingElements: Set<string>;
  heldBy: Map<string, string>;
  peers: Map<string, PeerState>;
}

export class Replica {
  me = "";
  committed: ClassModel = emptyModel();
  lastAppliedSeq = 0;
  pending: PendingEntry[] = [];
  livePoses = new Map<string, LiveEntry>();
  peers = new Map<string, PeerState>();
  held = new Set<string>();
  owners = new Map<string, string>();
  applyErrors: ModelError[] = [];
  private nextTag = 1;
  private movementSeqOut = new Map<string, number>(); // per subject, never reset

  submitLocal(event: ModelEvent): { type: "EventSubmit"; client_tag: number; event: ModelEvent } {
    try {
      applyEvent(this.overlayModel(), event);
    } catch (err) {
      if (err instanceof ModelError) throw new LocalValidationFailed(err);
      throw err;
    }
    const tag = this.nextTag++;
    this.pending.push({ clientTag: tag, event });
    return { type: "EventSubmit", client_tag: tag, event };
  }

  nextMovement(subject: string, pose: Pose): MovementPacket {
    const seq = (this.movementSeqOut.get(subject) ?? 0) + 1;
    this.movementSeqOut.set(subject, seq);
    return { subject, seq, pose };
  }

  makeRelease(subject: string, finalPose: Pose): { type: "Release"; object: string; final_pose: Pose } {
    this.held.delete(subject);
    return { type: "Release", object: subject, final_pose: finalPose };
  }

  onControl(msg: ControlMessage): void {
    switch (msg.type) {
      case "Welcome": {
        this.me = msg.user_id;
        this.committed = modelFromJson(msg.snapshot.model);
        this.lastAppliedSeq = msg.last_seq;
        this.pending = [];
        this.livePoses.clear();
        this.owners = new Map(Object.entries(msg.ownership));
        this.held = new Set(
          Object.entries(msg.ownership).filter(([, u]) => u === this.me).map(([e]) => e),
        );
        this.peers = new Map(
          Object.entries(msg.members)
            .filter(([u]) => u !== this.me)
            .map(([u, m]) => [u, { displayName: m.display_name, presence: null }]),
        );
        break;
      }
      case "EventBroadcast":
        this.onBroadcast(msg.seq, msg.actor, msg.event, msg.client_tag);
        break;
      case "Nack":
        if (msg.client_tag !== undefined && msg.client_tag !== null) {
          this.dropPending(msg.client_tag);
        }
        break;
      case "GrabGrant":
        this.owners.set(msg.object, msg.owner);
        this.livePoses.set(msg.object, { mark: null, pose: null }); // new epoch
        if (msg.owner === this.me) this.held.add(msg.object);
        break;
      case "GrabDeny":
        break; // surfaced by the session layer
      case "PeerJoined":
        this.peers.set(msg.user_id, { displayName: msg.display_name, presence: null });
        break;
      case "PeerLeft": {
        this.peers.delete(msg.user_id);
        for (const [e, u] of [...this.owners]) {
          if (u === msg.user_id) this.owners.delete(e);
        }
        break;
      }
      default:
        break; // VoiceFrame (unused here) and client->server types
    }
  }

  private onBroadcast(seq: number, actor: string, event: ModelEvent, clientTag?: number): void {
    if (seq !== this.lastAppliedSeq + 1) {
      throw new SequenceGap(`expected ${this.lastAppliedSeq + 1}, got ${seq}`);
    }
    try {
      this.committed = applyEvent(this.committed, event);
    } catch (err) {
      if (!(err instanceof ModelError)) throw err;
      this.applyErrors.push(err);
    }
    this.lastAppliedSeq = seq;
    if (clientTag !== undefined && clientTag !== null && actor === this.me) {
      this.dropPending(clientTag);
    }
    if (event.op === "CommitPose") {
      // committed pose is authoritative again; block stragglers until regrant
      this.livePoses.set(event.id, { mark: "blocked", pose: null });
      this.owners.delete(event.id);
      this.held.delete(event.id);
    } else if (event.op === "DeleteClass") {
      this.livePoses.delete(event.id);
      this.owners.delete(event.id);
      this.held.delete(event.id);
    }
  }

  private dropPending(tag: number): void {
    const i = this.pending.findIndex((p) => p.clientTag === tag);
    if (i >= 0) this.pending.splice(i, 1);
  }

  onMovement(packet: MovementPacket): void {
    const entry = this.livePoses.get(packet.subject);
    if (entry?.mark === "blocked") return;
    const mark = entry ? (entry.mark as number | null) : null;
    if (fresher(mark, packet.seq)) {
      this.livePoses.set(packet.subject, { mark: packet.seq, pose: packet.pose });
    }
  }

  onPresence(packet: PresencePacket): void {
    let peer = this.peers.get(packet.user);
    if (!peer) {
      peer = { displayName: "", presence: null }; // join race: auto-created
      this.peers.set(packet.user, peer);
    }
    const last = peer.presence ? peer.presence.seq : null;
    if (fresher(last, packet.seq)) peer.presence = packet;
  }

  private overlayModel(): ClassModel {
    let model = this.committed;
    for (const entry of this.pending) {
      try {
        model = applyEvent(model, entry.event);
      } catch {
        // a racing remote edit invalidated it; ack/nack will settle it
      }
    }
    return model;
  }

  view(): RenderView {
    const model = this.overlayModel();
    const classes = new Map(model.classes);
    for (const [element, entry] of this.livePoses) {
      const node = classes.get(element);
      if (entry.pose && node) classes.set(element, { ...node, pose: entry.pose });
    }
    return {
      model: { classes, connectors: new Map(model.connectors) },
      pendingElements: new Set(this.pending.map((p) => eventSubject(p.event))),
      heldBy: new Map(this.owners),
      peers: new Map(this.peers),
    };
  }
}
