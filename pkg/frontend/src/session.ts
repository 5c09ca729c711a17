/**
 * Protocol session: glues a socket to the replica and runs the drag state
 * machine. Movement packets flow only while the server's grant is held and
 * are throttled to the configured rate with a per-subject increasing seq.
 *
 * The socket is an injected interface so tests can wrap real sockets with
 * latency or counters; the browser passes a thin WebSocket adapter.
 */

import { LocalValidationFailed, Replica } from "./replica.js";
import { textOk, MAX_LINE_LEN, MAX_NAME_LEN, ModelError } from "./model.js";
import type { ControlMessage, ModelEvent, Pose } from "./wire.js";
import { decodeFrame, encodeControl, encodeMovement, IDENTITY_POSE, quantizePose } from "./wire.js";

export interface SocketLike {
  send(data: Uint8Array): void;
  close(): void;
}

export interface UiSessionOptions {
  name: string;
  moveHz?: number; // default 20
  now?: () => number; // ms clock, injectable for tests
  onNotice?: (text: string) => void;
  onChange?: () => void;
}

interface DragState {
  object: string;
  granted: boolean;
  lastSentAt: number;
  pendingPose: Pose | null;
  lastPose: Pose | null;
}

export class UiSession {
  readonly replica = new Replica();
  state: "connecting" | "joined" | "closed" = "connecting";
  drag: DragState | null = null;
  movementFramesSent = 0;
  private readonly moveIntervalMs: number;
  private readonly now: () => number;
  private readonly abandonedGrabs = new Set<string>();

  constructor(private socket: SocketLike, private opts: UiSessionOptions) {
    this.moveIntervalMs = 1000 / (opts.moveHz ?? 20);
    this.now = opts.now ?? (() => performance.now());
    socket.send(encodeControl({ type: "Join", display_name: opts.name }));
  }

  /** Entry point for every incoming transport frame. */
  handleFrame(data: Uint8Array): void {
    const frame = decodeFrame(data);
    if (frame.kind === "movement") {
      this.replica.onMovement(frame.packet);
      this.changed();
      return;
    }
    if (frame.kind === "presence") {
      this.replica.onPresence(frame.packet);
      this.changed();
      return;
    }
    this.handleControl(frame.message);
  }

  private handleControl(msg: ControlMessage): void {
    if (msg.type === "Welcome") {
      this.replica.onControl(msg);
      this.state = "joined";
      this.changed();
      return;
    }
    if (msg.type === "Nack") {
      this.replica.onControl(msg);
      this.notice(`rejected: ${msg.reason}`);
      this.changed();
      return;
    }
    if (msg.type === "GrabDeny") {
      if (this.drag?.object === msg.object) this.drag = null;
      this.abandonedGrabs.delete(msg.object);
      this.notice(`held by ${this.peerName(msg.owner)}`);
      this.changed();
      return;
    }
    if (msg.type === "GrabGrant" && msg.owner === this.replica.me) {
      this.replica.onControl(msg);
      if (this.abandonedGrabs.delete(msg.object)) {
        // the drag ended before the grant arrived: release immediately
        this.socket.send(
          encodeControl(this.replica.makeRelease(msg.object, this.effectivePose(msg.object))),
        );
      } else if (this.drag?.object === msg.object) {
        this.drag.granted = true;
        // the throttle window opens at the grant: an n-second drag emits at
        // most n * moveHz frames, never the off-by-one extra
        this.drag.lastSentAt = this.now();
      }
      this.changed();
      return;
    }
    this.replica.onControl(msg);
    this.changed();
  }

  private peerName(user: string): string {
    return this.replica.peers.get(user)?.displayName || user.slice(0, 8);
  }

  // --- edits -----------------------------------------------------------------

  submitEvent(event: ModelEvent): boolean {
    if (this.state !== "joined") return false;
    try {
      const submit = this.replica.submitLocal(event);
      this.socket.send(encodeControl(submit));
      this.changed();
      return true;
    } catch (err) {
      if (err instanceof LocalValidationFailed || err instanceof ModelError) {
        this.notice(`invalid edit: ${err.message}`);
        return false;
      }
      throw err;
    }
  }

  /** Text edit entry point; validates locally before anything is sent. */
  editText(object: string, field: "name" | "attributes" | "methods", value: string | string[]): boolean {
    if (field === "name") {
      const name = value as string;
      if (!textOk(name, MAX_NAME_LEN, false)) {
        this.notice("invalid name: must be 1..64 characters, no control characters");
        return false;
      }
      return this.submitEvent({ op: "RenameClass", id: object, name });
    }
    const lines = (Array.isArray(value) ? value : value.split("\n")).filter(
      (line, i, all) => line.length > 0 || i < all.length - 1,
    );
    if (!lines.every((line) => textOk(line, MAX_LINE_LEN))) {
      this.notice("invalid line: must be at most 128 characters, no control characters");
      return false;
    }
    const op = field === "attributes" ? "SetAttributes" : "SetMethods";
    return this.submitEvent({ op, id: object, lines } as ModelEvent);
  }

  // --- drag state machine ---------------------------------------------------------

  beginDrag(object: string): boolean {
    if (this.state !== "joined" || this.drag) return false;
    const view = this.replica.view();
    if (!view.model.classes.has(object)) return false;
    this.socket.send(encodeControl({ type: "GrabRequest", object }));
    this.drag = { object, granted: false, lastSentAt: -Infinity, pendingPose: null, lastPose: null };
    return true;
  }

  dragTo(worldX: number, worldZ: number): void {
    if (!this.drag) return;
    const base = this.effectivePose(this.drag.object);
    const pose = quantizePose({
      position: { x: worldX, y: base.position.y, z: worldZ },
      orientation: base.orientation,
    });
    this.drag.pendingPose = pose;
    this.flushDrag();
  }

  private flushDrag(): void {
    const drag = this.drag;
    if (!drag || !drag.granted || !drag.pendingPose) return;
    const now = this.now();
    if (now - drag.lastSentAt < this.moveIntervalMs) return;
    this.socket.send(encodeMovement(this.replica.nextMovement(drag.object, drag.pendingPose)));
    this.movementFramesSent++;
    drag.lastSentAt = now;
    drag.lastPose = drag.pendingPose;
    drag.pendingPose = null;
  }

  endDrag(): void {
    const drag = this.drag;
    if (!drag) return;
    this.drag = null;
    const finalPose = drag.pendingPose ?? drag.lastPose ?? this.effectivePose(drag.object);
    if (drag.granted) {
      this.socket.send(encodeControl(this.replica.makeRelease(drag.object, finalPose)));
      this.changed();
    } else {
      // grant may still be in flight; release as soon as it lands
      this.abandonedGrabs.add(drag.object);
    }
  }

  private effectivePose(object: string): Pose {
    const live = this.replica.livePoses.get(object);
    if (live?.pose) return live.pose;
    return this.replica.committed.classes.get(object)?.pose ?? IDENTITY_POSE;
  }

  // --- lifecycle --------------------------------------------------------------------

  leave(): void {
    if (this.state === "closed") return;
    this.socket.send(encodeControl({ type: "Leave" }));
    this.state = "closed";
    this.socket.close();
  }

  onSocketClosed(): void {
    if (this.state === "closed") return;
    this.state = "closed";
    this.drag = null; // connection loss aborts any drag
    this.notice("connection lost");
    this.changed();
  }

  private notice(text: string): void {
    this.opts.onNotice?.(text);
  }

  private changed(): void {
    this.opts.onChange?.();
  }
}
