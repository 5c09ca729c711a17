/**
 * Byte-exact wire codecs, mirroring the engine's protocol:
 *
 *   movement (50 B):  0x4D 0x01 | subject 16B | seq u32 | pos 3xf32 | quat 4xf32 (LE)
 *   presence (108 B): 0x4D 0x02 | user 16B | seq u32 | 3 poses x 28B | 2 gesture bytes
 *   control:          0x45 + canonical UTF-8 JSON with a "type" discriminator
 *
 * Canonical JSON: sorted keys, no whitespace, floats as the shortest decimal
 * that round-trips binary32 (integral values below 1e15 positional, decimal
 * ties half away from zero). Byte equality with the server's encoder is
 * load-bearing and checked against golden fixtures.
 */

export const MAGIC_BINARY = 0x4d;
export const MAGIC_CONTROL = 0x45;
export const KIND_MOVEMENT = 0x01;
export const KIND_PRESENCE = 0x02;
export const MOVEMENT_SIZE = 50;
export const PRESENCE_SIZE = 108;

export interface Vec3 {
  x: number;
  y: number;
  z: number;
}

export interface Quat {
  x: number;
  y: number;
  z: number;
  w: number;
}

export interface Pose {
  position: Vec3;
  orientation: Quat;
}

export const IDENTITY_POSE: Pose = {
  position: { x: 0, y: 0, z: 0 },
  orientation: { x: 0, y: 0, z: 0, w: 1 },
};

export type GestureState = 0 | 1 | 2 | 3; // relaxed, point, grab, thumbs-up

export interface MovementPacket {
  subject: string; // uuid
  seq: number;
  pose: Pose;
}

export interface PresencePacket {
  user: string;
  seq: number;
  head: Pose;
  left_hand: Pose;
  right_hand: Pose;
  left_gesture: GestureState;
  right_gesture: GestureState;
}

// Model events exactly as they appear in control-message JSON.
export type ModelEvent =
  | { op: "CreateClass"; id: string; name: string; pose: Pose }
  | { op: "DeleteClass"; id: string }
  | { op: "RenameClass"; id: string; name: string }
  | { op: "SetAttributes"; id: string; lines: string[] }
  | { op: "SetMethods"; id: string; lines: string[] }
  | { op: "CreateConnector"; id: string; kind: ConnectorKind; source: string; target: string }
  | { op: "DeleteConnector"; id: string }
  | { op: "CommitPose"; id: string; pose: Pose };

export type ConnectorKind =
  | "Association"
  | "DirectedAssociation"
  | "Inheritance"
  | "Realization"
  | "Aggregation"
  | "Composition"
  | "Dependency";

export interface SnapshotBody {
  schema_version: number;
  session: string;
  model: ModelJson;
  last_seq: number;
}

export interface ModelJson {
  classes: Record<string, ClassNodeJson>;
  connectors: Record<string, ConnectorJson>;
}

export interface ClassNodeJson {
  id: string;
  name: string;
  attributes: string[];
  methods: string[];
  pose: Pose;
  extent: Vec3;
}

export interface ConnectorJson {
  id: string;
  kind: ConnectorKind;
  source: string;
  target: string;
}

// Control messages in their JSON shape (the discriminated "type" union).
export type ControlMessage =
  | { type: "Join"; display_name: string }
  | {
      type: "Welcome";
      user_id: string;
      snapshot: SnapshotBody;
      last_seq: number;
      members: Record<string, { display_name: string }>;
      ownership: Record<string, string>;
    }
  | { type: "EventSubmit"; client_tag: number; event: ModelEvent }
  | { type: "EventBroadcast"; seq: number; actor: string; event: ModelEvent; client_tag?: number }
  | { type: "Nack"; reason: string; client_tag?: number }
  | { type: "GrabRequest"; object: string }
  | { type: "GrabGrant"; object: string; owner: string }
  | { type: "GrabDeny"; object: string; owner: string }
  | { type: "Release"; object: string; final_pose: Pose }
  | { type: "PeerJoined"; user_id: string; display_name: string }
  | { type: "PeerLeft"; user_id: string }
  | { type: "VoiceFrame"; data: string; sender?: string }
  | { type: "Leave" };

export type Frame =
  | { kind: "movement"; packet: MovementPacket }
  | { kind: "presence"; packet: PresencePacket }
  | { kind: "control"; message: ControlMessage };

export class WireError extends Error {
  constructor(public code: string, detail = "") {
    super(detail ? `${code}: ${detail}` : code);
  }
}

// --- canonical floats --------------------------------------------------------

const f32buf = new DataView(new ArrayBuffer(4));

/** Quantize to binary32; -0 folds to +0. */
export function f32(x: number): number {
  const v = Math.fround(x);
  return v === 0 ? 0 : v;
}

function f32bits(x: number): number {
  f32buf.setFloat32(0, x, true);
  return f32buf.getUint32(0, true);
}

/** printf-%g-style at `prec` significant digits, ties half away from zero. */
function gFormat(x: number, prec: number): string {
  if (x === 0) return "0";
  const [mantissa, expStr] = x.toExponential(prec - 1).split("e");
  const exp = Number(expStr);
  const digits = mantissa.replace("-", "").replace(".", "");
  const neg = x < 0 ? "-" : "";
  if (exp < -4 || exp >= prec) {
    const frac = digits.slice(1).replace(/0+$/, "");
    const m = frac.length ? `${digits[0]}.${frac}` : digits[0];
    return `${neg}${m}e${exp < 0 ? "-" : "+"}${Math.abs(exp).toString().padStart(2, "0")}`;
  }
  if (exp >= 0) {
    const intPart = digits.slice(0, exp + 1).padEnd(exp + 1, "0");
    const frac = digits.slice(exp + 1).replace(/0+$/, "");
    return frac.length ? `${neg}${intPart}.${frac}` : `${neg}${intPart}`;
  }
  const frac = ("0".repeat(-exp - 1) + digits).replace(/0+$/, "");
  return frac.length ? `${neg}0.${frac}` : `${neg}0`;
}

const POSITIONAL_LIMIT = 2 ** 53; // integral values below this render positionally

/** Shortest decimal string that round-trips binary32. */
export function f32Repr(x: number): string {
  if (Number.isInteger(x) && Math.abs(x) < POSITIONAL_LIMIT) return String(x);
  const target = f32bits(x);
  for (let prec = 1; prec <= 9; prec++) {
    const s = gFormat(x, prec);
    if (f32bits(Number(s)) === target) return s;
  }
  return x.toString();
}

/** Canonical JSON text: sorted keys, compact, canonical numbers. */
export function canonicalJson(value: unknown): string {
  if (value === null) return "null";
  switch (typeof value) {
    case "boolean":
      return value ? "true" : "false";
    case "number":
      if (!Number.isFinite(value)) throw new WireError("SchemaViolation", "non-finite number");
      return Number.isInteger(value) && Math.abs(value) < POSITIONAL_LIMIT ? String(value) : f32Repr(value);
    case "string":
      return JSON.stringify(value);
    case "object": {
      if (Array.isArray(value)) {
        return `[${value.map(canonicalJson).join(",")}]`;
      }
      const obj = value as Record<string, unknown>;
      const keys = Object.keys(obj).filter((k) => obj[k] !== undefined).sort();
      return `{${keys.map((k) => `${JSON.stringify(k)}:${canonicalJson(obj[k])}`).join(",")}}`;
    }
    default:
      throw new WireError("SchemaViolation", `not serializable: ${typeof value}`);
  }
}

// --- uuid + pose helpers ---------------------------------------------------------

export function uuidToBytes(id: string): Uint8Array {
  const hex = id.replace(/-/g, "");
  if (!/^[0-9a-fA-F]{32}$/.test(hex)) throw new WireError("SchemaViolation", `bad uuid ${id}`);
  const out = new Uint8Array(16);
  for (let i = 0; i < 16; i++) out[i] = parseInt(hex.slice(i * 2, i * 2 + 2), 16);
  return out;
}

export function bytesToUuid(b: Uint8Array, offset: number): string {
  let hex = "";
  for (let i = 0; i < 16; i++) hex += b[offset + i].toString(16).padStart(2, "0");
  return `${hex.slice(0, 8)}-${hex.slice(8, 12)}-${hex.slice(12, 16)}-${hex.slice(16, 20)}-${hex.slice(20)}`;
}

export function quantizePose(p: Pose): Pose {
  return {
    position: { x: f32(p.position.x), y: f32(p.position.y), z: f32(p.position.z) },
    orientation: {
      x: f32(p.orientation.x),
      y: f32(p.orientation.y),
      z: f32(p.orientation.z),
      w: f32(p.orientation.w),
    },
  };
}

function writePose(view: DataView, offset: number, pose: Pose): number {
  view.setFloat32(offset, pose.position.x, true);
  view.setFloat32(offset + 4, pose.position.y, true);
  view.setFloat32(offset + 8, pose.position.z, true);
  view.setFloat32(offset + 12, pose.orientation.x, true);
  view.setFloat32(offset + 16, pose.orientation.y, true);
  view.setFloat32(offset + 20, pose.orientation.z, true);
  view.setFloat32(offset + 24, pose.orientation.w, true);
  return offset + 28;
}

function readPose(view: DataView, offset: number): Pose {
  const nums: number[] = [];
  for (let i = 0; i < 7; i++) {
    const v = view.getFloat32(offset + i * 4, true);
    if (!Number.isFinite(v)) throw new WireError("NonFinite");
    nums.push(v === 0 ? 0 : v);
  }
  return {
    position: { x: nums[0], y: nums[1], z: nums[2] },
    orientation: { x: nums[3], y: nums[4], z: nums[5], w: nums[6] },
  };
}

// --- binary codecs -------------------------------------------------------------------

export function encodeMovement(p: MovementPacket): Uint8Array {
  const out = new Uint8Array(MOVEMENT_SIZE);
  const view = new DataView(out.buffer);
  out[0] = MAGIC_BINARY;
  out[1] = KIND_MOVEMENT;
  out.set(uuidToBytes(p.subject), 2);
  view.setUint32(18, p.seq, true);
  writePose(view, 22, p.pose);
  return out;
}

export function decodeMovement(data: Uint8Array): MovementPacket {
  if (data.length !== MOVEMENT_SIZE) throw new WireError("BadLength", `${data.length}`);
  if (data[0] !== MAGIC_BINARY) throw new WireError("BadMagic");
  if (data[1] !== KIND_MOVEMENT) throw new WireError("BadKind");
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  return {
    subject: bytesToUuid(data, 2),
    seq: view.getUint32(18, true),
    pose: readPose(view, 22),
  };
}

export function encodePresence(p: PresencePacket): Uint8Array {
  const out = new Uint8Array(PRESENCE_SIZE);
  const view = new DataView(out.buffer);
  out[0] = MAGIC_BINARY;
  out[1] = KIND_PRESENCE;
  out.set(uuidToBytes(p.user), 2);
  view.setUint32(18, p.seq, true);
  let off = writePose(view, 22, p.head);
  off = writePose(view, off, p.left_hand);
  off = writePose(view, off, p.right_hand);
  out[off] = p.left_gesture;
  out[off + 1] = p.right_gesture;
  return out;
}

export function decodePresence(data: Uint8Array): PresencePacket {
  if (data.length !== PRESENCE_SIZE) throw new WireError("BadLength", `${data.length}`);
  if (data[0] !== MAGIC_BINARY) throw new WireError("BadMagic");
  if (data[1] !== KIND_PRESENCE) throw new WireError("BadKind");
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const lg = data[106];
  const rg = data[107];
  if (lg > 3 || rg > 3) throw new WireError("BadGesture", `${lg},${rg}`);
  return {
    user: bytesToUuid(data, 2),
    seq: view.getUint32(18, true),
    head: readPose(view, 22),
    left_hand: readPose(view, 50),
    right_hand: readPose(view, 78),
    left_gesture: lg as GestureState,
    right_gesture: rg as GestureState,
  };
}

// --- control codec -------------------------------------------------------------------

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: true });

const CONTROL_TYPES = new Set([
  "Join", "Welcome", "EventSubmit", "EventBroadcast", "Nack",
  "GrabRequest", "GrabGrant", "GrabDeny", "Release",
  "PeerJoined", "PeerLeft", "VoiceFrame", "Leave",
]);

export function encodeControl(m: ControlMessage): Uint8Array {
  const body = encoder.encode(canonicalJson(m));
  const out = new Uint8Array(body.length + 1);
  out[0] = MAGIC_CONTROL;
  out.set(body, 1);
  return out;
}

export function decodeControl(data: Uint8Array): ControlMessage {
  if (data.length < 1 || data[0] !== MAGIC_CONTROL) throw new WireError("BadMagic");
  let body: unknown;
  try {
    body = JSON.parse(decoder.decode(data.subarray(1)));
  } catch (err) {
    throw new WireError("MalformedJson", String(err));
  }
  if (typeof body !== "object" || body === null || Array.isArray(body)) {
    throw new WireError("SchemaViolation", "body must be an object");
  }
  const msg = body as { type?: unknown };
  if (typeof msg.type !== "string" || !CONTROL_TYPES.has(msg.type)) {
    throw new WireError("UnknownType", String(msg.type));
  }
  return body as ControlMessage;
}

export function decodeFrame(data: Uint8Array): Frame {
  if (data.length === 0) throw new WireError("BadLength", "empty");
  if (data[0] === MAGIC_CONTROL) return { kind: "control", message: decodeControl(data) };
  if (data[0] !== MAGIC_BINARY) throw new WireError("BadMagic");
  if (data[1] === KIND_MOVEMENT) return { kind: "movement", packet: decodeMovement(data) };
  if (data[1] === KIND_PRESENCE) return { kind: "presence", packet: decodePresence(data) };
  throw new WireError("BadKind");
}

/** Freshness filter: accept only strictly newer sequence numbers. */
export function fresher(last: number | null, incoming: number): boolean {
  return last === null || incoming > last;
}
