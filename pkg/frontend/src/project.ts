/**
 * Top-down 2D projection of the 3D diagram: world (x, z) maps to the screen
 * through pan and zoom. Poses keep full 3D data; only the projection is flat.
 */

import type { RenderView } from "./replica.js";
import type { ConnectorKind } from "./wire.js";

export interface ViewportState {
  panX: number; // screen px of world origin
  panY: number;
  zoom: number; // pixels per meter, > 0
  selection: string | null;
  drag: { object: string; granted: boolean } | null;
}

export function defaultViewport(width: number, height: number): ViewportState {
  return { panX: width / 2, panY: height / 2, zoom: 60, selection: null, drag: null };
}

export function worldToScreen(vp: ViewportState, x: number, z: number): [number, number] {
  return [vp.panX + x * vp.zoom, vp.panY + z * vp.zoom];
}

export function screenToWorld(vp: ViewportState, sx: number, sy: number): [number, number] {
  return [(sx - vp.panX) / vp.zoom, (sy - vp.panY) / vp.zoom];
}

export function zoomAt(vp: ViewportState, sx: number, sy: number, factor: number): ViewportState {
  const zoom = Math.min(400, Math.max(8, vp.zoom * factor));
  if (zoom === vp.zoom) return vp;
  const [wx, wz] = screenToWorld(vp, sx, sy);
  return { ...vp, zoom, panX: sx - wx * zoom, panY: sy - wz * zoom };
}

export type Arrowhead = "none" | "open" | "triangle" | "triangle-dashed" | "diamond-open" | "diamond-filled" | "open-dashed";

const ARROWHEADS: Record<ConnectorKind, Arrowhead> = {
  Association: "none",
  DirectedAssociation: "open",
  Inheritance: "triangle",
  Realization: "triangle-dashed",
  Aggregation: "diamond-open",
  Composition: "diamond-filled",
  Dependency: "open-dashed",
};

export interface SceneRect {
  id: string;
  x: number; // screen center
  y: number;
  w: number;
  h: number;
  name: string;
  attributes: string[];
  methods: string[];
  pending: boolean;
  heldBy: string | null;
  selected: boolean;
}

export interface SceneEdge {
  id: string;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  arrowhead: Arrowhead;
  dashed: boolean;
}

export interface SceneAvatar {
  user: string;
  x: number;
  y: number;
  name: string;
}

export interface Scene {
  rects: SceneRect[];
  edges: SceneEdge[];
  avatars: SceneAvatar[];
}

/** Deterministic mapping of a replica view to drawable screen geometry. */
export function projectScene(vp: ViewportState, view: RenderView, myUser: string): Scene {
  const rects: SceneRect[] = [];
  for (const node of view.model.classes.values()) {
    const [x, y] = worldToScreen(vp, node.pose.position.x, node.pose.position.z);
    const holder = view.heldBy.get(node.id) ?? null;
    rects.push({
      id: node.id,
      x,
      y,
      w: node.extent.x * vp.zoom,
      h: node.extent.z * vp.zoom,
      name: node.name,
      attributes: node.attributes,
      methods: node.methods,
      pending: view.pendingElements.has(node.id),
      heldBy: holder === myUser ? null : holder,
      selected: vp.selection === node.id,
    });
  }
  rects.sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));

  const edges: SceneEdge[] = [];
  for (const conn of view.model.connectors.values()) {
    const src = view.model.classes.get(conn.source);
    const dst = view.model.classes.get(conn.target);
    if (!src || !dst) continue;
    const [x1, y1] = worldToScreen(vp, src.pose.position.x, src.pose.position.z);
    const [x2, y2] = worldToScreen(vp, dst.pose.position.x, dst.pose.position.z);
    const head = ARROWHEADS[conn.kind];
    edges.push({
      id: conn.id,
      x1,
      y1,
      x2,
      y2,
      arrowhead: head,
      dashed: head === "triangle-dashed" || head === "open-dashed",
    });
  }
  edges.sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));

  const avatars: SceneAvatar[] = [];
  for (const [user, peer] of view.peers) {
    if (!peer.presence) continue;
    const head = peer.presence.head.position;
    const [x, y] = worldToScreen(vp, head.x, head.z);
    avatars.push({ user, x, y, name: peer.displayName || user.slice(0, 8) });
  }
  avatars.sort((a, b) => (a.user < b.user ? -1 : a.user > b.user ? 1 : 0));

  return { rects, edges, avatars };
}

/** Topmost class whose footprint contains the screen point. */
export function hitTest(scene: Scene, sx: number, sy: number): string | null {
  for (let i = scene.rects.length - 1; i >= 0; i--) {
    const r = scene.rects[i];
    if (Math.abs(sx - r.x) <= r.w / 2 && Math.abs(sy - r.y) <= r.h / 2) return r.id;
  }
  return null;
}
