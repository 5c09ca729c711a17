/**
 * Browser entry point. Configuration via URL query parameters:
 *   ?server=ws://127.0.0.1:8765&name=alice
 */

import { defaultViewport, hitTest, projectScene, screenToWorld, zoomAt, type ViewportState } from "./project.js";
import { drawScene } from "./render.js";
import { UiSession, type SocketLike } from "./session.js";
import type { ConnectorKind } from "./wire.js";

function qs<T extends HTMLElement>(sel: string): T {
  const el = document.querySelector(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el as T;
}

const params = new URLSearchParams(location.search);
const serverUrl = params.get("server") ?? `ws://${location.hostname || "127.0.0.1"}:8765`;
const myName = params.get("name") ?? `user-${Math.floor(Math.random() * 1000)}`;

const canvas = qs<HTMLCanvasElement>("#diagram");
const ctx = canvas.getContext("2d")!;
const noticeEl = qs<HTMLDivElement>("#notice");
const statusEl = qs<HTMLSpanElement>("#status");
const kindSelect = qs<HTMLSelectElement>("#connector-kind");

let vp: ViewportState = defaultViewport(canvas.width, canvas.height);
let mode: "select" | "place" | "connect" = "select";
let connectSource: string | null = null;
let noticeTimer: number | undefined;

function showNotice(text: string): void {
  noticeEl.textContent = text;
  noticeEl.style.opacity = "1";
  clearTimeout(noticeTimer);
  noticeTimer = window.setTimeout(() => (noticeEl.style.opacity = "0"), 2500);
}

function wsUrl(server: string): string {
  let url = server.replace(/^http/, "ws").replace(/\/+$/, "");
  if (!url.endsWith("/ws")) url += "/ws";
  return url;
}

const ws = new WebSocket(wsUrl(serverUrl));
ws.binaryType = "arraybuffer";
const socket: SocketLike = {
  send: (data) => ws.send(data),
  close: () => ws.close(),
};

let session: UiSession;

ws.onopen = () => {
  session = new UiSession(socket, {
    name: myName,
    onNotice: showNotice,
    onChange: requestDraw,
  });
  ws.onmessage = (msg) => session.handleFrame(new Uint8Array(msg.data as ArrayBuffer));
  ws.onclose = () => {
    session.onSocketClosed();
    statusEl.textContent = "disconnected";
  };
  statusEl.textContent = `connected as ${myName}`;
};
ws.onerror = () => {
  statusEl.textContent = `cannot reach ${serverUrl}`;
};

let drawQueued = false;
function requestDraw(): void {
  if (drawQueued) return;
  drawQueued = true;
  requestAnimationFrame(() => {
    drawQueued = false;
    draw();
  });
}

function draw(): void {
  if (!session || session.state !== "joined") return;
  const scene = projectScene(vp, session.replica.view(), session.replica.me);
  drawScene(ctx, scene, canvas.width, canvas.height);
}

// continuous redraw keeps remote presence markers fresh
setInterval(requestDraw, 100);

// --- mouse interaction ---------------------------------------------------------

let panning = false;
let lastMouse: [number, number] = [0, 0];

canvas.addEventListener("mousedown", (ev) => {
  const [sx, sy] = [ev.offsetX, ev.offsetY];
  lastMouse = [sx, sy];
  if (!session || session.state !== "joined") return;
  const scene = projectScene(vp, session.replica.view(), session.replica.me);
  const hit = hitTest(scene, sx, sy);

  if (ev.button === 2 || ev.shiftKey || mode === "select" && !hit) {
    panning = true;
    return;
  }
  if (mode === "place") {
    const [wx, wz] = screenToWorld(vp, sx, sy);
    const name = prompt("Class name?", "NewClass");
    if (name) {
      session.submitEvent({
        op: "CreateClass",
        id: crypto.randomUUID(),
        name,
        pose: { position: { x: wx, y: 0.5, z: wz }, orientation: { x: 0, y: 0, z: 0, w: 1 } },
      });
    }
    mode = "select";
    return;
  }
  if (mode === "connect") {
    if (!hit) return;
    if (!connectSource) {
      connectSource = hit;
      showNotice("now click the target class");
    } else if (connectSource) {
      session.submitEvent({
        op: "CreateConnector",
        id: crypto.randomUUID(),
        kind: kindSelect.value as ConnectorKind,
        source: connectSource,
        target: hit,
      });
      connectSource = null;
      mode = "select";
    }
    return;
  }
  if (hit) {
    vp = { ...vp, selection: hit };
    session.beginDrag(hit);
  } else {
    vp = { ...vp, selection: null };
  }
  requestDraw();
});

canvas.addEventListener("mousemove", (ev) => {
  const [sx, sy] = [ev.offsetX, ev.offsetY];
  if (panning) {
    vp = { ...vp, panX: vp.panX + sx - lastMouse[0], panY: vp.panY + sy - lastMouse[1] };
    lastMouse = [sx, sy];
    requestDraw();
    return;
  }
  lastMouse = [sx, sy];
  if (session?.drag) {
    const [wx, wz] = screenToWorld(vp, sx, sy);
    session.dragTo(wx, wz);
    requestDraw();
  }
});

window.addEventListener("mouseup", () => {
  panning = false;
  session?.endDrag();
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  vp = zoomAt(vp, ev.offsetX, ev.offsetY, ev.deltaY < 0 ? 1.1 : 0.9);
  requestDraw();
});

canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());

// --- toolbar ----------------------------------------------------------------------

qs<HTMLButtonElement>("#add-class").onclick = () => {
  mode = "place";
  showNotice("click the canvas to place the class");
};
qs<HTMLButtonElement>("#connect").onclick = () => {
  mode = "connect";
  connectSource = null;
  showNotice("click the source class");
};
qs<HTMLButtonElement>("#rename").onclick = () => {
  if (!vp.selection) return showNotice("select a class first");
  const current = session.replica.view().model.classes.get(vp.selection);
  const name = prompt("New name?", current?.name ?? "");
  if (name !== null) session.editText(vp.selection, "name", name);
};
qs<HTMLButtonElement>("#attributes").onclick = () => {
  if (!vp.selection) return showNotice("select a class first");
  const current = session.replica.view().model.classes.get(vp.selection);
  const text = prompt("Attributes (one per line)?", current?.attributes.join("\n") ?? "");
  if (text !== null) session.editText(vp.selection, "attributes", text);
};
qs<HTMLButtonElement>("#methods").onclick = () => {
  if (!vp.selection) return showNotice("select a class first");
  const current = session.replica.view().model.classes.get(vp.selection);
  const text = prompt("Methods (one per line)?", current?.methods.join("\n") ?? "");
  if (text !== null) session.editText(vp.selection, "methods", text);
};
qs<HTMLButtonElement>("#delete").onclick = () => {
  if (!vp.selection) return showNotice("select a class first");
  session.submitEvent({ op: "DeleteClass", id: vp.selection });
  vp = { ...vp, selection: null };
};

window.addEventListener("beforeunload", () => session?.leave());
