/** Canvas renderer for the projected scene. */

import type { Scene, SceneEdge } from "./project.js";

const CLASS_FILL = "#fdf6e3";
const CLASS_STROKE = "#586e75";
const PENDING_STROKE = "#b58900";
const HELD_STROKE = "#dc322f";
const SELECT_STROKE = "#268bd2";

export function drawScene(ctx: CanvasRenderingContext2D, scene: Scene, width: number, height: number): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#eef3ee"; // the ground plane
  ctx.fillRect(0, 0, width, height);

  for (const edge of scene.edges) drawEdge(ctx, edge);

  ctx.textAlign = "center";
  for (const r of scene.rects) {
    ctx.fillStyle = CLASS_FILL;
    ctx.strokeStyle = r.selected ? SELECT_STROKE : r.heldBy ? HELD_STROKE : r.pending ? PENDING_STROKE : CLASS_STROKE;
    ctx.lineWidth = r.selected || r.heldBy ? 2.5 : 1.5;
    ctx.setLineDash(r.pending ? [5, 3] : []);
    ctx.fillRect(r.x - r.w / 2, r.y - r.h / 2, r.w, r.h);
    ctx.strokeRect(r.x - r.w / 2, r.y - r.h / 2, r.w, r.h);
    ctx.setLineDash([]);

    ctx.fillStyle = "#073642";
    ctx.font = "bold 13px system-ui, sans-serif";
    ctx.fillText(r.name, r.x, r.y - 4, r.w + 60);
    const members = [...r.attributes, ...r.methods];
    ctx.font = "11px system-ui, sans-serif";
    members.slice(0, 3).forEach((line, i) => {
      ctx.fillText(line, r.x, r.y + 10 + i * 12, r.w + 60);
    });
    if (members.length > 3) ctx.fillText("…", r.x, r.y + 10 + 3 * 12);
    if (r.heldBy) {
      ctx.fillStyle = HELD_STROKE;
      ctx.font = "10px system-ui, sans-serif";
      ctx.fillText(`held by ${r.heldBy.slice(0, 8)}`, r.x, r.y - r.h / 2 - 4);
    }
  }

  for (const a of scene.avatars) {
    ctx.fillStyle = "#6c71c4";
    ctx.beginPath();
    ctx.arc(a.x, a.y, 6, 0, Math.PI * 2);
    ctx.fill();
    ctx.font = "11px system-ui, sans-serif";
    ctx.fillStyle = "#073642";
    ctx.fillText(a.name, a.x, a.y - 10); // name floats above the avatar
  }
}

function drawEdge(ctx: CanvasRenderingContext2D, e: SceneEdge): void {
  ctx.strokeStyle = "#657b83";
  ctx.fillStyle = "#657b83";
  ctx.lineWidth = 1.5;
  ctx.setLineDash(e.dashed ? [6, 4] : []);
  ctx.beginPath();
  ctx.moveTo(e.x1, e.y1);
  ctx.lineTo(e.x2, e.y2);
  ctx.stroke();
  ctx.setLineDash([]);

  if (e.arrowhead === "none") return;
  const angle = Math.atan2(e.y2 - e.y1, e.x2 - e.x1);
  const tipX = (e.x1 + e.x2) / 2 + (Math.cos(angle) * Math.hypot(e.x2 - e.x1, e.y2 - e.y1)) / 2;
  const tipY = (e.y1 + e.y2) / 2 + (Math.sin(angle) * Math.hypot(e.x2 - e.x1, e.y2 - e.y1)) / 2;
  drawHead(ctx, tipX, tipY, angle, e.arrowhead);
}

function drawHead(ctx: CanvasRenderingContext2D, x: number, y: number, angle: number, head: string): void {
  const size = 11;
  const back = (wing: number): [number, number] => [
    x - size * Math.cos(angle) + wing * Math.sin(angle),
    y - size * Math.sin(angle) - wing * Math.cos(angle),
  ];
  ctx.beginPath();
  if (head === "triangle" || head === "triangle-dashed") {
    const [ax, ay] = back(size / 2);
    const [bx, by] = back(-size / 2);
    ctx.moveTo(x, y);
    ctx.lineTo(ax, ay);
    ctx.lineTo(bx, by);
    ctx.closePath();
    ctx.fillStyle = "#fdf6e3";
    ctx.fill();
    ctx.stroke();
  } else if (head === "diamond-open" || head === "diamond-filled") {
    const [mx, my] = [x - size * Math.cos(angle), y - size * Math.sin(angle)];
    const [ax, ay] = [(x + mx) / 2 + (size / 2.4) * Math.sin(angle), (y + my) / 2 - (size / 2.4) * Math.cos(angle)];
    const [bx, by] = [(x + mx) / 2 - (size / 2.4) * Math.sin(angle), (y + my) / 2 + (size / 2.4) * Math.cos(angle)];
    ctx.moveTo(x, y);
    ctx.lineTo(ax, ay);
    ctx.lineTo(mx, my);
    ctx.lineTo(bx, by);
    ctx.closePath();
    if (head === "diamond-filled") {
      ctx.fillStyle = "#657b83";
      ctx.fill();
    } else {
      ctx.fillStyle = "#fdf6e3";
      ctx.fill();
      ctx.stroke();
    }
  } else {
    // open arrowhead
    const [ax, ay] = back(size / 2);
    const [bx, by] = back(-size / 2);
    ctx.moveTo(ax, ay);
    ctx.lineTo(x, y);
    ctx.lineTo(bx, by);
    ctx.stroke();
  }
}
