// Canvas tile renderer: flat colored squares with glyph overlays, no art
// assets. Thin layer over the view-model; all logic lives in view.ts.

import {
  TILE_APPLE,
  TILE_GROUND,
  TILE_ORCHARD,
  TILE_POLLUTION,
  TILE_RIVER,
  TILE_VOID,
  TILE_WALL,
} from "./protocol.js";
import { ClientView, contributionBars } from "./view.js";

const TILE_COLORS: Record<number, string> = {
  [TILE_GROUND]: "#d9cfa3",
  [TILE_RIVER]: "#7ec8e3",
  [TILE_POLLUTION]: "#5b4a2f",
  [TILE_ORCHARD]: "#8fcf8f",
  [TILE_APPLE]: "#2e8b2e",
  [TILE_WALL]: "#444444",
  [TILE_VOID]: "#1b1b1b",
};

const SELF_COLOR = "#4363d8";
const PEER_COLORS = ["#e6194b", "#3cb44b", "#ffe119", "#f58231", "#911eb4"];
const ORIENTATION_GLYPHS = ["▲", "▶", "▼", "◀"];

export class CanvasRenderer {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly hudElement: HTMLElement,
    private readonly tileSize = 18,
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("no 2d canvas context");
    this.ctx = ctx;
  }

  draw(view: ClientView): void {
    const size = view.tiles.length;
    if (size === 0) return;
    const px = this.tileSize;
    this.canvas.width = size * px;
    this.canvas.height = size * px;
    for (let r = 0; r < size; r++) {
      for (let c = 0; c < size; c++) {
        this.ctx.fillStyle = TILE_COLORS[view.tiles[r][c]] ?? TILE_COLORS[TILE_VOID];
        this.ctx.fillRect(c * px, r * px, px, px);
        if (view.tiles[r][c] === TILE_APPLE) {
          this.ctx.fillStyle = "#b01010";
          this.ctx.beginPath();
          this.ctx.arc(c * px + px / 2, r * px + px / 2, px / 4, 0, Math.PI * 2);
          this.ctx.fill();
        }
      }
    }
    this.ctx.font = `${px - 4}px monospace`;
    this.ctx.textAlign = "center";
    this.ctx.textBaseline = "middle";
    for (const avatar of view.avatars) {
      this.ctx.fillStyle = avatar.color;
      this.ctx.fillRect(avatar.col * px + 1, avatar.row * px + 1, px - 2, px - 2);
      this.ctx.fillStyle = "#ffffff";
      this.ctx.fillText(
        ORIENTATION_GLYPHS[avatar.orientation] ?? "?",
        avatar.col * px + px / 2,
        avatar.row * px + px / 2,
      );
    }
    this.drawHud(view);
  }

  private drawHud(view: ClientView): void {
    if (!view.hud) return;
    const hud = view.hud;
    const tickets = hud.tickets_available === null ? "unlimited" : `${hud.tickets_available}`;
    const lines = [
      `episode: ${hud.episode_score}  total: ${hud.cumulative_score}  tickets: ${tickets}`,
    ];
    if (view.phase) {
      const where =
        view.phase.kind === "tutorial"
          ? `tutorial ${view.phase.index + 1}: ${view.phase.name ?? ""}`
          : `episode ${view.phase.index + 1} (${view.phase.condition})`;
      lines.unshift(where);
    }
    const bars = contributionBars(hud, SELF_COLOR, PEER_COLORS)
      .map((bar) => `<span style="color:${bar.color}">${bar.label}: ${bar.value.toFixed(1)}</span>`)
      .join("  ");
    this.hudElement.innerHTML = `${lines.join("<br>")}<br>${bars}`;
  }
}
