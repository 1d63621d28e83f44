// Pure view-model: accumulates server frames into the currently rendered
// state. Rendering draws exactly this data; nothing is inferred or
// client-side simulated, so a dropped connection freezes the view.

import { AvatarSprite, FrameMessage, Hud, PhaseInfo } from "./protocol.js";

export interface ClientView {
  tiles: number[][]; // window x window tile codes
  avatars: AvatarSprite[];
  hud: Hud | null;
  phase: PhaseInfo | null;
  step: number;
}

export function emptyView(): ClientView {
  return { tiles: [], avatars: [], hud: null, phase: null, step: -1 };
}

/** Apply one frame (full grid or cell deltas) to the previous view. */
export function applyFrame(view: ClientView, frame: FrameMessage): ClientView {
  let tiles = view.tiles;
  if (frame.full && frame.grid) {
    tiles = frame.grid.map((row) => row.slice());
  } else if (frame.changes && frame.changes.length > 0) {
    tiles = view.tiles.map((row) => row.slice());
    for (const [r, c, code] of frame.changes) {
      tiles[r][c] = code;
    }
  }
  // empty delta: tiles reference unchanged -> canvas untouched
  return {
    tiles,
    avatars: frame.avatars,
    hud: frame.hud,
    phase: view.phase,
    step: frame.step,
  };
}

export function setPhase(view: ClientView, phase: PhaseInfo): ClientView {
  return { ...view, phase };
}

export interface HudBar {
  label: string;
  value: number;
  color: string;
}

/** Contribution bars: own bar always; peers' bars only when the server sent
 *  them (identifiable condition). */
export function contributionBars(hud: Hud, selfColor: string, peerColors: string[]): HudBar[] {
  const bars: HudBar[] = [{ label: "you", value: hud.own_contribution, color: selfColor }];
  if (hud.peer_contributions) {
    for (const peer of hud.peer_contributions) {
      bars.push({
        label: `p${peer.slot}`,
        value: peer.value,
        color: peerColors[peer.slot % peerColors.length],
      });
    }
  }
  return bars;
}
