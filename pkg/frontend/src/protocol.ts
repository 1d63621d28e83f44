// Wire protocol mirrored from the server's message schemas. Every message
// carries the schema version `v`; WebSocket framing supplies the length
// prefix. See the repository README for the field-by-field description.

export const SCHEMA_VERSION = 1;

export const N_ACTIONS = 9;

export enum ActionId {
  MoveUp = 0,
  MoveDown = 1,
  MoveLeft = 2,
  MoveRight = 3,
  RotateLeft = 4,
  RotateRight = 5,
  FireClean = 6,
  FireTicket = 7,
  Noop = 8,
}

export interface JoinMessage {
  v: number;
  type: "join";
  name: string;
  token?: string;
}

export interface InputMessage {
  v: number;
  type: "input";
  action: number;
}

export interface JoinedMessage {
  v: number;
  type: "joined";
  slot: number;
  token: string;
  session_id: string;
}

export interface LobbySlot {
  slot: number;
  name: string | null;
  connected: boolean;
}

export interface LobbyStateMessage {
  v: number;
  type: "lobby_state";
  session_id: string;
  slots: LobbySlot[];
  needed: number;
}

export interface PhaseInfo {
  kind: "tutorial" | "episode";
  index: number;
  name?: string;
  condition?: "identifiable" | "anonymous";
  episode_in_condition?: number;
}

export interface PhaseStartMessage {
  v: number;
  type: "phase_start";
  phase: PhaseInfo;
}

export interface PhaseEndMessage {
  v: number;
  type: "phase_end";
  phase: PhaseInfo;
  scores?: number[];
  cumulative?: number[];
}

export interface AvatarSprite {
  row: number;
  col: number;
  orientation: number;
  color: string;
  is_self: boolean;
  peer_slot?: number;
}

export interface PeerContribution {
  slot: number;
  value: number;
}

export interface Hud {
  episode_score: number;
  cumulative_score: number;
  tickets_available: number | null;
  own_contribution: number;
  peer_contributions?: PeerContribution[];
  tutorial_progress?: {
    name: string;
    done: boolean;
    cleaned: number;
    collected: number;
  };
}

export interface FrameMessage {
  v: number;
  type: "frame";
  step: number;
  full: boolean;
  grid?: number[][];
  changes?: [number, number, number][];
  avatars: AvatarSprite[];
  hud: Hud;
}

export interface SessionEndMessage {
  v: number;
  type: "session_end";
  totals?: { slot: number; name: string | null; total: number; per_episode: number[] }[];
  aborted?: boolean;
  reason?: string;
}

export type ServerMessage =
  | JoinedMessage
  | LobbyStateMessage
  | PhaseStartMessage
  | PhaseEndMessage
  | FrameMessage
  | SessionEndMessage;

export function parseServerMessage(raw: string): ServerMessage {
  const message = JSON.parse(raw) as ServerMessage;
  if (typeof message.v !== "number" || message.v > SCHEMA_VERSION) {
    throw new Error(`unsupported message schema: ${JSON.stringify(message)}`);
  }
  return message;
}

// Tile codes, matching the server's display layer.
export const TILE_GROUND = 0;
export const TILE_RIVER = 1;
export const TILE_POLLUTION = 2;
export const TILE_ORCHARD = 3;
export const TILE_APPLE = 4;
export const TILE_WALL = 5;
export const TILE_VOID = 6;
