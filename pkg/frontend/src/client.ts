// Connection and phase-flow state machine, transport-injected so the same
// client drives a browser WebSocket or a node `ws` socket (headless runs).

import {
  FrameMessage,
  InputMessage,
  JoinMessage,
  SCHEMA_VERSION,
  ServerMessage,
  parseServerMessage,
} from "./protocol.js";
import { applyFrame, ClientView, emptyView, setPhase } from "./view.js";

export interface Transport {
  send(text: string): void;
  close(): void;
  onMessage(handler: (raw: string) => void): void;
  onClose(handler: () => void): void;
}

export interface ClientEvents {
  onView?: (view: ClientView) => void;
  onMessage?: (message: ServerMessage, raw: string) => void;
  onPhaseChange?: (view: ClientView) => void;
  onEnd?: (message: ServerMessage) => void;
  onSchemaError?: (error: Error) => void;
}

export class GameClient {
  view: ClientView = emptyView();
  slot = -1;
  token: string | null = null;
  sessionId: string | null = null;
  inEpisodeOrTutorial = false;
  finished = false;

  constructor(
    private readonly transport: Transport,
    private readonly name: string,
    private readonly events: ClientEvents = {},
  ) {
    transport.onMessage((raw) => this.handle(raw));
    transport.onClose(() => {
      // No client-side simulation: the view simply freezes on disconnect.
      this.inEpisodeOrTutorial = false;
    });
  }

  join(token?: string): void {
    const message: JoinMessage = { v: SCHEMA_VERSION, type: "join", name: this.name };
    if (token) message.token = token;
    this.transport.send(JSON.stringify(message));
  }

  sendAction(action: number): void {
    const message: InputMessage = { v: SCHEMA_VERSION, type: "input", action };
    this.transport.send(JSON.stringify(message));
  }

  private handle(raw: string): void {
    let message: ServerMessage;
    try {
      message = parseServerMessage(raw);
    } catch (error) {
      this.events.onSchemaError?.(error as Error);
      return;
    }
    this.events.onMessage?.(message, raw);
    switch (message.type) {
      case "joined":
        this.slot = message.slot;
        this.token = message.token;
        this.sessionId = message.session_id;
        break;
      case "phase_start":
        this.view = setPhase(this.view, message.phase);
        this.inEpisodeOrTutorial = true;
        this.events.onPhaseChange?.(this.view);
        break;
      case "phase_end":
        this.inEpisodeOrTutorial = false;
        break;
      case "frame":
        this.view = applyFrame(this.view, message as FrameMessage);
        this.inEpisodeOrTutorial = true;
        this.events.onView?.(this.view);
        break;
      case "session_end":
        this.finished = true;
        this.inEpisodeOrTutorial = false;
        this.events.onEnd?.(message);
        break;
      default:
        break;
    }
  }
}
