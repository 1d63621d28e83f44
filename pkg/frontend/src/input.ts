// Keyboard capture under the 100 ms buffer rule: within an acceptance
// window the latest keypress wins, and at most one action message leaves
// the client per window (10 per second at the default interval).

import { ActionId } from "./protocol.js";

export interface KeyBinding {
  [key: string]: ActionId;
}

export const DEFAULT_KEYS: KeyBinding = {
  ArrowUp: ActionId.MoveUp,
  ArrowDown: ActionId.MoveDown,
  ArrowLeft: ActionId.MoveLeft,
  ArrowRight: ActionId.MoveRight,
  q: ActionId.RotateLeft,
  e: ActionId.RotateRight,
  " ": ActionId.FireClean,
  f: ActionId.FireTicket,
};

export type Clock = () => number; // milliseconds

export class InputBuffer {
  private pending: ActionId | null = null;
  private lastSent = -Infinity;
  private active = false;

  constructor(
    private readonly send: (action: ActionId) => void,
    private readonly clock: Clock,
    private readonly minIntervalMs = 100,
    private readonly bindings: KeyBinding = DEFAULT_KEYS,
  ) {}

  /** Input only counts during active play phases (tutorial text screens and
   *  lobby suppress capture entirely). */
  setActive(active: boolean): void {
    this.active = active;
    if (!active) {
      this.pending = null;
    }
  }

  keyDown(key: string): void {
    if (!this.active) return;
    const action = this.bindings[key];
    if (action === undefined) return; // unmapped keys ignored
    this.pending = action; // latest-wins within the window
    this.flush();
  }

  /** Emit the pending action if the rate window allows; call on key events
   *  and periodically (e.g. per animation frame) for held keys. */
  flush(): void {
    if (!this.active || this.pending === null) return;
    const now = this.clock();
    if (now - this.lastSent >= this.minIntervalMs) {
      this.send(this.pending);
      this.pending = null;
      this.lastSent = now;
    }
  }
}
