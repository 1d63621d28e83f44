// Scripted headless participant for protocol conformance runs: joins a
// session, answers every frame with a scripted action through the client
// input buffer, and reports the observed phase schedule on exit.

import WebSocket from "ws";

import { GameClient, Transport } from "./client.js";
import { InputBuffer } from "./input.js";
import { ActionId, ServerMessage } from "./protocol.js";

export interface HeadlessResult {
  phases: { kind: string; index: number; condition?: string }[];
  frames: number;
  rawAnonymousFrames: string[];
  actionsSent: number;
  totals?: unknown;
}

export function nodeTransport(socket: WebSocket): Transport {
  let messageHandler: (raw: string) => void = () => undefined;
  let closeHandler: () => void = () => undefined;
  socket.on("message", (data) => messageHandler(data.toString()));
  socket.on("close", () => closeHandler());
  return {
    send: (text) => socket.send(text),
    close: () => socket.close(),
    onMessage: (handler) => {
      messageHandler = handler;
    },
    onClose: (handler) => {
      closeHandler = handler;
    },
  };
}

export function runHeadless(
  url: string,
  name: string,
  script: (step: number) => ActionId = (step) => (step % 2 === 0 ? ActionId.MoveLeft : ActionId.FireClean),
  minIntervalMs = 100,
): Promise<HeadlessResult> {
  return new Promise((resolve, reject) => {
    const socket = new WebSocket(url);
    const result: HeadlessResult = {
      phases: [],
      frames: 0,
      rawAnonymousFrames: [],
      actionsSent: 0,
    };
    let condition: string | undefined;
    const timer = setTimeout(() => reject(new Error("headless run timed out")), 600_000);

    socket.on("error", (error) => {
      clearTimeout(timer);
      reject(error);
    });
    socket.on("open", () => {
      const transport = nodeTransport(socket);
      const buffer = new InputBuffer(
        (action) => {
          client.sendAction(action);
          result.actionsSent += 1;
        },
        () => Date.now(),
        minIntervalMs,
      );
      const client: GameClient = new GameClient(transport, name, {
        onMessage: (message: ServerMessage, raw: string) => {
          if (message.type === "phase_start") {
            condition = message.phase.condition;
            result.phases.push({
              kind: message.phase.kind,
              index: message.phase.index,
              condition: message.phase.condition,
            });
            buffer.setActive(true);
          }
          if (message.type === "frame") {
            result.frames += 1;
            if (condition === "anonymous") {
              result.rawAnonymousFrames.push(raw);
            }
            buffer.setActive(true);
            bufferedKey(buffer, script(result.frames));
            buffer.flush();
          }
          if (message.type === "session_end") {
            result.totals = (message as { totals?: unknown }).totals;
            clearTimeout(timer);
            socket.close();
            resolve(result);
          }
        },
      });
      client.join();
    });
  });
}

const KEY_FOR_ACTION: Record<number, string> = {
  [ActionId.MoveUp]: "ArrowUp",
  [ActionId.MoveDown]: "ArrowDown",
  [ActionId.MoveLeft]: "ArrowLeft",
  [ActionId.MoveRight]: "ArrowRight",
  [ActionId.RotateLeft]: "q",
  [ActionId.RotateRight]: "e",
  [ActionId.FireClean]: " ",
  [ActionId.FireTicket]: "f",
};

function bufferedKey(buffer: InputBuffer, action: ActionId): void {
  const key = KEY_FOR_ACTION[action];
  if (key !== undefined) buffer.keyDown(key);
}

// CLI: node dist/headless.js ws://127.0.0.1:8000/ws name
if (process.argv[1] && process.argv[1].endsWith("headless.js")) {
  const [, , url = "ws://127.0.0.1:8000/ws", name = "headless"] = process.argv;
  runHeadless(url, name)
    .then((result) => {
      console.log(JSON.stringify({ phases: result.phases, frames: result.frames }, null, 2));
    })
    .catch((error) => {
      console.error(error);
      process.exit(1);
    });
}
