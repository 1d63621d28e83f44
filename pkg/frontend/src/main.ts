// Browser entry point: connect, capture keys under the buffer rule, render.

import { GameClient, Transport } from "./client.js";
import { DEFAULT_KEYS, InputBuffer } from "./input.js";
import { CanvasRenderer } from "./renderer.js";

function browserTransport(url: string): Transport {
  const socket = new WebSocket(url);
  let messageHandler: (raw: string) => void = () => undefined;
  let closeHandler: () => void = () => undefined;
  socket.onmessage = (event) => messageHandler(String(event.data));
  socket.onclose = () => closeHandler();
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

function start(): void {
  const canvas = document.getElementById("arena") as HTMLCanvasElement;
  const hud = document.getElementById("hud") as HTMLElement;
  const banner = document.getElementById("banner") as HTMLElement;
  const name =
    new URLSearchParams(window.location.search).get("name") ??
    `player-${Math.floor(Math.random() * 10_000)}`;
  const url = `${window.location.protocol === "https:" ? "wss" : "ws"}://${window.location.host}/ws`;

  const renderer = new CanvasRenderer(canvas, hud);
  const transport = browserTransport(url);
  const storedToken = sessionStorage.getItem("cleanuplab-token") ?? undefined;

  const client = new GameClient(transport, name, {
    onView: (view) => renderer.draw(view),
    onPhaseChange: (view) => {
      if (view.phase) {
        banner.textContent =
          view.phase.kind === "tutorial"
            ? `Tutorial ${view.phase.index + 1}: ${view.phase.name ?? ""}`
            : `Episode ${view.phase.index + 1} of 14 - ${view.phase.condition}`;
      }
      buffer.setActive(true);
    },
    onMessage: (message) => {
      if (message.type === "joined") {
        sessionStorage.setItem("cleanuplab-token", `${message.token}`);
      }
      if (message.type === "lobby_state") {
        banner.textContent = `Waiting for players (${message.needed} more needed)`;
      }
      if (message.type === "phase_end") {
        buffer.setActive(false);
      }
    },
    onEnd: (message) => {
      banner.textContent = "Session complete - thank you!";
      buffer.setActive(false);
      if (message.type === "session_end" && message.totals) {
        hud.textContent = message.totals
          .map((t) => `${t.name}: ${t.total}`)
          .join(" | ");
      }
    },
    onSchemaError: () => {
      banner.textContent = "Protocol mismatch - please reload to reconnect.";
      transport.close();
    },
  });

  const buffer = new InputBuffer(
    (action) => client.sendAction(action),
    () => performance.now(),
    100,
    DEFAULT_KEYS,
  );

  window.addEventListener("keydown", (event) => {
    if (event.key in DEFAULT_KEYS) event.preventDefault();
    buffer.keyDown(event.key);
  });
  window.setInterval(() => buffer.flush(), 25); // held keys re-emit per window

  client.join(storedToken);
}

window.addEventListener("DOMContentLoaded", start);
