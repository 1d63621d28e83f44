"""FastAPI service: live play sessions over WebSocket plus analysis endpoints.

One process hosts a lobby queue of sessions. Participants connect to ``/ws``,
join with a name, and the service runs each full session (tutorials then the
counterbalanced episode schedule) on an authoritative tick loop, fanning
per-participant frames out after every tick. Finished sessions write their
episode records to the configured output directory.
"""

from __future__ import annotations

import asyncio
import dataclasses
import json
import os
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from cleanuplab import SCHEMA_VERSION, __version__
from cleanuplab.env.config import preset, preset_names
from cleanuplab.errors import CleanupError, RecordCorruptionError
from cleanuplab.experiment import AnalysisOptions, analyze_directory
from cleanuplab.play.session import PlaySession, SessionConfig
from cleanuplab.records import read_record, replay
from cleanuplab.service import schemas


@dataclass
class ServiceSettings:
    session_config: SessionConfig = field(default_factory=SessionConfig)
    order: str = "auto"  # auto | identifiable-first | anonymous-first
    max_sessions: int = 16
    records_dir: str = "session_records"
    reconnect_window_s: float = 60.0
    static_dir: str | None = None  # frontend bundle root (index.html + dist/)


class LiveSession:
    """One session plus its connections and tick task."""

    def __init__(self, session: PlaySession, settings: ServiceSettings):
        self.session = session
        self.settings = settings
        self.sockets: dict[int, WebSocket] = {}
        self.task: asyncio.Task | None = None
        self.disconnect_deadline: float | None = None

    async def broadcast(self, messages: list[tuple[int | None, dict]]) -> None:
        for target, message in messages:
            if target is None:
                for ws in list(self.sockets.values()):
                    await _safe_send(ws, message)
            else:
                ws = self.sockets.get(target)
                if ws is not None:
                    await _safe_send(ws, message)

    async def run(self) -> None:
        # Absolute-deadline scheduling: tick work (simulation + fan-out) is
        # absorbed into the period instead of drifting it.
        tick_s = self.session.config.tick_ms / 1000.0
        loop = asyncio.get_event_loop()
        next_deadline = loop.time() + tick_s
        while self.session.phase not in ("done", "invalid"):
            if self.session.paused:
                if (
                    self.disconnect_deadline is not None
                    and loop.time() > self.disconnect_deadline
                ):
                    self.session.phase = "invalid"
                    await self.broadcast(
                        [(None, {"v": SCHEMA_VERSION, "type": "session_end",
                                 "aborted": True, "reason": "disconnect timeout"})]
                    )
                    break
                await asyncio.sleep(0.05)
                next_deadline = loop.time() + tick_s
                continue
            out = self.session.tick()
            if out:
                await self.broadcast(out)
                delay = next_deadline - loop.time()
                next_deadline += tick_s
                if delay > 0:
                    await asyncio.sleep(delay)
                elif delay < -1.0:
                    next_deadline = loop.time() + tick_s  # fell far behind: resync
            else:
                # Lockstep mode waiting on inputs.
                await asyncio.sleep(0.001)
                next_deadline = loop.time() + tick_s
        if self.session.phase == "done":
            self._write_records()

    def _write_records(self) -> None:
        out_dir = self.settings.records_dir
        os.makedirs(out_dir, exist_ok=True)
        for i, record in enumerate(self.session.records):
            record.write(
                os.path.join(out_dir, f"{self.session.session_id}_ep{i:02d}.jsonl")
            )


async def _safe_send(ws: WebSocket, message: dict) -> None:
    try:
        await ws.send_text(json.dumps(message, separators=(",", ":")))
    except Exception:
        pass


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings()
    app = FastAPI(title="cleanuplab", version=__version__)
    sessions: list[LiveSession] = []
    app.state.sessions = sessions
    app.state.settings = settings

    def _order_for(index: int) -> str:
        if settings.order != "auto":
            return settings.order
        return "identifiable-first" if index % 2 == 0 else "anonymous-first"

    def _open_session() -> LiveSession:
        for live in sessions:
            if live.session.phase == "lobby" and not live.session.full:
                return live
        if len(sessions) >= settings.max_sessions:
            raise HTTPException(status_code=503, detail="session capacity reached")
        config = dataclasses.replace(
            settings.session_config, condition_order=_order_for(len(sessions))
        )
        live = LiveSession(PlaySession(config, f"session{len(sessions)}"), settings)
        sessions.append(live)
        return live

    @app.get("/healthz", response_model=schemas.HealthResponse)
    def healthz():
        return schemas.HealthResponse(version=__version__, schema_version=SCHEMA_VERSION)

    @app.get("/presets", response_model=list[schemas.PresetResponse])
    def presets():
        return [
            schemas.PresetResponse(name=n, params=dataclasses.asdict(preset(n)))
            for n in preset_names()
        ]

    @app.post("/analyze", response_model=schemas.AnalyzeResponse)
    def analyze(request: schemas.AnalyzeRequest):
        options = AnalysisOptions(
            consistency_bins=request.consistency_bins,
            dilemma=request.dilemma,
            mediation_resamples=request.mediation_resamples,
            seed=request.seed,
        )
        try:
            report = analyze_directory(request.logs_dir, request.out_dir, options)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except CleanupError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return schemas.AnalyzeResponse(
            episodes=len(report["episodes"]),
            comparisons=report["comparisons"],
            regressions=report["regressions"],
            mediations=report["mediations"],
            dilemma=report.get("dilemma"),
            paths=report["paths"],
        )

    @app.post("/replay", response_model=schemas.ReplayResponse)
    def replay_endpoint(request: schemas.ReplayRequest):
        try:
            record = read_record(request.record_path)
            replay(record)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except RecordCorruptionError as exc:
            raise HTTPException(
                status_code=422, detail=f"{exc} (step {exc.step})"
            ) from None
        except CleanupError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return schemas.ReplayResponse(
            ok=True, steps=record.length, final_digest=record.final_digest
        )

    @app.get("/sessions", response_model=schemas.SessionsResponse)
    def session_list():
        return schemas.SessionsResponse(
            sessions=[
                schemas.SessionStatus(
                    session_id=live.session.session_id,
                    phase=live.session.phase,
                    phase_index=live.session.phase_index,
                    condition_order=live.session.config.condition_order,
                    participants=live.session.names,
                    connected=live.session.connected,
                    records=len(live.session.records),
                )
                for live in sessions
            ]
        )

    @app.websocket("/ws")
    async def websocket_endpoint(ws: WebSocket):
        await ws.accept()
        live: LiveSession | None = None
        slot: int | None = None
        try:
            raw = await ws.receive_text()
            msg = json.loads(raw)
            if msg.get("type") != "join" or "name" not in msg:
                await ws.close(code=4000, reason="expected a join message")
                return
            live = _open_session()
            session = live.session
            rejoined = False
            if "token" in msg:
                # Reconnection: token is "<session_id>:<slot>"; only honored
                # for sessions still mid-run (stale tokens fall through to a
                # fresh join).
                sid, _, slot_str = str(msg["token"]).partition(":")
                for candidate in sessions:
                    if candidate.session.session_id == sid and candidate.session.phase in (
                        "tutorial",
                        "episode",
                    ):
                        live = candidate
                        session = live.session
                        slot = int(slot_str)
                        session.connected[slot] = True
                        rejoined = True
                        break
            if not rejoined:
                slot = session.join(str(msg["name"]))
            live.sockets[slot] = ws
            await _safe_send(
                ws,
                {
                    "v": SCHEMA_VERSION,
                    "type": "joined",
                    "slot": slot,
                    "token": f"{session.session_id}:{slot}",
                    "session_id": session.session_id,
                },
            )
            await live.broadcast([(None, session.lobby_state())])
            if rejoined and all(session.connected):
                session.paused = False
                live.disconnect_deadline = None
            if session.full and session.phase == "lobby":
                out = session.start()
                await live.broadcast(out)
                live.task = asyncio.create_task(live.run())
            while True:
                raw = await ws.receive_text()
                msg = json.loads(raw)
                if msg.get("type") == "input" and slot is not None:
                    session.submit_input(slot, int(msg.get("action", -1)))
        except WebSocketDisconnect:
            pass
        finally:
            if live is not None and slot is not None:
                live.sockets.pop(slot, None)
                live.session.connected[slot] = False
                if live.session.phase in ("tutorial", "episode"):
                    live.session.paused = True
                    live.disconnect_deadline = (
                        asyncio.get_event_loop().time() + settings.reconnect_window_s
                    )

    if settings.static_dir and os.path.isdir(settings.static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=settings.static_dir, html=True), name="client")

    return app
