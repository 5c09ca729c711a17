"""FastAPI service hosting one collaborative session.

The WebSocket endpoint `/ws` is the member connection: one connection is one
member, frames are binary per the wire protocol, and the first frame must be
a Join. REST endpoints expose read-only views (health, session info, metrics,
snapshot, PlantUML export) of the same session.

All session handlers run under one asyncio lock, preserving the serial-loop
contract; per-connection sender tasks drain FIFO queues so output order per
member matches handler output order.
"""

from __future__ import annotations

import asyncio
import logging
import time
from typing import Optional

from fastapi import FastAPI, Response, WebSocket, WebSocketDisconnect

from ..model import UserId
from ..persistence import export_plantuml, save_snapshot
from ..server import ServerConfig, SessionServer
from ..wire import (
    Join,
    Leave,
    MovementPacket,
    Nack,
    PresencePacket,
    WireError,
    decode_frame,
    encode_frame,
)
from .schemas import HealthResponse, MemberEntry, MetricsResponse, SessionInfoResponse

logger = logging.getLogger("modelsync.service")


class SessionHub:
    """Owns the SessionServer and the per-member outgoing queues."""

    def __init__(self, config: Optional[ServerConfig] = None):
        self.server = SessionServer(config=config)
        self.lock = asyncio.Lock()
        self.queues: dict[UserId, asyncio.Queue[bytes]] = {}

    @staticmethod
    def now_ms() -> float:
        return time.monotonic() * 1000.0

    def route(self, outputs) -> None:
        for user, frame in outputs:
            queue = self.queues.get(user)
            if queue is not None:
                queue.put_nowait(encode_frame(frame))


def create_app(config: Optional[ServerConfig] = None) -> FastAPI:
    app = FastAPI(title="modelsync session server")
    hub = SessionHub(config)
    app.state.hub = hub

    @app.websocket("/ws")
    async def member_connection(ws: WebSocket) -> None:
        await ws.accept()
        user: Optional[UserId] = None
        sender: Optional[asyncio.Task] = None
        try:
            user = await _join_handshake(hub, ws)
            if user is None:
                return
            queue = hub.queues[user]
            sender = asyncio.create_task(_drain(queue, ws))
            while True:
                data = await ws.receive_bytes()
                try:
                    frame = decode_frame(data)
                except WireError as err:
                    logger.warning("undecodable frame from %s: %s", user, err)
                    continue
                if isinstance(frame, Leave):
                    break
                async with hub.lock:
                    if isinstance(frame, MovementPacket):
                        outputs = hub.server.handle_movement(user, frame, hub.now_ms())
                    elif isinstance(frame, PresencePacket):
                        outputs = hub.server.handle_presence(user, frame, hub.now_ms())
                    else:
                        outputs = hub.server.handle_control(user, frame)
                    hub.route(outputs)
        except WebSocketDisconnect:
            pass
        finally:
            if sender is not None:
                # let queued frames flush before tearing the connection down,
                # but never hang on a dead socket
                queue = hub.queues.get(user)
                if queue is not None:
                    try:
                        await asyncio.wait_for(queue.join(), timeout=2.0)
                    except asyncio.TimeoutError:
                        pass
                sender.cancel()
            if user is not None:
                hub.queues.pop(user, None)
                async with hub.lock:
                    hub.route(hub.server.handle_disconnect(user))
            try:
                await ws.close()
            except RuntimeError:
                pass  # already closed by the peer

    @app.get("/health", response_model=HealthResponse)
    async def health() -> HealthResponse:
        st = hub.server.state
        return HealthResponse(
            status="ok",
            session=str(st.session),
            members=len(st.members),
            last_seq=st.next_seq - 1,
        )

    @app.get("/session", response_model=SessionInfoResponse)
    async def session_info() -> SessionInfoResponse:
        st = hub.server.state
        return SessionInfoResponse(
            session=str(st.session),
            members=[
                MemberEntry(user_id=str(u), display_name=m.display_name)
                for u, m in st.members.items()
            ],
            classes=len(st.model.classes),
            connectors=len(st.model.connectors),
            last_seq=st.next_seq - 1,
            ownership={str(e): str(u) for e, u in st.ownership.items()},
        )

    @app.get("/metrics", response_model=MetricsResponse)
    async def metrics() -> MetricsResponse:
        return MetricsResponse(**hub.server.metrics.as_jsonable())

    @app.get("/snapshot")
    async def snapshot() -> Response:
        async with hub.lock:
            data = save_snapshot(hub.server.state)
        return Response(content=data, media_type="application/json")

    @app.get("/export/plantuml")
    async def plantuml() -> Response:
        async with hub.lock:
            text = export_plantuml(hub.server.state.model)
        return Response(content=text, media_type="text/plain")

    return app


async def _join_handshake(hub: SessionHub, ws: WebSocket) -> Optional[UserId]:
    """First frame must be a Join; replies Welcome (registering the member)
    or a Nack followed by close."""
    data = await ws.receive_bytes()
    try:
        frame = decode_frame(data)
    except WireError as err:
        await ws.send_bytes(encode_frame(Nack(reason=f"BadJoin:{err.kind.value}")))
        return None
    if not isinstance(frame, Join):
        await ws.send_bytes(encode_frame(Nack(reason="BadJoin:ExpectedJoin")))
        return None
    async with hub.lock:
        user, reply, outputs = hub.server.handle_join(frame.display_name)
        if user is not None:
            hub.queues[user] = asyncio.Queue()
        hub.route(outputs)
    await ws.send_bytes(encode_frame(reply))
    return user


async def _drain(queue: asyncio.Queue, ws: WebSocket) -> None:
    while True:
        data = await queue.get()
        try:
            await ws.send_bytes(data)
        finally:
            queue.task_done()
