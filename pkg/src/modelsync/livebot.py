"""Wall-clock bot client: runs a scenario script against a live server.

Same action semantics as the simulator's bots, but over a real WebSocket
connection with asyncio timing. Used by the `bot` and `snapshot` CLI
subcommands.
"""

from __future__ import annotations

import asyncio
import logging
import time
import uuid
from typing import Optional

from websockets.asyncio.client import connect

from .geometry import lerp_pose, teleport_target
from .model import IDENTITY_POSE, Pose, SessionId, Vec3
from .replica import ClientReplica, LocalValidationFailed
from .scenario import Action, BotScript
from .wire import (
    GestureState,
    GrabRequest,
    Join,
    Leave,
    MovementPacket,
    Nack,
    PresencePacket,
    VoiceFrame,
    Welcome,
    decode_frame,
    encode_frame,
)

logger = logging.getLogger("modelsync.bot")

AVATAR_EYE_HEIGHT = 1.7
_NIL_USER = uuid.UUID(int=1)


def ws_url(server: str) -> str:
    url = server.rstrip("/")
    if url.startswith("http://"):
        url = "ws://" + url[len("http://"):]
    elif url.startswith("https://"):
        url = "wss://" + url[len("https://"):]
    if not url.endswith("/ws"):
        url += "/ws"
    return url


class LiveBot:
    def __init__(self, name: str):
        self.name = name
        self.replica = ClientReplica(me=_NIL_USER, display_name=name)
        self.session_id: Optional[SessionId] = None
        self.head = Pose(Vec3(0.0, AVATAR_EYE_HEIGHT, 0.0), IDENTITY_POSE.orientation)
        self.presence_seq = 0
        self.drag_poses: dict = {}
        self.welcomed = asyncio.Event()
        self.join_error: Optional[str] = None

    def on_frame(self, data: bytes) -> None:
        frame = decode_frame(data)
        if isinstance(frame, Welcome):
            self.session_id = frame.snapshot_session
            self.replica.on_control(frame)
            self.welcomed.set()
            return
        if isinstance(frame, Nack) and not self.welcomed.is_set():
            self.join_error = frame.reason
            self.welcomed.set()
            return
        if isinstance(frame, (MovementPacket, PresencePacket)):
            self.replica.on_movement(frame)
        else:
            self.replica.on_control(frame)


async def run_script(server: str, script: BotScript, *, timeout: float = 60.0) -> ClientReplica:
    """Connect, execute the script on the wall clock, disconnect."""
    bot = LiveBot(script.name)
    async with connect(ws_url(server), max_size=2**22) as ws:
        receiver = asyncio.create_task(_receive_loop(ws, bot))
        try:
            await ws.send(encode_frame(Join(display_name=script.name)))
            await asyncio.wait_for(bot.welcomed.wait(), timeout=timeout)
            if bot.join_error is not None:
                raise ConnectionError(f"join rejected: {bot.join_error}")
            presence_task = None
            if script.presence_hz > 0:
                presence_task = asyncio.create_task(_presence_loop(ws, bot, script.presence_hz))
            start = time.monotonic()
            left = False
            for action in script.actions:
                await _sleep_until(start, action.at_ms)
                left = await _run_action(ws, bot, action)
                if left:
                    break
            if presence_task is not None:
                presence_task.cancel()
            if not left:
                await ws.send(encode_frame(Leave()))
        finally:
            receiver.cancel()
    return bot.replica


async def _receive_loop(ws, bot: LiveBot) -> None:
    async for data in ws:
        if isinstance(data, bytes):
            bot.on_frame(data)


async def _presence_loop(ws, bot: LiveBot, hz: float) -> None:
    interval = 1.0 / hz
    while True:
        await ws.send(encode_frame(_presence_packet(bot)))
        await asyncio.sleep(interval)


def _presence_packet(bot: LiveBot) -> PresencePacket:
    bot.presence_seq += 1
    head = bot.head
    left = Pose(Vec3(head.position.x - 0.25, head.position.y - 0.45, head.position.z + 0.25), head.orientation)
    right = Pose(Vec3(head.position.x + 0.25, head.position.y - 0.45, head.position.z + 0.25), head.orientation)
    return PresencePacket(
        user=bot.replica.me,
        seq=bot.presence_seq,
        head=head,
        left_hand=left,
        right_hand=right,
        left_gesture=GestureState.RELAXED,
        right_gesture=GestureState.RELAXED,
    )


async def _sleep_until(start: float, at_ms: float) -> None:
    delay = at_ms / 1000.0 - (time.monotonic() - start)
    if delay > 0:
        await asyncio.sleep(delay)


def _effective_pose(bot: LiveBot, element) -> Pose:
    if element in bot.drag_poses:
        return bot.drag_poses[element]
    entry = bot.replica.live_poses.get(element)
    if entry is not None and entry[1] is not None:
        return entry[1]
    node = bot.replica.committed.classes.get(element)
    return node.pose if node is not None else IDENTITY_POSE


async def _run_action(ws, bot: LiveBot, action: Action) -> bool:
    """Execute one scripted action; returns True when the bot left."""
    if action.op == "join":
        return False  # already joined during the handshake
    if action.op == "leave":
        await ws.send(encode_frame(Leave()))
        return True
    if action.op == "submit":
        try:
            submit = bot.replica.submit_local(action.event)
        except LocalValidationFailed as err:
            logger.warning("local validation failed: %s", err)
            return False
        await ws.send(encode_frame(submit))
    elif action.op == "grab":
        await ws.send(encode_frame(GrabRequest(object=action.object)))
    elif action.op == "move":
        await _run_move(ws, bot, action)
    elif action.op == "release":
        pose = action.pose if action.pose is not None else _effective_pose(bot, action.object)
        bot.drag_poses.pop(action.object, None)
        if action.object in bot.replica.held:
            await ws.send(encode_frame(bot.replica.make_release(action.object, pose)))
    elif action.op == "speak":
        await ws.send(encode_frame(VoiceFrame(data=action.data)))
    elif action.op == "teleport":
        target = teleport_target(action.pose, action.max_range)
        if target is not None:
            bot.head = Pose(
                Vec3(target.x, target.y + AVATAR_EYE_HEIGHT, target.z), action.pose.orientation
            )
            await ws.send(encode_frame(_presence_packet(bot)))
    return False


async def _run_move(ws, bot: LiveBot, action: Action) -> None:
    start_pose = _effective_pose(bot, action.object)
    steps = max(1, int(round(action.duration_ms * action.rate_hz / 1000.0)))
    interval = 1.0 / action.rate_hz
    t0 = time.monotonic()
    for k in range(steps):
        delay = k * interval - (time.monotonic() - t0)
        if delay > 0:
            await asyncio.sleep(delay)
        pose = lerp_pose(start_pose, action.pose, (k + 1) / steps)
        bot.drag_poses[action.object] = pose
        if action.object in bot.replica.held:
            await ws.send(encode_frame(bot.replica.next_movement(action.object, pose)))


async def fetch_snapshot(server: str, *, timeout: float = 30.0) -> bytes:
    """Join with a scratch identity, capture Welcome's snapshot, and leave."""
    from .persistence import SnapshotDocument, snapshot_to_bytes

    bot = LiveBot("snapshot-probe")
    async with connect(ws_url(server), max_size=2**22) as ws:
        receiver = asyncio.create_task(_receive_loop(ws, bot))
        try:
            await ws.send(encode_frame(Join(display_name=bot.name)))
            await asyncio.wait_for(bot.welcomed.wait(), timeout=timeout)
            if bot.join_error is not None:
                raise ConnectionError(f"join rejected: {bot.join_error}")
            await ws.send(encode_frame(Leave()))
        finally:
            receiver.cancel()
    assert bot.session_id is not None
    doc = SnapshotDocument(
        session=bot.session_id,
        model=bot.replica.committed,
        last_seq=bot.replica.last_applied_seq,
    )
    return snapshot_to_bytes(doc)
