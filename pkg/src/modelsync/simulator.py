"""Deterministic discrete-event network simulator.

Single-threaded virtual-time loop driving the real SessionServer and real
ClientReplica instances over encoded wire frames. Reliable (control) frames
are never dropped and stay FIFO per link even under adversarial jitter;
movement/presence frames may drop and reorder. Identical (scenario, net
config) input yields a byte-identical report.
"""

from __future__ import annotations

import heapq
import uuid
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Optional

from . import canonical
from .geometry import lerp_pose, teleport_target
from .model import IDENTITY_POSE, Pose, Quat, UserId, Vec3
from .persistence import canonical_model_bytes, diff_models
from .replica import ClientReplica, LocalValidationFailed
from .scenario import Action, BotScript, Scenario
from .server import ServerConfig, SessionServer
from .wire import (
    ControlMessage,
    EventBroadcast,
    Frame,
    GestureState,
    GrabDeny,
    GrabGrant,
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

AVATAR_EYE_HEIGHT = 1.7
_NIL_USER = uuid.UUID(int=1)  # replica placeholder until Welcome assigns the real id


@dataclass(frozen=True)
class NetConfig:
    base_latency_ms: float = 0.0
    jitter_ms: float = 0.0  # uniform +/- around the base
    movement_loss_prob: float = 0.0  # movement/presence frames only
    seed: int = 0

    def __post_init__(self) -> None:
        if self.base_latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency/jitter must be non-negative")
        if not 0.0 <= self.movement_loss_prob <= 1.0:
            raise ValueError("movement_loss_prob must be in [0,1]")


@dataclass
class _BotState:
    script: BotScript
    replica: ClientReplica
    user_id: Optional[UserId] = None
    left: bool = False
    presence_seq: int = 0
    head: Pose = field(default_factory=lambda: Pose(Vec3(0.0, AVATAR_EYE_HEIGHT, 0.0), Quat(0, 0, 0, 1)))
    drag_poses: dict = field(default_factory=dict)
    observed_seqs: list = field(default_factory=list)
    grants: int = 0
    denies: int = 0
    nacks: int = 0
    voice_frames: int = 0
    skipped_actions: int = 0
    local_rejects: int = 0
    presence_started: bool = False
    up_fifo_at: float = 0.0  # FIFO clamps for the reliable channel
    down_fifo_at: float = 0.0

    @property
    def joined(self) -> bool:
        return self.user_id is not None and not self.left


class Sim:
    """One simulation run; retains server and bot state for inspection."""

    def __init__(self, scenario: Scenario, net: NetConfig, server_config: Optional[ServerConfig] = None):
        self.scenario = scenario
        self.net = net
        self.rng = Random(net.seed)
        self.server = SessionServer(
            config=server_config or ServerConfig(),
            session_id=self._seeded_uuid(),
            id_factory=self._seeded_uuid,
        )
        self.bots = {b.name: _BotState(script=b, replica=ClientReplica(me=_NIL_USER)) for b in scenario.bots}
        self._by_user: dict[UserId, _BotState] = {}
        self.now = 0.0
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._counter = 0
        self.bytes_per_channel = {"control": 0, "movement": 0, "presence": 0, "voice": 0}
        self.movement_sent = 0
        self.presence_sent = 0
        self._ran = False

    def _seeded_uuid(self) -> uuid.UUID:
        return uuid.UUID(bytes=self.rng.getrandbits(128).to_bytes(16, "big"), version=4)

    def _schedule(self, at_ms: float, fn: Callable[[], None]) -> None:
        self._counter += 1
        heapq.heappush(self._heap, (at_ms, self._counter, fn))

    # --- transport -------------------------------------------------------------

    def _latency(self) -> float:
        base = self.net.base_latency_ms
        jitter = self.rng.uniform(-self.net.jitter_ms, self.net.jitter_ms)
        return max(0.0, base + jitter)

    def _client_send(self, bot: _BotState, frame: Frame) -> None:
        data = encode_frame(frame)
        channel = _channel_of(frame)
        self.bytes_per_channel[channel] += len(data)
        lossy = channel in ("movement", "presence")
        if channel == "movement":
            self.movement_sent += 1
        elif channel == "presence":
            self.presence_sent += 1
        if lossy:
            if self.rng.random() < self.net.movement_loss_prob:
                return  # lost in transit
            deliver_at = self.now + self._latency()
        else:
            deliver_at = max(self.now + self._latency(), bot.up_fifo_at)
            bot.up_fifo_at = deliver_at
        self._schedule(deliver_at, lambda: self._deliver_to_server(bot, data))

    def _server_send(self, bot: _BotState, frame: Frame) -> None:
        data = encode_frame(frame)
        lossy = isinstance(frame, (MovementPacket, PresencePacket))
        if lossy:
            if self.rng.random() < self.net.movement_loss_prob:
                return
            deliver_at = self.now + self._latency()
        else:
            deliver_at = max(self.now + self._latency(), bot.down_fifo_at)
            bot.down_fifo_at = deliver_at
        self._schedule(deliver_at, lambda: self._deliver_to_bot(bot, data))

    def _route(self, outputs) -> None:
        for user, frame in outputs:
            target = self._by_user.get(user)
            if target is not None and not target.left:
                self._server_send(target, frame)

    # --- server side -------------------------------------------------------------

    def _deliver_to_server(self, bot: _BotState, data: bytes) -> None:
        frame = decode_frame(data)
        if isinstance(frame, Join):
            user, reply, outputs = self.server.handle_join(frame.display_name)
            if user is not None:
                bot.user_id = user
                self._by_user[user] = bot
            self._server_send(bot, reply)
            self._route(outputs)
            return
        if bot.user_id is None:
            return
        if isinstance(frame, Leave):
            self._route(self.server.handle_disconnect(bot.user_id))
            return
        if isinstance(frame, MovementPacket):
            self._route(self.server.handle_movement(bot.user_id, frame, self.now))
        elif isinstance(frame, PresencePacket):
            self._route(self.server.handle_presence(bot.user_id, frame, self.now))
        else:
            self._route(self.server.handle_control(bot.user_id, frame))

    # --- client side --------------------------------------------------------------

    def _deliver_to_bot(self, bot: _BotState, data: bytes) -> None:
        frame = decode_frame(data)
        if isinstance(frame, (MovementPacket, PresencePacket)):
            bot.replica.on_movement(frame)
            return
        if isinstance(frame, EventBroadcast):
            bot.observed_seqs.append(frame.seq)
        elif isinstance(frame, GrabGrant) and frame.owner == bot.user_id:
            bot.grants += 1
        elif isinstance(frame, GrabDeny):
            bot.denies += 1
        elif isinstance(frame, Nack):
            bot.nacks += 1
        elif isinstance(frame, VoiceFrame):
            bot.voice_frames += 1
        bot.replica.on_control(frame)
        if isinstance(frame, Welcome) and not bot.presence_started and bot.script.presence_hz > 0:
            bot.presence_started = True
            self._presence_tick(bot)

    def _presence_tick(self, bot: _BotState) -> None:
        """Avatar presence streams from Welcome until the script's end."""
        if bot.left or self.now >= bot.script.end_ms:
            return
        self._send_presence(bot)
        self._schedule(self.now + 1000.0 / bot.script.presence_hz, lambda: self._presence_tick(bot))

    # --- scripted actions -----------------------------------------------------------

    def _run_action(self, bot: _BotState, action: Action) -> None:
        if action.op == "join":
            self._client_send(bot, Join(display_name=bot.script.name))
            return
        if bot.left:
            return
        if action.op == "leave":
            bot.left = True  # stop acting immediately; server processes on arrival
            self._client_send_reliable_leave(bot)
            return
        if bot.user_id is None:
            bot.skipped_actions += 1  # still waiting for Welcome; scripts should leave slack
            return
        if action.op == "submit":
            try:
                submit = bot.replica.submit_local(action.event)
            except LocalValidationFailed:
                bot.local_rejects += 1
                return
            self._client_send(bot, submit)
        elif action.op == "grab":
            self._client_send(bot, GrabRequest(object=action.object))
        elif action.op == "move":
            self._start_move(bot, action)
        elif action.op == "release":
            self._release(bot, action)
        elif action.op == "speak":
            self._client_send(bot, VoiceFrame(data=action.data))
        elif action.op == "teleport":
            target = teleport_target(action.pose, action.max_range)
            if target is not None:
                bot.head = Pose(
                    Vec3(target.x, target.y + AVATAR_EYE_HEIGHT, target.z),
                    action.pose.orientation,
                )
                self._send_presence(bot)

    def _client_send_reliable_leave(self, bot: _BotState) -> None:
        # bot.left is already set; bypass the acting gate for the farewell frame
        data = encode_frame(Leave())
        self.bytes_per_channel["control"] += len(data)
        deliver_at = max(self.now + self._latency(), bot.up_fifo_at)
        bot.up_fifo_at = deliver_at
        self._schedule(deliver_at, lambda: self._deliver_to_server(bot, data))

    def _effective_pose(self, bot: _BotState, element) -> Pose:
        if element in bot.drag_poses:
            return bot.drag_poses[element]
        mark_pose = bot.replica.live_poses.get(element)
        if mark_pose is not None and mark_pose[1] is not None:
            return mark_pose[1]
        node = bot.replica.committed.classes.get(element)
        return node.pose if node is not None else IDENTITY_POSE

    def _start_move(self, bot: _BotState, action: Action) -> None:
        start = self._effective_pose(bot, action.object)
        steps = max(1, int(round(action.duration_ms * action.rate_hz / 1000.0)))
        interval = 1000.0 / action.rate_hz
        for k in range(steps):
            pose = lerp_pose(start, action.pose, (k + 1) / steps)
            self._schedule(self.now + k * interval, self._mover(bot, action.object, pose))

    def _mover(self, bot: _BotState, element, pose: Pose) -> Callable[[], None]:
        def fire() -> None:
            if bot.left:
                return
            bot.drag_poses[element] = pose
            if element in bot.replica.held:
                self._client_send(bot, bot.replica.next_movement(element, pose))

        return fire

    def _release(self, bot: _BotState, action: Action) -> None:
        pose = action.pose if action.pose is not None else self._effective_pose(bot, action.object)
        bot.drag_poses.pop(action.object, None)
        if action.object in bot.replica.held:
            self._client_send(bot, bot.replica.make_release(action.object, pose))
        else:
            bot.skipped_actions += 1

    def _send_presence(self, bot: _BotState) -> None:
        if not bot.joined:
            return
        bot.presence_seq += 1
        head = bot.head
        left = Pose(Vec3(head.position.x - 0.25, head.position.y - 0.45, head.position.z + 0.25), head.orientation)
        right = Pose(Vec3(head.position.x + 0.25, head.position.y - 0.45, head.position.z + 0.25), head.orientation)
        self._client_send(
            bot,
            PresencePacket(
                user=bot.user_id,
                seq=bot.presence_seq,
                head=head,
                left_hand=left,
                right_hand=right,
                left_gesture=GestureState.RELAXED,
                right_gesture=GestureState.RELAXED,
            ),
        )

    # --- main loop ---------------------------------------------------------------------

    def run(self) -> dict:
        if self._ran:
            raise RuntimeError("a Sim instance runs once")
        self._ran = True
        for bot in self.bots.values():
            for action in bot.script.actions:
                self._schedule(action.at_ms, _bind_action(self, bot, action))
        # Quiescence drain: the loop runs until nothing is scheduled or in
        # flight, so convergence never depends on a lucky cutoff.
        while self._heap:
            at, _, fn = heapq.heappop(self._heap)
            self.now = at
            fn()
        return self._report()

    def _report(self) -> dict:
        server_bytes = canonical_model_bytes(self.server.state.model)
        diffs: list[str] = []
        for name, bot in sorted(self.bots.items()):
            if not bot.joined:
                continue
            if canonical_model_bytes(bot.replica.committed) != server_bytes:
                d = diff_models(self.server.state.model, bot.replica.committed)
                diffs.append(f"bot {name}: {d}")
        m = self.server.metrics
        return {
            "bytes_per_channel": dict(self.bytes_per_channel),
            "converged": not diffs,
            "events_broadcast": m.events_broadcast,
            "final_diff": "\n".join(diffs) if diffs else None,
            "movement": {
                "sent": self.movement_sent,
                "received": m.movement_received,
                "forwarded": m.movement_forwarded,
                "dropped": dict(m.movement_dropped),
                "lost_in_transit": self.movement_sent - m.movement_received,
            },
            "presence": {
                "sent": self.presence_sent,
                "received": m.presence_received,
                "forwarded": m.presence_forwarded,
                "dropped": dict(m.presence_dropped),
                "lost_in_transit": self.presence_sent - m.presence_received,
            },
            "sim_duration_ms": self.now,
            "bots": {
                name: {
                    "joined": bot.joined,
                    "last_seq": bot.replica.last_applied_seq,
                    "broadcasts": len(bot.observed_seqs),
                    "grants": bot.grants,
                    "denies": bot.denies,
                    "nacks": bot.nacks,
                    "voice_frames": bot.voice_frames,
                    "skipped_actions": bot.skipped_actions,
                    "local_rejects": bot.local_rejects,
                }
                for name, bot in sorted(self.bots.items())
            },
        }


def _bind_action(sim: Sim, bot: _BotState, action: Action) -> Callable[[], None]:
    return lambda: sim._run_action(bot, action)


def _channel_of(frame: Frame) -> str:
    if isinstance(frame, MovementPacket):
        return "movement"
    if isinstance(frame, PresencePacket):
        return "presence"
    if isinstance(frame, VoiceFrame):
        return "voice"
    return "control"


def run(scenario: Scenario, net: NetConfig, server_config: Optional[ServerConfig] = None) -> dict:
    """Execute a scenario and return its report (canonically serializable)."""
    return Sim(scenario, net, server_config).run()


def report_bytes(report: dict) -> bytes:
    return canonical.dumps_bytes(report)
