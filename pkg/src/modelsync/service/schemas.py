"""Pydantic request/response models for the REST side of the service."""

from __future__ import annotations

from pydantic import BaseModel


class HealthResponse(BaseModel):
    status: str
    session: str
    members: int
    last_seq: int


class MemberEntry(BaseModel):
    user_id: str
    display_name: str


class SessionInfoResponse(BaseModel):
    session: str
    members: list[MemberEntry]
    classes: int
    connectors: int
    last_seq: int
    ownership: dict[str, str]


class ChannelCounters(BaseModel):
    received: int
    forwarded: int
    dropped: dict[str, int]


class MetricsResponse(BaseModel):
    joins: int
    leaves: int
    events_broadcast: int
    nacks: dict[str, int]
    movement: ChannelCounters
    presence: ChannelCounters
    voice_forwarded: int
