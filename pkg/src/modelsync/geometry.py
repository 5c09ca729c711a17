"""Closed-form geometry of the shared environment.

Conventions, fixed so every component agrees: world up is +Y, the ground is
the plane y = 0, and a pose's forward axis is its orientation applied to the
unit +Z vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .model import Pose, Quat, Vec3

GROUND_Y = 0.0
LABEL_OFFSET_Y = 0.3  # name label floats this far above the head, world-up
DEFAULT_TELEPORT_RANGE = 20.0


@dataclass(frozen=True)
class AudioParams:
    min_distance: float = 1.0  # full volume at or inside
    max_distance: float = 15.0  # silent at or beyond

    def __post_init__(self) -> None:
        if not 0 < self.min_distance < self.max_distance:
            raise ValueError("require 0 < min_distance < max_distance")


class DegenerateGeometry(Exception):
    pass


def rotate(q: Quat, v: Vec3) -> Vec3:
    """Rotate a vector by a unit quaternion: v + 2*qv x (qv x v + w*v)."""
    tx = 2.0 * (q.y * v.z - q.z * v.y)
    ty = 2.0 * (q.z * v.x - q.x * v.z)
    tz = 2.0 * (q.x * v.y - q.y * v.x)
    return Vec3(
        v.x + q.w * tx + (q.y * tz - q.z * ty),
        v.y + q.w * ty + (q.z * tx - q.x * tz),
        v.z + q.w * tz + (q.x * ty - q.y * tx),
    )


def forward_axis(pose: Pose) -> Vec3:
    return rotate(pose.orientation, Vec3(0.0, 0.0, 1.0))


def teleport_target(controller: Pose, max_range: float = DEFAULT_TELEPORT_RANGE) -> Optional[Vec3]:
    """Ground hit of the straight ray cast along the controller's forward axis.

    None when the ray is horizontal or rising, points away from the plane, or
    lands beyond max_range horizontally. A hit always has y = 0 exactly.
    """
    origin = controller.position
    direction = forward_axis(controller)
    if direction.y >= 0.0:
        return None
    t = -origin.y / direction.y
    if t < 0.0:
        return None
    hit_x = origin.x + t * direction.x
    hit_z = origin.z + t * direction.z
    if math.hypot(hit_x - origin.x, hit_z - origin.z) > max_range:
        return None
    return Vec3(hit_x, GROUND_Y, hit_z)  # y clamped against f32 residue


def voice_gain(listener: Pose, source: Vec3, params: AudioParams = AudioParams()) -> float:
    """Linear distance rolloff: 1 inside min_distance, 0 beyond max_distance."""
    lp = listener.position
    d = math.sqrt((source.x - lp.x) ** 2 + (source.y - lp.y) ** 2 + (source.z - lp.z) ** 2)
    if d <= params.min_distance:
        return 1.0
    if d >= params.max_distance:
        return 0.0
    return (params.max_distance - d) / (params.max_distance - params.min_distance)


def voice_azimuth(listener: Pose, source: Vec3) -> float:
    """Horizontal angle from the listener's forward axis to the source.

    Positive means the source is to the listener's left; range (-pi, pi].
    Raises DegenerateGeometry when the source is (near) vertically aligned
    with the listener.
    """
    dx = source.x - listener.position.x
    dy = source.y - listener.position.y
    dz = source.z - listener.position.z
    q = listener.orientation
    # Inverse rotation = conjugate for unit quaternions.
    local = rotate(Quat(-q.x, -q.y, -q.z, q.w), Vec3(dx, dy, dz))
    if math.hypot(local.x, local.z) < 1e-6:
        raise DegenerateGeometry("source vertically above/below listener")
    return math.atan2(local.x, local.z)  # local +X is the listener's left


def label_anchor(head: Pose) -> Vec3:
    """Anchor of the floating name label: fixed world-up offset above the head."""
    p = head.position
    return Vec3(p.x, p.y + LABEL_OFFSET_Y, p.z)


def lerp_pose(a: Pose, b: Pose, t: float) -> Pose:
    """Linear position blend with normalized quaternion lerp (shortest arc).

    t >= 1 returns b exactly, so a finished drag lands on its target pose
    bit-for-bit.
    """
    if t >= 1.0:
        return b
    if t <= 0.0:
        return a
    pa, pb = a.position, b.position
    pos = Vec3(pa.x + (pb.x - pa.x) * t, pa.y + (pb.y - pa.y) * t, pa.z + (pb.z - pa.z) * t)
    qa, qb = a.orientation, b.orientation
    dot = qa.x * qb.x + qa.y * qb.y + qa.z * qb.z + qa.w * qb.w
    sign = -1.0 if dot < 0 else 1.0
    qx = qa.x + (sign * qb.x - qa.x) * t
    qy = qa.y + (sign * qb.y - qa.y) * t
    qz = qa.z + (sign * qb.z - qa.z) * t
    qw = qa.w + (sign * qb.w - qa.w) * t
    n = math.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
    if n == 0.0:
        return Pose(pos, b.orientation)
    return Pose(pos, Quat(qx / n, qy / n, qz / n, qw / n))
