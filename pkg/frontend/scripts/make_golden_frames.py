"""Regenerates tests/golden_frames.json from the engine's encoders.

Run from the frontend directory:  python3 scripts/make_golden_frames.py
"""

from __future__ import annotations

import json
import sys
import uuid
from pathlib import Path
from random import Random

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))

from modelsync.wire import (  # noqa: E402
    control_to_jsonable,
    encode_control,
    encode_movement,
    encode_presence,
)
from modelsync.model import IDENTITY_POSE, pose_to_jsonable  # noqa: E402

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "tests"))
from util import rng_control, rng_movement, rng_presence, rng_pose  # noqa: E402


def movement_entry(p):
    return {
        "hex": encode_movement(p).hex(),
        "packet": {"subject": str(p.subject), "seq": p.seq, "pose": pose_to_jsonable(p.pose)},
    }


def presence_entry(p):
    return {
        "hex": encode_presence(p).hex(),
        "packet": {
            "user": str(p.user),
            "seq": p.seq,
            "head": pose_to_jsonable(p.head),
            "left_hand": pose_to_jsonable(p.left_hand),
            "right_hand": pose_to_jsonable(p.right_hand),
            "left_gesture": int(p.left_gesture),
            "right_gesture": int(p.right_gesture),
        },
    }


def main() -> None:
    rng = Random(0x601D)
    from modelsync.wire import MovementPacket

    movement = [
        movement_entry(
            MovementPacket(subject=uuid.uuid5(uuid.NAMESPACE_DNS, "golden"), seq=7, pose=IDENTITY_POSE)
        )
    ]
    movement += [movement_entry(rng_movement(rng)) for _ in range(40)]
    presence = [presence_entry(rng_presence(rng)) for _ in range(25)]

    control = []
    seen = set()
    while len(seen) < 13 or len(control) < 40:
        m = rng_control(rng, max_tag=2**53)  # interop: JSON numbers stay double-exact
        seen.add(type(m).__name__)
        control.append({"hex": encode_control(m).hex(), "message": control_to_jsonable(m)})
        if len(control) > 120:
            break

    # a couple of hand-picked tricky payloads
    from modelsync.wire import Join, Release
    from modelsync.model import Pose, Quat, Vec3

    control.append({"hex": encode_control(Join(display_name="zoé ✏️")).hex(),
                    "message": control_to_jsonable(Join(display_name="zoé ✏️"))})
    tricky = Release(
        object=uuid.uuid5(uuid.NAMESPACE_DNS, "tricky"),
        final_pose=Pose(Vec3(0.1, -1e6, 1e-7), Quat(0.0, 0.7071067811865476, 0.0, 0.7071067811865476)),
    )
    control.append({"hex": encode_control(tricky).hex(), "message": control_to_jsonable(tricky)})

    out = Path(__file__).resolve().parents[1] / "tests" / "golden_frames.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"movement": movement, "presence": presence, "control": control}, indent=1))
    print(f"wrote {out} ({len(movement)} movement, {len(presence)} presence, {len(control)} control)")


if __name__ == "__main__":
    main()
