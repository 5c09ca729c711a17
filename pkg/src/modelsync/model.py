"""Shared 3D class-diagram model and its mutation semantics.

The model is a pure value: every mutation goes through `apply_event`, which
returns a new model and never touches its input. A replica is therefore just
a fold of the server-ordered event stream, and two folds of the same stream
are canonically byte-identical.
"""

from __future__ import annotations

import math
import unicodedata
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional, Union

from .canonical import f32

ElementId = uuid.UUID
UserId = uuid.UUID
SessionId = uuid.UUID

MAX_NAME_LEN = 64
MAX_LINE_LEN = 128
DEFAULT_CLASS_EXTENT = (1.0, 1.0, 0.4)  # meters, w/h/d of a new class cuboid


class ErrorCode(str, Enum):
    UNKNOWN_ELEMENT = "UnknownElement"
    DUPLICATE_ID = "DuplicateId"
    INVALID_TEXT = "InvalidText"
    DANGLING_ENDPOINT = "DanglingEndpoint"
    NOT_OWNER = "NotOwner"
    SESSION_FULL = "SessionFull"
    GAP_IN_SEQUENCE = "GapInSequence"


class ModelError(Exception):
    """A rejected model mutation; `code` doubles as the wire Nack reason."""

    def __init__(self, code: ErrorCode, element: Optional[ElementId] = None, detail: str = ""):
        self.code = code
        self.element = element
        self.detail = detail
        super().__init__(f"{code.value}" + (f" ({element})" if element else "") + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            v = f32(getattr(self, name))  # quantize first: overflow becomes inf
            if not math.isfinite(v):
                raise ValueError(f"Vec3.{name} must be binary32-finite, got {getattr(self, name)!r}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class Quat:
    x: float
    y: float
    z: float
    w: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z", "w"):
            v = f32(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"Quat.{name} must be binary32-finite, got {getattr(self, name)!r}")
            object.__setattr__(self, name, v)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w)


IDENTITY_QUAT = Quat(0.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class Pose:
    position: Vec3
    orientation: Quat


IDENTITY_POSE = Pose(Vec3(0.0, 0.0, 0.0), IDENTITY_QUAT)


@dataclass(frozen=True)
class ClassNode:
    id: ElementId
    name: str
    attributes: tuple[str, ...]
    methods: tuple[str, ...]
    pose: Pose
    extent: Vec3

    # One canonical name/attribute/method text per class; renderers replicate
    # it on every cuboid face. There is no per-face text.


class ConnectorKind(str, Enum):
    ASSOCIATION = "Association"
    DIRECTED_ASSOCIATION = "DirectedAssociation"
    INHERITANCE = "Inheritance"
    REALIZATION = "Realization"
    AGGREGATION = "Aggregation"
    COMPOSITION = "Composition"
    DEPENDENCY = "Dependency"

    @property
    def arrowhead(self) -> str:
        """Stable arrowhead style tag for renderers and exporters."""
        return _ARROWHEADS[self]


_ARROWHEADS = {
    ConnectorKind.ASSOCIATION: "none",
    ConnectorKind.DIRECTED_ASSOCIATION: "open",
    ConnectorKind.INHERITANCE: "triangle",
    ConnectorKind.REALIZATION: "triangle-dashed",
    ConnectorKind.AGGREGATION: "diamond-open",
    ConnectorKind.COMPOSITION: "diamond-filled",
    ConnectorKind.DEPENDENCY: "open-dashed",
}


@dataclass(frozen=True)
class Connector:
    id: ElementId
    kind: ConnectorKind
    source: ElementId
    target: ElementId


@dataclass
class ClassModel:
    classes: dict[ElementId, ClassNode] = field(default_factory=dict)
    connectors: dict[ElementId, Connector] = field(default_factory=dict)

    @staticmethod
    def empty() -> "ClassModel":
        return ClassModel()


# --- events -----------------------------------------------------------------


@dataclass(frozen=True)
class CreateClass:
    id: ElementId
    name: str
    pose: Pose


@dataclass(frozen=True)
class DeleteClass:
    id: ElementId


@dataclass(frozen=True)
class RenameClass:
    id: ElementId
    name: str


@dataclass(frozen=True)
class SetAttributes:
    id: ElementId
    lines: tuple[str, ...]


@dataclass(frozen=True)
class SetMethods:
    id: ElementId
    lines: tuple[str, ...]


@dataclass(frozen=True)
class CreateConnector:
    id: ElementId
    kind: ConnectorKind
    source: ElementId
    target: ElementId


@dataclass(frozen=True)
class DeleteConnector:
    id: ElementId


@dataclass(frozen=True)
class CommitPose:
    id: ElementId
    pose: Pose


ModelEvent = Union[
    CreateClass,
    DeleteClass,
    RenameClass,
    SetAttributes,
    SetMethods,
    CreateConnector,
    DeleteConnector,
    CommitPose,
]


@dataclass(frozen=True)
class SequencedEvent:
    seq: int  # server-assigned, gapless, starts at 1
    actor: UserId
    event: ModelEvent


# --- text rules ---------------------------------------------------------------


def text_ok(s: str, max_len: int, allow_empty: bool = True) -> bool:
    if not isinstance(s, str):
        return False
    if not allow_empty and len(s) == 0:
        return False
    if len(s) > max_len:
        return False
    return not any(unicodedata.category(ch) == "Cc" for ch in s)


def _check_name(name: str, element: ElementId) -> None:
    if not text_ok(name, MAX_NAME_LEN, allow_empty=False):
        raise ModelError(ErrorCode.INVALID_TEXT, element, "class name")


def _check_lines(lines: Iterable[str], element: ElementId) -> tuple[str, ...]:
    out = tuple(lines)
    for line in out:
        if not text_ok(line, MAX_LINE_LEN):
            raise ModelError(ErrorCode.INVALID_TEXT, element, "member line")
    return out


# --- mutation -----------------------------------------------------------------


def apply_event(model: ClassModel, ev: ModelEvent) -> ClassModel:
    """Apply one event, returning a new model. Raises ModelError on rejection.

    DeleteClass cascades: every connector touching the class goes with it,
    atomically. Deterministic and purely functional.
    """
    classes = model.classes
    connectors = model.connectors

    if isinstance(ev, CreateClass):
        if ev.id in classes or ev.id in connectors:
            raise ModelError(ErrorCode.DUPLICATE_ID, ev.id)
        _check_name(ev.name, ev.id)
        node = ClassNode(
            id=ev.id,
            name=ev.name,
            attributes=(),
            methods=(),
            pose=ev.pose,
            extent=Vec3(*DEFAULT_CLASS_EXTENT),
        )
        return ClassModel({**classes, ev.id: node}, dict(connectors))

    if isinstance(ev, DeleteClass):
        if ev.id not in classes:
            raise ModelError(ErrorCode.UNKNOWN_ELEMENT, ev.id)
        new_classes = {k: v for k, v in classes.items() if k != ev.id}
        new_connectors = {
            k: c for k, c in connectors.items() if c.source != ev.id and c.target != ev.id
        }
        return ClassModel(new_classes, new_connectors)

    if isinstance(ev, RenameClass):
        node = classes.get(ev.id)
        if node is None:
            raise ModelError(ErrorCode.UNKNOWN_ELEMENT, ev.id)
        _check_name(ev.name, ev.id)
        return ClassModel({**classes, ev.id: _replace(node, name=ev.name)}, dict(connectors))

    if isinstance(ev, SetAttributes):
        node = classes.get(ev.id)
        if node is None:
            raise ModelError(ErrorCode.UNKNOWN_ELEMENT, ev.id)
        lines = _check_lines(ev.lines, ev.id)
        return ClassModel({**classes, ev.id: _replace(node, attributes=lines)}, dict(connectors))

    if isinstance(ev, SetMethods):
        node = classes.get(ev.id)
        if node is None:
            raise ModelError(ErrorCode.UNKNOWN_ELEMENT, ev.id)
        lines = _check_lines(ev.lines, ev.id)
        return ClassModel({**classes, ev.id: _replace(node, methods=lines)}, dict(connectors))

    if isinstance(ev, CreateConnector):
        if ev.id in connectors or ev.id in classes:
            raise ModelError(ErrorCode.DUPLICATE_ID, ev.id)
        if ev.source not in classes:
            raise ModelError(ErrorCode.DANGLING_ENDPOINT, ev.id, f"source {ev.source}")
        if ev.target not in classes:
            raise ModelError(ErrorCode.DANGLING_ENDPOINT, ev.id, f"target {ev.target}")
        conn = Connector(id=ev.id, kind=ev.kind, source=ev.source, target=ev.target)
        return ClassModel(dict(classes), {**connectors, ev.id: conn})

    if isinstance(ev, DeleteConnector):
        if ev.id not in connectors:
            raise ModelError(ErrorCode.UNKNOWN_ELEMENT, ev.id)
        return ClassModel(dict(classes), {k: c for k, c in connectors.items() if k != ev.id})

    if isinstance(ev, CommitPose):
        node = classes.get(ev.id)
        if node is None:
            raise ModelError(ErrorCode.UNKNOWN_ELEMENT, ev.id)
        return ClassModel({**classes, ev.id: _replace(node, pose=ev.pose)}, dict(connectors))

    raise TypeError(f"unknown model event {type(ev).__name__}")


def _replace(node: ClassNode, **changes: Any) -> ClassNode:
    fields = dict(
        id=node.id,
        name=node.name,
        attributes=node.attributes,
        methods=node.methods,
        pose=node.pose,
        extent=node.extent,
    )
    fields.update(changes)
    return ClassNode(**fields)


# --- validation ----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    element: ElementId
    rule: str
    detail: str = ""


def validate(model: ClassModel) -> list[Violation]:
    """Total invariant check; empty list iff the model is well-formed."""
    out: list[Violation] = []
    for cid, node in model.classes.items():
        if node.id != cid:
            out.append(Violation(cid, "IdMismatch"))
        if cid in model.connectors:
            out.append(Violation(cid, ErrorCode.DUPLICATE_ID.value, "id used by class and connector"))
        if not text_ok(node.name, MAX_NAME_LEN, allow_empty=False):
            out.append(Violation(cid, ErrorCode.INVALID_TEXT.value, "class name"))
        for line in node.attributes + node.methods:
            if not text_ok(line, MAX_LINE_LEN):
                out.append(Violation(cid, ErrorCode.INVALID_TEXT.value, "member line"))
                break
        if not (node.extent.x > 0 and node.extent.y > 0 and node.extent.z > 0):
            out.append(Violation(cid, "NonPositiveExtent"))
        if abs(node.pose.orientation.norm() - 1.0) > 1e-3:
            out.append(Violation(cid, "NonUnitQuaternion"))
    for kid, conn in model.connectors.items():
        if conn.id != kid:
            out.append(Violation(kid, "IdMismatch"))
        if conn.source == kid or conn.target == kid:
            out.append(Violation(kid, "SelfEndpoint", "connector references itself"))
        if conn.source not in model.classes or conn.target not in model.classes:
            out.append(Violation(kid, ErrorCode.DANGLING_ENDPOINT.value))
    return out


# --- folding -------------------------------------------------------------------


@dataclass(frozen=True)
class FoldDiagnostic:
    seq: int
    code: ErrorCode
    element: Optional[ElementId]


def fold_events(
    initial: ClassModel,
    events: list[SequencedEvent],
    diagnostics: Optional[list[FoldDiagnostic]] = None,
) -> ClassModel:
    """Left-fold of apply_event over a gapless, ascending event list.

    Events that fail to apply are skipped (a laggy client may reference a
    just-deleted element); each skip is recorded when a diagnostics list is
    supplied. Raises ModelError(GapInSequence) on a non-gapless input.
    """
    model = initial
    expected: Optional[int] = None
    for sev in events:
        if expected is not None and sev.seq != expected:
            raise ModelError(ErrorCode.GAP_IN_SEQUENCE, detail=f"expected {expected}, got {sev.seq}")
        expected = sev.seq + 1
        try:
            model = apply_event(model, sev.event)
        except ModelError as err:
            if diagnostics is not None:
                diagnostics.append(FoldDiagnostic(sev.seq, err.code, err.element))
    return model


# --- jsonable conversion --------------------------------------------------------
# The single JSON shape shared by control messages, snapshots and canonical
# serialization. Parsers raise ValueError; the wire layer maps that to
# SchemaViolation.


def vec3_to_jsonable(v: Vec3) -> dict[str, float]:
    return {"x": v.x, "y": v.y, "z": v.z}


def quat_to_jsonable(q: Quat) -> dict[str, float]:
    return {"x": q.x, "y": q.y, "z": q.z, "w": q.w}


def pose_to_jsonable(p: Pose) -> dict[str, Any]:
    return {"position": vec3_to_jsonable(p.position), "orientation": quat_to_jsonable(p.orientation)}


def _number(obj: Any, key: str) -> float:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"field '{key}' must be a number")
    if not math.isfinite(v):
        raise ValueError(f"field '{key}' must be finite")
    return float(v)


def _obj(value: Any, *keys: str) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise ValueError("expected a JSON object")
    unknown = set(value) - set(keys)
    if unknown:
        raise ValueError(f"unexpected fields: {sorted(unknown)}")
    missing = [k for k in keys if k not in value]
    if missing:
        raise ValueError(f"missing fields: {missing}")
    return value


def vec3_from_jsonable(value: Any) -> Vec3:
    obj = _obj(value, "x", "y", "z")
    return Vec3(_number(obj, "x"), _number(obj, "y"), _number(obj, "z"))


def quat_from_jsonable(value: Any) -> Quat:
    obj = _obj(value, "x", "y", "z", "w")
    q = Quat(_number(obj, "x"), _number(obj, "y"), _number(obj, "z"), _number(obj, "w"))
    if abs(q.norm() - 1.0) > 1e-3:
        raise ValueError(f"quaternion norm {q.norm()} outside unit tolerance")
    return q


def pose_from_jsonable(value: Any) -> Pose:
    obj = _obj(value, "position", "orientation")
    return Pose(vec3_from_jsonable(obj["position"]), quat_from_jsonable(obj["orientation"]))


def id_to_jsonable(u: uuid.UUID) -> str:
    return str(u)


def id_from_jsonable(value: Any) -> uuid.UUID:
    if not isinstance(value, str):
        raise ValueError("id must be a string")
    try:
        u = uuid.UUID(value)
    except (ValueError, AttributeError, TypeError) as exc:
        raise ValueError(f"bad id {value!r}") from exc
    if u.int == 0:
        raise ValueError("nil id not allowed")
    return u


def _text(value: Any, max_len: int, allow_empty: bool) -> str:
    if not isinstance(value, str) or not text_ok(value, max_len, allow_empty):
        raise ValueError(f"bad text field {value!r}")
    return value


def _lines(value: Any) -> tuple[str, ...]:
    if not isinstance(value, list):
        raise ValueError("lines must be an array")
    return tuple(_text(line, MAX_LINE_LEN, allow_empty=True) for line in value)


def class_node_to_jsonable(node: ClassNode) -> dict[str, Any]:
    return {
        "id": id_to_jsonable(node.id),
        "name": node.name,
        "attributes": list(node.attributes),
        "methods": list(node.methods),
        "pose": pose_to_jsonable(node.pose),
        "extent": vec3_to_jsonable(node.extent),
    }


def class_node_from_jsonable(value: Any) -> ClassNode:
    obj = _obj(value, "id", "name", "attributes", "methods", "pose", "extent")
    return ClassNode(
        id=id_from_jsonable(obj["id"]),
        name=_text(obj["name"], MAX_NAME_LEN, allow_empty=False),
        attributes=_lines(obj["attributes"]),
        methods=_lines(obj["methods"]),
        pose=pose_from_jsonable(obj["pose"]),
        extent=vec3_from_jsonable(obj["extent"]),
    )


def connector_to_jsonable(conn: Connector) -> dict[str, Any]:
    return {
        "id": id_to_jsonable(conn.id),
        "kind": conn.kind.value,
        "source": id_to_jsonable(conn.source),
        "target": id_to_jsonable(conn.target),
    }


def connector_from_jsonable(value: Any) -> Connector:
    obj = _obj(value, "id", "kind", "source", "target")
    try:
        kind = ConnectorKind(obj["kind"])
    except ValueError as exc:
        raise ValueError(f"unknown connector kind {obj['kind']!r}") from exc
    return Connector(
        id=id_from_jsonable(obj["id"]),
        kind=kind,
        source=id_from_jsonable(obj["source"]),
        target=id_from_jsonable(obj["target"]),
    )


def model_to_jsonable(model: ClassModel) -> dict[str, Any]:
    return {
        "classes": {id_to_jsonable(k): class_node_to_jsonable(v) for k, v in model.classes.items()},
        "connectors": {id_to_jsonable(k): connector_to_jsonable(v) for k, v in model.connectors.items()},
    }


def model_from_jsonable(value: Any) -> ClassModel:
    obj = _obj(value, "classes", "connectors")
    if not isinstance(obj["classes"], dict) or not isinstance(obj["connectors"], dict):
        raise ValueError("classes/connectors must be objects")
    classes: dict[ElementId, ClassNode] = {}
    for key, raw in obj["classes"].items():
        node = class_node_from_jsonable(raw)
        if id_from_jsonable(key) != node.id:
            raise ValueError(f"class key {key} does not match node id {node.id}")
        classes[node.id] = node
    connectors: dict[ElementId, Connector] = {}
    for key, raw in obj["connectors"].items():
        conn = connector_from_jsonable(raw)
        if id_from_jsonable(key) != conn.id:
            raise ValueError(f"connector key {key} does not match id {conn.id}")
        connectors[conn.id] = conn
    return ClassModel(classes, connectors)


_EVENT_OPS: dict[str, type] = {
    "CreateClass": CreateClass,
    "DeleteClass": DeleteClass,
    "RenameClass": RenameClass,
    "SetAttributes": SetAttributes,
    "SetMethods": SetMethods,
    "CreateConnector": CreateConnector,
    "DeleteConnector": DeleteConnector,
    "CommitPose": CommitPose,
}


def event_to_jsonable(ev: ModelEvent) -> dict[str, Any]:
    if isinstance(ev, CreateClass):
        return {"op": "CreateClass", "id": id_to_jsonable(ev.id), "name": ev.name, "pose": pose_to_jsonable(ev.pose)}
    if isinstance(ev, DeleteClass):
        return {"op": "DeleteClass", "id": id_to_jsonable(ev.id)}
    if isinstance(ev, RenameClass):
        return {"op": "RenameClass", "id": id_to_jsonable(ev.id), "name": ev.name}
    if isinstance(ev, SetAttributes):
        return {"op": "SetAttributes", "id": id_to_jsonable(ev.id), "lines": list(ev.lines)}
    if isinstance(ev, SetMethods):
        return {"op": "SetMethods", "id": id_to_jsonable(ev.id), "lines": list(ev.lines)}
    if isinstance(ev, CreateConnector):
        return {
            "op": "CreateConnector",
            "id": id_to_jsonable(ev.id),
            "kind": ev.kind.value,
            "source": id_to_jsonable(ev.source),
            "target": id_to_jsonable(ev.target),
        }
    if isinstance(ev, DeleteConnector):
        return {"op": "DeleteConnector", "id": id_to_jsonable(ev.id)}
    if isinstance(ev, CommitPose):
        return {"op": "CommitPose", "id": id_to_jsonable(ev.id), "pose": pose_to_jsonable(ev.pose)}
    raise TypeError(f"unknown model event {type(ev).__name__}")


def event_from_jsonable(value: Any) -> ModelEvent:
    if not isinstance(value, dict):
        raise ValueError("event must be a JSON object")
    op = value.get("op")
    if op not in _EVENT_OPS:
        raise ValueError(f"unknown event op {op!r}")
    if op == "CreateClass":
        obj = _obj(value, "op", "id", "name", "pose")
        return CreateClass(
            id=id_from_jsonable(obj["id"]),
            name=_text(obj["name"], MAX_NAME_LEN, allow_empty=False),
            pose=pose_from_jsonable(obj["pose"]),
        )
    if op == "DeleteClass":
        obj = _obj(value, "op", "id")
        return DeleteClass(id=id_from_jsonable(obj["id"]))
    if op == "RenameClass":
        obj = _obj(value, "op", "id", "name")
        return RenameClass(id=id_from_jsonable(obj["id"]), name=_text(obj["name"], MAX_NAME_LEN, allow_empty=False))
    if op == "SetAttributes":
        obj = _obj(value, "op", "id", "lines")
        return SetAttributes(id=id_from_jsonable(obj["id"]), lines=_lines(obj["lines"]))
    if op == "SetMethods":
        obj = _obj(value, "op", "id", "lines")
        return SetMethods(id=id_from_jsonable(obj["id"]), lines=_lines(obj["lines"]))
    if op == "CreateConnector":
        obj = _obj(value, "op", "id", "kind", "source", "target")
        try:
            kind = ConnectorKind(obj["kind"])
        except ValueError as exc:
            raise ValueError(f"unknown connector kind {obj['kind']!r}") from exc
        return CreateConnector(
            id=id_from_jsonable(obj["id"]),
            kind=kind,
            source=id_from_jsonable(obj["source"]),
            target=id_from_jsonable(obj["target"]),
        )
    if op == "DeleteConnector":
        obj = _obj(value, "op", "id")
        return DeleteConnector(id=id_from_jsonable(obj["id"]))
    obj = _obj(value, "op", "id", "pose")
    return CommitPose(id=id_from_jsonable(obj["id"]), pose=pose_from_jsonable(obj["pose"]))


def event_subject(ev: ModelEvent) -> ElementId:
    """The element an event targets (its own id for creates)."""
    return ev.id
