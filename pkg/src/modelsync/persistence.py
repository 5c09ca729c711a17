"""Durable formats: canonical snapshots and the PlantUML export.

Canonical snapshot bytes are the byte-equality basis for every convergence
check: two models are equal iff their canonical serializations are equal.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass
from typing import Optional

from . import canonical
from .model import (
    ClassModel,
    ConnectorKind,
    SessionId,
    model_from_jsonable,
    model_to_jsonable,
    validate,
)
from .server import SessionState

SCHEMA_VERSION = 1


class FormatError(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


@dataclass(frozen=True)
class SnapshotDocument:
    session: SessionId
    model: ClassModel
    last_seq: int
    schema_version: int = SCHEMA_VERSION


def canonical_model_bytes(model: ClassModel) -> bytes:
    return canonical.dumps_bytes(model_to_jsonable(model))


def snapshot_to_bytes(doc: SnapshotDocument) -> bytes:
    return canonical.dumps_bytes(
        {
            "schema_version": doc.schema_version,
            "session": str(doc.session),
            "model": model_to_jsonable(doc.model),
            "last_seq": doc.last_seq,
        }
    )


def save_snapshot(state: SessionState) -> bytes:
    return snapshot_to_bytes(
        SnapshotDocument(session=state.session, model=state.model, last_seq=state.next_seq - 1)
    )


def load_snapshot(data: bytes) -> SnapshotDocument:
    try:
        body = canonical.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise FormatError("snapshot must be a JSON object")
    expected = {"schema_version", "session", "model", "last_seq"}
    if set(body) != expected:
        raise FormatError(f"snapshot fields must be exactly {sorted(expected)}")
    if body["schema_version"] != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {body['schema_version']!r}")
    try:
        session = uuid.UUID(body["session"])
        model = model_from_jsonable(body["model"])
    except (ValueError, AttributeError, TypeError) as exc:
        raise FormatError(str(exc)) from exc
    last_seq = body["last_seq"]
    if isinstance(last_seq, bool) or not isinstance(last_seq, int) or last_seq < 0:
        raise FormatError(f"bad last_seq {last_seq!r}")
    violations = validate(model)
    if violations:
        raise FormatError(f"model violates invariants: {violations[0].rule} on {violations[0].element}")
    return SnapshotDocument(session=session, model=model, last_seq=last_seq)


# --- PlantUML export -------------------------------------------------------------

# Relation tokens whose arrowhead renders at the LEFT element take the target
# on the left (arrowhead at the target); right-pointing tokens keep source on
# the left. Association has no head at all.
_LEFT_HEAD_TOKENS = {
    ConnectorKind.INHERITANCE: "<|--",
    ConnectorKind.REALIZATION: "<|..",
    ConnectorKind.AGGREGATION: "o--",
    ConnectorKind.COMPOSITION: "*--",
}
_RIGHT_HEAD_TOKENS = {
    ConnectorKind.DEPENDENCY: "..>",
    ConnectorKind.DIRECTED_ASSOCIATION: "-->",
    ConnectorKind.ASSOCIATION: "--",
}


def _is_plain_name(name: str) -> bool:
    return name.isidentifier()


def export_plantuml(model: ClassModel) -> str:
    """Deterministic PlantUML text: classes in name order, connectors in
    (source, target, kind) order, non-identifier names quoted with aliases."""
    lines = ["@startuml"]
    ordered = sorted(model.classes.values(), key=lambda n: (n.name, str(n.id)))
    refs: dict[uuid.UUID, str] = {}
    names_seen: dict[str, int] = {}
    alias_n = 0
    for node in ordered:
        dup = names_seen.get(node.name, 0)
        names_seen[node.name] = dup + 1
        if _is_plain_name(node.name) and dup == 0:
            ref = node.name
            head = f"class {node.name}"
        else:
            alias_n += 1
            ref = f"C{alias_n}"
            quoted = node.name.replace("\\", "\\\\").replace('"', '\\"')
            head = f'class "{quoted}" as {ref}'
        refs[node.id] = ref
        if node.attributes or node.methods:
            lines.append(head + " {")
            lines.extend(f"  {line}" for line in node.attributes)
            if node.attributes and node.methods:
                lines.append("  --")
            lines.extend(f"  {line}" for line in node.methods)
            lines.append("}")
        else:
            lines.append(head)
    ordered_conns = sorted(
        model.connectors.values(), key=lambda c: (str(c.source), str(c.target), c.kind.value)
    )
    for conn in ordered_conns:
        src, dst = refs[conn.source], refs[conn.target]
        token = _LEFT_HEAD_TOKENS.get(conn.kind)
        if token is not None:
            lines.append(f"{dst} {token} {src}")
        else:
            lines.append(f"{src} {_RIGHT_HEAD_TOKENS[conn.kind]} {dst}")
    lines.append("@enduml")
    return "\n".join(lines) + "\n"


def diff_models(a: ClassModel, b: ClassModel) -> Optional[str]:
    """None when canonically equal, else a textual field-level diff."""
    if canonical_model_bytes(a) == canonical_model_bytes(b):
        return None
    out: list[str] = []
    ja, jb = model_to_jsonable(a), model_to_jsonable(b)
    for section in ("classes", "connectors"):
        da, db = ja[section], jb[section]
        for key in sorted(set(da) | set(db)):
            if key not in db:
                out.append(f"{section[:-1]} {key}: only in first")
            elif key not in da:
                out.append(f"{section[:-1]} {key}: only in second")
            elif da[key] != db[key]:
                fields = [
                    f
                    for f in sorted(set(da[key]) | set(db[key]))
                    if da[key].get(f) != db[key].get(f)
                ]
                out.append(f"{section[:-1]} {key}: fields differ: {', '.join(fields)}")
    return "\n".join(out) if out else "models differ in serialization only"
