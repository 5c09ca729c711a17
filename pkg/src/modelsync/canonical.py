"""Canonical JSON rendering and binary32 float helpers.

Every convergence check in the engine reduces to byte equality of canonical
JSON: object keys sorted, no insignificant whitespace, UTF-8, and every float
rendered as the shortest decimal string that round-trips the 32-bit value.
"""

from __future__ import annotations

import json
import math
import struct
from decimal import ROUND_HALF_UP, Decimal
from typing import Any

_PACK_F32 = struct.Struct("<f")


def f32(x: float) -> float:
    """Quantize to the nearest IEEE-754 binary32 value, as a Python float.

    -0.0 folds to +0.0 so canonical text never emits '-0' (which would
    reload as the integer 0 and break idempotence). Values beyond the
    binary32 range quantize to infinity, as the hardware would.
    """
    try:
        v = _PACK_F32.unpack(_PACK_F32.pack(x))[0]
    except OverflowError:
        return math.copysign(math.inf, x)
    return 0.0 if v == 0.0 else v


def _g_format(x: float, prec: int) -> str:
    """Printf-%g-style rendering at `prec` significant digits with decimal
    ties rounded half away from zero, the same tie rule ECMAScript number
    formatting uses, so every implementation of this wire format can produce
    identical bytes with its native tools."""
    d = Decimal(x)  # exact binary-to-decimal expansion
    sign = "-" if d < 0 else ""
    d = abs(d)
    if d == 0:
        return "0"
    q = d.quantize(Decimal((0, (1,), d.adjusted() - prec + 1)), rounding=ROUND_HALF_UP)
    e = q.adjusted()  # rounding may carry into a new leading digit
    ds = "".join(map(str, q.as_tuple().digits)).ljust(prec, "0")[:prec]
    if e < -4 or e >= prec:
        frac = ds[1:].rstrip("0")
        mantissa = f"{ds[0]}.{frac}" if frac else ds[0]
        return f"{sign}{mantissa}e{'-' if e < 0 else '+'}{abs(e):02d}"
    if e >= 0:
        frac = ds[e + 1:].rstrip("0")
        return f"{sign}{ds[:e + 1]}.{frac}" if frac else f"{sign}{ds[:e + 1]}"
    frac = ("0" * (-e - 1) + ds).rstrip("0")
    return f"{sign}0.{frac}"


def f32_repr(x: float) -> str:
    """Shortest decimal string that round-trips through binary32.

    Integral values below 2**53 render positionally, exactly like the integer
    of the same value: languages with a single double-precision number type
    then produce the same canonical bytes whether a field is conceptually an
    int or a float.
    """
    x = f32(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite float has no canonical form: {x!r}")
    if x == int(x) and abs(x) < 2**53:
        return repr(int(x))
    target = _PACK_F32.pack(x)
    for prec in range(1, 10):
        s = _g_format(x, prec)
        try:
            if _PACK_F32.pack(float(s)) == target:
                return s
        except OverflowError:
            continue  # candidate rounded past the binary32 range
    return f"{x:.17g}"  # unreachable for true f32 inputs


def dumps(value: Any) -> str:
    """Render a jsonable tree (dict/list/str/int/float/bool/None) canonically."""
    parts: list[str] = []
    _write(value, parts)
    return "".join(parts)


def dumps_bytes(value: Any) -> bytes:
    return dumps(value).encode("utf-8")


def _write(value: Any, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(repr(value))
    elif isinstance(value, float):
        out.append(f32_repr(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _write(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise TypeError(f"canonical JSON keys must be str, got {type(key).__name__}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _write(value[key], out)
        out.append("}")
    else:
        raise TypeError(f"not canonically serializable: {type(value).__name__}")


def loads(data: bytes | str) -> Any:
    """Parse JSON, rejecting the non-standard NaN/Infinity literals."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data, parse_constant=_reject_constant)


def _reject_constant(name: str) -> Any:
    raise ValueError(f"non-finite JSON literal not allowed: {name}")
