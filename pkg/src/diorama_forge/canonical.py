"""Canonical JSON: sorted keys, no whitespace, floats with six decimals.

Every JSON artifact that is hashed or compared byte-for-byte goes through
:func:`dumps`, so two equal documents always serialize to the same bytes.
"""

from __future__ import annotations

import json
import math
from typing import Any

FLOAT_DECIMALS = 6


def format_float(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"non-finite float {value!r} cannot be serialized")
    text = f"{value:.{FLOAT_DECIMALS}f}"
    # "-0.000000" and "0.000000" must not differ
    if text.lstrip("-") == "0." + "0" * FLOAT_DECIMALS:
        text = text.lstrip("-")
    return text


def quantize(value: float) -> float:
    """Round a float to what survives a canonical dump/parse cycle."""
    return float(format_float(value))


def _encode(obj: Any, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(int(obj)))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"object keys must be strings, got {type(key).__name__}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _encode(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    else:
        # numpy scalars and similar
        if hasattr(obj, "item"):
            _encode(obj.item(), out)
        else:
            raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    out: list[str] = []
    _encode(obj, out)
    return "".join(out)


def dump_bytes(obj: Any) -> bytes:
    return dumps(obj).encode("utf-8")
