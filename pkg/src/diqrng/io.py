"""Canonical serialization and atomic file writes.

Every file the package emits goes through these helpers so that two runs
with the same inputs produce byte-identical output: JSON keys are sorted
and writes land via a temp file plus rename.  Presentation files round
floats to 6 significant digits; files the package reads back (certificates,
configs, counts records) are written with ``precise=True`` so every float
survives the round trip exactly.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from typing import Any


def round_sig(x: float, digits: int = 6) -> float:
    """Round to `digits` significant digits; leaves non-finite values alone."""
    if not math.isfinite(x) or x == 0.0:
        return x
    return float(f"{x:.{digits}g}")


def _canonicalize(obj: Any) -> Any:
    if isinstance(obj, float):
        return round_sig(obj)
    if isinstance(obj, dict):
        return {k: _canonicalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonicalize(v) for v in obj]
    return obj


def canonical_json(obj: Any, *, precise: bool = False) -> str:
    """Serialize with sorted keys; floats at 6 significant digits by default.

    ``precise=True`` keeps every float at full precision (shortest
    round-trip repr) for files that are read back and must reproduce the
    original values exactly.  Infinities serialize as the strings
    "inf"/"-inf" either way so the output stays within strict JSON.
    """

    def _default(o: Any) -> Any:
        raise TypeError(f"not JSON-serializable: {type(o).__name__}")

    def _encode_inf(o: Any) -> Any:
        if isinstance(o, float) and math.isinf(o):
            return "inf" if o > 0 else "-inf"
        if isinstance(o, dict):
            return {k: _encode_inf(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [_encode_inf(v) for v in o]
        return o

    canon = _encode_inf(obj if precise else _canonicalize(obj))
    return json.dumps(canon, sort_keys=True, separators=(",", ": "), indent=1,
                      allow_nan=False, default=_default)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write text to path via temp file + rename in the same directory."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write bytes to path via temp file + rename in the same directory."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
