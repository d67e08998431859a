"""JSON-lines trace files: a header line, one line per event, and an end marker."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Union

from .analytics import TraceError

TRACE_SCHEMA_VERSION = 1


def _line(obj: Dict[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class Trace:
    header: Dict[str, Any]
    events: List[Dict[str, Any]]
    end: Dict[str, Any]
    sha256: str

    @property
    def scenario(self) -> Dict[str, Any]:
        return self.header["scenario"]


def encode(scenario: Dict[str, Any], seed: int, events: List[Dict[str, Any]], final_time: int) -> bytes:
    header = {"type": "header", "schema_version": TRACE_SCHEMA_VERSION, "seed": seed, "scenario": scenario}
    lines = [_line(header)]
    lines.extend(_line(ev) for ev in events)
    lines.append(_line({"type": "end", "events": len(events), "final_time": final_time}))
    return ("\n".join(lines) + "\n").encode()


def write_trace(path: Union[str, Path], data: bytes) -> str:
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def decode(data: bytes) -> Trace:
    lines = [ln for ln in data.decode().splitlines() if ln.strip()]
    if not lines:
        raise TraceError("truncated trace: file is empty")
    try:
        parsed = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise TraceError(f"truncated trace: unreadable line ({exc.msg})") from None
    header, end = parsed[0], parsed[-1]
    if header.get("type") != "header":
        raise TraceError("truncated trace: missing header")
    if header.get("schema_version") != TRACE_SCHEMA_VERSION:
        raise TraceError(f"unsupported trace schema_version {header.get('schema_version')}")
    if len(parsed) < 2 or end.get("type") != "end":
        raise TraceError("truncated trace: missing end marker")
    events = parsed[1:-1]
    if end.get("events") != len(events):
        raise TraceError(f"truncated trace: expected {end.get('events')} events, found {len(events)}")
    return Trace(header, events, end, hashlib.sha256(data).hexdigest())


def read_trace(path: Union[str, Path]) -> Trace:
    return decode(Path(path).read_bytes())
