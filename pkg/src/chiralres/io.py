"""Schedule documents (JSON) and fixed-precision CSV tables."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence, TextIO

from .spin import PulseSchedule, PulseSegment

FORMAT_VERSION = 1
_SEGMENT_KEYS = ("dt", "op", "oq", "os", "pp", "pq", "ps")


class ScheduleFormatError(ValueError):
    """Schedule document is missing fields or has invalid values."""


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item") and callable(value.item):  # numpy scalars
        return _jsonable(value.item())
    return value


def schedule_to_dict(sched: PulseSchedule) -> dict:
    meta = dict(sched.meta)
    meta.setdefault("protocol", None)
    meta.setdefault("s", sched.ratio)
    meta.setdefault("trace", None)
    meta.setdefault("objective", None)
    return {
        "format_version": FORMAT_VERSION,
        "omega0": sched.omega0_bound,
        "omega1": sched.omega1_bound,
        "segments": [
            dict(zip(_SEGMENT_KEYS, (seg.duration, seg.omega_p, seg.omega_q, seg.omega_s,
                                     seg.phase_p, seg.phase_q, seg.phase_s)))
            for seg in sched.segments
        ],
        "meta": _jsonable(meta),
    }


def schedule_from_dict(doc: dict) -> PulseSchedule:
    if not isinstance(doc, dict):
        raise ScheduleFormatError("schedule document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ScheduleFormatError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        omega0 = float(doc["omega0"])
        omega1 = float(doc["omega1"])
        raw = doc["segments"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ScheduleFormatError(f"bad schedule header: {exc}") from None
    if not isinstance(raw, list):
        raise ScheduleFormatError("'segments' must be a list")
    segs = []
    for k, item in enumerate(raw):
        try:
            segs.append(PulseSegment(
                float(item["dt"]), float(item["op"]), float(item["oq"]), float(item["os"]),
                float(item.get("pp", 0.0)), float(item.get("pq", math.pi / 2)), float(item.get("ps", 0.0)),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScheduleFormatError(f"segment {k}: {exc}") from None
    meta = doc.get("meta") or {}
    if not isinstance(meta, dict):
        raise ScheduleFormatError("'meta' must be an object")
    try:
        return PulseSchedule(omega0, omega1, segs, meta=dict(meta))
    except ValueError as exc:
        raise ScheduleFormatError(str(exc)) from None


def dumps_schedule(sched: PulseSchedule) -> str:
    return json.dumps(schedule_to_dict(sched), indent=2, sort_keys=True) + "\n"


def save_schedule(sched: PulseSchedule, path: str | Path) -> None:
    Path(path).write_text(dumps_schedule(sched), encoding="utf-8")


def load_schedule(path: str | Path) -> PulseSchedule:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScheduleFormatError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScheduleFormatError(f"{path}: invalid JSON ({exc})") from None
    return schedule_from_dict(doc)


def format_value(value: Any) -> str:
    """12 significant digits for reals, locale independent."""
    if isinstance(value, bool) or value is None:
        return "" if value is None else str(value).lower()
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    try:
        x = float(value)
    except (TypeError, ValueError):
        return str(value)
    if math.isnan(x):
        return "nan"
    return f"{x + 0.0:.12g}"  # + 0.0 folds -0 into 0


def write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    write_csv(header, rows, buf)
    return buf.getvalue()


def dumps_json(data: Any) -> str:
    return json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n"
