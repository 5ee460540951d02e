"""JSON-lines flow-log reading/writing and per-source partitioning.

One connection per line. Required keys: ``src_ip``, ``dst_ip``, ``timestamp``,
``src_port``, ``dst_port``, ``l4``. Everything else is optional: counters
default to 0, booleans to false, ``l2``/``l5`` to ``"none"``, ``l3`` to
``"ip"``, ``ip_options``/``packet_sizes`` to empty, ``label`` to absent.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping

from fuzzyflow.core import ConnectionRecord, DataError, FlowKey, SchemaError, class_name

log = logging.getLogger(__name__)

REQUIRED_KEYS = ("src_ip", "dst_ip", "timestamp", "src_port", "dst_port", "l4")
_KEY_FIELDS = ("src_ip", "dst_ip", "timestamp")
_RECORD_FIELDS = tuple(f.name for f in fields(ConnectionRecord) if f.name != "key")
_KNOWN = set(_KEY_FIELDS) | set(_RECORD_FIELDS)


@dataclass
class ParseIssue:
    line: int
    message: str


@dataclass
class FlowLog:
    records: list
    source_path: str = ""
    errors: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


def record_from_dict(obj: Mapping) -> ConnectionRecord:
    if not isinstance(obj, Mapping):
        raise SchemaError("record must be a JSON object")
    missing = [k for k in REQUIRED_KEYS if k not in obj]
    if missing:
        raise SchemaError(f"missing required keys {missing}")
    unknown = set(obj) - _KNOWN
    if unknown:
        raise SchemaError(f"unknown keys {sorted(unknown)}")
    if not isinstance(obj["timestamp"], (int, float)) or isinstance(obj["timestamp"], bool):
        raise SchemaError("timestamp must be a number")
    kwargs = {k: obj[k] for k in _RECORD_FIELDS if k in obj and obj[k] is not None}
    if "ip_options" in kwargs:
        kwargs["ip_options"] = frozenset(kwargs["ip_options"])
    if "packet_sizes" in kwargs:
        kwargs["packet_sizes"] = tuple(kwargs["packet_sizes"])
    key = FlowKey(str(obj["src_ip"]), str(obj["dst_ip"]), obj["timestamp"])
    try:
        return ConnectionRecord(key=key, **kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(str(exc)) from exc


def record_to_dict(rec: ConnectionRecord) -> dict:
    out = {"src_ip": rec.key.src_ip, "dst_ip": rec.key.dst_ip, "timestamp": rec.key.timestamp}
    for name in _RECORD_FIELDS:
        value = getattr(rec, name)
        if name == "ip_options":
            value = sorted(value)
        elif name == "packet_sizes":
            value = list(value)
        elif name == "label":
            if value is None:
                continue
            value = class_name(value)
        out[name] = value
    return out


def sort_records(records: Iterable[ConnectionRecord]) -> list:
    # sorted() is stable, so timestamp ties keep file order
    return sorted(records, key=lambda r: (r.key.src_ip, r.key.timestamp))


def parse_flow_log(path, strict: bool = False, offsets: Mapping[str, float] | None = None) -> FlowLog:
    """Load a flow log, sorted by (src_ip, timestamp).

    In lenient mode malformed lines are skipped and reported in ``FlowLog.errors``;
    with ``strict=True`` the first one raises :class:`SchemaError`. ``offsets``
    maps a source address to a constant clock correction in seconds.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"flow log not found: {path}")
    records, errors = [], []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = record_from_dict(obj)
            except (json.JSONDecodeError, SchemaError) as exc:
                if strict:
                    raise SchemaError(f"{path}:{lineno}: {exc}") from exc
                errors.append(ParseIssue(lineno, str(exc)))
                continue
            records.append(rec)
    if offsets:
        records = apply_clock_offsets(records, offsets)
    if errors:
        log.warning("%s: skipped %d malformed line(s)", path, len(errors))
    return FlowLog(sort_records(records), str(path), errors)


def apply_clock_offsets(records: Iterable[ConnectionRecord], offsets: Mapping[str, float]) -> list:
    out = []
    for rec in records:
        delta = float(offsets.get(rec.key.src_ip, 0.0))
        if delta:
            ts = rec.key.timestamp + delta
            if ts < 0:
                raise DataError(f"clock offset makes timestamp negative for {rec.key.src_ip}")
            rec = replace(rec, key=replace(rec.key, timestamp=ts))
        out.append(rec)
    return out


def load_offsets(path) -> dict:
    """Read a sidecar JSON object mapping src_ip -> clock offset (seconds)."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise SchemaError("offset sidecar must be a JSON object")
    return {str(k): float(v) for k, v in data.items()}


def write_flow_log(records: Iterable[ConnectionRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec), separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n


def partition_by_source(flow_log: FlowLog | Iterable[ConnectionRecord]) -> dict:
    """Group records by source address, each group in timestamp order."""
    records = flow_log.records if isinstance(flow_log, FlowLog) else list(flow_log)
    groups = defaultdict(list)
    for rec in records:
        groups[rec.key.src_ip].append(rec)
    return {src: sorted(recs, key=lambda r: r.key.timestamp) for src, recs in sorted(groups.items())}
