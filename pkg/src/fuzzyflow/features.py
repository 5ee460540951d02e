"""Connection-count (last-n) feature extraction over a fixed 39-feature schema.

Discrete features are 0/1 indicators of the current record's protocols.
Continuous features aggregate the current record and up to ``n - 1``
preceding records from the same source. Aggregation is count based, so
inserting idle time between connections never changes a feature value.
"""

from __future__ import annotations

import csv
import math
from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from fuzzyflow.core import (
    ConnectionRecord,
    DataError,
    FeatureVector,
    FlowKey,
    ParameterError,
    SchemaError,
    class_name,
    parse_class,
)
from fuzzyflow.ingest import partition_by_source

DEFAULT_WINDOW = 100

DISCRETE_FEATURES = (
    "proto_arp", "proto_llc",
    "proto_ip", "proto_icmp", "proto_icmpv6", "proto_eapol",
    "proto_tcp", "proto_udp",
    "proto_http", "proto_https", "proto_dhcp", "proto_bootp", "proto_ssdp",
    "proto_dns", "proto_mdns", "proto_ntp",
    "ipopt_padding", "ipopt_router_alert",
)
CONTINUOUS_FEATURES = (
    "unique_dst_ips", "unique_src_ports", "unique_dst_ports",
    "total_connections", "conns_to_current_dst", "conns_from_current_src_service",
    "mean_connection_duration", "max_connection_duration",
    "syn_count", "syn_error_count", "rej_error_count", "urg_count",
    "total_bytes", "bytes_src_to_dst", "bytes_dst_to_src",
    "mean_packet_size", "max_packet_size",
    "payload_signature_hits",
    "login_attempts", "ssh_connections", "failed_login_attempts",
)
FEATURE_NAMES = DISCRETE_FEATURES + CONTINUOUS_FEATURES
KEY_COLUMNS = ("src_ip", "dst_ip", "timestamp")


@dataclass(frozen=True)
class FeatureSchema:
    entries: tuple  # ((name, "discrete" | "continuous"), ...)

    @property
    def names(self) -> tuple:
        return tuple(name for name, _ in self.entries)

    def kinds(self) -> dict:
        return dict(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


_SCHEMA = FeatureSchema(
    tuple((n, "discrete") for n in DISCRETE_FEATURES)
    + tuple((n, "continuous") for n in CONTINUOUS_FEATURES)
)


def feature_names() -> FeatureSchema:
    return _SCHEMA


def discrete_indicators(rec: ConnectionRecord) -> list:
    return [
        rec.l2 == "arp", rec.l2 == "llc",
        rec.l3 == "ip", rec.l3 == "icmp", rec.l3 == "icmpv6", rec.l3 == "eapol",
        rec.l4 == "tcp", rec.l4 == "udp",
        rec.l5 == "http", rec.l5 == "https", rec.l5 == "dhcp", rec.l5 == "bootp",
        rec.l5 == "ssdp", rec.l5 == "dns", rec.l5 == "mdns", rec.l5 == "ntp",
        "padding" in rec.ip_options, "router_alert" in rec.ip_options,
    ]


class AggregationWindow:
    """Ring of the last ``n`` records of one source with incremental aggregates.

    Integer aggregates are maintained exactly; durations and packet maxima are
    recomputed from the ring, which is at most ``n`` long.
    """

    _SUMS = ("syn_count", "syn_error_count", "rej_error_count", "urg_count",
             "bytes_src_to_dst", "bytes_dst_to_src")
    _FLAGS = ("payload_signature_hit", "login_attempt", "ssh_connection")

    def __init__(self, n: int):
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise ParameterError(f"window length must be a positive integer, got {n!r}")
        self.n = int(n)
        self.ring = deque()
        self.dst_ips = Counter()
        self.src_ports = Counter()
        self.dst_ports = Counter()
        self.sums = dict.fromkeys(self._SUMS + self._FLAGS + ("failed", "pkt_bytes", "pkt_count"), 0)

    def __len__(self) -> int:
        return len(self.ring)

    def _account(self, rec: ConnectionRecord, sign: int) -> None:
        for counter, value in ((self.dst_ips, rec.key.dst_ip),
                               (self.src_ports, rec.src_port),
                               (self.dst_ports, rec.dst_port)):
            counter[value] += sign
            if counter[value] == 0:
                del counter[value]
        s = self.sums
        for name in self._SUMS:
            s[name] += sign * getattr(rec, name)
        for name in self._FLAGS:
            s[name] += sign * int(getattr(rec, name))
        s["failed"] += sign * (int(rec.login_failed) + int(rec.default_credential_used))
        s["pkt_bytes"] += sign * sum(rec.packet_sizes)
        s["pkt_count"] += sign * len(rec.packet_sizes)

    def push(self, rec: ConnectionRecord) -> None:
        if len(self.ring) == self.n:
            self._account(self.ring.popleft(), -1)
        self.ring.append(rec)
        self._account(rec, +1)

    def continuous(self, current: ConnectionRecord) -> list:
        ring, s = self.ring, self.sums
        durations = [r.duration for r in ring]
        to_dst = self.dst_ips[current.key.dst_ip]
        same_service = self.dst_ports[current.dst_port]
        max_pkt = max((max(r.packet_sizes) for r in ring if r.packet_sizes), default=0)
        mean_pkt = s["pkt_bytes"] / s["pkt_count"] if s["pkt_count"] else 0.0
        return [
            len(self.dst_ips), len(self.src_ports), len(self.dst_ports),
            len(ring), to_dst, same_service,
            math.fsum(durations) / len(ring), max(durations),
            s["syn_count"], s["syn_error_count"], s["rej_error_count"], s["urg_count"],
            s["bytes_src_to_dst"] + s["bytes_dst_to_src"], s["bytes_src_to_dst"], s["bytes_dst_to_src"],
            mean_pkt, max_pkt,
            s["payload_signature_hit"],
            s["login_attempt"], s["ssh_connection"], s["failed"],
        ]


def _extract_source(records: Sequence[ConnectionRecord], n: int) -> list:
    window = AggregationWindow(n)
    out = []
    for rec in records:
        window.push(rec)
        values = [float(v) for v in discrete_indicators(rec)] + [float(v) for v in window.continuous(rec)]
        out.append(FeatureVector(rec.key, tuple(values), rec.label))
    return out


def extract(records, n: int = DEFAULT_WINDOW) -> list:
    """One FeatureVector per record, sources in address order.

    ``records`` is a FlowLog, an iterable of records (partitioned by source
    here) or a mapping src_ip -> time-ordered records.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ParameterError(f"window length must be a positive integer, got {n!r}")
    parts = records if isinstance(records, Mapping) else partition_by_source(records)
    out = []
    for src in parts:
        out.extend(_extract_source(parts[src], int(n)))
    return out


# -- tabular helpers -------------------------------------------------------

def to_matrix(vectors: Sequence[FeatureVector]) -> np.ndarray:
    if not vectors:
        return np.zeros((0, len(FEATURE_NAMES)))
    return np.array([v.values for v in vectors], dtype=float)


def labels_of(vectors: Sequence[FeatureVector]) -> np.ndarray:
    """Integer class codes, -1 where unlabeled."""
    return np.array([-1 if v.label is None else int(v.label) for v in vectors], dtype=int)


@dataclass
class FeatureTable:
    """Feature matrix with its key columns, labels and an optional synthetic flag."""

    names: tuple
    keys: list          # FlowKey per row
    X: np.ndarray
    y: np.ndarray       # class codes, -1 = unlabeled
    synthetic: np.ndarray | None = None

    def __post_init__(self):
        self.names = tuple(self.names)
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.keys), len(self.names))
        self.y = np.asarray(self.y, dtype=int)
        if self.synthetic is None:
            self.synthetic = np.zeros(len(self.keys), dtype=bool)
        self.synthetic = np.asarray(self.synthetic, dtype=bool)
        if not (len(self.y) == len(self.synthetic) == len(self.keys)):
            raise DataError("feature table columns have mismatched lengths")

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def labeled(self) -> bool:
        return len(self.y) > 0 and bool(np.all(self.y >= 0))

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector], names=FEATURE_NAMES) -> "FeatureTable":
        return cls(names, [v.key for v in vectors], to_matrix(vectors), labels_of(vectors))

    def subset(self, idx) -> "FeatureTable":
        idx = np.asarray(idx, dtype=int)
        return FeatureTable(self.names, [self.keys[i] for i in idx], self.X[idx], self.y[idx],
                            self.synthetic[idx])

    def select(self, names: Iterable[str]) -> "FeatureTable":
        names = tuple(names)
        pos = [self.names.index(n) for n in names]
        return FeatureTable(names, list(self.keys), self.X[:, pos], self.y.copy(), self.synthetic.copy())


def write_feature_csv(table: FeatureTable, path, include_synthetic: bool = False) -> None:
    header = list(KEY_COLUMNS) + list(table.names) + ["label"]
    if include_synthetic:
        header.append("synthetic")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, key in enumerate(table.keys):
            label = "" if table.y[i] < 0 else class_name(int(table.y[i]))
            # repr() keeps floats bit-exact on re-read
            row = [key.src_ip, key.dst_ip, repr(key.timestamp)]
            row += [repr(float(v)) for v in table.X[i]]
            row.append(label)
            if include_synthetic:
                row.append(int(table.synthetic[i]))
            w.writerow(row)


def read_feature_csv(path) -> FeatureTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty feature file") from None
        if tuple(header[:3]) != KEY_COLUMNS:
            raise SchemaError(f"{path}: first columns must be {KEY_COLUMNS}")
        tail = [h for h in header[3:] if h not in ("label", "synthetic")]
        names = tuple(tail)
        has_label = "label" in header
        has_syn = "synthetic" in header
        li = header.index("label") if has_label else None
        si = header.index("synthetic") if has_syn else None
        keys, rows, ys, syn = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                keys.append(FlowKey(row[0], row[1], float(row[2])))
                rows.append([float(v) for v in row[3:3 + len(names)]])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
            ys.append(int(parse_class(row[li])) if has_label and row[li] else -1)
            syn.append(bool(int(row[si])) if has_syn else False)
    X = np.array(rows, dtype=float) if rows else np.zeros((0, len(names)))
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite feature values")
    return FeatureTable(names, keys, X, np.array(ys, dtype=int), np.array(syn, dtype=bool))
