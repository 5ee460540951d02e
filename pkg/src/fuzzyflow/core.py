"""Shared value types, error classes and the traffic-class taxonomy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional


class FuzzyflowError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ParameterError(FuzzyflowError, ValueError):
    exit_code = 2


class DataError(FuzzyflowError, ValueError):
    exit_code = 3


class SchemaError(DataError):
    """Input does not match a fixed schema (unknown class name, bad record field)."""


class ModelError(DataError):
    """A trained model is unusable, e.g. an empty rule base."""


class InternalError(FuzzyflowError, RuntimeError):
    """A precondition that an earlier stage should have guaranteed was violated."""

    exit_code = 4


class TrafficClass(IntEnum):
    # Normal is 0; attacks follow alphabetically.
    NORMAL = 0
    AUTH_ATTACK = 1
    BOTNET = 2
    PORT_SWEEP = 3
    PORT_SCAN = 4
    SPYING = 5
    WORM = 6

    @property
    def label(self) -> str:
        return _NAMES[self]

    @property
    def is_malicious(self) -> bool:
        return self is not TrafficClass.NORMAL

    def __str__(self) -> str:
        return self.label


_NAMES = {
    TrafficClass.NORMAL: "Normal",
    TrafficClass.AUTH_ATTACK: "AuthAttack",
    TrafficClass.BOTNET: "Botnet",
    TrafficClass.PORT_SWEEP: "PortSweep",
    TrafficClass.PORT_SCAN: "PortScan",
    TrafficClass.SPYING: "Spying",
    TrafficClass.WORM: "Worm",
}
_BY_NAME = {name.lower(): cls for cls, name in _NAMES.items()}

ATTACK_CLASSES = tuple(c for c in TrafficClass if c.is_malicious)


class BinaryLabel(str, Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"

    def __str__(self) -> str:
        return self.value


def to_binary(cls: TrafficClass) -> BinaryLabel:
    return BinaryLabel.MALICIOUS if TrafficClass(cls).is_malicious else BinaryLabel.BENIGN


def class_code(name: str) -> int:
    """Fixed integer code for a class name (case-insensitive)."""
    try:
        return int(_BY_NAME[str(name).strip().lower()])
    except KeyError:
        raise SchemaError(f"unknown traffic class {name!r}") from None


def class_name(code: int) -> str:
    try:
        return TrafficClass(int(code)).label
    except ValueError:
        raise SchemaError(f"unknown traffic class code {code!r}") from None


def parse_class(value) -> TrafficClass:
    """Accept a TrafficClass, an integer code or a class name."""
    if isinstance(value, TrafficClass):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        code = value
    elif str(value).strip().lstrip("-").isdigit():
        code = int(str(value).strip())
    else:
        return TrafficClass(class_code(value))
    try:
        return TrafficClass(code)
    except ValueError:
        raise SchemaError(f"unknown traffic class code {code!r}") from None


# Protocol markers, one enumeration per layer (value "none" = not present).
L2_PROTOCOLS = ("none", "arp", "llc")
L3_PROTOCOLS = ("none", "ip", "icmp", "icmpv6", "eapol")
L4_PROTOCOLS = ("none", "tcp", "udp")
L5_PROTOCOLS = ("none", "http", "https", "dhcp", "bootp", "ssdp", "dns", "mdns", "ntp")
IP_OPTIONS = ("padding", "router_alert")


@dataclass(frozen=True)
class FlowKey:
    """Source/destination address plus timestamp; identifies one feature vector."""

    src_ip: str
    dst_ip: str
    timestamp: float

    def __post_init__(self):
        if not self.src_ip or not self.dst_ip:
            raise SchemaError("flow key addresses must be non-empty")
        ts = float(self.timestamp)
        if not math.isfinite(ts) or ts < 0:
            raise SchemaError(f"invalid timestamp {self.timestamp!r}")
        object.__setattr__(self, "timestamp", ts)


def _choice(value: str, allowed: tuple, what: str) -> str:
    value = str(value).lower()
    if value not in allowed:
        raise SchemaError(f"{what} must be one of {allowed}, got {value!r}")
    return value


@dataclass(frozen=True)
class ConnectionRecord:
    key: FlowKey
    src_port: int
    dst_port: int
    l4: str = "none"
    l2: str = "none"
    l3: str = "ip"
    l5: str = "none"
    ip_options: frozenset = frozenset()
    duration: float = 0.0
    bytes_src_to_dst: int = 0
    bytes_dst_to_src: int = 0
    packet_sizes: tuple = ()
    syn_count: int = 0
    syn_error_count: int = 0
    rej_error_count: int = 0
    urg_count: int = 0
    login_attempt: bool = False
    ssh_connection: bool = False
    default_credential_used: bool = False
    login_failed: bool = False
    payload_signature_hit: bool = False
    label: Optional[TrafficClass] = field(default=None)

    def __post_init__(self):
        set_ = object.__setattr__
        for name in ("src_port", "dst_port"):
            port = getattr(self, name)
            if isinstance(port, bool) or int(port) != port or not 0 <= port <= 65535:
                raise SchemaError(f"{name} out of range: {port!r}")
            set_(self, name, int(port))
        set_(self, "l2", _choice(self.l2, L2_PROTOCOLS, "l2"))
        set_(self, "l3", _choice(self.l3, L3_PROTOCOLS, "l3"))
        set_(self, "l4", _choice(self.l4, L4_PROTOCOLS, "l4"))
        set_(self, "l5", _choice(self.l5, L5_PROTOCOLS, "l5"))
        opts = frozenset(str(o).lower() for o in self.ip_options)
        if not opts <= set(IP_OPTIONS):
            raise SchemaError(f"unknown ip options {sorted(opts - set(IP_OPTIONS))}")
        set_(self, "ip_options", opts)

        duration = float(self.duration)
        if not math.isfinite(duration) or duration < 0:
            raise SchemaError(f"duration must be finite and >= 0, got {self.duration!r}")
        set_(self, "duration", duration)
        for name in ("bytes_src_to_dst", "bytes_dst_to_src", "syn_count",
                     "syn_error_count", "rej_error_count", "urg_count"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 0:
                raise SchemaError(f"{name} must be a non-negative integer, got {value!r}")
            set_(self, name, int(value))
        sizes = tuple(int(s) for s in self.packet_sizes)
        if any(s < 0 for s in sizes):
            raise SchemaError("packet sizes must be non-negative")
        set_(self, "packet_sizes", sizes)
        for name in ("login_attempt", "ssh_connection", "default_credential_used",
                     "login_failed", "payload_signature_hit"):
            value = getattr(self, name)
            if not isinstance(value, bool):
                raise SchemaError(f"{name} must be a boolean, got {value!r}")
        if self.l4 != "tcp" and (self.syn_count or self.syn_error_count
                                 or self.rej_error_count or self.urg_count):
            raise SchemaError("SYN/REJ/URG counters require l4 = tcp")
        if self.label is not None:
            set_(self, "label", parse_class(self.label))

    @property
    def src_ip(self) -> str:
        return self.key.src_ip

    @property
    def dst_ip(self) -> str:
        return self.key.dst_ip

    @property
    def timestamp(self) -> float:
        return self.key.timestamp


@dataclass(frozen=True)
class FeatureVector:
    key: FlowKey
    values: tuple
    label: Optional[TrafficClass] = None

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in values):
            raise DataError(f"non-finite feature value for {self.key}")
        object.__setattr__(self, "values", values)
        if self.label is not None:
            object.__setattr__(self, "label", parse_class(self.label))
