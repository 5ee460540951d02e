"""Deterministic synthetic flow logs for the seven traffic classes.

Every device draws from ``numpy.random.default_rng([seed, class_code, device])``
(PCG64 via SeedSequence), so a (config, seed) pair always yields the same log
on any platform. All knob defaults below are choices of this generator; they
are tuned so the classes separate, except that port scans over a wide subset
look like port sweeps.

Address plan: device ``d`` of class ``k`` is ``192.168.<10+k>.<10+d>``; LAN
victims live in 192.168.100.0/24, the gateway is 192.168.1.1 and remote
hosts come from the documentation ranges 198.51.100.0/24 and 203.0.113.0/24.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from fuzzyflow.core import ConnectionRecord, FlowKey, ParameterError, TrafficClass, parse_class
from fuzzyflow.ingest import FlowLog

GATEWAY = "192.168.1.1"
SSDP_GROUP = "239.255.255.250"
MDNS_GROUP = "224.0.0.251"
BROADCAST = "255.255.255.255"
START_TIME = 1_600_000_000.0


@dataclass(frozen=True)
class ScenarioConfig:
    cls: TrafficClass
    device_count: int = 1
    flows_per_device: int = 1000
    seed: int = 0
    first_device: int = 0
    # port sweep / port scan
    port_range: tuple = (1, 1024)
    scan_subset: int = 20
    # trailing share of each scanner's flows that probe a wide subset instead
    wide_scan_share: float = 0.0
    wide_scan_subset: int = 400
    open_ports: tuple = (22, 80, 443)
    # auth attack
    auth_targets: int = 1
    auth_failure_rate: float = 0.95
    # botnet
    botnet_destinations: int = 2
    # spying
    spy_upload_bytes: tuple = (50_000, 500_000)
    # worm
    worm_hosts: int = 254
    worm_infect_rate: float = 0.3
    # normal
    normal_sites: int = 40
    normal_rate: float = 0.5  # connections per second

    def __post_init__(self):
        object.__setattr__(self, "cls", parse_class(self.cls))
        for name in ("device_count", "flows_per_device", "scan_subset", "auth_targets",
                     "botnet_destinations", "worm_hosts", "normal_sites"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be positive")
        lo, hi = self.port_range
        if not 0 <= lo <= hi <= 65535:
            raise ParameterError(f"port range {self.port_range} must lie within 0..65535")
        if self.cls is TrafficClass.PORT_SCAN:
            if self.scan_subset >= hi - lo + 1:
                raise ParameterError("port-scan subset must be smaller than the full port range")
            if self.wide_scan_share and not self.scan_subset <= self.wide_scan_subset < hi - lo + 1:
                raise ParameterError("wide scan subset must lie between scan_subset and the full range size")
        if not 0 <= self.wide_scan_share <= 1:
            raise ParameterError("wide_scan_share must lie in [0, 1]")
        if self.first_device < 0:
            raise ParameterError("first_device must be >= 0")
        if self.first_device + self.device_count > 240:
            raise ParameterError("at most 240 devices per class")
        if not 0 <= self.auth_failure_rate <= 1 or not 0 <= self.worm_infect_rate <= 1:
            raise ParameterError("rates must lie in [0, 1]")
        if not self.normal_rate > 0:
            raise ParameterError("normal_rate must be positive")
        if self.worm_hosts > 254:
            raise ParameterError("worm_hosts must be <= 254")
        a, b = self.spy_upload_bytes
        if not 0 < a <= b:
            raise ParameterError("spy_upload_bytes must be a positive (low, high) pair")


def device_ip(cls: TrafficClass, device: int) -> str:
    return f"192.168.{10 + int(cls)}.{10 + device}"


def _lan(host: int) -> str:
    return f"192.168.100.{host}"


def _remote(i: int) -> str:
    return f"203.0.113.{1 + i % 254}" if i < 254 else f"198.51.100.{1 + i % 254}"


def _packets(rng, count: int, lo: int, hi: int) -> tuple:
    return tuple(int(v) for v in rng.integers(lo, hi + 1, size=max(count, 1)))


class _Quota:
    """Categorical draws in shuffled blocks with exact per-block proportions.

    Keeps windowed counts close to their expected value instead of
    binomially scattered around it.
    """

    def __init__(self, rng, weights: dict, block: int = 20):
        self.rng = rng
        self.items = []
        for value, w in weights.items():
            self.items += [value] * int(round(w * block))
        if not self.items:
            raise ParameterError("quota block is empty")
        self.queue = []

    def draw(self):
        if not self.queue:
            self.queue = [self.items[i] for i in self.rng.permutation(len(self.items))]
        return self.queue.pop()


def _flag(rng, rate: float, block: int = 20) -> _Quota:
    return _Quota(rng, {True: rate, False: 1.0 - rate}, block)


class _Device:
    """Emits records for one device; subclass-free, dispatch on class."""

    def __init__(self, cfg: ScenarioConfig, index: int):
        self.cfg = cfg
        self.rng = np.random.default_rng([int(cfg.seed), int(cfg.cls), index])
        self.ip = device_ip(cfg.cls, index)
        self.t = START_TIME + float(self.rng.uniform(0, 60))
        rng = self.rng
        lo, hi = cfg.port_range
        self.victim = _lan(int(rng.integers(2, 255)))
        self.filtered = _flag(rng, 0.15)
        if cfg.cls is TrafficClass.PORT_SWEEP:
            self.ports = np.arange(lo, hi + 1)
            self.pos = int(rng.integers(0, len(self.ports)))
        elif cfg.cls is TrafficClass.PORT_SCAN:
            self.ports = np.sort(rng.choice(np.arange(lo, hi + 1), size=cfg.scan_subset, replace=False))
            self.order = rng.permutation(self.ports)
            self.pos = 0
            self.emitted = 0
            self.wide_from = int(round(cfg.flows_per_device * (1.0 - cfg.wide_scan_share)))
        elif cfg.cls is TrafficClass.AUTH_ATTACK:
            self.targets = [_lan(int(h)) for h in rng.choice(np.arange(2, 255), size=cfg.auth_targets, replace=False)]
            self.failed = _flag(rng, cfg.auth_failure_rate)
            self.ssh = _flag(rng, 0.8, 10)
            self.default_cred = _flag(rng, 0.3, 10)
            self.pos = 0
        elif cfg.cls is TrafficClass.BOTNET:
            self.targets = [_remote(int(i)) for i in rng.choice(254, size=cfg.botnet_destinations, replace=False)]
            self.no_answer = _flag(rng, 0.4, 10)
            self.urgent = _flag(rng, 0.3, 10)
            self.pos = 0
        elif cfg.cls is TrafficClass.SPYING:
            self.exfil = f"198.51.100.{int(rng.integers(1, 255))}"
        elif cfg.cls is TrafficClass.WORM:
            self.hosts = rng.permutation(np.arange(1, 255))[: cfg.worm_hosts]
            self.pos = 0
            self.infect = _flag(rng, cfg.worm_infect_rate)
            self.refused = _flag(rng, 0.5, 10)
            self.service = _Quota(rng, {22: 0.25, 23: 0.25, 445: 0.25, 2323: 0.25}, 4)
        else:
            # a fixed site population with skewed popularity
            self.sites = [_remote(int(i)) for i in rng.choice(400, size=cfg.normal_sites, replace=False)]
            w = 1.0 / np.arange(1, cfg.normal_sites + 1)
            self.site_p = w / w.sum()
            self.kind = _Quota(rng, {"https": 0.34, "http": 0.14, "dns": 0.22, "ntp": 0.04, "ssdp": 0.08,
                                     "mdns": 0.10, "dhcp": 0.02, "arp": 0.04, "icmp": 0.02}, 50)
            self.router_alert = _flag(rng, 0.5, 2)

    def _ephemeral(self) -> int:
        return int(self.rng.integers(32768, 61000))

    def _advance(self, mean_gap: float) -> float:
        self.t += float(self.rng.exponential(mean_gap))
        return round(self.t, 6)

    def _record(self, dst: str, ts: float, **kw) -> ConnectionRecord:
        kw.setdefault("src_port", self._ephemeral())
        return ConnectionRecord(key=FlowKey(self.ip, dst, ts), label=self.cfg.cls, **kw)

    def next(self) -> ConnectionRecord:
        return getattr(self, "_" + self.cfg.cls.name.lower())()

    # -- per class ---------------------------------------------------------

    def _probe(self, port: int, mean_gap: float) -> ConnectionRecord:
        rng = self.rng
        ts = self._advance(mean_gap)
        if port in self.cfg.open_ports:
            return self._record(self.victim, ts, dst_port=port, l4="tcp", duration=round(float(rng.uniform(0.001, 0.01)), 6),
                                bytes_src_to_dst=60, bytes_dst_to_src=58, packet_sizes=(60, 58, 54), syn_count=1)
        if self.filtered.draw():  # no answer
            return self._record(self.victim, ts, dst_port=port, l4="tcp", duration=0.0,
                                bytes_src_to_dst=60, packet_sizes=(60,), syn_count=1, syn_error_count=1)
        return self._record(self.victim, ts, dst_port=port, l4="tcp", duration=round(float(rng.uniform(0.0005, 0.005)), 6),
                            bytes_src_to_dst=60, bytes_dst_to_src=54, packet_sizes=(60, 54), syn_count=1, rej_error_count=1)

    def _port_sweep(self):
        port = int(self.ports[self.pos % len(self.ports)])
        self.pos += 1
        return self._probe(port, 0.02)

    def _port_scan(self):
        if self.emitted == self.wide_from and self.cfg.wide_scan_share > 0:
            lo, hi = self.cfg.port_range
            self.ports = np.sort(self.rng.choice(np.arange(lo, hi + 1), size=self.cfg.wide_scan_subset, replace=False))
            self.order, self.pos = self.rng.permutation(self.ports), 0
        self.emitted += 1
        if self.pos == len(self.order):
            self.order, self.pos = self.rng.permutation(self.ports), 0
        port = int(self.order[self.pos])
        self.pos += 1
        return self._probe(port, 0.02)

    def _auth_attack(self):
        rng = self.rng
        ts = self._advance(1.5)
        dst = self.targets[self.pos % len(self.targets)]
        self.pos += 1
        ssh = self.ssh.draw()
        failed = self.failed.draw()
        return self._record(
            dst, ts, dst_port=22 if ssh else 23, l4="tcp",
            duration=round(float(rng.uniform(0.8, 3.0)), 6),
            bytes_src_to_dst=int(rng.integers(1500, 3500)), bytes_dst_to_src=int(rng.integers(2000, 4500)),
            packet_sizes=_packets(rng, int(rng.integers(10, 20)), 60, 400), syn_count=1,
            login_attempt=True, ssh_connection=ssh, login_failed=failed,
            default_credential_used=self.default_cred.draw(),
        )

    def _botnet(self):
        # flood the destinations round-robin over HTTP
        rng = self.rng
        ts = self._advance(0.1)
        dst = self.targets[self.pos % len(self.targets)]
        self.pos += 1
        no_answer = self.no_answer.draw()
        return self._record(
            dst, ts, dst_port=80, l4="tcp", l5="http",
            duration=0.0 if no_answer else round(float(rng.uniform(0.01, 0.1)), 6),
            bytes_src_to_dst=int(rng.integers(300, 700)), bytes_dst_to_src=0 if no_answer else int(rng.integers(200, 600)),
            packet_sizes=_packets(rng, 3, 60, 700), syn_count=1, syn_error_count=int(no_answer),
            urg_count=int(self.urgent.draw()),
        )

    def _spying(self):
        rng, cfg = self.rng, self.cfg
        ts = self._advance(8.0)
        lo, hi = cfg.spy_upload_bytes
        up = int(rng.integers(lo, hi + 1))
        return self._record(
            self.exfil, ts, dst_port=443, l4="tcp", l5="https",
            duration=round(float(rng.uniform(10, 60)), 6),
            bytes_src_to_dst=up, bytes_dst_to_src=int(rng.integers(800, 2500)),
            packet_sizes=_packets(rng, 12, 1200, 1500), syn_count=1,
        )

    def _worm(self):
        rng = self.rng
        ts = self._advance(0.5)
        host = int(self.hosts[self.pos % len(self.hosts)])
        self.pos += 1
        dst = _lan(host)
        port = self.service.draw()
        if self.infect.draw():  # default credentials worked: push the payload
            return self._record(
                dst, ts, dst_port=port, l4="tcp", duration=round(float(rng.uniform(2, 8)), 6),
                bytes_src_to_dst=int(rng.integers(60_000, 200_000)), bytes_dst_to_src=int(rng.integers(1000, 3000)),
                packet_sizes=_packets(rng, 20, 800, 1500), syn_count=1,
                login_attempt=True, ssh_connection=port == 22, default_credential_used=True,
                payload_signature_hit=True,
            )
        refused = self.refused.draw()
        return self._record(
            dst, ts, dst_port=port, l4="tcp", duration=round(float(rng.uniform(0.001, 0.01) if refused else rng.uniform(0.5, 2)), 6),
            bytes_src_to_dst=60 if refused else int(rng.integers(300, 900)),
            bytes_dst_to_src=54 if refused else int(rng.integers(300, 900)),
            packet_sizes=(60, 54) if refused else _packets(rng, 8, 60, 300), syn_count=1,
            rej_error_count=int(refused), login_attempt=not refused,
            ssh_connection=(port == 22) and not refused, default_credential_used=not refused,
            login_failed=not refused,
        )

    def _normal(self):
        rng, cfg = self.rng, self.cfg
        ts = self._advance(1.0 / cfg.normal_rate)
        kind = self.kind.draw()
        if kind in ("https", "http"):
            site = self.sites[int(rng.choice(len(self.sites), p=self.site_p))]
            return self._record(
                site, ts, dst_port=443 if kind == "https" else 80, l4="tcp", l5=kind,
                duration=round(float(rng.lognormal(0.3, 0.8)), 6),
                bytes_src_to_dst=int(rng.integers(400, 4000)), bytes_dst_to_src=int(rng.integers(5_000, 150_000)),
                packet_sizes=_packets(rng, int(rng.integers(8, 40)), 60, 1500), syn_count=1,
            )
        if kind == "dns":
            return self._record(GATEWAY, ts, dst_port=53, l4="udp", l5="dns",
                                duration=round(float(rng.uniform(0.005, 0.08)), 6),
                                bytes_src_to_dst=int(rng.integers(50, 90)), bytes_dst_to_src=int(rng.integers(80, 300)),
                                packet_sizes=_packets(rng, 2, 50, 300))
        if kind == "ntp":
            return self._record(_remote(300), ts, src_port=123, dst_port=123, l4="udp", l5="ntp",
                                duration=round(float(rng.uniform(0.01, 0.1)), 6),
                                bytes_src_to_dst=76, bytes_dst_to_src=76, packet_sizes=(76, 76))
        if kind == "ssdp":
            return self._record(SSDP_GROUP, ts, dst_port=1900, l4="udp", l5="ssdp", duration=0.0,
                                bytes_src_to_dst=int(rng.integers(150, 400)), packet_sizes=_packets(rng, 1, 150, 400),
                                ip_options=frozenset({"router_alert"}) if self.router_alert.draw() else frozenset())
        if kind == "mdns":
            return self._record(MDNS_GROUP, ts, src_port=5353, dst_port=5353, l4="udp", l5="mdns", duration=0.0,
                                bytes_src_to_dst=int(rng.integers(60, 500)), packet_sizes=_packets(rng, 1, 60, 500))
        if kind == "dhcp":
            return self._record(BROADCAST, ts, src_port=68, dst_port=67, l4="udp", l5="dhcp",
                                duration=round(float(rng.uniform(0.01, 0.5)), 6),
                                bytes_src_to_dst=342, bytes_dst_to_src=342, packet_sizes=(342, 342),
                                ip_options=frozenset({"padding"}))
        if kind == "arp":
            return self._record(GATEWAY, ts, src_port=0, dst_port=0, l2="arp", l3="none", l4="none",
                                bytes_src_to_dst=42, bytes_dst_to_src=42, packet_sizes=(42, 42))
        return self._record(GATEWAY, ts, src_port=0, dst_port=0, l3="icmp", l4="none",
                            duration=round(float(rng.uniform(0.001, 0.02)), 6),
                            bytes_src_to_dst=98, bytes_dst_to_src=98, packet_sizes=(98, 98))


def _merge(records: Iterable[ConnectionRecord]) -> list:
    # stable: equal timestamps keep device/config order
    return sorted(records, key=lambda r: r.key.timestamp)


def generate(config: ScenarioConfig) -> FlowLog:
    """Labeled flow log for one class, records in global timestamp order."""
    records = []
    for d in range(config.device_count):
        dev = _Device(config, config.first_device + d)
        records.extend(dev.next() for _ in range(config.flows_per_device))
    return FlowLog(_merge(records), source_path=f"synthetic:{config.cls.label}:{config.seed}")


def generate_mixed(configs: Sequence[ScenarioConfig], interleave_seed: int = 0) -> FlowLog:
    """Several class logs merged into one timestamp-ordered log.

    Each class log is shifted by a random offset (from ``interleave_seed``)
    before merging so that capture start times differ between scenarios.
    """
    if not configs:
        raise ParameterError("generate_mixed needs at least one config")
    if len(configs) == 1:
        return generate(configs[0])
    rng = np.random.default_rng(int(interleave_seed))

    records = []
    for cfg in configs:
        shift = round(float(rng.uniform(0, 600)), 6)
        for rec in generate(cfg).records:
            records.append(replace(rec, key=replace(rec.key, timestamp=round(rec.key.timestamp + shift, 6))))
    return FlowLog(_merge(records), source_path=f"synthetic:mix:{interleave_seed}")


def default_mix(flows_per_class: int = 1000, seed: int = 0, devices: int = 1, **knobs) -> list:
    """One config per class with ``flows_per_class`` records each."""
    per_device, extra = divmod(flows_per_class, devices)
    if extra:
        raise ParameterError("flows_per_class must be divisible by devices")
    return [ScenarioConfig(c, device_count=devices, flows_per_device=per_device, seed=seed, **knobs)
            for c in TrafficClass]
