"""Deterministic event-driven generator of videoconferencing packet traces.

The host emits flash bursts, small background packets and optionally a
constant-rate media stream.  Packets travel hop by hop through relays (or
directly, peer-to-peer); each hop adds its one-way delay, uniform jitter and
i.i.d. loss, and a token bucket shapes each client's ingress when a cap is
set.  Every client's capture holds the packets it sent (at send time) and
received (at delivery time).
"""

from __future__ import annotations

import heapq
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..endpoints import PEER_TO_PEER, PER_CLIENT_RELAY, SHARED_RELAY
from ..errors import ConfigInvalid
from ..trace import INBOUND, OUTBOUND, TCP, TCP_ACK, TCP_SYN, UDP, PacketRecord, Trace, parse_capture
from .config import SimConfig
from .writer import wire_length, write_capture

EPHEMERAL_LOW, EPHEMERAL_HIGH = 49152, 65535
BUCKET_SECONDS = 0.1
MIN_BUCKET_BITS = 1500 * 8

# packet kinds
FLASH, BACKGROUND, MEDIA, FEEDBACK, SYN, SYNACK = range(6)


@dataclass(slots=True)
class _Packet:
    kind: int
    payload_len: int
    flash: int = -1
    transport: str = UDP
    seq: int = 0
    ack: int = 0
    probe_port: int = 0


class _TokenBucket:
    """FIFO shaper: rate ``cap`` bits/s with a burst allowance of ``bucket`` bits."""

    def __init__(self, cap: float, bucket: float, queue_limit_us: int):
        self.rate = cap / 1e6  # bits per microsecond
        self.bucket = bucket
        self.tokens = bucket
        self.t = 0.0
        self.last_departure = 0.0
        self.queue_limit_us = queue_limit_us

    def admit(self, arrival_us: int, bits: int) -> Optional[int]:
        start = max(float(arrival_us), self.last_departure)
        tokens = min(self.bucket, self.tokens + (start - self.t) * self.rate)
        departure = start if tokens >= bits else start + (bits - tokens) / self.rate
        if departure - arrival_us > self.queue_limit_us:
            return None
        self.tokens = min(self.bucket, tokens + (departure - start) * self.rate) - bits
        self.t = departure
        self.last_departure = departure
        return math.ceil(departure - 1e-9)


@dataclass
class GroundTruth:
    topology: str
    flash_times: list[float] = field(default_factory=list)
    arrivals: dict = field(default_factory=dict)
    delivered_bytes: dict = field(default_factory=dict)
    delivered_rate_bps: dict = field(default_factory=dict)
    endpoints: dict = field(default_factory=dict)
    transmissions: int = 0
    delivered: int = 0
    dropped: int = 0

    def lags(self, client: str) -> list[float]:
        """True per-flash lags (seconds) for one client; lost flashes are omitted."""
        out = []
        for send, arr in zip(self.flash_times, self.arrivals.get(client, [])):
            if arr is not None:
                out.append(round(arr - send, 6))
        return out

    def to_dict(self) -> dict:
        return {
            "topology": self.topology,
            "flash_times": self.flash_times,
            "arrivals": self.arrivals,
            "true_lags": {c: self.lags(c) for c in self.arrivals},
            "delivered_bytes": self.delivered_bytes,
            "delivered_rate_bps": self.delivered_rate_bps,
            "endpoints": self.endpoints,
            "transmissions": self.transmissions,
            "delivered": self.delivered,
            "dropped": self.dropped,
        }


@dataclass
class SimulationResult:
    config: SimConfig
    captures: dict
    truth: GroundTruth

    def trace(self, addr: str) -> Trace:
        return parse_capture(self.captures[addr], local_addr=addr)

    @property
    def host_trace(self) -> Trace:
        return self.trace(self.config.host.addr)

    def write(self, out_dir) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for addr, data in self.captures.items():
            path = os.path.join(out_dir, f"{addr}.pcap")
            with open(path, "wb") as fh:
                fh.write(data)
            paths.append(path)
        with open(os.path.join(out_dir, "ground_truth.json"), "w") as fh:
            json.dump({"config": self.config.to_dict(), "truth": self.truth.to_dict()}, fh, indent=2, sort_keys=True)
        return paths


class _Simulation:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.us = lambda seconds: round(seconds * 1e6)
        self.t0 = self.us(cfg.start_time)
        self.queue: list = []
        self.seq = 0
        self.host = cfg.host.addr
        self.clients = [c.addr for c in cfg.clients]
        self.records = {a: [] for a in self.clients}
        self.truth = GroundTruth(cfg.topology)
        self.truth.delivered_bytes = {a: 0 for a in self.clients}
        self.shapers = {}
        if cfg.cap is not None:
            bucket = max(cfg.cap * BUCKET_SECONDS, MIN_BUCKET_BITS)
            self.shapers = {a: _TokenBucket(cfg.cap, bucket, self.us(cfg.queue_limit)) for a in self.clients}
        self._assign_ports()

    def _ephemeral(self) -> int:
        return int(self.rng.integers(EPHEMERAL_LOW, EPHEMERAL_HIGH + 1))

    def _assign_ports(self):
        cfg = self.cfg
        self.port = {a: self._ephemeral() for a in self.clients}
        relay_port = cfg.media_port if cfg.media_port is not None else self._ephemeral()
        for relay in cfg.relays:
            self.port[relay] = relay_port
        for a in self.clients:
            endpoint = cfg.relay_for(a) or (self.host if a != self.host else None)
            if endpoint:
                self.truth.endpoints[a] = {"addr": endpoint, "port": self.port[endpoint]}

    # --- routing ---------------------------------------------------------------

    def next_hops(self, node: str) -> list[str]:
        """Where a host media packet at ``node`` goes next."""
        cfg = self.cfg
        topo = cfg.topology
        if topo == PEER_TO_PEER:
            return [c.addr for c in cfg.receivers] if node == self.host else []
        if node == self.host:
            return [cfg.relay_for(self.host)]
        if topo == SHARED_RELAY:
            return [c.addr for c in cfg.receivers] if node == cfg.relay_assignment else []
        # per-client relays
        host_relay = cfg.relay_for(self.host)
        hops = []
        if node == host_relay:
            for c in cfg.receivers:
                r = cfg.relay_for(c.addr)
                hop = c.addr if r == host_relay else r
                if hop not in hops:
                    hops.append(hop)
        else:
            hops = [c.addr for c in cfg.receivers if cfg.relay_for(c.addr) == node]
        return hops

    def endpoint_of(self, client: str) -> str:
        return self.cfg.relay_for(client) or self.host

    # --- event machinery -----------------------------------------------------

    def push(self, t_us: int, node: str, src: str, pkt: _Packet):
        heapq.heappush(self.queue, (t_us, self.seq, node, src, pkt))
        self.seq += 1

    def record(self, owner: str, t_us: int, src: str, dst: str, pkt: _Packet):
        direction = OUTBOUND if src == owner else INBOUND
        if pkt.transport == TCP:
            sport, dport = (pkt.probe_port, self.cfg.probe_port) if pkt.kind == SYN else (self.cfg.probe_port, pkt.probe_port)
            flags = TCP_SYN if pkt.kind == SYN else TCP_SYN | TCP_ACK
            rec = PacketRecord(t_us, direction, src, dst, sport, dport, TCP, 0, wire_length(TCP, 0),
                               flags, pkt.seq, pkt.ack)
        else:
            rec = PacketRecord(t_us, direction, src, dst, self.port[src], self.port[dst], UDP, pkt.payload_len,
                               wire_length(UDP, pkt.payload_len))
        self.records[owner].append(rec)

    def transmit(self, t_us: int, src: str, dst: str, pkt: _Packet):
        """Send one copy over the src->dst hop."""
        cfg = self.cfg
        self.truth.transmissions += 1
        if src in self.records:
            self.record(src, t_us, src, dst, pkt)
        if cfg.loss and self.rng.random() < cfg.loss:
            self.truth.dropped += 1
            return
        arrival = t_us + self.us(cfg.delay(src, dst))
        if cfg.jitter:
            j = self.us(cfg.jitter)
            arrival = max(t_us, arrival + int(self.rng.integers(-j, j + 1)))
        self.push(arrival, dst, src, pkt)

    def deliver(self, t_us: int, node: str, src: str, pkt: _Packet):
        if node in self.shapers:
            bits = 8 * wire_length(pkt.transport, pkt.payload_len)
            t_us = self.shapers[node].admit(t_us, bits)
            if t_us is None:
                self.truth.dropped += 1
                return
        self.truth.delivered += 1
        if node in self.records:
            self.record(node, t_us, src, node, pkt)
            self.truth.delivered_bytes[node] += pkt.payload_len
            if pkt.kind == FLASH and pkt.flash >= 0 and node in self.truth.arrivals:
                slot = self.truth.arrivals[node]
                if slot[pkt.flash] is None:
                    slot[pkt.flash] = t_us / 1e6
            if pkt.kind == SYN:
                reply = _Packet(SYNACK, 0, transport=TCP, seq=int(self.rng.integers(0, 2 ** 32)),
                                ack=(pkt.seq + 1) & 0xFFFFFFFF, probe_port=pkt.probe_port)
                self.transmit(t_us, node, src, reply)
            return
        # relay node
        if pkt.kind == SYN:
            reply = _Packet(SYNACK, 0, transport=TCP, seq=int(self.rng.integers(0, 2 ** 32)),
                            ack=(pkt.seq + 1) & 0xFFFFFFFF, probe_port=pkt.probe_port)
            self.transmit(t_us, node, src, reply)
        elif pkt.kind in (FLASH, BACKGROUND, MEDIA):
            for hop in self.next_hops(node):
                self.transmit(t_us, node, hop, pkt)

    # --- sources -------------------------------------------------------------

    def _host_emissions(self):
        cfg = self.cfg
        end = self.t0 + self.us(cfg.duration)
        out = []
        if cfg.flash_period:
            period = self.us(cfg.flash_period)
            gap = self.us(cfg.flash_burst.gap)
            k = 0
            t = self.t0 + self.us(cfg.flash_phase)
            while t < end:
                self.truth.flash_times.append(t / 1e6)
                for i in range(cfg.flash_burst.count):
                    out.append((t + i * gap, _Packet(FLASH, cfg.flash_burst.payload_len, flash=k if i == 0 else -1)))
                k += 1
                t = self.t0 + self.us(cfg.flash_phase) + k * period
        for rate, size, kind in ((cfg.background.rate, cfg.background.payload_len, BACKGROUND),
                                 (cfg.offered_rate / (8 * cfg.media_payload_len), cfg.media_payload_len, MEDIA)):
            if rate > 0:
                interval = 1e6 / rate
                n = 0
                while (t := self.t0 + round(n * interval)) < end:
                    out.append((t, _Packet(kind, size)))
                    n += 1
        return out

    def _client_emissions(self, client: str):
        cfg = self.cfg
        end = self.t0 + self.us(cfg.duration)
        out = []
        if client != self.host and cfg.feedback.rate > 0:
            interval = 1e6 / cfg.feedback.rate
            # stagger clients so their feedback does not coincide
            phase = self.clients.index(client) * 997
            n = 0
            while (t := self.t0 + phase + round(n * interval)) < end:
                out.append((t, _Packet(FEEDBACK, cfg.feedback.payload_len)))
                n += 1
        if cfg.probes:
            spacing = self.us(cfg.duration) // (cfg.probes + 1)
            for i in range(cfg.probes):
                seq = int(self.rng.integers(0, 2 ** 32))
                out.append((self.t0 + (i + 1) * spacing + 31, _Packet(SYN, 0, transport=TCP, seq=seq,
                                                                      probe_port=40000 + i % 20000)))
        return out

    def run(self) -> SimulationResult:
        cfg = self.cfg
        for t, pkt in self._host_emissions():
            self.push(t, self.host, self.host, pkt)
        n_flash = len(self.truth.flash_times)
        self.truth.arrivals = {c.addr: [None] * n_flash for c in cfg.receivers}
        for client in self.clients:
            for t, pkt in self._client_emissions(client):
                self.push(t, client, client, pkt)

        while self.queue:
            t, _, node, src, pkt = heapq.heappop(self.queue)
            if src == node:
                # locally originated packet leaves its source
                if pkt.kind in (FLASH, BACKGROUND, MEDIA):
                    for hop in self.next_hops(node):
                        self.transmit(t, node, hop, pkt)
                else:
                    self.transmit(t, node, self.endpoint_of(node), pkt)
            else:
                self.deliver(t, node, src, pkt)

        captures = {}
        for addr in self.clients:
            recs = sorted(self.records[addr], key=lambda r: r.ts_us)
            captures[addr] = write_capture(recs, snaplen=cfg.snaplen)
        for addr in self.clients:
            self.truth.delivered_rate_bps[addr] = 8 * self.truth.delivered_bytes[addr] / cfg.duration
        return SimulationResult(cfg, captures, self.truth)


def simulate(config: SimConfig) -> SimulationResult:
    """Run one scenario; identical configs (seed included) give byte-identical captures."""
    config.validate()
    return _Simulation(config).run()


@dataclass
class SessionOutput:
    index: int
    group: int
    relay: str
    base_delay: float
    result: SimulationResult


def regional_lb_scenario(config: SimConfig, relay_groups, sessions: int = 20) -> list[SessionOutput]:
    """Sessions pinned to one of several relay groups with distinct path delays.

    ``relay_groups`` is a sequence of ``(relay_addrs, base_delay)`` pairs.  Each
    session picks a group uniformly at random (seeded by ``config.seed``) and
    one relay within it; the host-to-client path through that relay totals the
    group's base delay, split evenly across the two hops.
    """
    if config.topology != SHARED_RELAY:
        raise ConfigInvalid("regional load balancing is modelled for shared-relay sessions")
    groups = []
    for addrs, delay in relay_groups:
        addrs = [addrs] if isinstance(addrs, str) else list(addrs)
        if not addrs or delay < 0:
            raise ConfigInvalid("each relay group needs an address and a non-negative delay")
        groups.append((addrs, float(delay)))
    if not groups:
        raise ConfigInvalid("at least one relay group is required")
    rng = np.random.default_rng([config.seed, 0x1B])
    outputs = []
    for i in range(sessions):
        g = int(rng.integers(len(groups)))
        addrs, delay = groups[g]
        relay = addrs[int(rng.integers(len(addrs)))]
        delays = dict(config.path_delays)
        for c in config.clients:
            delays[(c.addr, relay)] = delay / 2
        session_cfg = config.with_(
            seed=int(np.random.SeedSequence([config.seed, i]).generate_state(1)[0]),
            relay_assignment=relay, path_delays=delays,
            start_time=config.start_time + i * (config.duration + 60),
        )
        outputs.append(SessionOutput(i, g, relay, delay, simulate(session_cfg)))
    return outputs
