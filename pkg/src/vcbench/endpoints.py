"""Media endpoint discovery, relay topology inference, churn and RTT statistics."""

from __future__ import annotations

import socket
import statistics
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from .errors import AmbiguousTopology, NoProbes
from .trace import INBOUND, OUTBOUND, TCP, TCP_ACK, TCP_SYN, UDP, SessionMeta, Trace

PLATFORM_PORTS = {
    (UDP, 8801): "zoom-media",
    (UDP, 9000): "webex-media",
    (UDP, 19305): "meet-media",
}
P2P_EPHEMERAL = "p2p-ephemeral"
UNKNOWN = "unknown"
PLATFORM_CLASSES = ("zoom-media", "webex-media", "meet-media", P2P_EPHEMERAL, UNKNOWN)
EPHEMERAL_PORTS = range(49152, 65536)

SHARED_RELAY = "shared-relay"
PER_CLIENT_RELAY = "per-client-relay"
PEER_TO_PEER = "peer-to-peer"
TOPOLOGY_KINDS = (SHARED_RELAY, PER_CLIENT_RELAY, PEER_TO_PEER)


def addr_key(addr: str) -> bytes:
    return socket.inet_aton(addr)


@dataclass(frozen=True)
class EndpointObservation:
    addr: str
    port: int
    transport: str
    packet_count: int
    byte_count: int
    first_seen: float
    last_seen: float
    platform_class: str = UNKNOWN

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.addr, self.port, self.transport)

    def to_dict(self) -> dict:
        return {
            "addr": self.addr, "port": self.port, "transport": self.transport,
            "packet_count": self.packet_count, "byte_count": self.byte_count,
            "first_seen": self.first_seen, "last_seen": self.last_seen,
            "platform_class": self.platform_class,
        }


def classify_port(transport: str, port: int, addr: Optional[str] = None, peers: Iterable[str] = ()) -> str:
    cls = PLATFORM_PORTS.get((transport, port))
    if cls:
        return cls
    if addr is not None and addr in set(peers) and port in EPHEMERAL_PORTS:
        return P2P_EPHEMERAL
    return UNKNOWN


def _dominance(obs: EndpointObservation):
    # largest byte count, then packet count, then lowest address
    return (-obs.byte_count, -obs.packet_count, addr_key(obs.addr), obs.port, obs.transport)


def discover_endpoints(trace: Trace, min_packets: int = 50, peers: Iterable[str] = ()) -> list[EndpointObservation]:
    """Group records by remote (addr, port, transport) and keep the busy groups.

    Byte counts are Layer-7 payload bytes in both directions.  ``peers`` lists
    addresses of other session clients; ephemeral-port flows to them are
    labelled ``p2p-ephemeral``.  Results are ordered most-dominant first.
    """
    peers = set(peers)
    groups: dict = defaultdict(lambda: [0, 0, None, None])
    for rec in trace.records:
        g = groups[(rec.remote_addr, rec.remote_port, rec.transport)]
        g[0] += 1
        g[1] += rec.payload_len
        if g[2] is None:
            g[2] = rec.ts_us
        g[3] = rec.ts_us
    out = [
        EndpointObservation(addr, port, transport, n, nbytes, first / 1e6, last / 1e6,
                            classify_port(transport, port, addr, peers))
        for (addr, port, transport), (n, nbytes, first, last) in groups.items()
        if n >= min_packets
    ]
    out.sort(key=_dominance)
    return out


def dominant_endpoint(trace: Trace) -> EndpointObservation:
    found = discover_endpoints(trace, min_packets=1)
    if not found:
        raise AmbiguousTopology(f"trace for {trace.local_addr} has no flows")
    return found[0]


@dataclass(frozen=True)
class TopologyModel:
    kind: str
    endpoint_map: dict

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint_map": {c: {"addr": e[0], "port": e[1], "transport": e[2]} for c, e in self.endpoint_map.items()},
        }


def classify_topology(sessions: Sequence[tuple[Optional[SessionMeta], Trace]], roster: Sequence[str]) -> TopologyModel:
    """Infer the relay architecture from every client's dominant media flow."""
    if len(sessions) < 2:
        raise ValueError("topology needs at least two client traces")
    roster_set = set(roster)
    endpoint_map = {}
    for _meta, trace in sessions:
        endpoint_map[trace.local_addr] = dominant_endpoint(trace).key

    remotes = {client: ep[0] for client, ep in endpoint_map.items()}
    if all(r in roster_set and r != client for client, r in remotes.items()):
        return TopologyModel(PEER_TO_PEER, endpoint_map)
    if any(r in roster_set for r in remotes.values()):
        raise AmbiguousTopology("some clients stream peer-to-peer while others use a relay")
    if len(set(endpoint_map.values())) == 1:
        return TopologyModel(SHARED_RELAY, endpoint_map)
    return TopologyModel(PER_CLIENT_RELAY, endpoint_map)


@dataclass(frozen=True)
class ChurnStats:
    distinct_total: int
    new_per_session: tuple[int, ...]

    @property
    def mean_new_per_session(self) -> float:
        return self.distinct_total / len(self.new_per_session) if self.new_per_session else 0.0


def endpoint_churn(sessions: Sequence[Iterable]) -> ChurnStats:
    """Count distinct endpoint addresses a client meets across sessions.

    ``sessions`` holds one iterable per session, in chronological order, of
    address strings or :class:`EndpointObservation` values.
    """
    seen = set()
    new_counts = []
    for endpoints in sessions:
        addrs = {e.addr if isinstance(e, EndpointObservation) else str(e) for e in endpoints}
        fresh = addrs - seen
        new_counts.append(len(fresh))
        seen |= fresh
    return ChurnStats(len(seen), tuple(new_counts))


@dataclass(frozen=True)
class RttStats:
    endpoint: tuple
    samples: tuple[float, ...]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.samples)


def estimate_rtt(trace: Trace, endpoint: Union[str, tuple, EndpointObservation]) -> RttStats:
    """Extract SYN -> SYN-ACK round trips towards one endpoint.

    ``endpoint`` is an address, an ``(addr, port)`` pair, or an observation
    (its port is only used when the observation is a TCP flow).  A SYN-ACK
    matches the outstanding SYN whose sequence number it acknowledges on the
    same client port; a retransmitted SYN restarts the clock.
    """
    if isinstance(endpoint, EndpointObservation):
        addr, port = endpoint.addr, (endpoint.port if endpoint.transport == TCP else None)
    elif isinstance(endpoint, tuple):
        addr, port = endpoint[0], endpoint[1]
    else:
        addr, port = endpoint, None

    pending = {}
    samples = []
    for rec in trace.records:
        if rec.transport != TCP or rec.tcp_flags is None or rec.remote_addr != addr:
            continue
        if port is not None and rec.remote_port != port:
            continue
        syn = rec.tcp_flags & TCP_SYN
        ack = rec.tcp_flags & TCP_ACK
        if rec.direction == OUTBOUND and syn and not ack:
            pending[(rec.src_port, rec.dst_port, (rec.tcp_seq + 1) & 0xFFFFFFFF)] = rec.ts_us
        elif rec.direction == INBOUND and syn and ack:
            sent = pending.pop((rec.dst_port, rec.src_port, rec.tcp_ack), None)
            if sent is not None:
                samples.append((rec.ts_us - sent) / 1e6)
    if not samples:
        raise NoProbes(f"no SYN/SYN-ACK pairs towards {addr}")
    return RttStats((addr, port), tuple(samples))
