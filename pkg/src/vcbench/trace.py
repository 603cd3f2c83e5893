"""Packet capture decoding into a normalized per-packet record model.

Only the classic (microsecond) capture format is read.  Timestamps are kept
as integer microseconds so that rebasing, sorting and round-tripping through
the simulator's writer are exact.
"""

from __future__ import annotations

import socket
import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

from .errors import ConfigInvalid, MalformedHeader, TruncatedRecord, UnsupportedLinkType

INBOUND = "inbound"
OUTBOUND = "outbound"
DIRECTIONS = (INBOUND, OUTBOUND)

UDP = "UDP"
TCP = "TCP"

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101

PCAP_MAGIC = 0xA1B2C3D4
PCAP_MAGIC_NSEC = 0xA1B23C4D
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_ACK = 0x10

_IP_PROTOCOLS = {17: UDP, 6: TCP}


@dataclass(frozen=True, slots=True)
class PacketRecord:
    ts_us: int
    direction: str
    src_addr: str
    dst_addr: str
    src_port: int
    dst_port: int
    transport: str
    payload_len: int
    wire_len: int
    tcp_flags: Optional[int] = None
    tcp_seq: Optional[int] = None
    tcp_ack: Optional[int] = None

    @property
    def timestamp(self) -> float:
        return self.ts_us / 1e6

    @property
    def outbound(self) -> bool:
        return self.direction == OUTBOUND

    @property
    def remote_addr(self) -> str:
        return self.dst_addr if self.direction == OUTBOUND else self.src_addr

    @property
    def remote_port(self) -> int:
        return self.dst_port if self.direction == OUTBOUND else self.src_port

    @property
    def local_port(self) -> int:
        return self.src_port if self.direction == OUTBOUND else self.dst_port


@dataclass(frozen=True)
class Trace:
    local_addr: str
    records: tuple[PacketRecord, ...]
    capture_start_us: int = 0
    link_type: int = LINKTYPE_ETHERNET
    skipped: int = 0

    @property
    def capture_start(self) -> float:
        return self.capture_start_us / 1e6

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass(frozen=True)
class SessionMeta:
    session_id: str
    platform_hint: str = "unknown"
    role: str = "participant"
    participant_count: int = 1
    clock_offset: float = 0.0

    PLATFORMS = ("zoom", "webex", "meet", "unknown")
    ROLES = ("host", "participant")

    def __post_init__(self):
        if self.platform_hint not in self.PLATFORMS:
            raise ConfigInvalid(f"unknown platform hint {self.platform_hint!r}")
        if self.role not in self.ROLES:
            raise ConfigInvalid(f"unknown role {self.role!r}")
        if self.participant_count < 1:
            raise ConfigInvalid("participant_count must be >= 1")
        if self.clock_offset != self.clock_offset or abs(self.clock_offset) == float("inf"):
            raise ConfigInvalid("clock_offset must be finite")


def _read_global_header(data: bytes) -> tuple[str, int]:
    if len(data) < GLOBAL_HEADER_LEN:
        raise MalformedHeader(f"capture too short for global header ({len(data)} bytes)")
    for endian in ("<", ">"):
        (magic,) = struct.unpack_from(endian + "I", data, 0)
        if magic == PCAP_MAGIC:
            break
        if magic == PCAP_MAGIC_NSEC:
            raise UnsupportedLinkType("nanosecond-resolution captures are not supported")
    else:
        raise MalformedHeader(f"bad magic {data[:4].hex()}")
    major, _minor, _zone, _sigfigs, _snaplen, network = struct.unpack_from(endian + "HHiIII", data, 4)
    if major != 2:
        raise MalformedHeader(f"unsupported capture version {major}")
    if network not in (LINKTYPE_ETHERNET, LINKTYPE_RAW):
        raise UnsupportedLinkType(f"link type {network}")
    return endian, network


def _decode_ipv4(frame: bytes, off: int, ts_us: int, wire_len: int):
    """Return a direction-less record tuple, or None if the packet is skipped."""
    if len(frame) - off < 20 or frame[off] >> 4 != 4:
        return None
    ihl = (frame[off] & 0x0F) * 4
    total_len, frag = struct.unpack_from("!H2xH", frame, off + 2)
    proto = frame[off + 9]
    if ihl < 20 or frag & 0x1FFF or proto not in _IP_PROTOCOLS:
        return None
    src = socket.inet_ntoa(frame[off + 12:off + 16])
    dst = socket.inet_ntoa(frame[off + 16:off + 20])
    t = off + ihl
    # payload length comes from header fields; bytes past the snap length may be absent
    if proto == 17:
        if len(frame) - t < 8:
            return None
        sport, dport = struct.unpack_from("!HH", frame, t)
        payload = total_len - ihl - 8
        flags = seq = ack = None
    else:
        if len(frame) - t < 14:
            return None
        sport, dport, seq, ack = struct.unpack_from("!HHII", frame, t)
        doff = (frame[t + 12] >> 4) * 4
        flags = frame[t + 13]
        payload = total_len - ihl - doff
    if payload < 0 or payload > wire_len:
        return None
    return (ts_us, src, dst, sport, dport, _IP_PROTOCOLS[proto], payload, wire_len, flags, seq, ack)


def _infer_local_addr(rows) -> str:
    counts = Counter()
    for row in rows:
        counts[row[1]] += 1
        counts[row[2]] += 1
    if not counts:
        return "0.0.0.0"
    best = max(counts.values())
    return min((a for a, c in counts.items() if c == best), key=lambda a: socket.inet_aton(a))


def parse_capture(data: bytes, local_addr: Optional[str] = None) -> Trace:
    """Decode a classic capture file into a :class:`Trace`.

    Non-IPv4, non-UDP/TCP, non-first fragments and packets too short to hold
    their transport header are skipped and counted in ``Trace.skipped``.
    When ``local_addr`` is omitted the address present in the most packets
    is taken as the monitored client.
    """
    data = bytes(data)
    endian, network = _read_global_header(data)
    rec_fmt = endian + "IIII"
    pos = GLOBAL_HEADER_LEN
    end = len(data)
    rows = []
    skipped = 0
    first_ts = None
    while pos < end:
        if end - pos < RECORD_HEADER_LEN:
            raise TruncatedRecord(f"record header at offset {pos} is truncated")
        ts_sec, ts_usec, incl_len, orig_len = struct.unpack_from(rec_fmt, data, pos)
        pos += RECORD_HEADER_LEN
        if incl_len > end - pos:
            raise TruncatedRecord(
                f"record at offset {pos - RECORD_HEADER_LEN} claims {incl_len} bytes, {end - pos} remain"
            )
        frame = data[pos:pos + incl_len]
        pos += incl_len
        ts_us = ts_sec * 1_000_000 + ts_usec
        if first_ts is None:
            first_ts = ts_us
        if network == LINKTYPE_ETHERNET:
            if len(frame) < 14 or frame[12:14] != b"\x08\x00":
                skipped += 1
                continue
            row = _decode_ipv4(frame, 14, ts_us, orig_len)
        else:
            row = _decode_ipv4(frame, 0, ts_us, orig_len)
        if row is None:
            skipped += 1
            continue
        rows.append(row)

    rows.sort(key=lambda r: r[0])  # stable: ties keep file order
    if local_addr is None:
        local_addr = _infer_local_addr(rows)
    records = tuple(
        PacketRecord(r[0], OUTBOUND if r[1] == local_addr else INBOUND, *r[1:]) for r in rows
    )
    start = records[0].ts_us if records else (first_ts or 0)
    return Trace(local_addr, records, start, network, skipped)


def rebase_clock(trace: Trace, offset: float) -> Trace:
    """Shift every timestamp by ``offset`` seconds (rounded to the microsecond)."""
    if offset != offset or abs(offset) == float("inf"):
        raise ValueError("offset must be finite")
    shift = round(offset * 1_000_000)
    if shift == 0:
        return trace
    records = tuple(replace(r, ts_us=r.ts_us + shift) for r in trace.records)
    return replace(trace, records=records, capture_start_us=trace.capture_start_us + shift)


@dataclass(frozen=True)
class FlowPattern:
    """Match records by their remote endpoint, transport and direction.

    Unset fields match anything.  Patterns combine with ``&``.
    """

    addr: Optional[str] = None
    port: Optional[int] = None
    transport: Optional[str] = None
    direction: Optional[str] = None

    def __call__(self, rec: PacketRecord) -> bool:
        if self.direction is not None and rec.direction != self.direction:
            return False
        if self.transport is not None and rec.transport != self.transport:
            return False
        if self.addr is not None and rec.remote_addr != self.addr:
            return False
        if self.port is not None and rec.remote_port != self.port:
            return False
        return True

    def __and__(self, other):
        return AllOf((self, other))


@dataclass(frozen=True)
class AllOf:
    predicates: tuple = field(default_factory=tuple)

    def __call__(self, rec: PacketRecord) -> bool:
        return all(p(rec) for p in self.predicates)

    def __and__(self, other):
        return AllOf(self.predicates + (other,))


def filter_flow(trace: Trace, pattern: Callable[[PacketRecord], bool]) -> Trace:
    return replace(trace, records=tuple(r for r in trace.records if pattern(r)))


def records_in(trace: Trace, direction: Optional[str] = None) -> Iterable[PacketRecord]:
    if direction is None:
        return trace.records
    return (r for r in trace.records if r.direction == direction)
