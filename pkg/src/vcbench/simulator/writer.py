"""Classic capture-file writer used by the simulator.

Frames are synthesized from packet records: Ethernet + IPv4 + UDP/TCP headers
followed by zero-filled payload, truncated to ``snaplen``.  The original
length field carries the full on-wire size so payload lengths survive
truncation.
"""

from __future__ import annotations

import socket
import struct
from typing import Iterable

from ..trace import LINKTYPE_ETHERNET, LINKTYPE_RAW, PCAP_MAGIC, TCP, PacketRecord

ETH_HEADER_LEN = 14
IP_HEADER_LEN = 20
UDP_HEADER_LEN = 8
TCP_HEADER_LEN = 20
DEFAULT_SNAPLEN = 128

_SRC_MAC = bytes.fromhex("020000000001")
_DST_MAC = bytes.fromhex("020000000002")


def wire_length(transport: str, payload_len: int, link_type: int = LINKTYPE_ETHERNET) -> int:
    l4 = TCP_HEADER_LEN if transport == TCP else UDP_HEADER_LEN
    l2 = ETH_HEADER_LEN if link_type == LINKTYPE_ETHERNET else 0
    return l2 + IP_HEADER_LEN + l4 + payload_len


def _checksum(header: bytes) -> int:
    total = sum(struct.unpack("!10H", header))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _ip_header(rec: PacketRecord, l4_len: int) -> bytes:
    proto = 6 if rec.transport == TCP else 17
    hdr = struct.pack(
        "!BBHHHBBH4s4s",
        0x45, 0, IP_HEADER_LEN + l4_len + rec.payload_len, 0, 0x4000, 64, proto, 0,
        socket.inet_aton(rec.src_addr), socket.inet_aton(rec.dst_addr),
    )
    return hdr[:10] + struct.pack("!H", _checksum(hdr)) + hdr[12:]


def encode_frame(rec: PacketRecord, link_type: int = LINKTYPE_ETHERNET, snaplen: int = DEFAULT_SNAPLEN) -> bytes:
    if rec.transport == TCP:
        l4 = struct.pack(
            "!HHIIBBHHH", rec.src_port, rec.dst_port, rec.tcp_seq or 0, rec.tcp_ack or 0,
            (TCP_HEADER_LEN // 4) << 4, rec.tcp_flags or 0, 65535, 0, 0,
        )
    else:
        l4 = struct.pack("!HHHH", rec.src_port, rec.dst_port, UDP_HEADER_LEN + rec.payload_len, 0)
    frame = _ip_header(rec, len(l4)) + l4
    if link_type == LINKTYPE_ETHERNET:
        frame = _DST_MAC + _SRC_MAC + b"\x08\x00" + frame
    room = snaplen - len(frame)
    if room > 0:
        frame += bytes(min(room, rec.payload_len))
    return frame[:snaplen]


def write_capture(records: Iterable[PacketRecord], link_type: int = LINKTYPE_ETHERNET,
                  snaplen: int = DEFAULT_SNAPLEN) -> bytes:
    """Serialize records into a little-endian classic capture file."""
    if link_type not in (LINKTYPE_ETHERNET, LINKTYPE_RAW):
        raise ValueError(f"unsupported link type {link_type}")
    parts = [struct.pack("<IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, snaplen, link_type)]
    cache = {}
    for rec in records:
        key = (rec.src_addr, rec.dst_addr, rec.src_port, rec.dst_port, rec.transport, rec.payload_len,
               rec.tcp_flags, rec.tcp_seq, rec.tcp_ack)
        frame = cache.get(key)
        if frame is None:
            frame = cache[key] = encode_frame(rec, link_type, snaplen)
        sec, usec = divmod(rec.ts_us, 1_000_000)
        parts.append(struct.pack("<IIII", sec, usec, len(frame), rec.wire_len))
        parts.append(frame)
    return b"".join(parts)
