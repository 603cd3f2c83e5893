import socket
import sys
import struct

import numpy as np
import pytest


def ipv4(src, dst, proto, l4, payload_len, frag=0x4000, version=4):
    total = 20 + len(l4) + payload_len
    return struct.pack("!BBHHHBBH4s4s", (version << 4) | 5, 0, total, 1, frag, 64, proto, 0,
                       socket.inet_aton(src), socket.inet_aton(dst)) + l4


def udp_packet(src, dst, sport, dport, payload_len, **kw):
    l4 = struct.pack("!HHHH", sport, dport, 8 + payload_len, 0)
    return ipv4(src, dst, 17, l4, payload_len, **kw) + bytes(payload_len)


def tcp_packet(src, dst, sport, dport, payload_len=0, flags=0x10, seq=0, ack=0):
    l4 = struct.pack("!HHIIBBHHH", sport, dport, seq, ack, 5 << 4, flags, 1024, 0, 0)
    return ipv4(src, dst, 6, l4, payload_len) + bytes(payload_len)


def ether(payload, ethertype=0x0800):
    return b"\xaa" * 6 + b"\xbb" * 6 + struct.pack("!H", ethertype) + payload


def arp_frame():
    body = struct.pack("!HHBBH6s4s6s4s", 1, 0x0800, 6, 4, 1, b"\x01" * 6, socket.inet_aton("10.0.0.1"),
                       b"\x00" * 6, socket.inet_aton("10.0.0.2"))
    return ether(body, 0x0806)


def pcap_bytes(frames, linktype=1, endian="<", magic=0xA1B2C3D4, snaplen=65535):
    """frames: iterable of (ts_seconds_float_or_tuple, frame_bytes[, orig_len])."""
    out = [struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, snaplen, linktype)]
    for item in frames:
        ts, frame = item[0], item[1]
        orig = item[2] if len(item) > 2 else len(frame)
        if isinstance(ts, tuple):
            sec, usec = ts
        else:
            sec, usec = divmod(round(ts * 1_000_000), 1_000_000)
        out.append(struct.pack(endian + "IIII", sec, usec, len(frame), orig))
        out.append(frame)
    return b"".join(out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def speech_like(n, rng, level=0.3):
    """Noise under a random syllable-like on/off envelope."""
    env = np.zeros(n)
    pos = 0
    while pos < n:
        length = int(rng.uniform(0.08, 0.3) * 48000)
        gap = int(rng.uniform(0.03, 0.25) * 48000)
        seg = min(length, n - pos)
        env[pos:pos + seg] = rng.uniform(0.3, 1.0) * np.hanning(length)[:seg]
        pos += length + gap
    return env * rng.standard_normal(n) * level


def textured(rng, h, w, smooth=1.5, mean=128.0, contrast=40.0):
    from scipy import ndimage

    t = ndimage.gaussian_filter(rng.standard_normal((h, w)), smooth)
    t = mean + contrast * t / t.std()
    return np.clip(np.rint(t), 0, 255).astype(np.uint8)


def make_trace(rows, local="10.0.0.1", remote="1.2.3.4", port=8801, transport="UDP"):
    """Build a Trace from ``(t_seconds, direction, payload_len)`` rows (optionally with remote addr, port)."""
    from vcbench.trace import OUTBOUND, PacketRecord, Trace

    recs = []
    for row in rows:
        t, direction, size = row[:3]
        raddr = row[3] if len(row) > 3 else remote
        rport = row[4] if len(row) > 4 else port
        out = direction == OUTBOUND
        recs.append(PacketRecord(
            round(t * 1_000_000), direction,
            local if out else raddr, raddr if out else local,
            50000 if out else rport, rport if out else 50000,
            transport, size, size + 42,
        ))
    recs.sort(key=lambda r: r.ts_us)
    start = recs[0].ts_us if recs else 0
    return Trace(local, tuple(recs), start, 1, 0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
