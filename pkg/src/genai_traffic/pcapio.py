"""Capture file I/O: classic pcap (read/write) and pcapng (read-only).

Frames are decoded down to the transport layer. Only the transport payload
bytes are retained, together with the 5-tuple and timestamps.
"""

from __future__ import annotations

import enum
import ipaddress
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Union

IPAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]

PCAP_MAGIC_US = 0xA1B2C3D4
PCAP_MAGIC_NS = 0xA1B23C4D
PCAPNG_SHB = 0x0A0D0D0A

LINKTYPE_NULL = 0
LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
LINKTYPE_LOOP = 108
LINKTYPE_LINUX_SLL = 113
LINKTYPE_IPV4 = 228
LINKTYPE_IPV6 = 229
LINKTYPE_LINUX_SLL2 = 276

_ETH_IPV4 = 0x0800
_ETH_IPV6 = 0x86DD
_ETH_VLAN = (0x8100, 0x88A8, 0x9100)

_IPV6_EXT_HEADERS = (0, 43, 60)
_IPV6_FRAGMENT = 44
_IPV6_AH = 51


class IpProto(enum.IntEnum):
    OTHER = 0
    TCP = 6
    UDP = 17


class CaptureError(Exception):
    """The capture file cannot be read at all."""


class UnrecognizedFormatError(CaptureError):
    pass


class NoDecodablePacketsError(CaptureError):
    """The file parsed but held no TCP or UDP packet."""


@dataclass(frozen=True, slots=True)
class PacketRecord:
    ts_us: int
    src_addr: IPAddress
    dst_addr: IPAddress
    ip_proto: IpProto
    src_port: int
    dst_port: int
    payload_len: int
    payload: bytes
    wire_len: int
    truncated: bool = False

    def __post_init__(self):
        if self.payload_len < 0 or self.payload_len > self.wire_len:
            raise ValueError(
                f"payload_len {self.payload_len} outside [0, wire_len={self.wire_len}]"
            )
        has_ports = self.ip_proto in (IpProto.TCP, IpProto.UDP)
        if not has_ports and (self.src_port or self.dst_port):
            raise ValueError("ports must be 0 for non TCP/UDP packets")
        if not self.truncated and len(self.payload) != self.payload_len:
            raise ValueError("payload bytes do not match payload_len on a non-truncated record")
        if self.truncated and len(self.payload) > self.payload_len:
            raise ValueError("truncated payload longer than payload_len")

    @property
    def src(self) -> tuple[IPAddress, int]:
        return (self.src_addr, self.src_port)

    @property
    def dst(self) -> tuple[IPAddress, int]:
        return (self.dst_addr, self.dst_port)


@dataclass(frozen=True)
class CaptureTrace:
    packets: tuple[PacketRecord, ...]
    source_path: str = ""
    total_frames: int = 0
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def t0_us(self) -> int:
        return self.packets[0].ts_us if self.packets else 0

    @property
    def duration_us(self) -> int:
        if not self.packets:
            return 0
        ts = [p.ts_us for p in self.packets]
        return max(0, max(ts) - min(ts))

    @property
    def n_skipped(self) -> int:
        return sum(self.skipped.values())

    @property
    def n_truncated(self) -> int:
        return sum(1 for p in self.packets if p.truncated)

    def __len__(self) -> int:
        return len(self.packets)


class _Skip(Exception):
    def __init__(self, reason: str):
        self.reason = reason


# ---------------------------------------------------------------- decoding


def _decode_l2(linktype: int, frame: bytes) -> tuple[int, int]:
    """Return (ethertype-like network protocol, offset of the network header)."""
    if linktype == LINKTYPE_ETHERNET:
        if len(frame) < 14:
            raise _Skip("truncated_link")
        ethertype = struct.unpack_from("!H", frame, 12)[0]
        off = 14
        while ethertype in _ETH_VLAN:
            if len(frame) < off + 4:
                raise _Skip("truncated_link")
            ethertype = struct.unpack_from("!H", frame, off + 2)[0]
            off += 4
        return ethertype, off
    if linktype in (LINKTYPE_RAW, LINKTYPE_IPV4, LINKTYPE_IPV6):
        if not frame:
            raise _Skip("truncated_link")
        version = frame[0] >> 4
        if version == 4:
            return _ETH_IPV4, 0
        if version == 6:
            return _ETH_IPV6, 0
        raise _Skip("non_ip")
    if linktype == LINKTYPE_LINUX_SLL:
        if len(frame) < 16:
            raise _Skip("truncated_link")
        return struct.unpack_from("!H", frame, 14)[0], 16
    if linktype == LINKTYPE_LINUX_SLL2:
        if len(frame) < 20:
            raise _Skip("truncated_link")
        return struct.unpack_from("!H", frame, 0)[0], 20
    if linktype in (LINKTYPE_NULL, LINKTYPE_LOOP):
        if len(frame) < 4:
            raise _Skip("truncated_link")
        family = struct.unpack_from("<I", frame, 0)[0]
        if family > 0xFFFF:
            family = struct.unpack_from("!I", frame, 0)[0]
        if family == 2:
            return _ETH_IPV4, 4
        if family in (10, 24, 28, 30):
            return _ETH_IPV6, 4
        raise _Skip("non_ip")
    raise _Skip("unsupported_linktype")


def _decode_frame(linktype: int, ts_us: int, frame: bytes, wire_len: int) -> PacketRecord:
    ethertype, off = _decode_l2(linktype, frame)
    # bytes missing from the end of the frame because of snaplen
    missing = max(0, wire_len - len(frame))

    if ethertype == _ETH_IPV4:
        if len(frame) < off + 20:
            raise _Skip("truncated_ip")
        vihl = frame[off]
        if vihl >> 4 != 4:
            raise _Skip("malformed_ip")
        ihl = (vihl & 0x0F) * 4
        total_len, frag = struct.unpack_from("!H2xH", frame, off + 2)
        proto = frame[off + 9]
        if total_len == 0:
            # segmentation offload leaves the length field unset
            total_len = len(frame) - off + missing
        if ihl < 20 or total_len < ihl:
            raise _Skip("malformed_ip")
        if frag & 0x1FFF:
            raise _Skip("ip_fragment")
        src = ipaddress.IPv4Address(frame[off + 12:off + 16])
        dst = ipaddress.IPv4Address(frame[off + 16:off + 20])
        l4 = off + ihl
        l4_len = total_len - ihl
    elif ethertype == _ETH_IPV6:
        if len(frame) < off + 40:
            raise _Skip("truncated_ip")
        if frame[off] >> 4 != 6:
            raise _Skip("malformed_ip")
        plen = struct.unpack_from("!H", frame, off + 4)[0]
        proto = frame[off + 6]
        src = ipaddress.IPv6Address(frame[off + 8:off + 24])
        dst = ipaddress.IPv6Address(frame[off + 24:off + 40])
        l4 = off + 40
        l4_len = plen
        while proto in _IPV6_EXT_HEADERS or proto in (_IPV6_FRAGMENT, _IPV6_AH):
            if len(frame) < l4 + 8:
                raise _Skip("truncated_ip")
            nxt = frame[l4]
            if proto == _IPV6_FRAGMENT:
                if struct.unpack_from("!H", frame, l4 + 2)[0] & 0xFFF8:
                    raise _Skip("ip_fragment")
                hlen = 8
            elif proto == _IPV6_AH:
                hlen = (frame[l4 + 1] + 2) * 4
            else:
                hlen = (frame[l4 + 1] + 1) * 8
            proto = nxt
            l4 += hlen
            l4_len -= hlen
        if l4_len < 0:
            raise _Skip("malformed_ip")
    else:
        raise _Skip("non_ip")

    if proto == IpProto.TCP:
        if len(frame) < l4 + 20:
            raise _Skip("truncated_transport")
        sport, dport = struct.unpack_from("!HH", frame, l4)
        thl = (frame[l4 + 12] >> 4) * 4
        if thl < 20 or thl > l4_len:
            raise _Skip("malformed_transport")
        if len(frame) < l4 + thl:
            raise _Skip("truncated_transport")
        payload_len = l4_len - thl
        start = l4 + thl
        ip_proto = IpProto.TCP
    elif proto == IpProto.UDP:
        if len(frame) < l4 + 8:
            raise _Skip("truncated_transport")
        sport, dport, ulen = struct.unpack_from("!HHH", frame, l4)
        if l4_len < 8:
            raise _Skip("malformed_transport")
        # UDP length may be 0 for IPv6 jumbograms; trust the IP layer then
        payload_len = (min(ulen, l4_len) if ulen >= 8 else l4_len) - 8
        start = l4 + 8
        ip_proto = IpProto.UDP
    else:
        return PacketRecord(ts_us, src, dst, IpProto.OTHER, 0, 0, 0, b"", wire_len)

    payload = bytes(frame[start:start + payload_len])
    truncated = len(payload) < payload_len
    if truncated and not missing:
        # frame ends before the IP length says; malformed rather than snaplen-cut
        raise _Skip("malformed_transport")
    return PacketRecord(
        ts_us, src, dst, ip_proto, sport, dport, payload_len, payload,
        max(wire_len, len(frame)), truncated,
    )


# ---------------------------------------------------------------- readers


def _iter_classic(data: bytes) -> Iterator[tuple[int, int, bytes, int]]:
    magic_le = struct.unpack_from("<I", data, 0)[0]
    if magic_le in (PCAP_MAGIC_US, PCAP_MAGIC_NS):
        endian = "<"
    else:
        endian = ">"
    magic = struct.unpack_from(endian + "I", data, 0)[0]
    nanos = magic == PCAP_MAGIC_NS
    if len(data) < 24:
        raise CaptureError("truncated pcap global header")
    linktype = struct.unpack_from(endian + "I", data, 20)[0] & 0x0FFFFFFF
    rec = struct.Struct(endian + "IIII")
    off = 24
    while off + 16 <= len(data):
        sec, frac, incl, orig = rec.unpack_from(data, off)
        off += 16
        frame = data[off:off + incl]
        off += incl
        ts_us = sec * 1_000_000 + (frac // 1000 if nanos else frac)
        yield linktype, ts_us, frame, orig


def _iter_pcapng(data: bytes) -> Iterator[tuple[int, int, bytes, int]]:
    off = 0
    endian = "<"
    interfaces: list[tuple[int, int]] = []  # (linktype, ticks per second)
    while off + 12 <= len(data):
        btype = struct.unpack_from(endian + "I", data, off)[0]
        if btype == PCAPNG_SHB:
            bom = data[off + 8:off + 12]
            endian = "<" if bom == b"\x4d\x3c\x2b\x1a" else ">"
            interfaces = []
        blen = struct.unpack_from(endian + "I", data, off + 4)[0]
        if blen < 12 or off + blen > len(data):
            break
        body = data[off + 8:off + blen - 4]
        if btype == 1:  # interface description
            linktype = struct.unpack_from(endian + "H", body, 0)[0]
            interfaces.append((linktype, _pcapng_tsresol(body[8:], endian)))
        elif btype == 6 and len(body) >= 20:  # enhanced packet
            iface, ts_hi, ts_lo, incl, orig = struct.unpack_from(endian + "IIIII", body, 0)
            if iface < len(interfaces):
                linktype, tps = interfaces[iface]
                ticks = (ts_hi << 32) | ts_lo
                yield linktype, ticks * 1_000_000 // tps, body[20:20 + incl], orig
        elif btype == 3 and interfaces and len(body) >= 4:  # simple packet
            orig = struct.unpack_from(endian + "I", body, 0)[0]
            yield interfaces[0][0], 0, body[4:4 + orig], orig
        elif btype == 2 and len(body) >= 20:  # obsolete packet block
            iface, _, ts_hi, ts_lo, incl, orig = struct.unpack_from(endian + "HHIIII", body, 0)
            if iface < len(interfaces):
                linktype, tps = interfaces[iface]
                ticks = (ts_hi << 32) | ts_lo
                yield linktype, ticks * 1_000_000 // tps, body[20:20 + incl], orig
        off += blen


def _pcapng_tsresol(options: bytes, endian: str) -> int:
    off = 0
    while off + 4 <= len(options):
        code, length = struct.unpack_from(endian + "HH", options, off)
        if code == 0:
            break
        if code == 9 and length >= 1:
            v = options[off + 4]
            return 2 ** (v & 0x7F) if v & 0x80 else 10 ** v
        off += 4 + ((length + 3) & ~3)
    return 1_000_000


def read_capture(path: str | Path) -> CaptureTrace:
    """Read a pcap/pcapng file into a :class:`CaptureTrace`.

    Frames that cannot be decoded to IPv4/IPv6 are skipped and tallied in
    ``trace.skipped`` by reason. Raises :class:`NoDecodablePacketsError`
    when no TCP or UDP packet survives decoding.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CaptureError(f"cannot read {path}: {exc}") from exc
    if len(data) < 4:
        raise UnrecognizedFormatError(f"{path}: file too short for a capture header")
    magic_le = struct.unpack_from("<I", data, 0)[0]
    magic_be = struct.unpack_from(">I", data, 0)[0]
    if magic_le in (PCAP_MAGIC_US, PCAP_MAGIC_NS) or magic_be in (PCAP_MAGIC_US, PCAP_MAGIC_NS):
        frames = _iter_classic(data)
    elif magic_le == PCAPNG_SHB:
        frames = _iter_pcapng(data)
    else:
        raise UnrecognizedFormatError(f"{path}: unrecognized magic 0x{magic_be:08x}")

    packets = []
    skipped: Counter[str] = Counter()
    total = 0
    for linktype, ts_us, frame, orig in frames:
        total += 1
        try:
            packets.append(_decode_frame(linktype, ts_us, frame, orig))
        except _Skip as skip:
            skipped[skip.reason] += 1
    if not any(p.ip_proto != IpProto.OTHER for p in packets):
        raise NoDecodablePacketsError(f"{path}: zero decodable TCP/UDP packets in {total} frames")
    return CaptureTrace(tuple(packets), str(path), total, dict(skipped))


# ---------------------------------------------------------------- writer

_ETH_SRC = bytes.fromhex("020000000001")
_ETH_DST = bytes.fromhex("020000000002")


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\0"
    s = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF


def synthesized_frame_len(rec: PacketRecord) -> int:
    """On-wire length of the frame :func:`write_capture` builds for ``rec``."""
    ip_hdr = 20 if rec.src_addr.version == 4 else 40
    l4_hdr = 20 if rec.ip_proto == IpProto.TCP else 8
    return 14 + ip_hdr + l4_hdr + rec.payload_len


def _build_frame(rec: PacketRecord, seq: int) -> bytes:
    if rec.ip_proto == IpProto.TCP:
        l4 = struct.pack("!HHIIBBHHH", rec.src_port, rec.dst_port, seq & 0xFFFFFFFF, 0,
                         5 << 4, 0x18, 65535, 0, 0)
    elif rec.ip_proto == IpProto.UDP:
        l4 = struct.pack("!HHHH", rec.src_port, rec.dst_port, (8 + rec.payload_len) & 0xFFFF, 0)
    else:
        raise ValueError("write_capture only supports TCP and UDP records")
    l4_len = len(l4) + rec.payload_len
    if rec.src_addr.version == 4:
        ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + l4_len, 0, 0x4000, 64, int(rec.ip_proto),
                         0, rec.src_addr.packed, rec.dst_addr.packed)
        ip = ip[:10] + struct.pack("!H", _checksum(ip)) + ip[12:]
        ethertype = _ETH_IPV4
    else:
        ip = struct.pack("!IHBB16s16s", 6 << 28, l4_len, int(rec.ip_proto), 64,
                         rec.src_addr.packed, rec.dst_addr.packed)
        ethertype = _ETH_IPV6
    return _ETH_DST + _ETH_SRC + struct.pack("!H", ethertype) + ip + l4 + rec.payload


def write_capture(trace: CaptureTrace | Iterable[PacketRecord], path: str | Path) -> None:
    """Write records as an Ethernet classic pcap (microsecond timestamps)."""
    packets = trace.packets if isinstance(trace, CaptureTrace) else tuple(trace)
    for rec in packets:
        if rec.ip_proto not in (IpProto.TCP, IpProto.UDP):
            raise ValueError("write_capture only supports TCP and UDP records")
        if rec.src_addr.version != rec.dst_addr.version:
            raise ValueError("mixed IPv4/IPv6 endpoints in one record")
    out = bytearray(struct.pack("<IHHiIII", PCAP_MAGIC_US, 2, 4, 0, 0, 262144, LINKTYPE_ETHERNET))
    seqs: dict[tuple, int] = {}
    for rec in packets:
        key = (rec.src, rec.dst)
        seq = seqs.get(key, 1)
        seqs[key] = seq + rec.payload_len
        # truncated records carry fewer payload bytes than the headers announce
        frame = _build_frame(rec, seq)
        orig = max(rec.wire_len, synthesized_frame_len(rec))
        sec, usec = divmod(rec.ts_us, 1_000_000)
        out += struct.pack("<IIII", sec, usec, len(frame), orig)
        out += frame
    try:
        Path(path).write_bytes(bytes(out))
    except OSError as exc:
        raise CaptureError(f"cannot write {path}: {exc}") from exc
