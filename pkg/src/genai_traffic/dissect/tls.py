"""TLS ClientHello / ServerHello parsing over a raw byte stream.

Streams are either TLS record streams (TCP) or bare handshake messages
(QUIC CRYPTO data). Offsets reported by this module are in the coordinates
of the bytes handed in, record headers included.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional

CONTENT_HANDSHAKE = 22
HS_CLIENT_HELLO = 1
HS_SERVER_HELLO = 2
EXT_SERVER_NAME = 0
EXT_SUPPORTED_VERSIONS = 43

MAX_RECORD_LEN = (1 << 14) + 2048
RECORD_VERSIONS = range(0x0301, 0x0304)


class TlsVersion(str, enum.Enum):
    TLS1_2 = "TLS1_2"
    TLS1_3 = "TLS1_3"
    OTHER = "OTHER"
    UNKNOWN = "UNKNOWN"


class TlsParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class WrongHandshakeTypeError(TlsParseError):
    """The stream parses but starts with a different handshake message."""


def looks_like_tls_record(payload: bytes) -> bool:
    """Handshake record header with a TLS 1.0-1.2 record version and sane length."""
    if len(payload) < 5:
        return False
    ctype, version, length = struct.unpack_from("!BHH", payload, 0)
    return ctype == CONTENT_HANDSHAKE and version in RECORD_VERSIONS and 0 < length <= MAX_RECORD_LEN


class _Handshake:
    """First handshake message of a stream plus a map back to stream offsets."""

    def __init__(self, stream: bytes, records: bool):
        self.segments: list[tuple[int, int, int]] = []  # (msg offset, stream offset, length)
        if not records:
            self.data = bytes(stream)
            self.segments.append((0, 0, len(stream)))
            self._check_complete(len(stream))
            return
        buf = bytearray()
        off = 0
        while True:
            if self._complete(buf):
                break
            if off + 5 > len(stream):
                raise TlsParseError("stream ends inside the handshake message", off)
            ctype, _, length = struct.unpack_from("!BHH", stream, off)
            if ctype != CONTENT_HANDSHAKE:
                raise TlsParseError(f"record type {ctype} before handshake message completed", off)
            if length == 0 or length > MAX_RECORD_LEN:
                raise TlsParseError(f"implausible record length {length}", off + 3)
            body = stream[off + 5:off + 5 + length]
            self.segments.append((len(buf), off + 5, len(body)))
            buf += body
            if len(body) < length and not self._complete(buf):
                raise TlsParseError("stream ends inside a TLS record", off + 5 + len(body))
            off += 5 + length
        self.data = bytes(buf)

    @staticmethod
    def _complete(buf) -> bool:
        return len(buf) >= 4 and len(buf) >= 4 + int.from_bytes(buf[1:4], "big")

    def _check_complete(self, n: int):
        if not self._complete(self.data):
            raise TlsParseError("stream ends inside the handshake message", n)

    def to_stream(self, msg_off: int) -> int:
        for m, s, n in self.segments:
            if m <= msg_off < m + n:
                return s + (msg_off - m)
        raise TlsParseError("offset outside handshake data", msg_off)

    def stream_range(self, start: int, length: int) -> tuple[int, int]:
        a = self.to_stream(start)
        b = self.to_stream(start + length - 1) + 1
        return a, b - a


class _Reader:
    def __init__(self, data: bytes, start: int, end: int, hs: _Handshake):
        self.data, self.pos, self.end, self.hs = data, start, end, hs

    def _fail(self, what: str):
        raise TlsParseError(f"truncated {what}", self.hs.to_stream(min(self.pos, len(self.data) - 1)))

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > self.end:
            self._fail(what)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("!H", self.take(2, what))[0]

    def vec(self, width: int, what: str) -> bytes:
        n = int.from_bytes(self.take(width, what + " length"), "big")
        return self.take(n, what)


@dataclass(frozen=True)
class ClientHelloInfo:
    sni: Optional[str]
    sni_range: Optional[tuple[int, int]]
    legacy_version: int
    extensions: tuple[int, ...]


def _extensions(r: _Reader):
    if r.pos == r.end:
        return
    total = r.u16("extensions length")
    end = r.pos + total
    if end > r.end:
        r._fail("extensions block")
    while r.pos < end:
        start = r.pos
        etype = r.u16("extension type")
        elen = r.u16("extension length")
        if r.pos + elen > end:
            r._fail(f"extension {etype}")
        yield etype, start, r.pos, elen
        r.pos += elen


def parse_client_hello(stream: bytes, records: bool = True) -> ClientHelloInfo:
    """Extract the first host_name SNI entry and where its extension sits.

    ``sni_range`` is ``(offset, length)`` spanning the whole server_name
    extension (type, length and body) in stream coordinates. When the
    extension crosses a record boundary the span includes that record
    header.
    """
    hs = _Handshake(stream, records)
    data = hs.data
    if data[0] != HS_CLIENT_HELLO:
        raise WrongHandshakeTypeError(f"handshake type {data[0]} is not ClientHello", hs.to_stream(0))
    end = 4 + int.from_bytes(data[1:4], "big")
    r = _Reader(data, 4, end, hs)
    legacy = r.u16("legacy_version")
    r.take(32, "random")
    r.vec(1, "session_id")
    r.vec(2, "cipher_suites")
    r.vec(1, "compression_methods")
    sni = None
    sni_range = None
    seen = []
    for etype, start, body, elen in _extensions(r):
        seen.append(etype)
        if etype != EXT_SERVER_NAME or sni is not None:
            continue
        er = _Reader(data, body, body + elen, hs)
        if elen == 0:
            continue
        list_len = er.u16("server_name_list length")
        list_end = er.pos + list_len
        if list_end > body + elen:
            er._fail("server_name_list")
        while er.pos < list_end:
            name_type = er.u8("name_type")
            name = er.vec(2, "host_name")
            if name_type == 0:
                try:
                    sni = name.decode("ascii").lower()
                except UnicodeDecodeError:
                    raise TlsParseError("non-ASCII host_name", hs.to_stream(er.pos - len(name))) from None
                sni_range = hs.stream_range(start, 4 + elen)
                break
    return ClientHelloInfo(sni, sni_range, legacy, tuple(seen))


@dataclass(frozen=True)
class ServerHelloInfo:
    version: TlsVersion
    legacy_version: Optional[int] = None
    selected_version: Optional[int] = None
    error: Optional[str] = None


def parse_server_hello(stream: bytes, records: bool = True) -> ServerHelloInfo:
    """Negotiated version: supported_versions wins over legacy_version.

    Malformed or truncated input yields ``TlsVersion.UNKNOWN`` with the
    parse error in ``error`` rather than raising.
    """
    try:
        hs = _Handshake(stream, records)
        data = hs.data
        if data[0] != HS_SERVER_HELLO:
            raise WrongHandshakeTypeError(f"handshake type {data[0]} is not ServerHello", hs.to_stream(0))
        end = 4 + int.from_bytes(data[1:4], "big")
        r = _Reader(data, 4, end, hs)
        legacy = r.u16("legacy_version")
        r.take(32, "random")
        r.vec(1, "session_id")
        r.take(2, "cipher_suite")
        r.take(1, "compression_method")
        selected = None
        for etype, _, body, elen in _extensions(r):
            if etype == EXT_SUPPORTED_VERSIONS:
                if elen != 2:
                    raise TlsParseError("supported_versions must hold one version", hs.to_stream(body))
                selected = struct.unpack_from("!H", data, body)[0]
    except TlsParseError as exc:
        return ServerHelloInfo(TlsVersion.UNKNOWN, error=str(exc))
    if selected == 0x0304:
        version = TlsVersion.TLS1_3
    elif legacy == 0x0303:
        # anything but 0x0304 in supported_versions leaves legacy_version in charge
        version = TlsVersion.TLS1_2
    else:
        version = TlsVersion.OTHER
    return ServerHelloInfo(version, legacy, selected)


# ---------------------------------------------------------------- builders


def _vec(width: int, body: bytes) -> bytes:
    return len(body).to_bytes(width, "big") + body


def server_name_extension(host: str) -> bytes:
    entry = b"\x00" + _vec(2, host.encode("ascii"))
    return struct.pack("!H", EXT_SERVER_NAME) + _vec(2, _vec(2, entry))


def build_client_hello(sni: Optional[str] = None, random: bytes = bytes(32),
                       session_id: bytes = b"", cipher_suites=(0x1301, 0x1302, 0x1303),
                       extra_extensions: bytes = b"", pre_sni_extensions: bytes = b"") -> bytes:
    """ClientHello handshake message (no record layer)."""
    ext = pre_sni_extensions
    if sni is not None:
        ext += server_name_extension(sni)
    ext += extra_extensions
    body = (
        struct.pack("!H", 0x0303) + random + _vec(1, session_id)
        + _vec(2, b"".join(struct.pack("!H", c) for c in cipher_suites))
        + _vec(1, b"\x00") + _vec(2, ext)
    )
    return bytes([HS_CLIENT_HELLO]) + _vec(3, body)


def build_server_hello(legacy_version: int = 0x0303, supported_version: Optional[int] = 0x0304,
                       random: bytes = bytes(32), session_id: bytes = b"",
                       cipher_suite: int = 0x1301) -> bytes:
    ext = b""
    if supported_version is not None:
        ext += struct.pack("!HHH", EXT_SUPPORTED_VERSIONS, 2, supported_version)
    body = (
        struct.pack("!H", legacy_version) + random + _vec(1, session_id)
        + struct.pack("!HB", cipher_suite, 0) + _vec(2, ext)
    )
    return bytes([HS_SERVER_HELLO]) + _vec(3, body)


def wrap_records(message: bytes, max_fragment: int = 1 << 14, record_version: int = 0x0301) -> bytes:
    """Split a handshake message into TLS handshake records."""
    out = bytearray()
    for i in range(0, len(message), max_fragment):
        frag = message[i:i + max_fragment]
        out += struct.pack("!BHH", CONTENT_HANDSHAKE, record_version, len(frag)) + frag
    return bytes(out)
