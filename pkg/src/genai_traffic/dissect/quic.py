"""QUIC version 1 Initial packet protection removal.

Initial keys derive from the client's first Destination Connection ID, so
the ClientHello carried in CRYPTO frames is readable by any observer.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, hmac
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDFExpand

QUIC_V1 = 0x00000001
INITIAL_SALT_V1 = bytes.fromhex("38762cf7f55934b34d179ae6a4c80cadccbb7f0a")

FRAME_PADDING = 0x00
FRAME_PING = 0x01
FRAME_ACK = 0x02
FRAME_ACK_ECN = 0x03
FRAME_CRYPTO = 0x06
FRAME_CONNECTION_CLOSE = 0x1C


class Reason(str, enum.Enum):
    """Stable reason codes explaining a dissection outcome."""

    OK = "ok"
    NO_PAYLOAD = "no_payload"
    NOT_TLS_RECORD = "not_tls_record"
    TLS_PARSE_ERROR = "tls_parse_error"
    TLS_NOT_CLIENT_HELLO = "tls_not_client_hello"
    QUIC_NOT_LONG_HEADER = "quic_not_long_header"
    QUIC_UNSUPPORTED_VERSION = "quic_unsupported_version"
    QUIC_NOT_INITIAL = "quic_not_initial"
    QUIC_MALFORMED = "quic_malformed"
    QUIC_AUTH_FAILED = "quic_auth_failed"
    QUIC_NO_CRYPTO = "quic_no_crypto"


class QuicError(ValueError):
    def __init__(self, reason: Reason, message: str):
        super().__init__(message)
        self.reason = reason


def read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    if pos >= len(buf):
        raise QuicError(Reason.QUIC_MALFORMED, f"varint past end at {pos}")
    first = buf[pos]
    n = 1 << (first >> 6)
    if pos + n > len(buf):
        raise QuicError(Reason.QUIC_MALFORMED, f"varint past end at {pos}")
    value = first & 0x3F
    for b in buf[pos + 1:pos + n]:
        value = (value << 8) | b
    return value, pos + n


def encode_varint(value: int) -> bytes:
    if value < 1 << 6:
        return bytes([value])
    if value < 1 << 14:
        return struct.pack("!H", value | 0x4000)
    if value < 1 << 30:
        return struct.pack("!I", value | 0x80000000)
    return struct.pack("!Q", value | 0xC000000000000000)


# ---------------------------------------------------------------- keys


def _hkdf_extract(salt: bytes, ikm: bytes) -> bytes:
    h = hmac.HMAC(salt, hashes.SHA256())
    h.update(ikm)
    return h.finalize()


def hkdf_expand_label(secret: bytes, label: str, length: int, context: bytes = b"") -> bytes:
    full = b"tls13 " + label.encode("ascii")
    info = struct.pack("!H", length) + bytes([len(full)]) + full + bytes([len(context)]) + context
    return HKDFExpand(hashes.SHA256(), length, info).derive(secret)


@dataclass(frozen=True)
class InitialKeys:
    secret: bytes
    key: bytes
    iv: bytes
    hp: bytes


def initial_secret(dcid: bytes) -> bytes:
    return _hkdf_extract(INITIAL_SALT_V1, dcid)


def initial_keys(dcid: bytes, server: bool = False) -> InitialKeys:
    secret = hkdf_expand_label(initial_secret(dcid), "server in" if server else "client in", 32)
    return InitialKeys(
        secret,
        hkdf_expand_label(secret, "quic key", 16),
        hkdf_expand_label(secret, "quic iv", 12),
        hkdf_expand_label(secret, "quic hp", 16),
    )


def header_protection_mask(hp_key: bytes, sample: bytes) -> bytes:
    enc = Cipher(algorithms.AES(hp_key), modes.ECB()).encryptor()
    return (enc.update(sample) + enc.finalize())[:5]


# ---------------------------------------------------------------- packets


@dataclass(frozen=True)
class LongHeader:
    first_byte: int
    version: int
    dcid: bytes
    scid: bytes
    token: bytes
    length: int
    pn_offset: int

    @property
    def packet_type(self) -> int:
        return (self.first_byte >> 4) & 0x03

    @property
    def is_initial(self) -> bool:
        return self.packet_type == 0

    @property
    def end(self) -> int:
        return self.pn_offset + self.length


def is_long_header(datagram: bytes) -> bool:
    return len(datagram) >= 7 and bool(datagram[0] & 0x80)


def parse_long_header(datagram: bytes) -> LongHeader:
    if not is_long_header(datagram):
        raise QuicError(Reason.QUIC_NOT_LONG_HEADER, "not a QUIC long header packet")
    first = datagram[0]
    version = struct.unpack_from("!I", datagram, 1)[0]
    if version != QUIC_V1:
        raise QuicError(Reason.QUIC_UNSUPPORTED_VERSION, f"unsupported QUIC version 0x{version:08x}")
    if not first & 0x40:
        raise QuicError(Reason.QUIC_MALFORMED, "fixed bit not set")
    pos = 5
    dcil = datagram[pos]
    if dcil > 20 or pos + 1 + dcil >= len(datagram):
        raise QuicError(Reason.QUIC_MALFORMED, "bad destination connection id length")
    dcid = datagram[pos + 1:pos + 1 + dcil]
    pos += 1 + dcil
    scil = datagram[pos]
    if scil > 20 or pos + 1 + scil > len(datagram):
        raise QuicError(Reason.QUIC_MALFORMED, "bad source connection id length")
    scid = datagram[pos + 1:pos + 1 + scil]
    pos += 1 + scil
    token = b""
    if (first >> 4) & 0x03 == 0:
        tlen, pos = read_varint(datagram, pos)
        token = datagram[pos:pos + tlen]
        pos += tlen
    else:
        raise QuicError(Reason.QUIC_NOT_INITIAL, "long header packet is not an Initial")
    length, pos = read_varint(datagram, pos)
    if pos + length > len(datagram):
        raise QuicError(Reason.QUIC_MALFORMED, "Length field exceeds datagram")
    if length < 20:
        raise QuicError(Reason.QUIC_MALFORMED, "packet too short for header protection sample")
    return LongHeader(first, version, bytes(dcid), bytes(scid), bytes(token), length, pos)


@dataclass(frozen=True)
class InitialPacket:
    header: LongHeader
    packet_number: int
    plaintext: bytes
    crypto: tuple[tuple[int, bytes], ...]


def parse_frames(plaintext: bytes) -> list[tuple[int, bytes]]:
    """Return CRYPTO frames as ``(offset, data)``; other Initial frames are skipped."""
    frames = []
    pos = 0
    while pos < len(plaintext):
        ftype, pos = read_varint(plaintext, pos)
        if ftype == FRAME_PADDING or ftype == FRAME_PING:
            continue
        if ftype in (FRAME_ACK, FRAME_ACK_ECN):
            _, pos = read_varint(plaintext, pos)  # largest acknowledged
            _, pos = read_varint(plaintext, pos)  # ack delay
            count, pos = read_varint(plaintext, pos)
            _, pos = read_varint(plaintext, pos)  # first range
            for _ in range(count):
                _, pos = read_varint(plaintext, pos)
                _, pos = read_varint(plaintext, pos)
            if ftype == FRAME_ACK_ECN:
                for _ in range(3):
                    _, pos = read_varint(plaintext, pos)
        elif ftype == FRAME_CRYPTO:
            offset, pos = read_varint(plaintext, pos)
            length, pos = read_varint(plaintext, pos)
            if pos + length > len(plaintext):
                raise QuicError(Reason.QUIC_MALFORMED, "CRYPTO frame exceeds packet")
            frames.append((offset, plaintext[pos:pos + length]))
            pos += length
        elif ftype == FRAME_CONNECTION_CLOSE:
            _, pos = read_varint(plaintext, pos)
            _, pos = read_varint(plaintext, pos)
            rlen, pos = read_varint(plaintext, pos)
            pos += rlen
        else:
            raise QuicError(Reason.QUIC_MALFORMED, f"frame type 0x{ftype:x} not allowed in Initial")
    return frames


def decrypt_quic_initial(datagram: bytes, server: bool = False,
                         dcid: Optional[bytes] = None) -> InitialPacket:
    """Remove header protection and AEAD from the first packet of a datagram.

    Client Initials derive keys from their own DCID. Server Initials need
    the DCID of the client's first Initial, passed as ``dcid``.
    """
    hdr = parse_long_header(datagram)
    if server and dcid is None:
        raise ValueError("server Initials need the client's original DCID")
    keys = initial_keys(hdr.dcid if dcid is None else dcid, server=server)
    pn_off = hdr.pn_offset
    sample = datagram[pn_off + 4:pn_off + 20]
    mask = header_protection_mask(keys.hp, sample)
    first = hdr.first_byte ^ (mask[0] & 0x0F)
    pn_len = (first & 0x03) + 1
    pn_bytes = bytes(b ^ m for b, m in zip(datagram[pn_off:pn_off + pn_len], mask[1:1 + pn_len]))
    pn = int.from_bytes(pn_bytes, "big")
    aad = bytes([first]) + datagram[1:pn_off] + pn_bytes
    nonce = (int.from_bytes(keys.iv, "big") ^ pn).to_bytes(12, "big")
    try:
        plaintext = AESGCM(keys.key).decrypt(nonce, bytes(datagram[pn_off + pn_len:hdr.end]), aad)
    except InvalidTag:
        raise QuicError(Reason.QUIC_AUTH_FAILED, "Initial packet failed authentication") from None
    crypto = tuple(parse_frames(plaintext))
    return InitialPacket(hdr, pn, plaintext, crypto)


def reassemble_crypto(frames) -> bytes:
    """Contiguous CRYPTO stream from offset 0; stops at the first gap."""
    data = bytearray()
    for offset, chunk in sorted(frames, key=lambda f: f[0]):
        if offset > len(data):
            break
        data += chunk[len(data) - offset:]
    return bytes(data)


def protect_initial(header: bytes, pn: int, pn_len: int, payload: bytes, dcid: bytes,
                    server: bool = False, keys: Optional[InitialKeys] = None) -> bytes:
    """Encrypt an Initial packet; ``header`` ends just before the packet number."""
    keys = keys or initial_keys(dcid, server=server)
    pn_bytes = pn.to_bytes(pn_len, "big")
    aad = header + pn_bytes
    nonce = (int.from_bytes(keys.iv, "big") ^ pn).to_bytes(12, "big")
    ct = AESGCM(keys.key).encrypt(nonce, payload, aad)
    pn_off = len(header)
    packet = bytearray(aad + ct)
    mask = header_protection_mask(keys.hp, bytes(packet[pn_off + 4:pn_off + 20]))
    packet[0] ^= mask[0] & 0x0F
    for i in range(pn_len):
        packet[pn_off + i] ^= mask[1 + i]
    return bytes(packet)


def build_client_initial(crypto_data: bytes, dcid: bytes, scid: bytes = b"", pn: int = 0,
                         min_size: int = 1200, server: bool = False,
                         keys_dcid: Optional[bytes] = None) -> bytes:
    """Client (or server) Initial carrying one CRYPTO frame, padded to ``min_size``."""
    frame = bytes([FRAME_CRYPTO]) + encode_varint(0) + encode_varint(len(crypto_data)) + crypto_data
    pn_len = 4
    first = 0xC0 | (pn_len - 1)
    prefix = (bytes([first]) + struct.pack("!I", QUIC_V1) + bytes([len(dcid)]) + dcid
              + bytes([len(scid)]) + scid + encode_varint(0))
    # Length is encoded on 2 bytes; pad so the datagram reaches min_size
    overhead = len(prefix) + 2 + pn_len + 16
    payload = frame + bytes(max(0, min_size - overhead - len(frame)))
    length = pn_len + len(payload) + 16
    header = prefix + struct.pack("!H", 0x4000 | length)
    return protect_initial(header, pn, pn_len, payload, keys_dcid or dcid, server=server)
