"""Protocol labeling, TLS metadata and SNI traffic shares per biflow."""

from __future__ import annotations

import enum
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from ..flows import Biflow, Content
from ..metrics import group_key
from ..pcapio import IpProto
from .quic import QuicError, Reason, decrypt_quic_initial, is_long_header, parse_long_header, reassemble_crypto
from .tls import (
    ClientHelloInfo,
    TlsParseError,
    TlsVersion,
    WrongHandshakeTypeError,
    looks_like_tls_record,
    parse_client_hello,
    parse_server_hello,
)

__all__ = [
    "ProtocolLabel", "TlsMetadata", "FlowDissection", "SniShareRow", "Reason", "TlsVersion",
    "dissect_biflow", "label_protocol", "sni_share_table", "protocol_mix", "tls_version_mix",
    "payload_stream",
]

# bytes of each direction handed to the handshake parsers
STREAM_LIMIT = 1 << 16
# client Initials scanned for a ClientHello spread over several packets
MAX_INITIALS = 8


class ProtocolLabel(str, enum.Enum):
    TCP_TLS = "TCP:TLS"
    TCP_UNK = "TCP:UNK"
    UDP_QUIC_TLS = "UDP:QUIC_TLS"
    UDP_UNK = "UDP:UNK"


@dataclass(frozen=True)
class TlsMetadata:
    sni: Optional[str]
    negotiated_version: TlsVersion
    via_quic: bool
    sni_range: Optional[tuple[int, int]]


@dataclass(frozen=True)
class FlowDissection:
    label: ProtocolLabel
    reason: Reason
    tls: Optional[TlsMetadata] = None
    error: Optional[str] = None


def payload_stream(flow: Biflow, limit: Optional[int] = None) -> bytes:
    """Payload bytes of both directions concatenated in capture order."""
    out = bytearray()
    for pkt in flow.packets:
        out += pkt.payload
        if limit is not None and len(out) >= limit:
            return bytes(out[:limit])
    return bytes(out)


class _DirectionStream:
    """One direction's payload bytes, with offsets back into the bidirectional stream."""

    def __init__(self, flow: Biflow, direction: int, limit: int = STREAM_LIMIT):
        self.data = bytearray()
        self.segments: list[tuple[int, int, int]] = []  # (dir offset, bidir offset, length)
        bidir = 0
        for pkt, d in flow.items():
            n = len(pkt.payload)
            if d == direction and n and len(self.data) < limit:
                self.segments.append((len(self.data), bidir, n))
                self.data += pkt.payload
            bidir += n

    def to_bidir(self, off: int) -> int:
        for d, b, n in self.segments:
            if d <= off < d + n:
                return b + off - d
        raise IndexError(off)

    def bidir_range(self, rng: tuple[int, int]) -> tuple[int, int]:
        start, length = rng
        a = self.to_bidir(start)
        b = self.to_bidir(start + length - 1) + 1
        return a, b - a


def _tls_reason(exc: TlsParseError) -> Reason:
    return Reason.TLS_NOT_CLIENT_HELLO if isinstance(exc, WrongHandshakeTypeError) else Reason.TLS_PARSE_ERROR


def _dissect_tcp(flow: Biflow) -> FlowDissection:
    first = next(((p, d) for p, d in flow.items() if p.payload), None)
    if first is None:
        return FlowDissection(ProtocolLabel.TCP_UNK, Reason.NO_PAYLOAD)
    pkt, hello_dir = first
    if not looks_like_tls_record(pkt.payload):
        return FlowDissection(ProtocolLabel.TCP_UNK, Reason.NOT_TLS_RECORD)
    up = _DirectionStream(flow, hello_dir)
    try:
        ch = parse_client_hello(bytes(up.data))
    except TlsParseError as exc:
        reason = _tls_reason(exc)
        return FlowDissection(ProtocolLabel.TCP_UNK, reason, error=str(exc))
    down = _DirectionStream(flow, -hello_dir)
    version = TlsVersion.UNKNOWN
    error = None
    if down.data:
        sh = parse_server_hello(bytes(down.data))
        version, error = sh.version, sh.error
    sni_range = up.bidir_range(ch.sni_range) if ch.sni_range else None
    return FlowDissection(
        ProtocolLabel.TCP_TLS, Reason.OK,
        TlsMetadata(ch.sni, version, False, sni_range), error,
    )


def _quic_client_hello(flow: Biflow, hello_dir: int) -> tuple[ClientHelloInfo, bytes]:
    frames = []
    dcid = None
    n_packets = 0
    for pkt, d in flow.items():
        if d != hello_dir or not pkt.payload:
            continue
        try:
            ini = decrypt_quic_initial(pkt.payload)
        except QuicError:
            if dcid is None:
                raise
            break
        if dcid is None:
            dcid = ini.header.dcid
        elif ini.header.dcid != dcid:
            break
        frames.extend(ini.crypto)
        n_packets += 1
        stream = reassemble_crypto(frames)
        if len(stream) >= 4 and len(stream) >= 4 + int.from_bytes(stream[1:4], "big"):
            break
        if n_packets >= MAX_INITIALS:
            break
    if not frames:
        raise QuicError(Reason.QUIC_NO_CRYPTO, "no CRYPTO frame in client Initial packets")
    return parse_client_hello(reassemble_crypto(frames), records=False), dcid


def _quic_server_version(flow: Biflow, hello_dir: int, dcid: bytes) -> tuple[TlsVersion, Optional[str]]:
    for pkt, d in flow.items():
        if d == hello_dir or not pkt.payload or not is_long_header(pkt.payload):
            continue
        try:
            ini = decrypt_quic_initial(pkt.payload, server=True, dcid=dcid)
        except QuicError:
            continue
        stream = reassemble_crypto(ini.crypto)
        if not stream:
            continue
        sh = parse_server_hello(stream, records=False)
        return sh.version, sh.error
    # QUIC v1 runs TLS 1.3 only
    return TlsVersion.TLS1_3, None


def _dissect_udp(flow: Biflow) -> FlowDissection:
    first = next(((p, d) for p, d in flow.items() if p.payload), None)
    if first is None:
        return FlowDissection(ProtocolLabel.UDP_UNK, Reason.NO_PAYLOAD)
    pkt, hello_dir = first
    if not is_long_header(pkt.payload):
        return FlowDissection(ProtocolLabel.UDP_UNK, Reason.QUIC_NOT_LONG_HEADER)
    try:
        parse_long_header(pkt.payload)
        ch, dcid = _quic_client_hello(flow, hello_dir)
    except QuicError as exc:
        return FlowDissection(ProtocolLabel.UDP_UNK, exc.reason, error=str(exc))
    except TlsParseError as exc:
        reason = _tls_reason(exc)
        return FlowDissection(ProtocolLabel.UDP_UNK, reason, error=str(exc))
    version, error = _quic_server_version(flow, hello_dir, dcid)
    # SNI bytes are encrypted on the wire: no occlusion range in payload coordinates
    return FlowDissection(ProtocolLabel.UDP_QUIC_TLS, Reason.OK, TlsMetadata(ch.sni, version, True, None), error)


def dissect_biflow(flow: Biflow) -> FlowDissection:
    if flow.proto == IpProto.TCP:
        return _dissect_tcp(flow)
    return _dissect_udp(flow)


def label_protocol(flow: Biflow) -> ProtocolLabel:
    return dissect_biflow(flow).label


# ---------------------------------------------------------------- reports

NO_SNI = "-"


@dataclass(frozen=True)
class SniShareRow:
    group: tuple[str, Content]
    sni: str
    biflows: int
    packets: int
    volume: int
    biflow_pct: float
    packet_pct: float
    volume_pct: float
    via_quic: bool

    def as_row(self) -> dict:
        app, content = self.group
        return {
            "app": app, "content": content.value, "sni": self.sni,
            "biflows": self.biflows, "packets": self.packets, "volume": self.volume,
            "biflow_pct": round(self.biflow_pct, 4), "packet_pct": round(self.packet_pct, 4),
            "volume_pct": round(self.volume_pct, 4), "via_quic": self.via_quic,
        }


def _grouped(biflows: Sequence[Biflow], dissections: Sequence[FlowDissection]):
    if len(biflows) != len(dissections):
        raise ValueError("one dissection per biflow required")
    groups = defaultdict(list)
    for f, d in zip(biflows, dissections):
        groups[group_key(f)].append((f, d))
    return dict(sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value)))


def sni_share_table(biflows: Sequence[Biflow], dissections: Sequence[FlowDissection],
                    min_biflow_pct: Optional[float] = 1.0) -> list[SniShareRow]:
    """Biflow / packet / volume shares per SNI within each (app, content) group.

    Flows without an SNI are pooled under ``"-"``. With ``min_biflow_pct``
    set, that row and every SNI at or below the threshold are dropped.
    """
    rows = []
    for group, pairs in _grouped(biflows, dissections).items():
        tot_f = len(pairs)
        tot_p = sum(len(f) for f, _ in pairs)
        tot_v = sum(p.payload_len for f, _ in pairs for p in f.packets)
        agg = defaultdict(lambda: [0, 0, 0, False])
        for f, d in pairs:
            sni = d.tls.sni if d.tls and d.tls.sni else NO_SNI
            a = agg[sni]
            a[0] += 1
            a[1] += len(f)
            a[2] += sum(p.payload_len for p in f.packets)
            a[3] = a[3] or bool(d.tls and d.tls.via_quic)
        group_rows = []
        for sni, (nf, npk, vol, quic) in agg.items():
            row = SniShareRow(
                group, sni, nf, npk, vol,
                100.0 * nf / tot_f,
                100.0 * npk / tot_p if tot_p else 0.0,
                100.0 * vol / tot_v if tot_v else 0.0,
                quic,
            )
            if min_biflow_pct is not None and (sni == NO_SNI or row.biflow_pct <= min_biflow_pct):
                continue
            group_rows.append(row)
        group_rows.sort(key=lambda r: (-r.biflows, r.sni))
        rows.extend(group_rows)
    return rows


def protocol_mix(biflows: Sequence[Biflow], dissections: Sequence[FlowDissection]) -> list[dict]:
    out = []
    for (app, content), pairs in _grouped(biflows, dissections).items():
        c = Counter(d.label for _, d in pairs)
        for label in ProtocolLabel:
            out.append({
                "app": app, "content": content.value, "protocol": label.value,
                "biflows": c[label], "biflow_pct": round(100.0 * c[label] / len(pairs), 4),
            })
    return out


def tls_version_mix(biflows: Sequence[Biflow], dissections: Sequence[FlowDissection]) -> list[dict]:
    """Version shares among the TLS-carrying biflows (TCP:TLS and UDP:QUIC_TLS)."""
    out = []
    for (app, content), pairs in _grouped(biflows, dissections).items():
        tls = [d.tls.negotiated_version for _, d in pairs if d.tls is not None]
        c = Counter(tls)
        for v in TlsVersion:
            out.append({
                "app": app, "content": content.value, "version": v.value, "biflows": c[v],
                "biflow_pct": round(100.0 * c[v] / len(tls), 4) if tls else 0.0,
            })
    return out


def reason_counts(dissections: Iterable[FlowDissection]) -> dict[str, int]:
    return dict(sorted(Counter(d.reason.value for d in dissections).items()))
