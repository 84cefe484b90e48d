"""Synthetic captures: TLS, QUIC and plain UDP flows, and a labeled classification dataset.

Everything here is deterministic for a given seed and written through
:func:`write_capture`, so tests and the CLI share one generator.
"""

from __future__ import annotations

import hashlib
import ipaddress
from pathlib import Path
from typing import Optional

import numpy as np

from .dissect.quic import build_client_initial
from .dissect.tls import build_client_hello, build_server_hello, wrap_records
from .flows import Content, LabelMap, save_label_map, sidecar_path
from .pcapio import IpProto, PacketRecord, write_capture

CLIENT_NET = ipaddress.ip_network("10.0.0.0/16")
SERVER_NET = ipaddress.ip_network("203.0.113.0/24")

# payload bytes of a TLS application-data record header
_APPDATA_HEADER = bytes([23, 3, 3])


def packet(ts_us: int, src, dst, proto: IpProto, payload: bytes = b"") -> PacketRecord:
    """A record as :func:`write_capture` would emit and read back."""
    src_addr, src_port = ipaddress.ip_address(src[0]), src[1]
    dst_addr, dst_port = ipaddress.ip_address(dst[0]), dst[1]
    ip_hdr = 20 if src_addr.version == 4 else 40
    l4_hdr = 20 if proto == IpProto.TCP else 8
    return PacketRecord(ts_us, src_addr, dst_addr, IpProto(proto), src_port, dst_port,
                        len(payload), bytes(payload), 14 + ip_hdr + l4_hdr + len(payload))


def three_packet_trace(t0_us: int = 1_700_000_000_000_000) -> list[PacketRecord]:
    """Client sends 100 B at 0.2 s; server answers 500 B at 0.7 s and 200 B at 2.5 s."""
    c, s = ("10.0.0.2", 50000), ("203.0.113.10", 443)
    return [
        packet(t0_us + 200_000, c, s, IpProto.TCP, bytes(100)),
        packet(t0_us + 700_000, s, c, IpProto.TCP, bytes(500)),
        packet(t0_us + 2_500_000, s, c, IpProto.TCP, bytes(200)),
    ]


def _app_records(rng: np.random.Generator, n: int, lo: int, hi: int) -> list[bytes]:
    out = []
    for size in rng.integers(lo, hi, size=n):
        body = rng.bytes(int(size))
        out.append(_APPDATA_HEADER + int(size).to_bytes(2, "big") + body)
    return out


def tls_flow(client, server, t0_us: int, sni: Optional[str], rng: np.random.Generator,
             server_version: Optional[int] = 0x0304, legacy_version: int = 0x0303,
             split_at: Optional[int] = None, n_app: int = 4) -> list[PacketRecord]:
    """TCP handshake stub, ClientHello, ServerHello, then application-data records.

    ``split_at`` spreads the ClientHello over two TLS records, cut at that
    offset of the handshake message.
    """
    hello = build_client_hello(sni, random=rng.bytes(32), session_id=rng.bytes(32))
    if split_at is None:
        ch = wrap_records(hello)
    else:
        ch = wrap_records(hello[:split_at]) + wrap_records(hello[split_at:])
    sh = wrap_records(build_server_hello(legacy_version, server_version, random=rng.bytes(32)))
    t = t0_us
    pkts = [packet(t, client, server, IpProto.TCP)]
    t += 15_000
    pkts.append(packet(t, server, client, IpProto.TCP))
    t += 200
    pkts.append(packet(t, client, server, IpProto.TCP, ch))
    t += 20_000
    pkts.append(packet(t, server, client, IpProto.TCP, sh))
    for i, rec in enumerate(_app_records(rng, n_app, 40, 1200)):
        t += int(rng.integers(100, 50_000))
        src, dst = (client, server) if i % 2 == 0 else (server, client)
        pkts.append(packet(t, src, dst, IpProto.TCP, rec))
    return pkts


def quic_flow(client, server, t0_us: int, sni: Optional[str], rng: np.random.Generator,
              version: int = 0x0304, n_short: int = 4) -> list[PacketRecord]:
    """Client Initial with a ClientHello, server Initial with a ServerHello, short-header tail."""
    dcid = rng.bytes(8)
    scid = rng.bytes(8)
    hello = build_client_hello(sni, random=rng.bytes(32))
    t = t0_us
    pkts = [packet(t, client, server, IpProto.UDP, build_client_initial(hello, dcid, scid))]
    sh = build_server_hello(0x0303, version, random=rng.bytes(32))
    t += 25_000
    pkts.append(packet(t, server, client, IpProto.UDP,
                       build_client_initial(sh, scid, rng.bytes(8), server=True, keys_dcid=dcid)))
    for i in range(n_short):
        t += int(rng.integers(100, 30_000))
        src, dst = (client, server) if i % 2 == 0 else (server, client)
        body = bytes([0x40 | int(rng.integers(0, 4))]) + rng.bytes(int(rng.integers(30, 1200)))
        pkts.append(packet(t, src, dst, IpProto.UDP, body))
    return pkts


def plain_udp_flow(client, server, t0_us: int, rng: np.random.Generator, n: int = 6) -> list[PacketRecord]:
    """Datagrams that never start with a long header (high bit clear)."""
    pkts = []
    t = t0_us
    for i in range(n):
        body = bytes([int(rng.integers(0, 0x80))]) + rng.bytes(int(rng.integers(10, 400)))
        src, dst = (client, server) if i % 2 == 0 else (server, client)
        pkts.append(packet(t, src, dst, IpProto.UDP, body))
        t += int(rng.integers(1000, 100_000))
    return pkts


def _client(i: int):
    return (str(CLIENT_NET[2 + (i // 40000)]), 20000 + i % 40000)


# ---------------------------------------------------------------- classification set

DATASET_APPS = ("app.alpha", "app.bravo", "app.charlie")
DATASET_CONTENTS = (Content.TEXT, Content.MULTIMODAL)


def class_sni(app: str, content: Content) -> str:
    """Per-class hostname; every class gets the same length so the SNI position never leaks."""
    tag = hashlib.sha256(f"{app}/{content.value}".encode()).hexdigest()[:16]
    return f"{tag}.svc.example.net"


def dataset_server(app_index: int):
    return (str(SERVER_NET[10 + app_index]), 443)


def class_sizes(n_samples: int) -> list[int]:
    n_classes = len(DATASET_APPS) * len(DATASET_CONTENTS)
    base, extra = divmod(n_samples, n_classes)
    return [base + (1 if i < extra else 0) for i in range(n_classes)]


def classification_captures(n_samples: int = 2000, seed: int = 0, t0_us: int = 1_700_000_000_000_000):
    """``{(app, content): packets}``: one capture per class, TLS flows only.

    ``n_samples`` flows in total, spread as evenly as possible over the six
    classes.

    Classes differ only in the SNI host name. Random fields, record sizes
    and timing come from the same distribution for every class, so with
    the server_name extension zeroed no class information is left in the
    first payload bytes.
    """
    rng = np.random.default_rng(seed)
    sizes = iter(class_sizes(n_samples))
    out = {}
    idx = 0
    for a, app in enumerate(DATASET_APPS):
        for content in DATASET_CONTENTS:
            sni = class_sni(app, content)
            pkts = []
            t = t0_us
            for _ in range(next(sizes)):
                pkts.extend(tls_flow(_client(idx), dataset_server(a), t, sni, rng))
                idx += 1
                t += 1_000_000
            out[(app, content)] = pkts
    return out


def write_classification_dataset(out_dir, n_samples: int = 2000, seed: int = 0) -> list[Path]:
    """One pcap plus label sidecar per (app, content) class."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for (app, content), pkts in classification_captures(n_samples, seed).items():
        path = out_dir / f"{app}_{content.value.lower()}.pcap"
        write_capture(pkts, path)
        a = DATASET_APPS.index(app)
        addr, port = dataset_server(a)
        save_label_map(LabelMap({(ipaddress.ip_address(addr), port): app}, app, content), sidecar_path(path))
        paths.append(path)
    return paths


def write_protocol_fixtures(out_dir, seed: int = 0) -> dict[str, Path]:
    """Small captures exercising each protocol label."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    t0 = 1_700_000_000_000_000
    server = (str(SERVER_NET[1]), 443)
    files = {
        "three_packet": three_packet_trace(t0),
        "tls": tls_flow(_client(0), server, t0, "example.com", rng),
        "tls_split": tls_flow(_client(1), server, t0, "example.com", rng, split_at=60),
        "tls12": tls_flow(_client(2), server, t0, "example.org", rng, server_version=None),
        "quic": quic_flow(_client(3), server, t0, "example.com", rng),
        "plain_udp": plain_udp_flow(_client(4), (str(SERVER_NET[2]), 5000), t0, rng),
    }
    paths = {}
    for name, pkts in files.items():
        path = out_dir / f"{name}.pcap"
        write_capture(pkts, path)
        # the first packet of every fixture flows client -> server
        server_ep = (pkts[0].dst_addr, pkts[0].dst_port)
        save_label_map(LabelMap({server_ep: "fixture." + name}, "fixture." + name, Content.TEXT), sidecar_path(path))
        paths[name] = path
    return paths
