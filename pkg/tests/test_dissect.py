import numpy as np
import pytest

from genai_traffic.dissect import (
    ProtocolLabel,
    Reason,
    dissect_biflow,
    label_protocol,
    payload_stream,
    protocol_mix,
    sni_share_table,
    tls_version_mix,
)
from genai_traffic.dissect.tls import TlsVersion, build_client_hello, server_name_extension, wrap_records
from genai_traffic.fixtures import plain_udp_flow, quic_flow, tls_flow, write_protocol_fixtures
from genai_traffic.flows import Content, apply_labels, assemble_biflows, load_label_map, sidecar_path
from genai_traffic.pcapio import IpProto, read_capture, write_capture

from .conftest import T0, labeled, rec

C = ("10.0.0.2", 50000)
S = ("203.0.113.10", 443)

EXPECTED = {
    "three_packet": (ProtocolLabel.TCP_UNK, None, None),
    "tls": (ProtocolLabel.TCP_TLS, "example.com", TlsVersion.TLS1_3),
    "tls_split": (ProtocolLabel.TCP_TLS, "example.com", TlsVersion.TLS1_3),
    "tls12": (ProtocolLabel.TCP_TLS, "example.org", TlsVersion.TLS1_2),
    "quic": (ProtocolLabel.UDP_QUIC_TLS, "example.com", TlsVersion.TLS1_3),
    "plain_udp": (ProtocolLabel.UDP_UNK, None, None),
}


@pytest.fixture(scope="module")
def fixture_flows(tmp_path_factory):
    out = {}
    for name, path in write_protocol_fixtures(tmp_path_factory.mktemp("proto")).items():
        flows = apply_labels(assemble_biflows(read_capture(path)), load_label_map(sidecar_path(path)))
        out[name] = flows
    return out


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_fixture_labels(fixture_flows, name):
    (flow,) = fixture_flows[name]
    d = dissect_biflow(flow)
    label, sni, version = EXPECTED[name]
    assert d.label == label
    if sni is None:
        assert d.tls is None
    else:
        assert d.tls.sni == sni
        assert d.tls.negotiated_version == version
        assert d.tls.via_quic == (label == ProtocolLabel.UDP_QUIC_TLS)


def test_sni_range_in_bidirectional_stream(fixture_flows):
    for name in ("tls", "tls_split", "tls12"):
        (flow,) = fixture_flows[name]
        off, n = dissect_biflow(flow).tls.sni_range
        span = payload_stream(flow)[off:off + n]
        assert span == server_name_extension(EXPECTED[name][1])
    (quic,) = fixture_flows["quic"]
    assert dissect_biflow(quic).tls.sni_range is None


def test_hello_spread_over_segments():
    hello = wrap_records(build_client_hello("seg.example.com", random=bytes(32)))
    cut = len(hello) - 10
    pkts = [rec(T0, C, S, b""), rec(T0 + 1, C, S, hello[:cut]), rec(T0 + 2, S, C, b"\x00" * 7),
            rec(T0 + 3, C, S, hello[cut:])]
    (flow,) = assemble_biflows(pkts)
    d = dissect_biflow(flow)
    assert d.label == ProtocolLabel.TCP_TLS
    off, n = d.tls.sni_range
    ext = server_name_extension("seg.example.com")
    # the extension straddles the server's 7 bytes; the range covers all of it
    stream = payload_stream(flow)
    assert n == len(ext) + 7
    server_at = cut
    assert stream[off:server_at] + stream[server_at + 7:off + n] == ext
    assert d.tls.negotiated_version == TlsVersion.UNKNOWN  # server never answered with a ServerHello


def test_reason_codes():
    (flow,) = assemble_biflows([rec(T0, C, S, b"GET / HTTP/1.1\r\n\r\n")])
    assert dissect_biflow(flow).reason == Reason.NOT_TLS_RECORD
    (flow,) = assemble_biflows([rec(T0, C, S, b"")])
    assert dissect_biflow(flow).reason == Reason.NO_PAYLOAD
    bad = wrap_records(b"\x01\x00\x00\x40" + bytes(20))
    (flow,) = assemble_biflows([rec(T0, C, S, bad)])
    d = dissect_biflow(flow)
    assert d.label == ProtocolLabel.TCP_UNK and d.reason == Reason.TLS_PARSE_ERROR and "byte" in d.error


def test_published_initial_in_a_capture(rfc_vectors, tmp_path):
    pkt = bytes.fromhex(rfc_vectors["long_client_encrypted_packet"])
    path = tmp_path / "rfc.pcap"
    write_capture([rec(T0, C, S, pkt, proto=IpProto.UDP)], path)
    flows = assemble_biflows(read_capture(path))
    assert len(flows) == 1
    d = dissect_biflow(flows[0])
    assert d.label == ProtocolLabel.UDP_QUIC_TLS
    assert d.tls.sni == "example.com"
    srv = bytes.fromhex(rfc_vectors["long_server_encrypted_packet"])
    (flow,) = assemble_biflows([rec(T0, C, S, pkt, proto=IpProto.UDP), rec(T0 + 9, S, C, srv, proto=IpProto.UDP)])
    assert dissect_biflow(flow).tls.negotiated_version == TlsVersion.TLS1_3


def test_flipped_initial_demotes_to_unk(rfc_vectors):
    pkt = bytearray.fromhex(rfc_vectors["long_client_encrypted_packet"])
    pkt[500] ^= 0x80
    (flow,) = assemble_biflows([rec(T0, C, S, bytes(pkt), proto=IpProto.UDP)])
    d = dissect_biflow(flow)
    assert (d.label, d.reason) == (ProtocolLabel.UDP_UNK, Reason.QUIC_AUTH_FAILED)


def _group(rng, snis, app="app.x", content=Content.TEXT):
    pkts = []
    for i, sni in enumerate(snis):
        client = ("10.0.1.1", 30000 + i)
        if sni is None:
            pkts += plain_udp_flow(client, ("203.0.113.99", 5000), T0 + i * 1000, rng)
        elif sni.startswith("q:"):
            pkts += quic_flow(client, ("203.0.113.98", 443), T0 + i * 1000, sni[2:], rng)
        else:
            pkts += tls_flow(client, ("203.0.113.97", 443), T0 + i * 1000, sni, rng,
                             server_version=0x0304 if i % 4 else None)
    flows = labeled(pkts, app, content)
    return flows, [dissect_biflow(f) for f in flows]


def test_single_sni_owns_everything():
    flows, ds = _group(np.random.default_rng(0), ["only.example.com"] * 5)
    (row,) = sni_share_table(flows, ds)
    assert (row.biflow_pct, row.packet_pct, row.volume_pct) == (100.0, 100.0, 100.0)
    assert not row.via_quic


def test_share_sums_and_threshold():
    rng = np.random.default_rng(1)
    snis = ["a.example.com"] * 60 + ["q:media.example.com"] * 30 + [None] * 9 + ["rare.example.com"]
    flows, ds = _group(rng, snis)
    full = sni_share_table(flows, ds, min_biflow_pct=None)
    for col in ("biflow_pct", "packet_pct", "volume_pct"):
        assert sum(getattr(r, col) for r in full) == pytest.approx(100, abs=0.5)
    shown = sni_share_table(flows, ds)
    assert [r.sni for r in shown] == ["a.example.com", "media.example.com"]
    assert [r.via_quic for r in shown] == [False, True]
    for col in ("biflow_pct", "packet_pct", "volume_pct"):
        assert sum(getattr(r, col) for r in shown) <= 100

    mix = {r["protocol"]: r["biflow_pct"] for r in protocol_mix(flows, ds)}
    assert mix == {"TCP:TLS": 61.0, "TCP:UNK": 0.0, "UDP:QUIC_TLS": 30.0, "UDP:UNK": 9.0}
    versions = {r["version"]: r["biflows"] for r in tls_version_mix(flows, ds)}
    assert versions["TLS1_3"] + versions["TLS1_2"] == 91
    assert versions["TLS1_2"] == sum(1 for i, s in enumerate(snis) if s and not s.startswith("q:") and i % 4 == 0)


def test_label_protocol_matches_dissection(fixture_flows):
    for flows in fixture_flows.values():
        for f in flows:
            assert label_protocol(f) == dissect_biflow(f).label
