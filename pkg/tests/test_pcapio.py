import ipaddress
import struct

import dpkt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genai_traffic.pcapio import (
    CaptureError,
    CaptureTrace,
    IpProto,
    NoDecodablePacketsError,
    PacketRecord,
    UnrecognizedFormatError,
    read_capture,
    synthesized_frame_len,
    write_capture,
)

from .conftest import T0, rec

C = ("10.0.0.2", 50000)
S = ("203.0.113.10", 443)


def three_tcp():
    return [rec(T0, C, S, b""), rec(T0 + 10, S, C, bytes(range(100))), rec(T0 + 20, C, S, b"\xab" * 1460)]


def _eth_ipv4_udp(src, dst, sport, dport, payload, frag=0):
    udp = struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(udp), 0, frag, 64, 17, 0,
                     ipaddress.ip_address(src).packed, ipaddress.ip_address(dst).packed)
    return ip + udp


def _classic(frames, linktype=1, magic=0xA1B2C3D4, endian="<", frac_scale=1):
    out = struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)
    for ts_us, frame, orig in frames:
        sec, usec = divmod(ts_us, 1_000_000)
        out += struct.pack(endian + "IIII", sec, usec * frac_scale, len(frame), orig) + frame
    return out


def test_three_packet_fixture_cross_checked(tmp_path):
    path = tmp_path / "three.pcap"
    write_capture(three_tcp(), path)
    trace = read_capture(path)
    assert [p.payload_len for p in trace.packets] == [0, 100, 1460]
    assert list(trace.packets) == three_tcp()

    # independent reference dissector
    with open(path, "rb") as fh:
        ref = []
        for ts, buf in dpkt.pcap.Reader(fh):
            ip = dpkt.ethernet.Ethernet(buf).data
            tcp = ip.data
            ref.append((round(ts * 1e6), str(ipaddress.ip_address(ip.src)), tcp.sport, len(tcp.data), bytes(tcp.data)))
    mine = [(p.ts_us, str(p.src_addr), p.src_port, p.payload_len, p.payload) for p in trace.packets]
    assert mine == ref


def test_arp_only_is_zero_decodable(tmp_path):
    arp = b"\xff" * 6 + b"\x02" * 6 + b"\x08\x06" + bytes(28)
    path = tmp_path / "arp.pcap"
    path.write_bytes(_classic([(T0, arp, len(arp))]))
    with pytest.raises(NoDecodablePacketsError, match="zero decodable"):
        read_capture(path)


def test_snaplen_truncation(tmp_path):
    full = tmp_path / "full.pcap"
    write_capture([rec(T0, C, S, bytes(1460))], full)
    data = full.read_bytes()
    frame = data[40:]
    assert len(frame) == 1514
    cut = tmp_path / "cut.pcap"
    cut.write_bytes(_classic([(T0, frame[:64], 1514)]))
    p = read_capture(cut).packets[0]
    assert p.truncated
    assert len(p.payload) == 64 - 54
    assert p.wire_len == 1514
    assert p.payload_len == 1460


def test_empty_trace_writes_header_only(tmp_path):
    path = tmp_path / "empty.pcap"
    write_capture(CaptureTrace(()), path)
    data = path.read_bytes()
    assert len(data) == 24
    with open(path, "rb") as fh:
        assert list(dpkt.pcap.Reader(fh)) == []


def test_nanosecond_and_big_endian(tmp_path):
    frame = b"\x00" * 12 + b"\x08\x00" + _eth_ipv4_udp("10.0.0.1", "10.0.0.9", 1000, 53, b"hello")
    for magic, endian in ((0xA1B23C4D, "<"), (0xA1B23C4D, ">"), (0xA1B2C3D4, ">")):
        scale = 1000 if magic == 0xA1B23C4D else 1
        path = tmp_path / f"x{magic:x}{endian == '>'}.pcap"
        path.write_bytes(_classic([(T0 + 7, frame, len(frame))], magic=magic, endian=endian, frac_scale=scale))
        p = read_capture(path).packets[0]
        assert p.ts_us == T0 + 7
        assert p.payload == b"hello"
        assert p.ip_proto == IpProto.UDP


def test_raw_and_linux_cooked(tmp_path):
    ip = _eth_ipv4_udp("10.0.0.1", "10.0.0.9", 1000, 53, b"abc")
    sll = struct.pack("!HHH8sH", 0, 1, 6, b"\x00" * 8, 0x0800) + ip
    for lt, frame in ((101, ip), (228, ip), (113, sll)):
        path = tmp_path / f"lt{lt}.pcap"
        path.write_bytes(_classic([(T0, frame, len(frame))], linktype=lt))
        assert read_capture(path).packets[0].payload == b"abc"


def test_unsupported_linktype_and_fragments_counted(tmp_path):
    good = b"\x00" * 12 + b"\x08\x00" + _eth_ipv4_udp("10.0.0.1", "10.0.0.9", 1, 2, b"x")
    frag = b"\x00" * 12 + b"\x08\x00" + _eth_ipv4_udp("10.0.0.1", "10.0.0.9", 1, 2, b"y", frag=0x0010)
    path = tmp_path / "mix.pcap"
    path.write_bytes(_classic([(T0, good, len(good)), (T0 + 1, frag, len(frag)), (T0 + 2, b"\x00" * 10, 10)]))
    trace = read_capture(path)
    assert len(trace) == 1
    assert trace.skipped == {"ip_fragment": 1, "truncated_link": 1}
    assert len(trace) + trace.n_skipped == trace.total_frames


def test_pcapng(tmp_path):
    ip = _eth_ipv4_udp("10.0.0.1", "10.0.0.9", 1000, 53, b"ng")
    shb = struct.pack("<IIIHHq", 0x0A0D0D0A, 28, 0x1A2B3C4D, 1, 0, -1) + struct.pack("<I", 28)
    opts = struct.pack("<HHB3x", 9, 1, 9) + struct.pack("<HH", 0, 0)  # nanosecond ticks
    idb_body = struct.pack("<HHI", 101, 0, 65535) + opts
    idb = struct.pack("<II", 1, 12 + len(idb_body)) + idb_body + struct.pack("<I", 12 + len(idb_body))
    ticks = T0 * 1000 + 999
    pad = (-len(ip)) % 4
    epb_body = struct.pack("<IIIII", 0, ticks >> 32, ticks & 0xFFFFFFFF, len(ip), len(ip)) + ip + b"\0" * pad
    epb = struct.pack("<II", 6, 12 + len(epb_body)) + epb_body + struct.pack("<I", 12 + len(epb_body))
    path = tmp_path / "a.pcapng"
    path.write_bytes(shb + idb + epb)
    p = read_capture(path).packets[0]
    assert p.ts_us == T0
    assert p.payload == b"ng"


def test_errors(tmp_path):
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"not a capture file")
    with pytest.raises(UnrecognizedFormatError):
        read_capture(bad)
    with pytest.raises(CaptureError):
        read_capture(tmp_path / "missing.pcap")
    with pytest.raises(CaptureError):
        write_capture([], tmp_path / "no" / "such" / "dir.pcap")


def test_record_invariants():
    a, b = ipaddress.ip_address("10.0.0.1"), ipaddress.ip_address("10.0.0.2")
    with pytest.raises(ValueError):
        PacketRecord(0, a, b, IpProto.TCP, 1, 2, 10, bytes(10), 5)
    with pytest.raises(ValueError):
        PacketRecord(0, a, b, IpProto.OTHER, 1, 2, 0, b"", 40)
    with pytest.raises(ValueError):
        PacketRecord(0, a, b, IpProto.UDP, 1, 2, 10, bytes(4), 60)
    PacketRecord(0, a, b, IpProto.UDP, 1, 2, 10, bytes(4), 60, truncated=True)


def test_duration_and_order_with_nonmonotonic_timestamps(tmp_path):
    pkts = [rec(T0 + 50, C, S, b"a"), rec(T0, S, C, b"b"), rec(T0 + 20, C, S, b"c")]
    path = tmp_path / "nm.pcap"
    write_capture(pkts, path)
    trace = read_capture(path)
    assert [p.payload for p in trace.packets] == [b"a", b"b", b"c"]
    assert trace.duration_us == 50
    assert read_capture(path) == trace


addrs4 = st.integers(0, 2**32 - 1).map(ipaddress.IPv4Address)
addrs6 = st.integers(0, 2**128 - 1).map(ipaddress.IPv6Address)


@st.composite
def records(draw):
    v6 = draw(st.booleans())
    src, dst = (draw(addrs6), draw(addrs6)) if v6 else (draw(addrs4), draw(addrs4))
    proto = draw(st.sampled_from([IpProto.TCP, IpProto.UDP]))
    payload = draw(st.binary(max_size=300))
    r = PacketRecord(draw(st.integers(0, 2**32 * 10**6 - 1)), src, dst, proto,
                     draw(st.integers(0, 65535)), draw(st.integers(0, 65535)), len(payload), payload, 10**6)
    return PacketRecord(r.ts_us, src, dst, proto, r.src_port, r.dst_port, len(payload), payload,
                        synthesized_frame_len(r))


@settings(max_examples=40, deadline=None)
@given(st.lists(records(), min_size=1, max_size=30))
def test_roundtrip_property(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("rt") / "x.pcap"
    write_capture(recs, path)
    assert list(read_capture(path).packets) == recs
