import pytest
from hypothesis import given
from hypothesis import strategies as st

from genai_traffic.dissect.quic import (
    QuicError,
    Reason,
    build_client_initial,
    decrypt_quic_initial,
    encode_varint,
    header_protection_mask,
    initial_keys,
    parse_long_header,
    read_varint,
    reassemble_crypto,
)
from genai_traffic.dissect.tls import TlsVersion, build_client_hello, parse_client_hello, parse_server_hello


def h(v, key):
    return bytes.fromhex(v[key])


def test_published_keys(rfc_vectors):
    dcid = h(rfc_vectors, "client_dcid")
    c, s = initial_keys(dcid), initial_keys(dcid, server=True)
    assert c.secret == h(rfc_vectors, "client_initial_secret")
    assert (c.key, c.iv, c.hp) == (h(rfc_vectors, "client_key"), h(rfc_vectors, "client_iv"), h(rfc_vectors, "client_hp"))
    assert s.secret == h(rfc_vectors, "server_initial_secret")
    assert (s.key, s.iv, s.hp) == (h(rfc_vectors, "server_key"), h(rfc_vectors, "server_iv"), h(rfc_vectors, "server_hp"))


def test_header_protection_mask(rfc_vectors):
    pkt = h(rfc_vectors, "long_client_encrypted_packet")
    pn_off = len(h(rfc_vectors, "long_client_plain_header")) - 4
    sample = pkt[pn_off + 4:pn_off + 20]
    assert header_protection_mask(h(rfc_vectors, "client_hp"), sample) == h(rfc_vectors, "client_hp_mask")


def test_client_initial_plaintext(rfc_vectors):
    pkt = h(rfc_vectors, "long_client_encrypted_packet")
    ini = decrypt_quic_initial(pkt)
    assert ini.plaintext == h(rfc_vectors, "long_client_plain_payload")
    assert ini.packet_number == rfc_vectors["long_client_packet_number"]
    assert ini.header.dcid == h(rfc_vectors, "client_dcid")
    ch = parse_client_hello(reassemble_crypto(ini.crypto), records=False)
    assert ch.sni == "example.com"


def test_server_initial(rfc_vectors):
    pkt = h(rfc_vectors, "long_server_encrypted_packet")
    ini = decrypt_quic_initial(pkt, server=True, dcid=h(rfc_vectors, "client_dcid"))
    assert ini.plaintext == h(rfc_vectors, "long_server_plain_payload")
    assert ini.packet_number == rfc_vectors["long_server_packet_number"]
    assert parse_server_hello(reassemble_crypto(ini.crypto), records=False).version == TlsVersion.TLS1_3
    with pytest.raises(ValueError):
        decrypt_quic_initial(pkt, server=True)


@pytest.mark.parametrize("where", [30, 200, 1100, -1])
def test_flipped_byte_fails_authentication(rfc_vectors, where):
    pkt = bytearray(h(rfc_vectors, "long_client_encrypted_packet"))
    pkt[where] ^= 0x01
    with pytest.raises(QuicError) as exc:
        decrypt_quic_initial(bytes(pkt))
    assert exc.value.reason == Reason.QUIC_AUTH_FAILED


def test_other_versions_and_types(rfc_vectors):
    pkt = bytearray(h(rfc_vectors, "long_client_encrypted_packet"))
    v2 = bytes(pkt[:1]) + bytes.fromhex("6b3343cf") + bytes(pkt[5:])
    with pytest.raises(QuicError) as exc:
        decrypt_quic_initial(v2)
    assert exc.value.reason == Reason.QUIC_UNSUPPORTED_VERSION
    handshake = bytes([0xE0 | (pkt[0] & 0x0F)]) + bytes(pkt[1:])
    with pytest.raises(QuicError) as exc:
        parse_long_header(handshake)
    assert exc.value.reason == Reason.QUIC_NOT_INITIAL
    with pytest.raises(QuicError) as exc:
        parse_long_header(b"\x40" + bytes(30))
    assert exc.value.reason == Reason.QUIC_NOT_LONG_HEADER


def test_build_round_trip():
    hello = build_client_hello("chat.example.net")
    dcid, scid = bytes(range(8)), bytes(range(8, 16))
    pkt = build_client_initial(hello, dcid, scid, pn=7)
    assert len(pkt) == 1200
    ini = decrypt_quic_initial(pkt)
    assert ini.packet_number == 7 and ini.header.scid == scid
    assert reassemble_crypto(ini.crypto) == hello
    srv = build_client_initial(b"\x02\x00\x00\x00", scid, b"", server=True, keys_dcid=dcid)
    assert reassemble_crypto(decrypt_quic_initial(srv, server=True, dcid=dcid).crypto) == b"\x02\x00\x00\x00"


def test_crypto_reassembly_order_and_gap():
    assert reassemble_crypto([(5, b"world"), (0, b"hello")]) == b"helloworld"
    assert reassemble_crypto([(0, b"abc"), (2, b"cdef")]) == b"abcdef"
    assert reassemble_crypto([(0, b"ab"), (5, b"zz")]) == b"ab"


def test_published_varints():
    for hexstr, value in (("c2197c5eff14e88c", 151288809941952652), ("9d7f3e7d", 494878333),
                          ("7bbd", 15293), ("25", 37), ("4025", 37)):
        assert read_varint(bytes.fromhex(hexstr), 0) == (value, len(hexstr) // 2)


@given(st.integers(0, (1 << 62) - 1))
def test_varint_round_trip(v):
    enc = encode_varint(v)
    assert read_varint(enc, 0) == (v, len(enc))
