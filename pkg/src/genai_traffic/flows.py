"""Bidirectional flow (biflow) assembly and sidecar labeling."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import jsonschema

from .pcapio import CaptureTrace, IPAddress, IpProto, PacketRecord

UPSTREAM = -1
DOWNSTREAM = +1
UNKNOWN_APP = "UNK"

Endpoint = tuple[IPAddress, int]


class Content(str, enum.Enum):
    TEXT = "TEXT"
    MULTIMODAL = "MULTIMODAL"
    NONE = "NONE"


def _endpoint_sort_key(ep: Endpoint) -> tuple[int, int, int]:
    addr, port = ep
    return (addr.version, int(addr), port)


@dataclass(frozen=True)
class FlowKey:
    proto: IpProto
    endpoint_a: Endpoint
    endpoint_b: Endpoint

    @classmethod
    def from_packet(cls, pkt: PacketRecord) -> "FlowKey":
        a, b = pkt.src, pkt.dst
        if _endpoint_sort_key(b) < _endpoint_sort_key(a):
            a, b = b, a
        return cls(pkt.ip_proto, a, b)

    def sort_key(self) -> tuple:
        return (int(self.proto), _endpoint_sort_key(self.endpoint_a), _endpoint_sort_key(self.endpoint_b))

    def __str__(self) -> str:
        (aa, ap), (ba, bp) = self.endpoint_a, self.endpoint_b
        return f"{self.proto.name} {aa}:{ap} <-> {ba}:{bp}"


@dataclass(frozen=True)
class Biflow:
    key: FlowKey
    client: Endpoint
    packets: tuple[PacketRecord, ...]
    dirs: tuple[int, ...]
    app: Optional[str] = None
    content: Optional[Content] = None
    source_path: str = ""

    @property
    def server(self) -> Endpoint:
        a, b = self.key.endpoint_a, self.key.endpoint_b
        return b if a == self.client else a

    @property
    def first_ts_us(self) -> int:
        return min(p.ts_us for p in self.packets)

    @property
    def last_ts_us(self) -> int:
        return max(p.ts_us for p in self.packets)

    @property
    def proto(self) -> IpProto:
        return self.key.proto

    @property
    def flow_id(self) -> str:
        return f"{Path(self.source_path).name}#{self.key}"

    @property
    def label(self) -> Optional[tuple[str, Content]]:
        if self.app is None:
            return None
        return (self.app, self.content or Content.NONE)

    def __len__(self) -> int:
        return len(self.packets)

    def items(self):
        return zip(self.packets, self.dirs)


def _is_private(addr: IPAddress) -> bool:
    return addr.is_private or addr.is_link_local or addr.is_loopback


def assemble_biflows(trace: CaptureTrace | Iterable[PacketRecord], client_rule: str = "first",
                     source_path: str | None = None) -> list[Biflow]:
    """Group TCP/UDP packets by canonical 5-tuple.

    ``client_rule="first"`` makes the sender of the earliest packet the
    client. ``"private"`` prefers a private-address endpoint facing a public
    one, which helps for captures that start mid-flow; it falls back to the
    first sender when both or neither side is private.
    """
    if client_rule not in ("first", "private"):
        raise ValueError(f"unknown client_rule {client_rule!r}")
    if isinstance(trace, CaptureTrace):
        packets: Sequence[PacketRecord] = trace.packets
        source = trace.source_path if source_path is None else source_path
    else:
        packets = list(trace)
        source = source_path or ""

    groups: dict[FlowKey, list[PacketRecord]] = {}
    for pkt in packets:
        if pkt.ip_proto not in (IpProto.TCP, IpProto.UDP):
            continue
        groups.setdefault(FlowKey.from_packet(pkt), []).append(pkt)

    flows = []
    for key, pkts in groups.items():
        first = min(pkts, key=lambda p: p.ts_us)
        client = first.src
        if client_rule == "private":
            src_priv, dst_priv = _is_private(first.src_addr), _is_private(first.dst_addr)
            if dst_priv and not src_priv:
                client = first.dst
        dirs = tuple(UPSTREAM if p.src == client else DOWNSTREAM for p in pkts)
        flows.append(Biflow(key, client, tuple(pkts), dirs, source_path=source))
    flows.sort(key=lambda f: (f.first_ts_us, f.key.sort_key()))
    return flows


# ---------------------------------------------------------------- labels

LABEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["capture_meta", "entries"],
    "properties": {
        "capture_meta": {
            "type": "object",
            "additionalProperties": False,
            "required": ["app", "content"],
            "properties": {
                "app": {"type": "string", "minLength": 1},
                "content": {"enum": [c.value for c in Content]},
            },
        },
        "entries": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["addr", "port", "app"],
                "properties": {
                    "addr": {"type": "string"},
                    "port": {"type": "integer", "minimum": 0, "maximum": 65535},
                    "app": {"type": "string", "minLength": 1},
                },
            },
        },
    },
}


class LabelFileError(ValueError):
    pass


@dataclass(frozen=True)
class LabelMap:
    entries: dict[Endpoint, str]
    app: str
    content: Content

    @classmethod
    def from_dict(cls, doc: dict, source: str = "<labels>") -> "LabelMap":
        import ipaddress

        try:
            jsonschema.validate(doc, LABEL_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise LabelFileError(f"{source}: field {where}: {exc.message}") from None
        entries: dict[Endpoint, str] = {}
        for i, ent in enumerate(doc["entries"]):
            try:
                addr = ipaddress.ip_address(ent["addr"])
            except ValueError:
                raise LabelFileError(
                    f"{source}: field entries/{i}/addr: invalid IP address {ent['addr']!r}"
                ) from None
            ep = (addr, ent["port"])
            if ep in entries:
                raise LabelFileError(
                    f"{source}: field entries/{i}: duplicate endpoint {addr}:{ent['port']}"
                )
            entries[ep] = ent["app"]
        meta = doc["capture_meta"]
        return cls(entries, meta["app"], Content(meta["content"]))

    def to_dict(self) -> dict:
        return {
            "capture_meta": {"app": self.app, "content": self.content.value},
            "entries": [
                {"addr": str(a), "port": p, "app": app}
                for (a, p), app in sorted(self.entries.items(), key=lambda kv: _endpoint_sort_key(kv[0]))
            ],
        }


def load_label_map(path: str | Path) -> LabelMap:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LabelFileError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LabelFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return LabelMap.from_dict(doc, str(path))


def save_label_map(label_map: LabelMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(label_map.to_dict(), indent=2) + "\n")


def sidecar_path(capture_path: str | Path) -> Path:
    """``foo.pcap`` -> ``foo.labels.json``."""
    p = Path(capture_path)
    return p.with_name(p.stem + ".labels.json")


def apply_labels(biflows: Iterable[Biflow], label_map: LabelMap) -> list[Biflow]:
    """Label each biflow from its server endpoint.

    A device-side (client) endpoint entry, as a socket table would list it,
    is accepted when the server endpoint is not listed.
    """
    out = []
    for flow in biflows:
        app = label_map.entries.get(flow.server) or label_map.entries.get(flow.client)
        if app is None:
            out.append(replace(flow, app=UNKNOWN_APP, content=Content.NONE))
        else:
            out.append(replace(flow, app=app, content=label_map.content))
    return out
