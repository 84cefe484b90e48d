"""Characterization, Markov modeling, protocol dissection and payload classification of app traffic captures."""

from .flows import Biflow, Content, FlowKey, LabelMap, apply_labels, assemble_biflows, load_label_map
from .pcapio import CaptureTrace, IpProto, PacketRecord, read_capture, write_capture

__all__ = [
    "Biflow", "CaptureTrace", "Content", "FlowKey", "IpProto", "LabelMap", "PacketRecord",
    "apply_labels", "assemble_biflows", "load_label_map", "read_capture", "write_capture",
]
