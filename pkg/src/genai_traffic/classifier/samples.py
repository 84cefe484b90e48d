"""Per-biflow payload vectors for the classifier, with SNI occlusion ranges."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .._validation import check_ranges
from ..dissect import FlowDissection, payload_stream
from ..flows import UNKNOWN_APP, Biflow

INPUT_LENGTH = 512


class Task(str, enum.Enum):
    APP = "APP"
    APP_CONTENT = "APP_CONTENT"


def class_name(flow: Biflow, task: Task) -> str:
    if task == Task.APP:
        return flow.app
    return f"{flow.app}:{flow.content.value}"


@dataclass(frozen=True)
class SampleVector:
    bytes: np.ndarray
    true_label: str
    sni_range: Optional[tuple[int, int]]
    flow_id: str


@dataclass
class SampleSet:
    samples: list[SampleVector]
    task: Task
    excluded: Counter = field(default_factory=Counter)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def X(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, INPUT_LENGTH), dtype=np.float32)
        return np.stack([s.bytes for s in self.samples])

    @property
    def y(self) -> np.ndarray:
        return np.array([s.true_label for s in self.samples])

    @property
    def sni_ranges(self) -> list:
        return [s.sni_range for s in self.samples]

    @property
    def classes(self) -> list[str]:
        return sorted({s.true_label for s in self.samples})


def encode_payload(data: bytes, length: int = INPUT_LENGTH) -> np.ndarray:
    """First ``length`` bytes scaled by 1/255, zero-padded."""
    out = np.zeros(length, dtype=np.float32)
    raw = np.frombuffer(data[:length], dtype=np.uint8)
    out[:raw.size] = raw / np.float32(255.0)
    return out


def clip_range(rng: Optional[tuple[int, int]], length: int = INPUT_LENGTH) -> Optional[tuple[int, int]]:
    if rng is None:
        return None
    off, n = rng
    if off >= length or n <= 0:
        return None
    return (off, min(off + n, length) - off)


def build_samples(biflows: Sequence[Biflow], task: Task | str,
                  dissections: Optional[Sequence[FlowDissection]] = None,
                  length: int = INPUT_LENGTH) -> SampleSet:
    """One vector per labeled biflow: payload of both directions in capture order.

    Flows with no payload, no label or the ``UNK`` app are left out and
    counted in ``excluded``.
    """
    task = Task(task)
    if dissections is not None and len(dissections) != len(biflows):
        raise ValueError("one dissection per biflow required")
    samples = []
    excluded: Counter = Counter()
    for i, flow in enumerate(biflows):
        if flow.app is None or flow.app == UNKNOWN_APP:
            excluded["unlabeled"] += 1
            continue
        data = payload_stream(flow, length)
        if not data:
            excluded["no_payload"] += 1
            continue
        rng = None
        if dissections is not None and dissections[i].tls is not None:
            rng = clip_range(dissections[i].tls.sni_range, length)
        samples.append(SampleVector(encode_payload(data, length), class_name(flow, task), rng, flow.flow_id))
    return SampleSet(samples, task, excluded)


def occlude(X: np.ndarray, ranges) -> np.ndarray:
    """Copy of ``X`` with each row's (offset, length) range set to zero.

    Parts of a range beyond the row are ignored, so a range entirely past
    the input window changes nothing.
    """
    X = np.array(X, copy=True)
    for i, r in enumerate(check_ranges(ranges, len(X))):
        if r is None:
            continue
        off, n = r
        X[i, off:off + n] = 0
    return X
