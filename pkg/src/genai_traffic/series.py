"""Per-biflow PL / IAT / DIR sequences over the first N payload-carrying packets."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .flows import Biflow

DEFAULT_N = 50


class Metric(str, enum.Enum):
    PL = "PL"
    IAT = "IAT"
    DIR = "DIR"


@dataclass(frozen=True)
class FlowVector:
    pl: np.ndarray
    iat_us: np.ndarray
    dir: np.ndarray
    clamped: int = 0

    def __len__(self) -> int:
        return len(self.pl)

    def metric(self, metric: Metric | str) -> np.ndarray:
        metric = Metric(metric)
        return {Metric.PL: self.pl, Metric.IAT: self.iat_us, Metric.DIR: self.dir}[metric]


def nonzero_payload(flow: Biflow) -> tuple[list, list]:
    """Packets (and their directions) carrying transport payload, capture order."""
    pkts, dirs = [], []
    for pkt, d in flow.items():
        if pkt.payload_len > 0:
            pkts.append(pkt)
            dirs.append(d)
    return pkts, dirs


def extract_flow_vector(flow: Biflow, n: int = DEFAULT_N) -> FlowVector:
    if n < 1:
        raise ValueError("n must be >= 1")
    pkts, dirs = nonzero_payload(flow)
    pkts, dirs = pkts[:n], dirs[:n]
    ts = np.array([p.ts_us for p in pkts], dtype=np.int64)
    iat = np.zeros(len(ts), dtype=np.int64)
    if len(ts) > 1:
        iat[1:] = np.diff(ts)
    clamped = int((iat < 0).sum())
    np.maximum(iat, 0, out=iat)
    return FlowVector(
        np.array([p.payload_len for p in pkts], dtype=np.int64),
        iat,
        np.array(dirs, dtype=np.int64),
        clamped,
    )


@dataclass(frozen=True)
class AggregatedSeries:
    metric: Metric
    mean_at_index: np.ndarray
    support_at_index: np.ndarray


def aggregate(vectors: Iterable[FlowVector], metric: Metric | str, n: int | None = None) -> AggregatedSeries:
    """Variable-support mean: index k averages over vectors longer than k."""
    metric = Metric(metric)
    seqs = [v.metric(metric) for v in vectors if len(v)]
    if not seqs:
        raise ValueError("cannot aggregate: no nonempty flow vectors")
    width = max(len(s) for s in seqs) if n is None else n
    sums = np.zeros(width, dtype=np.float64)
    support = np.zeros(width, dtype=np.int64)
    for s in seqs:
        s = s[:width]
        sums[:len(s)] += s
        support[:len(s)] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(support > 0, sums / np.maximum(support, 1), np.nan)
    return AggregatedSeries(metric, mean, support)


def heatmap_matrix(groups: dict[str, Sequence[FlowVector]], metric: Metric | str,
                   n: int = DEFAULT_N) -> tuple[list[str], np.ndarray]:
    """Rows = group names, columns = packet index (NaN where no flow reaches it)."""
    names, rows = [], []
    for name, vectors in groups.items():
        if not any(len(v) for v in vectors):
            continue
        names.append(name)
        rows.append(aggregate(vectors, metric, n).mean_at_index)
    return names, np.vstack(rows) if rows else np.zeros((0, n))


class FlowSeriesExtractor(TransformerMixin, BaseEstimator):
    """Turn biflows into fixed-width (n_flows, 3, n) PL/IAT/DIR arrays.

    Missing positions hold ``fill_value``; stateless, ``fit`` is a no-op.
    """

    def __init__(self, n: int = DEFAULT_N, fill_value: float = np.nan):
        self.n = n
        self.fill_value = fill_value

    def fit(self, X, y=None):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        return self

    def transform(self, X: Sequence[Biflow]) -> np.ndarray:
        out = np.full((len(X), 3, self.n), self.fill_value, dtype=np.float64)
        for i, flow in enumerate(X):
            v = extract_flow_vector(flow, self.n)
            k = len(v)
            out[i, 0, :k] = v.pl
            out[i, 1, :k] = v.iat_us
            out[i, 2, :k] = v.dir
        return out
