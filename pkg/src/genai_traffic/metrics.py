"""Per-group trace summaries and time-windowed byte/packet rates."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .flows import DOWNSTREAM, Biflow, Content

SUMMARY_COLUMNS = (
    "app", "content", "biflows", "packets_total", "packets_down_pct",
    "volume_bytes", "volume_down_pct", "wire_bytes", "wire_down_pct",
)
RATE_COLUMNS = ("group", "capture", "window", "up_bytes", "down_bytes", "up_pkts", "down_pkts")


def _pct(part: int, total: int) -> float:
    return 100.0 * part / total if total else 0.0


@dataclass(frozen=True)
class TraceSummary:
    group: tuple[str, Content]
    biflows: int
    packets_total: int
    packets_down: int
    volume_bytes: int
    volume_down: int
    wire_bytes: int
    wire_down: int

    @property
    def packets_down_pct(self) -> float:
        return _pct(self.packets_down, self.packets_total)

    @property
    def volume_down_pct(self) -> float:
        return _pct(self.volume_down, self.volume_bytes)

    @property
    def wire_down_pct(self) -> float:
        return _pct(self.wire_down, self.wire_bytes)

    def as_row(self) -> dict:
        app, content = self.group
        return {
            "app": app,
            "content": content.value,
            "biflows": self.biflows,
            "packets_total": self.packets_total,
            "packets_down_pct": round(self.packets_down_pct, 4),
            "volume_bytes": self.volume_bytes,
            "volume_down_pct": round(self.volume_down_pct, 4),
            "wire_bytes": self.wire_bytes,
            "wire_down_pct": round(self.wire_down_pct, 4),
        }


def group_key(flow: Biflow) -> tuple[str, Content]:
    if flow.label is None:
        raise ValueError(f"biflow {flow.flow_id} is not labeled")
    return flow.label


def group_biflows(biflows: Iterable[Biflow]) -> dict[tuple[str, Content], list[Biflow]]:
    groups: dict[tuple[str, Content], list[Biflow]] = defaultdict(list)
    for flow in biflows:
        groups[group_key(flow)].append(flow)
    return dict(sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value)))


def summarize(biflows: Iterable[Biflow]) -> list[TraceSummary]:
    """One summary per (app, content) group; empty groups never appear."""
    out = []
    for group, flows in group_biflows(biflows).items():
        n_pkts = n_down = vol = vol_down = wire = wire_down = 0
        for flow in flows:
            for pkt, d in flow.items():
                n_pkts += 1
                vol += pkt.payload_len
                wire += pkt.wire_len
                if d == DOWNSTREAM:
                    n_down += 1
                    vol_down += pkt.payload_len
                    wire_down += pkt.wire_len
        out.append(TraceSummary(group, len(flows), n_pkts, n_down, vol, vol_down, wire, wire_down))
    return out


@dataclass(frozen=True)
class Window:
    index: int
    up_bytes: int
    down_bytes: int
    up_pkts: int
    down_pkts: int

    @property
    def is_empty(self) -> bool:
        return not (self.up_bytes or self.down_bytes or self.up_pkts or self.down_pkts)


@dataclass(frozen=True)
class RateSeries:
    delta_s: float
    t0_us: int
    windows: tuple[Window, ...]
    empty_excluded: int
    source_path: str = ""

    @property
    def n_windows(self) -> int:
        return len(self.windows) + self.empty_excluded

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(w, name) for w in self.windows], dtype=np.int64)


def _delta_us(delta_s: float) -> int:
    if delta_s <= 0:
        raise ValueError("delta_s must be positive")
    d = int(round(delta_s * 1_000_000))
    if d <= 0:
        raise ValueError("delta_s below one microsecond")
    return d


def _window_counters(biflows: Sequence[Biflow], delta_s: float, t0_us: Optional[int]):
    dus = _delta_us(delta_s)
    ts, nbytes, down = [], [], []
    for flow in biflows:
        for pkt, d in flow.items():
            ts.append(pkt.ts_us)
            nbytes.append(pkt.payload_len)
            down.append(d == DOWNSTREAM)
    if not ts:
        return 0, np.zeros((0, 4), dtype=np.int64)
    ts_a = np.asarray(ts, dtype=np.int64)
    t0 = int(ts_a.min()) if t0_us is None else t0_us
    if ts_a.min() < t0:
        raise ValueError("packet earlier than t0")
    # half-open windows: a packet at exactly t0 + i*delta opens window i+1
    idx = (ts_a - t0) // dus
    n = int(idx.max()) + 1
    b = np.asarray(nbytes, dtype=np.int64)
    dn = np.asarray(down, dtype=bool)
    counters = np.zeros((n, 4), dtype=np.int64)
    np.add.at(counters[:, 0], idx[~dn], b[~dn])
    np.add.at(counters[:, 1], idx[dn], b[dn])
    np.add.at(counters[:, 2], idx[~dn], 1)
    np.add.at(counters[:, 3], idx[dn], 1)
    return t0, counters


def rate_series(biflows: Sequence[Biflow], delta_s: float = 1.0, t0_us: Optional[int] = None) -> RateSeries:
    """Windowed up/down byte and packet counts; all-zero windows are dropped.

    Window ``i`` (1-based) covers ``[t0 + (i-1)*delta, t0 + i*delta)``. The
    timeline has ``floor(D/delta) + 1`` windows so the last packet is always
    inside one.
    """
    biflows = list(biflows)
    t0, counters = _window_counters(biflows, delta_s, t0_us)
    windows = []
    excluded = 0
    for i, row in enumerate(counters, start=1):
        w = Window(i, *(int(v) for v in row))
        if w.is_empty:
            excluded += 1
        else:
            windows.append(w)
    source = biflows[0].source_path if biflows else ""
    return RateSeries(delta_s, t0, tuple(windows), excluded, source)


def capture_rate_series(biflows: Iterable[Biflow], delta_s: float = 1.0) -> list[RateSeries]:
    """One series per capture file, each aligned to that capture's first packet."""
    per_capture: dict[str, list[Biflow]] = defaultdict(list)
    for flow in biflows:
        per_capture[flow.source_path].append(flow)
    return [rate_series(flows, delta_s) for _, flows in sorted(per_capture.items())]


@dataclass(frozen=True)
class RateStats:
    metric: str
    n_windows: int
    q1: float
    median: float
    q3: float
    mean: float


def rate_distribution(series: Iterable[RateSeries]) -> list[RateStats]:
    """Quartiles of per-window rates (B/s and pkt/s) pooled over retained windows."""
    series = list(series)
    out = []
    for metric in ("down_bytes", "up_bytes", "down_pkts", "up_pkts"):
        vals = []
        for s in series:
            vals.append(s.column(metric) / s.delta_s)
        v = np.concatenate(vals) if vals else np.zeros(0)
        if v.size == 0:
            out.append(RateStats(metric, 0, float("nan"), float("nan"), float("nan"), float("nan")))
            continue
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        out.append(RateStats(metric, int(v.size), float(q1), float(med), float(q3), float(v.mean())))
    return out


@dataclass(frozen=True)
class DirectionalProfile:
    delta_s: float
    t0_us: int
    up_bytes: np.ndarray = field(repr=False)
    down_bytes: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.up_bytes)


def directional_profile(biflows: Sequence[Biflow], delta_s: float = 1.0,
                        t0_us: Optional[int] = None) -> DirectionalProfile:
    """Full up/down byte timeline, silent windows kept as zeros."""
    t0, counters = _window_counters(list(biflows), delta_s, t0_us)
    return DirectionalProfile(delta_s, t0, counters[:, 0].copy(), counters[:, 1].copy())
