"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_payload_matrix(X, input_length: int, dtype=np.float32) -> np.ndarray:
    """2-D array of byte values scaled to [0, 1], one row per biflow."""
    X = check_array(X, dtype=[np.float32, np.float64], ensure_2d=True)
    if X.shape[1] != input_length:
        raise ValueError(f"expected {input_length} payload bytes per sample, got {X.shape[1]}")
    if X.size and (X.min() < 0 or X.max() > 1):
        raise ValueError("payload values must be scaled to [0, 1]")
    return X.astype(dtype, copy=False)


def check_ranges(ranges, n_samples: int) -> list:
    """Normalize per-sample (offset, length) ranges; ``None`` entries mean nothing to mask."""
    if ranges is None:
        return [None] * n_samples
    ranges = list(ranges)
    if len(ranges) != n_samples:
        raise ValueError(f"{len(ranges)} occlusion ranges for {n_samples} samples")
    out = []
    for r in ranges:
        if r is None:
            out.append(None)
            continue
        off, length = int(r[0]), int(r[1])
        if off < 0 or length < 0:
            raise ValueError(f"invalid occlusion range {r!r}")
        out.append((off, length))
    return out
