"""Multimodal Markov chains over joint (payload-length bin, direction) states.

Payload lengths are quantized with a deterministic 1-D K-means. The chain
has ``2k`` states: index ``b`` is downstream bin ``b`` and ``k + b`` is
upstream bin ``b``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .flows import DOWNSTREAM, UPSTREAM, Biflow
from .series import nonzero_payload

MODEL_FORMAT = "genai-traffic/markov"
MODEL_VERSION = 1


# ---------------------------------------------------------------- binning


@dataclass(frozen=True)
class PlBinning:
    centroids: np.ndarray
    n_iter: int = 0
    seed: Optional[int] = None

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("centroids must be a nonempty 1-D array")
        if np.any(np.diff(c) <= 0):
            raise ValueError("centroids must be strictly increasing")
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return self.centroids.size

    @property
    def boundaries(self) -> np.ndarray:
        c = self.centroids
        return (c[:-1] + c[1:]) / 2.0

    def assign(self, values) -> np.ndarray:
        """Nearest-centroid index; a value on a boundary goes to the lower bin."""
        return np.searchsorted(self.boundaries, np.asarray(values, dtype=np.float64), side="left")

    def quantize(self, values) -> np.ndarray:
        return self.centroids[self.assign(values)]

    def sse(self, values) -> float:
        v = np.asarray(values, dtype=np.float64)
        return float(((v - self.quantize(v)) ** 2).sum())


def _kmeanspp(x: np.ndarray, w: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.choice(x.size, p=w / w.sum())]]
    d2 = (x - centers[0]) ** 2
    for _ in range(1, k):
        p = w * d2
        total = p.sum()
        if total <= 0:
            # every remaining point already sits on a center
            free = np.setdiff1d(x, centers)
            centers.append(free[0])
        else:
            centers.append(x[rng.choice(x.size, p=p / total)])
        d2 = np.minimum(d2, (x - centers[-1]) ** 2)
    return np.sort(np.asarray(centers, dtype=np.float64))


def fit_binning(pl_values, k: int = 50, seed: int = 0, max_iter: int = 300) -> PlBinning:
    """Lloyd's algorithm on 1-D data with k-means++ seeding.

    Runs on the distinct values weighted by multiplicity. Clusters that
    empty out are re-seeded with the point farthest from its centroid.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    values = np.asarray(pl_values, dtype=np.float64).ravel()
    x, w = np.unique(values, return_counts=True)
    w = w.astype(np.float64)
    if x.size < k:
        raise ValueError(f"only {x.size} distinct values for k={k}; choose k <= {x.size}")
    rng = np.random.default_rng(seed)
    c = _kmeanspp(x, w, k, rng)

    labels = None
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new = np.searchsorted((c[:-1] + c[1:]) / 2.0, x, side="left")
        sums = np.bincount(new, weights=w * x, minlength=k)
        cnt = np.bincount(new, weights=w, minlength=k)
        empty = np.flatnonzero(cnt == 0)
        if empty.size:
            c = c.copy()
            dist = np.abs(x - c[new])
            taken = set(c.tolist())
            for e in empty:
                for j in np.argsort(-dist, kind="stable"):
                    if x[j] not in taken:
                        break
                c[e] = x[j]
                taken.add(x[j])
                dist[j] = -1.0
            nonempty = cnt > 0
            c[nonempty] = sums[nonempty] / cnt[nonempty]
            c = np.sort(c)
            labels = None
            continue
        c = sums / cnt
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    # a fixpoint of 1-D Lloyd with nonempty clusters gives distinct centroids
    return PlBinning(np.sort(c), n_iter=n_iter, seed=seed)


class PLBinner(TransformerMixin, BaseEstimator):
    """K-means payload-length quantizer; ``transform`` returns bin indices."""

    def __init__(self, n_bins: int = 50, random_state: int = 0, max_iter: int = 300):
        self.n_bins = n_bins
        self.random_state = random_state
        self.max_iter = max_iter

    def fit(self, X, y=None):
        x = np.asarray(X, dtype=np.float64).ravel()
        self.binning_ = fit_binning(x, self.n_bins, self.random_state, self.max_iter)
        self.centroids_ = self.binning_.centroids
        self.boundaries_ = self.binning_.boundaries
        self.n_iter_ = self.binning_.n_iter
        self.inertia_ = self.binning_.sse(x)
        return self

    def transform(self, X):
        check_is_fitted(self, "binning_")
        return self.binning_.assign(np.asarray(X, dtype=np.float64).ravel())

    def inverse_transform(self, X):
        check_is_fitted(self, "binning_")
        return self.centroids_[np.asarray(X, dtype=np.int64)]


# ---------------------------------------------------------------- chain


def state_index(bins: np.ndarray, dirs: np.ndarray, k: int) -> np.ndarray:
    dirs = np.asarray(dirs)
    if not np.all((dirs == DOWNSTREAM) | (dirs == UPSTREAM)):
        raise ValueError("directions must be +1 or -1")
    return np.asarray(bins, dtype=np.int64) + np.where(dirs == UPSTREAM, k, 0)


def state_bin_dir(states: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    states = np.asarray(states, dtype=np.int64)
    return states % k, np.where(states >= k, UPSTREAM, DOWNSTREAM)


@dataclass
class MarkovModel:
    binning: PlBinning
    counts: np.ndarray
    initial_counts: np.ndarray
    seed: Optional[int] = None
    provenance: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.binning.k

    @property
    def n_states(self) -> int:
        return 2 * self.k

    @property
    def dead_rows(self) -> np.ndarray:
        """Rows never left during fitting (no outgoing transition observed)."""
        return self.counts.sum(axis=1) == 0

    @property
    def transition(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    @property
    def initial(self) -> np.ndarray:
        return self.initial_counts / self.initial_counts.sum()

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "k": self.k,
            "state_order": "downstream bins 0..k-1, then upstream bins 0..k-1",
            "centroids": self.binning.centroids.tolist(),
            "binning_seed": self.binning.seed,
            "seed": self.seed,
            "counts": self.counts.tolist(),
            "initial_counts": self.initial_counts.tolist(),
            "transition": self.transition.tolist(),
            "initial": self.initial.tolist(),
            "dead_rows": np.flatnonzero(self.dead_rows).tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MarkovModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a Markov model document")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        binning = PlBinning(np.asarray(doc["centroids"]), seed=doc.get("binning_seed"))
        counts = np.asarray(doc["counts"], dtype=np.int64)
        init = np.asarray(doc["initial_counts"], dtype=np.int64)
        if counts.shape != (2 * binning.k, 2 * binning.k) or init.shape != (2 * binning.k,):
            raise ValueError("count shapes do not match the binning")
        return cls(binning, counts, init, doc.get("seed"), doc.get("provenance", {}))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "MarkovModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def flow_states(flow: Biflow, binning: PlBinning) -> np.ndarray:
    pkts, dirs = nonzero_payload(flow)
    if not pkts:
        return np.zeros(0, dtype=np.int64)
    pl = np.array([p.payload_len for p in pkts])
    return state_index(binning.assign(pl), np.array(dirs), binning.k)


def count_transitions(sequences: Iterable[np.ndarray], n_states: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.zeros((n_states, n_states), dtype=np.int64)
    initial = np.zeros(n_states, dtype=np.int64)
    for s in sequences:
        if len(s) == 0:
            continue
        initial[s[0]] += 1
        if len(s) > 1:
            np.add.at(counts, (s[:-1], s[1:]), 1)
    return counts, initial


def fit_sequences(sequences: Iterable, binning: PlBinning, seed: Optional[int] = None,
                  provenance: Optional[dict] = None) -> MarkovModel:
    """Fit from per-flow ``(pl, dir)`` sequences; transitions stay within a sequence."""
    states = []
    for seq in sequences:
        arr = np.asarray(seq).reshape(-1, 2)
        arr = arr[arr[:, 0] > 0]
        states.append(state_index(binning.assign(arr[:, 0]), arr[:, 1], binning.k))
    counts, initial = count_transitions(states, 2 * binning.k)
    if initial.sum() == 0:
        raise ValueError("no payload-carrying packets to fit a Markov model")
    return MarkovModel(binning, counts, initial, seed, provenance or {})


def fit_model(biflows: Sequence[Biflow], binning: PlBinning, seed: Optional[int] = None,
              provenance: Optional[dict] = None) -> MarkovModel:
    counts, initial = count_transitions((flow_states(f, binning) for f in biflows), 2 * binning.k)
    if initial.sum() == 0:
        raise ValueError("no payload-carrying packets to fit a Markov model")
    return MarkovModel(binning, counts, initial, seed, provenance or {})


def flow_pl_values(biflows: Iterable[Biflow]) -> np.ndarray:
    vals = [p.payload_len for f in biflows for p in f.packets if p.payload_len > 0]
    return np.asarray(vals, dtype=np.int64)


@dataclass(frozen=True)
class GeneratedSequence:
    pl: np.ndarray
    dir: np.ndarray
    states: np.ndarray
    fallbacks: int

    def __len__(self) -> int:
        return len(self.states)


def generate(model: MarkovModel, length: int, seed: int = 0) -> GeneratedSequence:
    """Sample a (pl, dir) sequence; pl is the rounded centroid of the drawn bin.

    Leaving a state with no observed transitions restarts from the initial
    distribution; such events are counted in ``fallbacks``.
    """
    if length < 0:
        raise ValueError("length must be >= 0")
    rng = np.random.default_rng(seed)
    if length == 0:
        empty = np.zeros(0, dtype=np.int64)
        return GeneratedSequence(empty, empty, empty, 0)
    cum_init = np.cumsum(model.initial)
    cum = np.cumsum(model.transition, axis=1)
    dead = model.dead_rows
    u = rng.random(length)
    states = np.empty(length, dtype=np.int64)
    fallbacks = 0
    n = model.n_states
    s = min(int(np.searchsorted(cum_init, u[0], side="right")), n - 1)
    states[0] = s
    for i in range(1, length):
        if dead[s]:
            fallbacks += 1
            s = int(np.searchsorted(cum_init, u[i], side="right"))
        else:
            s = int(np.searchsorted(cum[s], u[i], side="right"))
        s = min(s, n - 1)
        states[i] = s
    bins, dirs = state_bin_dir(states, model.k)
    pl = np.rint(model.binning.centroids[bins]).astype(np.int64)
    return GeneratedSequence(pl, dirs, states, fallbacks)


def render_matrix(model_or_matrix, k: Optional[int] = None) -> np.ndarray:
    """Reorder a transition matrix for display.

    Rows are the current state, columns the next one, laid out like a
    Cartesian plane centred on the matrix: downstream states occupy the top
    rows and right columns, with bin indices growing away from the centre.
    Quadrant 1 (top-right) is down->down, 2 down->up, 3 up->up and
    4 (bottom-right) up->down.
    """
    if isinstance(model_or_matrix, MarkovModel):
        P, k = model_or_matrix.transition, model_or_matrix.k
    else:
        P = np.asarray(model_or_matrix)
        if k is None:
            k = P.shape[0] // 2
    down = np.arange(k)
    up = k + np.arange(k)
    rows = np.concatenate([down[::-1], up])
    cols = np.concatenate([up[::-1], down])
    return P[np.ix_(rows, cols)]


def quadrant(rendered: np.ndarray, q: int) -> np.ndarray:
    k = rendered.shape[0] // 2
    return {
        1: rendered[:k, k:],
        2: rendered[:k, :k],
        3: rendered[k:, :k],
        4: rendered[k:, k:],
    }[q]


def digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class MultimodalMarkovChain(BaseEstimator):
    """Estimator wrapper: ``fit`` on biflows or on per-flow ``(pl, dir)`` arrays."""

    def __init__(self, n_bins: int = 50, random_state: int = 0, binning: Optional[PlBinning] = None):
        self.n_bins = n_bins
        self.random_state = random_state
        self.binning = binning

    def fit(self, X, y=None):
        flows = list(X)
        is_biflow = bool(flows) and isinstance(flows[0], Biflow)
        if is_biflow:
            pl = flow_pl_values(flows)
        else:
            seqs = [np.asarray(s).reshape(-1, 2) for s in flows]
            pl = np.concatenate([s[s[:, 0] > 0, 0] for s in seqs]) if seqs else np.zeros(0)
        binning = self.binning or fit_binning(pl, self.n_bins, self.random_state)
        if is_biflow:
            self.model_ = fit_model(flows, binning, self.random_state)
        else:
            self.model_ = fit_sequences(seqs, binning, self.random_state)
        self.transition_ = self.model_.transition
        self.initial_ = self.model_.initial
        return self

    def sample(self, length: int, random_state: Optional[int] = None) -> GeneratedSequence:
        check_is_fitted(self, "model_")
        seed = self.random_state if random_state is None else random_state
        return generate(self.model_, length, seed)
