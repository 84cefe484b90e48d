"""scikit-learn compatible wrapper around :class:`CnnNetwork`."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_is_fitted

from .._validation import check_payload_matrix
from .network import PARAM_NAMES, Adam, Architecture, CnnNetwork
from .samples import occlude

CHECKPOINT_FORMAT = "genai-traffic/cnn-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class PayloadCNNClassifier(ClassifierMixin, BaseEstimator):
    """1-D CNN over the first payload bytes of a biflow.

    Training is deterministic for a given ``random_state``: weight init,
    minibatch order and dropout masks come from independent child streams
    of one seed.
    """

    def __init__(self, input_length=512, filters=(16, 32), kernel_size=25, pool_size=3,
                 dense_units=256, dropout=0.2, learning_rate=1e-3, batch_size=64, epochs=30,
                 random_state=0, dtype="float32", verbose=0):
        self.input_length = input_length
        self.filters = filters
        self.kernel_size = kernel_size
        self.pool_size = pool_size
        self.dense_units = dense_units
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state
        self.dtype = dtype
        self.verbose = verbose

    def _architecture(self, n_classes: int) -> Architecture:
        return Architecture(self.input_length, tuple(self.filters), self.kernel_size,
                            self.pool_size, self.dense_units, n_classes)

    def fit(self, X, y):
        X = check_payload_matrix(X, self.input_length, np.dtype(self.dtype))
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError("X and y have different lengths")
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes to train")
        yi = self._encoder.transform(y)

        init_ss, order_ss, drop_ss = np.random.SeedSequence(self.random_state).spawn(3)
        arch = self._architecture(len(self.classes_))
        net = CnnNetwork.initialize(arch, np.random.default_rng(init_ss).integers(2**63),
                                    self.dropout, np.dtype(self.dtype))
        order_rng = np.random.default_rng(order_ss)
        drop_rng = np.random.default_rng(drop_ss)
        opt = Adam(net.params, lr=self.learning_rate)
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            perm = order_rng.permutation(len(X))
            total = 0.0
            for start in range(0, len(X), self.batch_size):
                idx = perm[start:start + self.batch_size]
                mask = net.dropout_mask(len(idx), drop_rng) if self.dropout > 0 else None
                loss, grads = net.loss_and_grads(X[idx], yi[idx], mask)
                opt.step(net.params, grads)
                total += loss * len(idx)
            self.loss_curve_.append(total / len(X))
            if self.verbose:
                print(f"epoch {epoch + 1}/{self.epochs} loss {self.loss_curve_[-1]:.5f}")
        self.network_ = net
        self.n_features_in_ = self.input_length
        return self

    def decision_function(self, X, occlusion_ranges=None) -> np.ndarray:
        """Logits; ``occlusion_ranges`` zero the given bytes first."""
        check_is_fitted(self, "network_")
        X = check_payload_matrix(X, self.input_length, self.network_.dtype)
        if occlusion_ranges is not None:
            X = occlude(X, occlusion_ranges)
        return np.concatenate([self.network_.forward(X[i:i + 256]) for i in range(0, len(X), 256)]) \
            if len(X) else np.zeros((0, len(self.classes_)), dtype=self.network_.dtype)

    def predict_proba(self, X, occlusion_ranges=None) -> np.ndarray:
        logits = self.decision_function(X, occlusion_ranges)
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X, occlusion_ranges=None) -> np.ndarray:
        return self.classes_[self.decision_function(X, occlusion_ranges).argmax(axis=1)]

    # ------------------------------------------------------------ checkpoints

    def save(self, path, extra: dict | None = None) -> None:
        """Versioned ``.npz``: weights plus a JSON header with shapes, seed and config."""
        check_is_fitted(self, "network_")
        meta = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "params": self.get_params(),
            "classes": [str(c) for c in self.classes_],
            "shapes": {k: list(v.shape) for k, v in self.network_.params.items()},
            "seed": self.random_state,
            "loss_curve": [float(v) for v in self.loss_curve_],
            "extra": extra or {},
        }
        meta["params"]["filters"] = list(meta["params"]["filters"])
        arrays = {k: self.network_.params[k] for k in PARAM_NAMES}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path) -> "PayloadCNNClassifier":
        try:
            with np.load(Path(path), allow_pickle=False) as z:
                meta = json.loads(bytes(z["__meta__"]).decode())
                arrays = {k: z[k] for k in PARAM_NAMES}
        except (OSError, KeyError, ValueError) as exc:
            raise CheckpointError(f"{path}: not a classifier checkpoint ({exc})") from None
        if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint format/version")
        params = dict(meta["params"])
        params["filters"] = tuple(params["filters"])
        est = cls(**params)
        est.classes_ = np.array(meta["classes"])
        est._encoder = LabelEncoder().fit(est.classes_)
        arch = est._architecture(len(est.classes_))
        est.network_ = CnnNetwork(arch, arrays, est.dropout)
        est.loss_curve_ = meta.get("loss_curve", [])
        est.n_features_in_ = est.input_length
        est.checkpoint_meta_ = meta
        return est
