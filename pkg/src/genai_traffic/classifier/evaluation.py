"""Seeded train/evaluate harness, occlusion runs and paired deltas."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, f1_score, precision_recall_fscore_support
from sklearn.model_selection import train_test_split

from .estimator import PayloadCNNClassifier
from .samples import SampleSet, Task


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    split: float = 0.8
    epochs: int = 30
    batch: int = 64
    lr: float = 1e-3
    dropout: float = 0.2
    dtype: str = "float32"

    def estimator(self, seed: Optional[int] = None) -> PayloadCNNClassifier:
        return PayloadCNNClassifier(
            dropout=self.dropout, learning_rate=self.lr, batch_size=self.batch,
            epochs=self.epochs, random_state=self.seed if seed is None else seed, dtype=self.dtype,
        )


def _check_trainable(y: np.ndarray) -> None:
    counts = Counter(y.tolist())
    if len(counts) < 2:
        raise ValueError("need at least two classes")
    single = sorted(c for c, n in counts.items() if n < 2)
    if single:
        raise ValueError(f"classes with fewer than 2 samples cannot be stratified: {single}")


def stratified_split(y, split: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y)
    _check_trainable(y)
    idx = np.arange(len(y))
    tr, te = train_test_split(idx, train_size=split, stratify=y, random_state=seed)
    return np.sort(tr), np.sort(te)


def train(samples: SampleSet, config: TrainConfig = TrainConfig(),
          indices: Optional[np.ndarray] = None) -> PayloadCNNClassifier:
    """Fit on ``samples`` (or the ``indices`` subset); returns the final-epoch model."""
    X, y = samples.X, samples.y
    if indices is not None:
        X, y = X[indices], y[indices]
    _check_trainable(y)
    return config.estimator().fit(X, y)


@dataclass
class RunResult:
    seed: int
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    confusion: list[list[float]]
    n_test: int
    n_masked: int


def evaluate(model: PayloadCNNClassifier, X, y, ranges=None, occlude: bool = False,
             seed: int = 0, classes: Optional[Sequence[str]] = None) -> RunResult:
    """Score one test set; with ``occlude`` the SNI ranges are zeroed first.

    Samples without a range take part unmasked; ``n_masked`` counts the rest.
    """
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("empty test set")
    labels = list(classes) if classes is not None else [str(c) for c in model.classes_]
    pred = model.predict(X, ranges if occlude else None)
    p, r, f, s = precision_recall_fscore_support(y, pred, labels=labels, zero_division=0)
    cm = confusion_matrix(y, pred, labels=labels).astype(float)
    rows = cm.sum(axis=1, keepdims=True)
    cm = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    n_masked = sum(1 for rg in ranges if rg is not None) if (occlude and ranges is not None) else 0
    return RunResult(
        seed, float(f1_score(y, pred, labels=labels, average="macro", zero_division=0)),
        p.tolist(), r.tolist(), f.tolist(), s.astype(int).tolist(), cm.tolist(), len(y), n_masked,
    )


@dataclass
class EvalReport:
    task: Task
    occluded: bool
    classes: list[str]
    runs: list[RunResult] = field(default_factory=list)

    @property
    def seeds(self) -> list[int]:
        return [r.seed for r in self.runs]

    @property
    def macro_f1_mean(self) -> float:
        return float(np.mean([r.macro_f1 for r in self.runs]))

    @property
    def macro_f1_std(self) -> float:
        # population std over repetitions
        return float(np.std([r.macro_f1 for r in self.runs]))

    def _mean(self, name: str) -> np.ndarray:
        return np.mean([getattr(r, name) for r in self.runs], axis=0)

    @property
    def confusion(self) -> np.ndarray:
        """Average of the per-run row-normalized matrices."""
        return self._mean("confusion")

    def per_class(self) -> list[dict]:
        p, r, f = self._mean("precision"), self._mean("recall"), self._mean("f1")
        return [{"class": c, "precision": float(p[i]), "recall": float(r[i]), "f1": float(f[i])}
                for i, c in enumerate(self.classes)]

    def to_dict(self) -> dict:
        return {
            "task": self.task.value, "occluded": self.occluded, "classes": self.classes,
            "f1_average": "macro",
            "macro_f1_mean": self.macro_f1_mean, "macro_f1_std": self.macro_f1_std,
            "per_class": self.per_class(), "confusion": self.confusion.tolist(),
            "runs": [asdict(r) for r in self.runs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(Task(d["task"]), bool(d["occluded"]), list(d["classes"]),
                   [RunResult(**r) for r in d["runs"]])

    def table(self) -> str:
        head = f"task={self.task.value} occluded={self.occluded} seeds={self.seeds}"
        lines = [head, f"macro F1 = {100 * self.macro_f1_mean:.2f} +- {100 * self.macro_f1_std:.2f} %",
                 f"{'class':<24}{'precision':>10}{'recall':>10}{'f1':>10}"]
        for row in self.per_class():
            lines.append(f"{row['class']:<24}{row['precision']:>10.4f}{row['recall']:>10.4f}{row['f1']:>10.4f}")
        return "\n".join(lines)


@dataclass
class Experiment:
    unmasked: EvalReport
    masked: EvalReport
    models: dict = field(default_factory=dict)


def run_experiment(samples: SampleSet, seeds: Sequence[int], config: TrainConfig = TrainConfig(),
                   keep_models: bool = False) -> Experiment:
    """One stratified split and training per seed, scored with and without occlusion."""
    classes = samples.classes
    X, y, ranges = samples.X, samples.y, samples.sni_ranges
    plain = EvalReport(samples.task, False, classes)
    masked = EvalReport(samples.task, True, classes)
    models = {}
    for seed in seeds:
        tr, te = stratified_split(y, config.split, seed)
        model = TrainConfig(**{**asdict(config), "seed": seed}).estimator().fit(X[tr], y[tr])
        te_ranges = [ranges[i] for i in te]
        plain.runs.append(evaluate(model, X[te], y[te], te_ranges, False, seed, classes))
        masked.runs.append(evaluate(model, X[te], y[te], te_ranges, True, seed, classes))
        if keep_models:
            models[seed] = model
    return Experiment(plain, masked, models)


@dataclass(frozen=True)
class OcclusionDelta:
    task: Task
    classes: list[str]
    macro_f1_delta: float
    recall_delta: list[float]
    confusion_shift: list[list[float]]
    per_seed: dict

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task"] = self.task.value
        return d


def occlusion_delta(unmasked: EvalReport, masked: EvalReport) -> OcclusionDelta:
    """masked minus unmasked, paired by seed."""
    if sorted(unmasked.seeds) != sorted(masked.seeds) or len(set(unmasked.seeds)) != len(unmasked.seeds):
        raise ValueError(f"reports are not paired: seeds {unmasked.seeds} vs {masked.seeds}")
    if unmasked.classes != masked.classes or unmasked.task != masked.task:
        raise ValueError("reports cover different tasks or classes")
    by_seed = {r.seed: r for r in masked.runs}
    per_seed = {}
    rec, conf = [], []
    for u in unmasked.runs:
        m = by_seed[u.seed]
        per_seed[u.seed] = m.macro_f1 - u.macro_f1
        rec.append(np.subtract(m.recall, u.recall))
        conf.append(np.subtract(m.confusion, u.confusion))
    return OcclusionDelta(
        unmasked.task, list(unmasked.classes), float(np.mean(list(per_seed.values()))),
        np.mean(rec, axis=0).tolist(), np.mean(conf, axis=0).tolist(), per_seed,
    )
