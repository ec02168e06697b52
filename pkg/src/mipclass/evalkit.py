"""Stratified patient-level folds, challenge metrics, and ensembling.

Metrics: micro-averaged one-vs-rest ROC AUC (Mann–Whitney with average
ranks), sensitivity at 90% specificity and specificity at 90% sensitivity
on the Malignant-vs-rest task (per-class variants also reported), their
arithmetic mean as the overall score, and argmax confusion matrices.

Thresholds are never interpolated: the metric enumerates every threshold
induced by a distinct score, plus the all-negative one, so results are
exactly reproducible by brute force.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateLabels, EmptyGroup, SchemaMismatch, TooFewPatients
from .tensorio import _write_file

NO_LESION, BENIGN, MALIGNANT = 0, 1, 2
CLASS_NAMES = ("nolesion", "benign", "malignant")
# Spelled-out forms used in manifest files; index = class integer.
LABEL_STRINGS = ("no_lesion", "benign", "malignant")
N_CLASSES = 3


def max_label(left: int, right: int) -> int:
    """Patient-level stratification label: the ordinal max of the two sides."""
    for value in (left, right):
        if value not in (NO_LESION, BENIGN, MALIGNANT):
            raise ValueError(f"labels must be 0, 1 or 2, got {value}")
    return max(left, right)


@dataclass(frozen=True)
class FoldPlan:
    """Patient → fold assignment with the stratification label per patient."""

    k: int
    assignment: Mapping[str, int]
    strat_labels: Mapping[str, int]

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        for patient, fold in self.assignment.items():
            if not 0 <= fold < self.k:
                raise ValueError(f"{patient}: fold {fold} outside [0, {self.k})")
        if set(self.assignment) != set(self.strat_labels):
            raise ValueError("assignment and stratification labels disagree on patients")

    def patients_in_fold(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.assignment.items() if f == fold)

    def validation_patients(self, fold: int) -> list[str]:
        return self.patients_in_fold(fold)

    def training_patients(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.assignment.items() if f != fold)


def stratified_kfold(
    patients: Sequence[str], labels: Sequence[int], k: int = 5, seed: int = 0
) -> FoldPlan:
    """Shuffle each label class (seeded) and deal its patients round-robin.

    Both breasts of a patient share the patient's fold by construction, so
    the split never leaks a patient across training and validation.
    """
    patients = list(patients)
    labels = [int(v) for v in labels]
    if len(patients) != len(labels):
        raise ValueError(f"{len(patients)} patients vs {len(labels)} labels")
    if len(set(patients)) != len(patients):
        raise ValueError("duplicate patient ids")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(patients) < k:
        raise TooFewPatients(f"need >= {k} patients for {k} folds, got {len(patients)}")

    rng = np.random.Generator(np.random.Philox(key=seed))
    assignment: dict[str, int] = {}
    for cls in sorted(set(labels)):
        members = sorted(p for p, lab in zip(patients, labels) if lab == cls)
        order = rng.permutation(len(members))
        for i, j in enumerate(order):
            assignment[members[j]] = i % k
    return FoldPlan(
        k=k,
        assignment=assignment,
        strat_labels=dict(zip(patients, labels)),
    )


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"AUC needs both classes, got {n_pos} pos / {n_neg} neg")
    ranks = _average_ranks(scores)
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_micro(probs: np.ndarray, truths: np.ndarray) -> float:
    """One-vs-rest micro AUC: flatten all (sample, class) pairs to one
    binary problem scored by the class probabilities."""
    probs = np.asarray(probs, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[1] != N_CLASSES:
        raise ValueError(f"probs must be (N, 3), got {probs.shape}")
    if truths.shape != (probs.shape[0],):
        raise ValueError(f"truths shape {truths.shape} does not match probs")
    onehot = np.zeros_like(probs, dtype=bool)
    onehot[np.arange(truths.size), truths] = True
    return _binary_auc(probs.ravel(), onehot.ravel())


def _counts_at_thresholds(scores: np.ndarray, positives: np.ndarray):
    """(sensitivity, specificity) at every distinct-score threshold plus +inf.

    Positive prediction means score >= threshold.  Rates are exact integer
    ratios so an enumeration oracle reproduces them bit-for-bit.
    """
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes, got {n_pos} pos / {n_neg} neg")
    thresholds = np.concatenate([np.unique(scores), [np.inf]])
    sens = np.empty(thresholds.size)
    spec = np.empty(thresholds.size)
    for i, t in enumerate(thresholds):
        pred_pos = scores >= t
        tp = int(np.count_nonzero(pred_pos & positives))
        tn = int(np.count_nonzero(~pred_pos & ~positives))
        sens[i] = tp / n_pos
        spec[i] = tn / n_neg
    return sens, spec


def sens_at_spec(scores: np.ndarray, positives: np.ndarray, spec_floor: float = 0.9) -> float:
    """Max sensitivity over thresholds whose specificity >= spec_floor."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    sens, spec = _counts_at_thresholds(scores, positives)
    qualified = spec >= spec_floor
    return float(sens[qualified].max()) if qualified.any() else 0.0


def spec_at_sens(scores: np.ndarray, positives: np.ndarray, sens_floor: float = 0.9) -> float:
    """Max specificity over thresholds whose sensitivity >= sens_floor."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    sens, spec = _counts_at_thresholds(scores, positives)
    qualified = sens >= sens_floor
    return float(spec[qualified].max()) if qualified.any() else 0.0


def overall_score(auc: float, sens: float, spec: float) -> float:
    """Arithmetic mean of the three challenge metrics."""
    for v in (auc, sens, spec):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"metrics must be in [0, 1], got {v}")
    return (auc + sens + spec) / 3.0


def confusion(probs: np.ndarray, truths: np.ndarray) -> np.ndarray:
    """3×3 counts[truth][argmax]; argmax ties go to the lower class index."""
    probs = np.asarray(probs, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.int64)
    preds = probs.argmax(axis=1)
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for t, p in zip(truths, preds):
        counts[t, p] += 1
    return counts


@dataclass(frozen=True)
class Prediction:
    """One model's class probabilities for one (patient, side)."""

    patient_id: str
    side: str
    probs: np.ndarray
    model_id: str = ""

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (N_CLASSES,):
            raise ValueError(f"probs must be length 3, got shape {probs.shape}")
        if probs.min() < 0:
            raise ValueError(f"probs must be >= 0, got {probs}")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probs must sum to 1 within 1e-9, got sum {probs.sum()!r}")
        object.__setattr__(self, "probs", probs)


def ensemble(group: Sequence[Prediction]) -> Prediction:
    """Mean of the member probabilities for one (patient, side) group."""
    members = list(group)
    if not members:
        raise EmptyGroup("cannot ensemble an empty prediction group")
    keys = {(p.patient_id, p.side) for p in members}
    if len(keys) != 1:
        raise ValueError(f"mixed (patient, side) in one ensemble group: {sorted(keys)}")
    stacked = np.stack([p.probs for p in members])
    if (stacked == stacked[0]).all():
        mean = stacked[0]  # unanimous members pass through bit-for-bit
    else:
        mean = stacked.mean(axis=0)
    return Prediction(
        patient_id=members[0].patient_id,
        side=members[0].side,
        probs=mean,  # convexity keeps it on the simplex within member tolerance
        model_id="ensemble",
    )


def ensemble_all(predictions: Iterable[Prediction]) -> list[Prediction]:
    """Group by (patient, side), ensemble each group, sort by key."""
    groups: dict[tuple[str, str], list[Prediction]] = {}
    for pred in predictions:
        groups.setdefault((pred.patient_id, pred.side), []).append(pred)
    return [ensemble(groups[key]) for key in sorted(groups)]


@dataclass(frozen=True)
class MetricsReport:
    auc: float
    sens_at_90spec: float
    spec_at_90sens: float
    score: float
    confusion: np.ndarray
    n: int
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("auc", "sens_at_90spec", "spec_at_90sens", "score"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if int(self.confusion.sum()) != self.n:
            raise ValueError(
                f"confusion total {int(self.confusion.sum())} != n={self.n}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "auc": self.auc,
            "sens_at_90spec": self.sens_at_90spec,
            "spec_at_90sens": self.spec_at_90sens,
            "score": self.score,
            "confusion": self.confusion.tolist(),
            "n": self.n,
            **self.extras,
        }


def evaluate(probs: np.ndarray, truths: np.ndarray) -> MetricsReport:
    """All challenge metrics for a batch of simplex rows and true labels.

    The headline sensitivity/specificity pair uses Malignant vs rest; the
    same pair for every class lands in ``extras`` for transparency.
    """
    probs = np.asarray(probs, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.int64)
    auc = roc_auc_micro(probs, truths)

    per_class: dict[str, Any] = {}
    headline: tuple[float, float] | None = None
    for cls, name in enumerate(CLASS_NAMES):
        positives = truths == cls
        if positives.any() and not positives.all():
            pair = (
                sens_at_spec(probs[:, cls], positives),
                spec_at_sens(probs[:, cls], positives),
            )
            per_class[f"sens_at_90spec_{name}"] = pair[0]
            per_class[f"spec_at_90sens_{name}"] = pair[1]
            if cls == MALIGNANT:
                headline = pair
    if headline is None:
        raise DegenerateLabels("malignant-vs-rest requires both classes present")

    sens, spec = headline
    return MetricsReport(
        auc=auc,
        sens_at_90spec=sens,
        spec_at_90sens=spec,
        score=overall_score(auc, sens, spec),
        confusion=confusion(probs, truths),
        n=int(truths.size),
        extras=per_class,
    )


CSV_HEADER = ("patient_id", "side", "p_nolesion", "p_benign", "p_malignant", "model_id")


def write_predictions_csv(predictions: Sequence[Prediction], path) -> None:
    """Deterministic CSV: sorted by (patient, side, model), 17-digit floats."""
    rows = sorted(predictions, key=lambda p: (p.patient_id, p.side, p.model_id))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in rows:
        writer.writerow(
            [p.patient_id, p.side] + [f"{v:.17g}" for v in p.probs] + [p.model_id]
        )
    _write_file(path, buffer.getvalue().encode("utf-8"))


def read_predictions_csv(path) -> list[Prediction]:
    out = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise SchemaMismatch(f"unexpected prediction CSV header: {header}")
        for row in reader:
            if len(row) != len(CSV_HEADER):
                raise SchemaMismatch(f"malformed prediction row: {row}")
            try:
                probs = np.array([float(row[2]), float(row[3]), float(row[4])])
            except ValueError as exc:
                raise SchemaMismatch(f"non-numeric probability in row: {row}") from exc
            out.append(
                Prediction(patient_id=row[0], side=row[1], probs=probs, model_id=row[5])
            )
    return out
