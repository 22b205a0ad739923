"""Keypoint error and classification reports."""
from dataclasses import dataclass, field

import numpy as np

from dfr.data.disguises import DISGUISE_IDS, NO_DISGUISE
from dfr.errors import DimensionError, ParameterError
from dfr.keypoints import KEYPOINT_NAMES, N_KEYPOINTS

# threshold for "detected" keypoints, in pixels of a 227x227 image
REFERENCE_SIZE = 227
DEFAULT_THRESHOLD = 5.0

HISTOGRAM_EDGES = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 7.5, 10.0, 15.0, 20.0, np.inf)
CURVE_THRESHOLDS = tuple(np.round(np.arange(0.5, 10.01, 0.5), 2))

# published accuracies (%) on the simple and complex-background sets
REFERENCE_RESULTS = (
    ("Dhamecha et al.", 65.2, 53.4),
    ("Singh et al.", 78.4, 62.6),
    ("DFR (published)", 86.6, 72.4),
)


def scaled_threshold(image_size, threshold=DEFAULT_THRESHOLD):
    """Convert a threshold given at 227x227 scale to pixels of ``image_size``."""
    return threshold * image_size / REFERENCE_SIZE


@dataclass
class KeypointErrorReport:
    """Per-keypoint Euclidean errors plus the overall coordinate MAE.

    ``histogram[k]`` counts samples whose keypoint ``k`` error falls in each
    ``HISTOGRAM_EDGES`` bin, so every row sums to ``n_samples``.
    """

    n_samples: int
    per_keypoint_error: np.ndarray
    histogram: np.ndarray
    mae: float
    threshold: float
    accuracy: float
    curve: list = field(default_factory=list)  # (threshold px, accuracy)

    def __eq__(self, other):
        if not isinstance(other, KeypointErrorReport):
            return NotImplemented
        return (
            self.n_samples == other.n_samples
            and np.array_equal(self.per_keypoint_error, other.per_keypoint_error, equal_nan=True)
            and np.array_equal(self.histogram, other.histogram)
            and _same(self.mae, other.mae)
            and self.threshold == other.threshold
            and _same(self.accuracy, other.accuracy)
            and [tuple(c) for c in self.curve] == [tuple(c) for c in other.curve]
        )


def _same(a, b):
    return a == b or (np.isnan(a) and np.isnan(b))


def _coords(kps):
    return np.asarray(getattr(kps, "points", kps), dtype=np.float64).reshape(N_KEYPOINTS, 2)


def keypoint_errors(preds, gts, threshold=DEFAULT_THRESHOLD) -> KeypointErrorReport:
    """Compare predicted and annotated keypoints sample by sample.

    ``threshold`` is in the pixels of the given coordinates.
    """
    if len(preds) != len(gts):
        raise ParameterError(f"{len(preds)} predictions but {len(gts)} ground truths")
    n = len(preds)
    if n == 0:
        return KeypointErrorReport(
            0, np.full(N_KEYPOINTS, np.nan), np.zeros((N_KEYPOINTS, len(HISTOGRAM_EDGES) - 1), dtype=int),
            float("nan"), threshold, float("nan"), [],
        )
    P = np.stack([_coords(p) for p in preds])
    G = np.stack([_coords(g) for g in gts])
    diff = P - G
    dist = np.sqrt((diff ** 2).sum(axis=2))  # (n, 20)
    hist = np.stack([np.histogram(dist[:, k], bins=HISTOGRAM_EDGES)[0] for k in range(N_KEYPOINTS)])
    curve = [(float(t), float((dist <= t).mean())) for t in CURVE_THRESHOLDS]
    return KeypointErrorReport(
        n_samples=n,
        per_keypoint_error=dist.mean(axis=0),
        histogram=hist.astype(int),
        mae=float(np.abs(diff).mean()),
        threshold=float(threshold),
        accuracy=float((dist <= threshold).mean()),
        curve=curve,
    )


@dataclass
class ClassificationReport:
    """Overall and per-disguise accuracy with a subject confusion matrix.

    ``per_disguise`` maps every disguise id to ``(correct, total)``;
    ``confusion[i, j]`` counts samples of ``labels[i]`` predicted as
    ``labels[j]``.
    """

    labels: list
    confusion: np.ndarray
    per_disguise: dict
    reference: tuple = REFERENCE_RESULTS

    @property
    def total(self):
        return int(self.confusion.sum())

    @property
    def accuracy(self):
        return float(np.trace(self.confusion) / self.total) if self.total else float("nan")

    def disguise_accuracy(self, disguise_id):
        correct, total = self.per_disguise[disguise_id]
        return correct / total if total else float("nan")

    def __eq__(self, other):
        if not isinstance(other, ClassificationReport):
            return NotImplemented
        return (
            list(self.labels) == list(other.labels)
            and np.array_equal(self.confusion, other.confusion)
            and self.per_disguise == other.per_disguise
            and tuple(map(tuple, self.reference)) == tuple(map(tuple, other.reference))
        )


KNOWN_DISGUISES = DISGUISE_IDS + (NO_DISGUISE,)


def classification_report(predicted, truth, disguise_ids) -> ClassificationReport:
    if not len(predicted) == len(truth) == len(disguise_ids):
        raise ParameterError(
            f"lengths differ: {len(predicted)} predicted, {len(truth)} true, {len(disguise_ids)} disguise ids"
        )
    for d in disguise_ids:
        if d not in KNOWN_DISGUISES:
            raise ParameterError(f"unknown disguise id {d!r}")
    labels = sorted(set(truth) | set(predicted))
    pos = {lab: i for i, lab in enumerate(labels)}
    confusion = np.zeros((len(labels), len(labels)), dtype=int)
    for p, t in zip(predicted, truth):
        confusion[pos[t], pos[p]] += 1
    ids = list(DISGUISE_IDS)
    if NO_DISGUISE in disguise_ids:
        ids.append(NO_DISGUISE)
    per = {d: (0, 0) for d in ids}
    for p, t, d in zip(predicted, truth, disguise_ids):
        c, n = per[d]
        per[d] = (c + int(p == t), n + 1)
    return ClassificationReport(labels, confusion, per)


def recomposed_accuracy(report: ClassificationReport):
    """Overall accuracy rebuilt from per-disguise accuracies weighted by subset size."""
    total = sum(n for _, n in report.per_disguise.values())
    if not total:
        return float("nan")
    return sum(report.disguise_accuracy(d) * n for d, (_, n) in report.per_disguise.items() if n) / total


def check_consistency(report: ClassificationReport, tol=1e-12):
    """Raise if the report's internal totals disagree."""
    if report.confusion.shape != (len(report.labels),) * 2:
        raise DimensionError("confusion matrix does not match label list")
    if sum(n for _, n in report.per_disguise.values()) != report.total:
        raise ParameterError("per-disguise totals do not add up to the confusion total")
    if report.total and abs(recomposed_accuracy(report) - report.accuracy) > tol:
        raise ParameterError("per-disguise accuracies do not recompose the overall accuracy")
    return True


KEYPOINT_LABELS = KEYPOINT_NAMES
