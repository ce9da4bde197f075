"""Run instrumentation: accuracy, cluster separation, empirical CE, exports."""

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import numcore
from .errors import InvalidInputError, UndefinedValueError

RECORD_FIELDS = (
    "epoch",
    "train_loss",
    "train_ce",
    "test_accuracy",
    "mean_norm_entropy",
    "mean_magnitude",
    "epoch_wall_seconds",
)

LINKAGE_SINGLE = "single"
LINKAGE_CENTROID = "centroid"


@dataclass
class RunRecord:
    """One epoch's metrics, in the column order used by the CSV export."""

    epoch: int
    train_loss: float
    train_ce: float
    test_accuracy: float
    mean_norm_entropy: float
    mean_magnitude: float
    epoch_wall_seconds: float


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax (ties to the lowest class index) equals the label."""
    z = np.asarray(logits)
    y = np.asarray(labels)
    if z.ndim != 2 or len(z) != len(y):
        raise InvalidInputError(f"logits {z.shape} and labels {y.shape} do not align")
    if len(z) == 0:
        raise InvalidInputError("accuracy of an empty batch is undefined")
    return float((z.argmax(axis=1) == y).mean())


def dunn_index(features: np.ndarray, labels: np.ndarray, linkage: str = LINKAGE_SINGLE) -> float:
    """Min inter-cluster distance over max intra-cluster mean pairwise distance.

    Inter-cluster distance is single-linkage (closest pair across the two
    clusters) by default; ``centroid`` measures between cluster means
    instead.  Intra-cluster compactness is the mean Euclidean distance
    over all unordered point pairs within each cluster.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(y):
        raise InvalidInputError(f"features {x.shape} and labels {y.shape} do not align")
    clusters = [np.flatnonzero(y == c) for c in np.unique(y)]
    if len(clusters) < 2 or any(len(c) < 2 for c in clusters):
        raise InvalidInputError("need >= 2 clusters with >= 2 points each")

    def pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        diff = a[:, None, :] - b[None, :, :]
        return np.sqrt((diff * diff).sum(axis=2))

    max_intra = 0.0
    for idx in clusters:
        d = pairwise(x[idx], x[idx])
        n = len(idx)
        mean_pair = d[np.triu_indices(n, k=1)].mean()
        max_intra = max(max_intra, float(mean_pair))
    min_inter = np.inf
    for i in range(len(clusters)):
        for j in range(i + 1, len(clusters)):
            if linkage == LINKAGE_CENTROID:
                delta = float(np.linalg.norm(x[clusters[i]].mean(axis=0) - x[clusters[j]].mean(axis=0)))
            else:
                delta = float(pairwise(x[clusters[i]], x[clusters[j]]).min())
            min_inter = min(min_inter, delta)
    if max_intra == 0.0:
        raise UndefinedValueError("max intra-cluster spread is zero; index undefined")
    return float(min_inter / max_intra)


def empirical_ce(net, images: np.ndarray, labels: np.ndarray, mean, std, batch_size: int = 512) -> float:
    """Mean cross-entropy of the network over a dataset, in eval mode.

    Equals the mean of the per-sample cross-entropy values exactly (the
    per-sample terms are computed one by one with the same routine used
    for training losses).
    """
    from .data import normalize  # local import to avoid a module cycle

    n = len(images)
    if n == 0:
        raise InvalidInputError("empirical CE of an empty dataset is undefined")
    total = 0.0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        trace = net.forward(normalize(images[start:stop], mean, std), mode="eval")
        logits = np.asarray(trace.logits, dtype=np.float64)
        for row, label in zip(logits, labels[start:stop]):
            total += numcore.cross_entropy(row, int(label))
    return total / n


def _format(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def export_csv(records: list[RunRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for rec in records:
            d = asdict(rec)
            writer.writerow([_format(d[f]) for f in RECORD_FIELDS])


def export_json(records: list[RunRecord], path) -> None:
    with open(path, "w") as fh:
        json.dump([asdict(r) for r in records], fh, indent=2)
        fh.write("\n")


def export(records: list[RunRecord], path, fmt: str) -> None:
    if fmt == "csv":
        export_csv(records, path)
    elif fmt == "json":
        export_json(records, path)
    else:
        raise InvalidInputError(f"unknown export format {fmt!r}")


def read_records_csv(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        RunRecord(
            epoch=int(r["epoch"]),
            **{f: float(r[f]) for f in RECORD_FIELDS if f != "epoch"},
        )
        for r in rows
    ]
