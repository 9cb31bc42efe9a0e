"""Evaluation: accuracy, binary AUC, calibration error, entropy, OOD protocol.

The calibration binning is upper-closed, ((m-1)/M, m/M], with confidence 0
assigned to the first bin. The OOD protocol pools validation and test
uncertainties, min-max scales the pool to [0, 1], and thresholds at a
percentile of the pooled scaled values; samples strictly above the threshold
are flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated sample: prediction, its confidence, uncertainty, truth."""

    predicted: int
    confidence: float
    uncertainty: float
    label: int
    id: str

    def __post_init__(self):
        conf, u = float(self.confidence), float(self.uncertainty)
        tol = 1e-9
        if not (-tol <= conf <= 1.0 + tol):
            raise ValueError("confidence must lie in [0, 1]")
        if not (-tol <= u <= 1.0 + tol):
            raise ValueError("uncertainty must lie in [0, 1]")
        object.__setattr__(self, "predicted", int(self.predicted))
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "uncertainty", u)
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "id", str(self.id))

    @property
    def correct(self) -> bool:
        return self.predicted == self.label


def _bin_index(confidences: np.ndarray, num_bins: int) -> np.ndarray:
    # ((m-1)/M, m/M] binning: ceil(conf*M) - 1, with conf == 0 kept in bin 0.
    idx = np.ceil(confidences * num_bins).astype(int) - 1
    idx[confidences <= 0.0] = 0
    return np.clip(idx, 0, num_bins - 1)


def ece(records, num_bins: int) -> float:
    """Expected calibration error over upper-closed confidence bins."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    if num_bins < 1:
        raise ValueError("need at least one bin")
    conf = np.array([r.confidence for r in records])
    correct = np.array([r.correct for r in records], dtype=float)
    idx = _bin_index(conf, num_bins)
    total = 0.0
    for m in range(num_bins):
        mask = idx == m
        if mask.any():
            total += mask.mean() * abs(correct[mask].mean() - conf[mask].mean())
    return float(total)


def accuracy(records) -> float:
    records = list(records)
    if not records:
        raise ValueError("no records")
    return float(np.mean([r.correct for r in records]))


def auc_binary(scores, labels) -> float:
    """Rank-statistic AUC for binary labels, ties getting half credit."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores and labels must be matching nonempty vectors")
    if not set(np.unique(labels)) <= {0, 1}:
        raise ValueError("labels must be 0/1")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    ranks[order] = np.arange(1, scores.size + 1)
    # average ranks within tie groups
    uniq, inverse = np.unique(scores, return_inverse=True)
    rank_sum = np.bincount(inverse, weights=ranks)
    group_n = np.bincount(inverse)
    ranks = (rank_sum / group_n)[inverse]
    u_stat = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def predictive_entropy(probs) -> float:
    """Shannon entropy -sum p ln p of a probability vector, 0 ln 0 = 0."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size < 2 or np.any(~np.isfinite(p)) or np.any(p < -1e-9):
        raise ValueError("probs must be a finite nonnegative vector")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("probs must sum to 1")
    pos = p > 0.0
    return float(-(p[pos] * np.log(p[pos])).sum())


@dataclass(frozen=True, eq=False)
class OodResult:
    """Flags for the test pool plus the shared scaled axis and threshold."""

    flags: np.ndarray
    threshold: float
    scaled_val: np.ndarray
    scaled_test: np.ndarray


def ood_detect(val_uncertainties, test_uncertainties, percentile: float = 50.0) -> OodResult:
    """Pooled min-max scaling with a percentile threshold.

    Validation and test uncertainties are pooled, scaled together to [0, 1],
    and the threshold is the given percentile of the pooled scaled values.
    Test samples strictly above the threshold are flagged.
    """
    val = np.asarray(val_uncertainties, dtype=float)
    test = np.asarray(test_uncertainties, dtype=float)
    if val.size == 0 or test.size == 0:
        raise ValueError("both uncertainty pools must be nonempty")
    if not 0.0 <= percentile <= 100.0:
        raise ValueError("percentile must lie in [0, 100]")
    pool = np.concatenate([val, test])
    lo, hi = float(pool.min()), float(pool.max())
    if hi - lo <= 0.0:
        raise ValueError("uncertainty pool is constant; nothing to scale")
    scaled_val = (val - lo) / (hi - lo)
    scaled_test = (test - lo) / (hi - lo)
    threshold = float(np.percentile(np.concatenate([scaled_val, scaled_test]), percentile))
    return OodResult(scaled_test > threshold, threshold, scaled_val, scaled_test)


def metrics_report(records, num_bins: int = 10) -> dict:
    """The standard JSON-shaped report: acc, auc, ece, n, per-bin stats.

    AUC is binary-only; for more classes it is reported as None. The score
    for AUC is the record's confidence when class 1 is predicted, else its
    complement, which equals the class-1 expected probability for K = 2.
    """
    records = list(records)
    acc = accuracy(records)
    num_classes = max(max(r.label for r in records), max(r.predicted for r in records)) + 1
    auc = None
    if num_classes == 2:
        labels = np.array([r.label for r in records])
        scores = np.array(
            [r.confidence if r.predicted == 1 else 1.0 - r.confidence for r in records]
        )
        if len(set(labels.tolist())) == 2:
            auc = auc_binary(scores, labels)
    conf = np.array([r.confidence for r in records])
    correct = np.array([r.correct for r in records], dtype=float)
    idx = _bin_index(conf, num_bins)
    bins = []
    for m in range(num_bins):
        mask = idx == m
        bins.append(
            {
                "lo": m / num_bins,
                "hi": (m + 1) / num_bins,
                "count": int(mask.sum()),
                "acc": float(correct[mask].mean()) if mask.any() else None,
                "conf": float(conf[mask].mean()) if mask.any() else None,
            }
        )
    return {
        "acc": acc,
        "auc": auc,
        "ece": ece(records, num_bins),
        "n": len(records),
        "bins": bins,
    }
