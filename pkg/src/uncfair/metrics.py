"""Reliability diagram bins and expected calibration error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ReliabilityBins:
    edges: np.ndarray          # B+1 edges, bin b covers (edges[b], edges[b+1]]
    counts: np.ndarray
    confidence: list           # mean confidence per bin, None when empty
    accuracy: list             # empirical accuracy per bin, None when empty
    ece: float

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    def rows(self):
        for b in range(self.n_bins):
            yield (b, float(self.edges[b]), float(self.edges[b + 1]), int(self.counts[b]),
                   self.confidence[b], self.accuracy[b])


def bin_index(confidences, n_bins: int) -> np.ndarray:
    """Map confidences in (0, 1] to half-open bins ((b-1)/B, b/B]."""
    edges = np.arange(n_bins + 1) / n_bins
    return np.searchsorted(edges, confidences, side="left") - 1


def reliability(confidences, correct, n_bins: int = 10) -> ReliabilityBins:
    if n_bins < 1:
        raise ValueError("need at least one bin")
    conf = np.asarray(confidences, dtype=np.float64)
    hit = np.asarray(correct, dtype=bool)
    if conf.shape != hit.shape:
        raise ValueError("confidences and correct differ in length")
    if conf.size and (conf.min() <= 0.0 or conf.max() > 1.0):
        raise ValueError("confidences must lie in (0, 1]")
    idx = bin_index(conf, n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    n = conf.size
    mean_conf, mean_acc, ece = [], [], 0.0
    for b in range(n_bins):
        m = idx == b
        if not m.any():
            mean_conf.append(None)
            mean_acc.append(None)
            continue
        c, a = float(conf[m].mean()), float(hit[m].mean())
        mean_conf.append(c)
        mean_acc.append(a)
        ece += counts[b] / n * abs(a - c)
    return ReliabilityBins(np.arange(n_bins + 1) / n_bins, counts, mean_conf, mean_acc,
                           float(ece))


def confidence_and_correct(mean_probs, labels):
    """Max-class confidence of the MC-mean probabilities and hit indicator."""
    mean_probs = np.asarray(mean_probs)
    pred = np.argmax(mean_probs, axis=1)
    return mean_probs.max(axis=1), pred == np.asarray(labels)
