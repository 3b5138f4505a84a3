"""Group fairness ratios, per-group performance and kNN consistency.

Every ratio is ``G0 quantity / G1 quantity``. A ratio is flagged unfair by
the four-fifths rule: ``min(F, 1/F) < 1 - tau``, which treats a group and its
complement alike (swapping groups never changes a flag). Quantities whose
denominator vanishes are reported as undefined (``None``) and flagged, never
as NaN or infinity.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .uncertainty import GroupUncertainty

DEGENERATE = 1e-12


def _rate(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


@dataclass(frozen=True)
class PerformanceMeasures:
    tp: int
    fp: int
    tn: int
    fn: int
    acc: float
    ppv: float | None
    npv: float | None
    fpr: float | None
    fnr: float | None

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def performance_measures(preds, labels) -> PerformanceMeasures:
    preds = np.asarray(preds).astype(np.int64)
    labels = np.asarray(labels).astype(np.int64)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels differ in length")
    if preds.size == 0:
        raise ValueError("no samples")
    if not (np.isin(preds, (0, 1)).all() and np.isin(labels, (0, 1)).all()):
        raise ValueError("preds and labels must be binary")
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    return PerformanceMeasures(
        tp, fp, tn, fn,
        acc=(tp + tn) / preds.size,
        ppv=_rate(tp, tp + fp),
        npv=_rate(tn, tn + fn),
        fpr=_rate(fp, fp + tn),
        fnr=_rate(fn, fn + tp),
    )


@dataclass(frozen=True)
class GroupAudit:
    group: int
    performance: PerformanceMeasures
    uncertainty: GroupUncertainty
    positive_rate: float  # P(Yhat=1 | G)
    # P(Yhat=1 | Y=y, G) for y = 0, 1; None if the group lacks that label
    positive_rate_given_y: tuple[float | None, float | None]

    @property
    def false_negative_rate(self) -> float | None:
        # P(Yhat=0 | Y=1, G)
        p1 = self.positive_rate_given_y[1]
        return None if p1 is None else 1.0 - p1

    @property
    def size(self) -> int:
        return self.uncertainty.count


def group_audit(group: int, preds, labels, uncertainty: GroupUncertainty) -> GroupAudit:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    perf = performance_measures(preds, labels)
    given = tuple(
        float(preds[labels == y].mean()) if (labels == y).any() else None for y in (0, 1)
    )
    return GroupAudit(group, perf, uncertainty, float(preds.mean()), given)


@dataclass(frozen=True)
class Ratio:
    value: float | None
    unfair: bool
    reason: str = ""

    @property
    def defined(self) -> bool:
        return self.value is not None


def fairness_ratio(num, den, tau: float) -> Ratio:
    if num is None or den is None:
        return Ratio(None, True, "quantity undefined for a group")
    if abs(den) < DEGENERATE:
        return Ratio(None, True, "degenerate denominator")
    value = num / den
    return Ratio(value, is_unfair(value, tau))


def is_unfair(value: float, tau: float) -> bool:
    if value <= 0:
        return True
    return bool(min(value, 1.0 / value) < 1.0 - tau)


RATIO_NAMES = ("F_SP", "F_EOpp", "F_EOdd", "F_EAcc", "F_Epis", "F_Alea", "F_Pred")
POINT_RATIOS = RATIO_NAMES[:4]
UNCERTAINTY_RATIOS = RATIO_NAMES[4:]


@dataclass(frozen=True)
class FairnessReport:
    ratios: dict[str, Ratio]
    eodd_per_label: dict[int, Ratio]
    group_sizes: tuple[int, int]
    tau: float
    extra: dict = field(default_factory=dict)

    def value(self, name: str) -> float | None:
        return self.ratios[name].value

    def flags(self) -> dict[str, bool]:
        return {k: r.unfair for k, r in self.ratios.items()}

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "group_sizes": list(self.group_sizes),
            "ratios": {k: asdict(r) for k, r in self.ratios.items()},
            "eodd_per_label": {str(k): asdict(r) for k, r in self.eodd_per_label.items()},
            **self.extra,
        }


def _worst(ratios) -> Ratio:
    # farthest from 1 on a log scale so F and 1/F rank equally; undefined wins
    undefined = [r for r in ratios if not r.defined]
    if undefined:
        return undefined[0]
    dist = [abs(np.log(r.value)) if r.value > 0 else np.inf for r in ratios]
    best = 0
    for i, d in enumerate(dist[1:], 1):
        # near-ties (0.75 vs 4/3) go to the lower label, so swapping groups
        # picks the same label and yields the exact reciprocal
        if d > dist[best] + 1e-12:
            best = i
    return ratios[best]


def group_fairness(a0: GroupAudit, a1: GroupAudit, tau: float = 0.2) -> FairnessReport:
    """All fairness ratios between minority audit ``a0`` and majority ``a1``.

    Equalized odds is computed separately for ``Y=0`` and ``Y=1``; the
    headline value is whichever of the two lies farthest from parity.
    """
    if a0.size < 1 or a1.size < 1:
        raise ValueError("both groups must be non-empty")
    eodd = {
        y: fairness_ratio(a0.positive_rate_given_y[y], a1.positive_rate_given_y[y], tau)
        for y in (0, 1)
    }
    u0, u1 = a0.uncertainty, a1.uncertainty
    ratios = {
        "F_SP": fairness_ratio(a0.positive_rate, a1.positive_rate, tau),
        "F_EOpp": fairness_ratio(a0.false_negative_rate, a1.false_negative_rate, tau),
        "F_EOdd": _worst([eodd[0], eodd[1]]),
        "F_EAcc": fairness_ratio(a0.performance.acc, a1.performance.acc, tau),
        "F_Epis": fairness_ratio(u0.epistemic, u1.epistemic, tau),
        "F_Alea": fairness_ratio(u0.aleatoric, u1.aleatoric, tau),
        "F_Pred": fairness_ratio(u0.predictive, u1.predictive, tau),
    }
    return FairnessReport(ratios, eodd, (a0.size, a1.size), tau)


# ---------------------------------------------------------------------------
# individual consistency


def _sq_dists(X: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # column-by-column accumulation keeps memory at len(rows) x N
    d2 = np.zeros((len(rows), X.shape[0]))
    for j in range(X.shape[1]):
        diff = X[rows, j][:, None] - X[:, j][None, :]
        d2 += diff * diff
    return d2


def knn_indices(features, i: int, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest neighbours of sample ``i`` (itself excluded).

    Exact Euclidean search; equal distances resolve to the lower index.
    """
    return knn_all(features, k, rows=np.array([i]))[0]


def knn_all(features, k: int, rows=None, chunk: int = 512) -> np.ndarray:
    """``(len(rows), k)`` neighbour table, all samples by default."""
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < N ({k=}, N={n})")
    rows = np.arange(n) if rows is None else np.asarray(rows)
    out = np.empty((len(rows), k), dtype=np.int64)
    for s in range(0, len(rows), chunk):
        r = rows[s:s + chunk]
        d2 = _sq_dists(X, r)
        d2[np.arange(len(r)), r] = np.inf
        out[s:s + chunk] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


@dataclass(frozen=True)
class ConsistencyScores:
    kind: str  # point-prediction | epistemic | aleatoric | predictive
    k: int
    scores: np.ndarray
    group_means: dict[int, float]
    # group means keyed by (group, label) and by (group, predicted label)
    by_true_label: dict[tuple[int, int], float] = field(default_factory=dict)
    by_pred_label: dict[tuple[int, int], float] = field(default_factory=dict)


def consistency(values, features, k: int, groups=None, labels=None, preds=None,
                kind: str = "point-prediction", neighbours=None) -> ConsistencyScores:
    """``1 - |v_i - mean(v over kNN(x_i))|`` for every sample."""
    v = np.asarray(values, dtype=np.float64)
    nb = neighbours if neighbours is not None else knn_all(features, k)
    if len(v) != nb.shape[0]:
        raise ValueError("values and features differ in length")
    scores = 1.0 - np.abs(v - v[nb].mean(axis=1))

    def means(key):
        out = {}
        if key is None:
            return out
        key = np.asarray(key)
        for g in (0, 1):
            for c in (0, 1):
                m = (groups == g) & (key == c)
                if m.any():
                    out[(g, c)] = float(scores[m].mean())
        return out

    gm = {}
    if groups is not None:
        groups = np.asarray(groups)
        gm = {g: float(scores[groups == g].mean()) for g in (0, 1) if (groups == g).any()}
    return ConsistencyScores(kind, k, scores, gm, means(labels) if groups is not None else {},
                             means(preds) if groups is not None else {})
