"""Monte-Carlo predictions and the epistemic/aleatoric split.

For one sample with ``M`` class-probability rows ``P_m`` and mean ``Pbar``::

    epistemic = 1/M sum_m (P_m - Pbar)(P_m - Pbar)^T
    aleatoric = 1/M sum_m diag(P_m) - P_m P_m^T
    predictive = epistemic + aleatoric

Scalar summaries are the traces of these ``C x C`` matrices (the sum of the
per-class variances). Group figures are plain means of the scalars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayesnet import VariationalNet, mlp_forward, sample_weights, softmax


@dataclass(frozen=True)
class UncertaintyDecomposition:
    epistemic_matrix: np.ndarray
    aleatoric_matrix: np.ndarray
    predictive_matrix: np.ndarray

    @property
    def epistemic(self) -> float:
        return float(np.trace(self.epistemic_matrix))

    @property
    def aleatoric(self) -> float:
        return float(np.trace(self.aleatoric_matrix))

    @property
    def predictive(self) -> float:
        return float(np.trace(self.predictive_matrix))


@dataclass(frozen=True)
class GroupUncertainty:
    group: int
    epistemic: float
    aleatoric: float
    predictive: float
    count: int


def validate_predictions(ps: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    ps = np.asarray(ps, dtype=np.float64)
    if ps.ndim not in (2, 3) or ps.shape[-2] < 1:
        raise ValueError(f"prediction set must be (M, C) or (N, M, C), got {ps.shape}")
    if (ps < 0).any() or not np.allclose(ps.sum(axis=-1), 1.0, rtol=0, atol=atol):
        raise ValueError("prediction rows must be probability vectors")
    return ps


def mc_predict(net: VariationalNet, X, M: int = 10, rng=None) -> np.ndarray:
    """Return an ``(N, M, C)`` array: ``M`` independent weight draws per sample."""
    if M < 1:
        raise ValueError("M must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != net.n_in:
        raise ValueError(f"expected {net.n_in} features, got {X.shape[1]}")
    rows = []
    for _ in range(M):
        logits, _ = mlp_forward(X, sample_weights(net, rng).weights)
        rows.append(softmax(logits))
    return np.stack(rows, axis=1)


def decompose(ps) -> UncertaintyDecomposition:
    """Matrix decomposition for a single ``(M, C)`` prediction set."""
    P = validate_predictions(ps)
    if P.ndim != 2:
        raise ValueError("decompose takes one (M, C) prediction set")
    M = P.shape[0]
    D = P - P.mean(axis=0)
    epis = D.T @ D / M
    alea = np.diag(P.mean(axis=0)) - P.T @ P / M
    # enforce exact symmetry of the rounding-level asymmetries
    epis = 0.5 * (epis + epis.T)
    alea = 0.5 * (alea + alea.T)
    return UncertaintyDecomposition(epis, alea, epis + alea)


def decompose_batch(ps) -> dict[str, np.ndarray]:
    """Trace scalars for an ``(N, M, C)`` prediction array, one per sample."""
    P = validate_predictions(ps)
    if P.ndim == 2:
        P = P[None]
    Pbar = P.mean(axis=1, keepdims=True)
    epis = np.mean(np.sum((P - Pbar) ** 2, axis=2), axis=1)
    alea = np.mean(np.sum(P * (1.0 - P), axis=2), axis=1)
    return {"epistemic": epis, "aleatoric": alea, "predictive": epis + alea}


def group_aggregate(scalars: dict[str, np.ndarray], groups) -> dict[int, GroupUncertainty]:
    groups = np.asarray(groups)
    out = {}
    for g in (0, 1):
        mask = groups == g
        if not mask.any():
            raise ValueError(f"group {g} has no samples")
        out[g] = GroupUncertainty(
            group=g,
            epistemic=float(np.mean(scalars["epistemic"][mask])),
            aleatoric=float(np.mean(scalars["aleatoric"][mask])),
            predictive=float(np.mean(scalars["predictive"][mask])),
            count=int(mask.sum()),
        )
    return out
