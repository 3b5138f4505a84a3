"""Deep ensembles: T deterministic MLPs whose outputs stand in for MC draws.

Members share an architecture and the training set; they differ only in
their seed (``config.seed + member index``), which drives both the
initialisation and the minibatch order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .bayesnet import (Adam, TrainConfig, TrainingError, cross_entropy, minibatches,
                       mlp_backward, mlp_forward, softmax)
from .synthgen import make_rng


@dataclass
class DeterministicNet:
    weights: list[tuple[np.ndarray, np.ndarray]]

    @classmethod
    def init(cls, n_in, hidden_width=None, n_classes=2, rng=None) -> "DeterministicNet":
        sizes = [n_in] + ([hidden_width] if hidden_width else []) + [n_classes]
        return cls([(rng.standard_normal((b, a)), rng.standard_normal(b))
                    for a, b in zip(sizes, sizes[1:])])

    @property
    def n_in(self) -> int:
        return self.weights[0][0].shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [a for W, b in self.weights for a in (W, b)]

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_in:
            raise ValueError(f"expected {self.n_in} features, got {X.shape[1]}")
        return softmax(mlp_forward(X, self.weights)[0])

    def to_bytes(self) -> bytes:
        return checkpoint.dump("deterministic", [W.shape for W, _ in self.weights],
                               self.parameters())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DeterministicNet":
        kind, shapes, _, data = checkpoint.load(blob)
        if kind != "deterministic":
            raise checkpoint.CheckpointError(f"expected a deterministic checkpoint, got {kind}")
        ws, off = [], 0
        for o, i in shapes:
            W, off = checkpoint.take(data, off, (o, i))
            b, off = checkpoint.take(data, off, (o,))
            ws.append((W, b))
        return cls(ws)


def train_member(train_ds, config: TrainConfig) -> DeterministicNet:
    rng = make_rng(config.seed)
    X, y = train_ds.features, train_ds.labels
    net = DeterministicNet.init(X.shape[1], config.hidden_width, 2, rng)
    opt = Adam(net.parameters(), config.learning_rate, config.adam_beta1,
               config.adam_beta2, config.adam_eps)
    for _ in range(config.epochs):
        for idx in minibatches(len(y), config.batch_size, rng):
            logits, cache = mlp_forward(X[idx], net.weights)
            loss, d = cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss}")
            grads = mlp_backward(cache, net.weights, d)
            opt.step([g for pair in grads for g in pair])
    return net


@dataclass
class Ensemble:
    members: list[DeterministicNet]

    @property
    def size(self) -> int:
        return len(self.members)

    def save(self, path) -> None:
        """One file: a JSON manifest line, then the member checkpoints back to back."""
        blobs = [m.to_bytes() for m in self.members]
        manifest = {"format": "uncfair-ensemble", "version": 1,
                    "members": [len(b) for b in blobs]}
        Path(path).write_bytes(json.dumps(manifest).encode("ascii") + b"\n" + b"".join(blobs))

    @classmethod
    def load(cls, path) -> "Ensemble":
        raw = Path(path).read_bytes()
        head, _, body = raw.partition(b"\n")
        manifest = json.loads(head)
        if manifest.get("format") != "uncfair-ensemble":
            raise checkpoint.CheckpointError("not an ensemble checkpoint")
        members, off = [], 0
        for size in manifest["members"]:
            members.append(DeterministicNet.from_bytes(body[off:off + size]))
            off += size
        return cls(members)


def train_ensemble(train_ds, config: TrainConfig, T: int = 5,
                   same_seed: bool = False) -> Ensemble:
    """Train ``T`` members; ``same_seed`` forces identical members (for testing)."""
    if T < 1:
        raise ValueError("ensemble needs at least one member")
    members = []
    for t in range(T):
        cfg = replace(config, seed=config.seed + (0 if same_seed else t))
        try:
            members.append(train_member(train_ds, cfg))
        except TrainingError as exc:
            raise TrainingError(f"ensemble member {t}: {exc}") from exc
    return Ensemble(members)


def ensemble_predict(ens: Ensemble, X) -> np.ndarray:
    """``(N, T, C)`` array; row ``t`` is member ``t``'s softmax output."""
    return np.stack([m.predict_proba(X) for m in ens.members], axis=1)
