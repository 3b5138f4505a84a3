"""Versioned checkpoint layout shared by variational and deterministic nets.

A checkpoint is an ASCII header followed by raw little-endian float64 data::

    uncfair-checkpoint 1
    kind variational            # or: deterministic
    prior 0.5 0.0 6.0           # pi, -log sigma1, -log sigma2 (variational only)
    layers 2
    layer 100 2                 # out in, one line per layer
    layer 2 100
    data
    <bytes>

Variational layers store, in order, weight_mu, weight_rho, bias_mu, bias_rho;
deterministic layers store weight then bias. Matrices are row-major (out x in).
"""

from __future__ import annotations

import io

import numpy as np

MAGIC = "uncfair-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dump(kind: str, shapes, arrays, prior=None) -> bytes:
    lines = [f"{MAGIC} {VERSION}", f"kind {kind}"]
    if prior is not None:
        lines.append("prior " + " ".join(repr(float(p)) for p in prior))
    lines.append(f"layers {len(shapes)}")
    lines += [f"layer {o} {i}" for o, i in shapes]
    lines.append("data")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return ("\n".join(lines) + "\n").encode("ascii") + body


def load(blob: bytes):
    """Parse a checkpoint blob into ``(kind, shapes, prior, flat_data)``."""
    buf = io.BytesIO(blob)
    first = buf.readline().decode("ascii").split()
    if len(first) != 2 or first[0] != MAGIC:
        raise CheckpointError("not an uncfair checkpoint")
    if int(first[1]) != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {first[1]}")
    kind, prior, shapes = None, None, []
    while True:
        line = buf.readline().decode("ascii").strip()
        if not line:
            raise CheckpointError("truncated checkpoint header")
        key, *rest = line.split()
        if key == "data":
            break
        if key == "kind":
            kind = rest[0]
        elif key == "prior":
            prior = tuple(float(v) for v in rest)
        elif key == "layer":
            shapes.append((int(rest[0]), int(rest[1])))
        elif key != "layers":
            raise CheckpointError(f"unknown header key {key!r}")
    data = np.frombuffer(buf.read(), dtype="<f8").astype(np.float64)
    return kind, shapes, prior, data


def take(data: np.ndarray, offset: int, shape) -> tuple[np.ndarray, int]:
    size = int(np.prod(shape))
    if offset + size > data.size:
        raise CheckpointError("checkpoint data shorter than header promises")
    return data[offset:offset + size].reshape(shape).copy(), offset + size
