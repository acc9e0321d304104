"""Frozen linear-softmax classification head and the entropy objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .subspace import PrincipalSubspace, apply_correction


@dataclass(frozen=True)
class LinearDecoder:
    """Linear head mapping a latent to class logits. Never updated."""

    weights: np.ndarray  # (C, D)
    bias: np.ndarray     # (C,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 2:
            raise ContractViolation("weights must be (C, D) with C >= 2")
        if b.shape != (w.shape[0],):
            raise ContractViolation("bias length must equal class count")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ContractViolation("decoder parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Prediction:
    logits: np.ndarray
    probabilities: np.ndarray
    predicted_class: int
    entropy: float


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max logit subtracted before exp)."""
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def shannon_entropy(probabilities: np.ndarray) -> float:
    """Entropy in nats, with the 0 * log 0 = 0 convention."""
    p = np.asarray(probabilities, dtype=np.float64)
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return float(-terms.sum())


def decode(d: LinearDecoder, z: np.ndarray) -> Prediction:
    """Forward pass: logits, probabilities, argmax class, and entropy."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (d.dim,):
        raise ContractViolation(f"latent must have shape ({d.dim},), got {z.shape}")
    logits = d.weights @ z + d.bias
    probabilities = softmax(logits)
    return Prediction(
        logits=logits,
        probabilities=probabilities,
        predicted_class=int(np.argmax(probabilities)),
        entropy=shannon_entropy(probabilities),
    )


def fitness(
    d: LinearDecoder,
    s: PrincipalSubspace,
    z_t: np.ndarray,
    p: np.ndarray,
) -> tuple[float, Prediction]:
    """Entropy of the prediction after correcting ``z_t`` by ``p``."""
    prediction = decode(d, apply_correction(s, z_t, p))
    return prediction.entropy, prediction
