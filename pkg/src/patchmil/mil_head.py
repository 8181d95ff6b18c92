"""Relating patch scores to the image label: max aggregation, image-level
binary cross-entropy, and the closed-form gradient used as a test oracle.

The image score is the exact maximum over patch scores; ties break to the
lowest row-major index so localization is reproducible. Smooth aggregators
(log-sum-exp, noisy-or) are exposed behind the same interface but the
default, and the method of record, is the exact max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_EPSILON = 1e-7


class ScoreError(ValueError):
    """Raised for empty or out-of-range patch score inputs."""


def _validated(patch_scores) -> np.ndarray:
    arr = np.asarray(patch_scores, dtype=np.float64)
    if arr.size == 0:
        raise ScoreError("patch score list is empty")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ScoreError("patch scores must be finite and lie in [0, 1]")
    return arr


def aggregate_max(patch_scores) -> tuple[float, int]:
    """Exact maximum patch score and its flat row-major index.

    Ties break to the lowest index.
    """
    arr = _validated(patch_scores).ravel()
    index = int(np.argmax(arr))
    return float(arr[index]), index


def aggregate_logsumexp(patch_scores, temperature: float = 10.0) -> tuple[float, int]:
    """Smooth max: (1/t) * log(mean(exp(t * s))), in [0, 1].

    The reported index is still the exact argmax of the raw scores, since
    localization is defined by the most responsible patch.
    """
    if temperature <= 0:
        raise ScoreError(f"temperature must be positive, got {temperature}")
    arr = _validated(patch_scores).ravel()
    scaled = temperature * arr
    peak = scaled.max()
    value = (peak + math.log(np.mean(np.exp(scaled - peak)))) / temperature
    return float(min(max(value, 0.0), 1.0)), int(np.argmax(arr))


def aggregate_noisy_or(patch_scores) -> tuple[float, int]:
    """Noisy-or aggregation: 1 - prod(1 - s). Index is the exact argmax."""
    arr = _validated(patch_scores).ravel()
    value = 1.0 - float(np.prod(1.0 - arr))
    return value, int(np.argmax(arr))


AGGREGATORS = {
    "max": aggregate_max,
    "lse": aggregate_logsumexp,
    "noisy_or": aggregate_noisy_or,
}


def _validated_label(label) -> int:
    value = int(label)
    if value not in (0, 1) or value != label:
        raise ScoreError(f"label must be binary 0/1, got {label!r}")
    return value


def _clamped(score: float, epsilon: float) -> float:
    if not 0.0 < epsilon < 0.5:
        raise ScoreError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    if not np.isfinite(score) or not 0.0 <= score <= 1.0:
        raise ScoreError(f"image score must lie in [0, 1], got {score}")
    return min(max(score, epsilon), 1.0 - epsilon)


def bce_loss(image_score: float, label, epsilon: float = DEFAULT_EPSILON) -> float:
    """Binary cross-entropy between the image score and the image label.

    The score is clamped to [epsilon, 1 - epsilon] before the logs, since
    the loss is undefined at exactly 0 or 1.
    """
    y = _validated_label(label)
    s = _clamped(float(image_score), epsilon)
    return float(-(y * math.log(s) + (1 - y) * math.log(1.0 - s)))


def loss_gradient_wrt_patches(patch_scores, label, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Closed-form gradient of bce_loss(aggregate_max(scores)) w.r.t. scores.

    Zero everywhere except the argmax (lowest index on ties), where it is
    -1/s for a positive label and +1/(1-s) for a negative one, with s the
    clamped max score. Serves as the independent oracle for the training
    framework's automatic gradient.
    """
    arr = _validated(patch_scores)
    y = _validated_label(label)
    flat = arr.ravel()
    index = int(np.argmax(flat))
    s = _clamped(float(flat[index]), epsilon)
    grad = np.zeros_like(flat)
    grad[index] = -1.0 / s if y == 1 else 1.0 / (1.0 - s)
    return grad.reshape(arr.shape)


@dataclass(frozen=True, eq=False)
class ScoreGrid:
    """Per-patch scores on the tiling grid plus the image-level summary.

    Invariants: ``image_score`` equals the exact max of ``scores`` and
    ``argmax_index`` is the row-major-first position attaining it.
    """

    scores: np.ndarray
    image_score: float
    argmax_index: tuple[int, int]

    @classmethod
    def from_scores(cls, scores) -> "ScoreGrid":
        arr = _validated(scores)
        if arr.ndim != 2:
            raise ScoreError(f"score grid must be 2D, got shape {arr.shape}")
        image_score, flat = aggregate_max(arr)
        return cls(scores=arr,
                   image_score=image_score,
                   argmax_index=(flat // arr.shape[1], flat % arr.shape[1]))
