"""Combined softmax + overlap loss over final-layer outputs.

For a batch of N samples with class scores over K+1 classes (index 0 =
background), labels k and overlap measurements v:

    L         = L_softmax + lambda * L_overlap
    L_softmax = (1/N) sum_n -log P_n[k_n]
    L_overlap = (1/N) sum_n (1/2) * (P_n[k_n]^2 / v_n^alpha - 1) * [k_n > 0]

The overlap term pulls the true-class probability of a positive toward
sqrt(v^alpha) instead of 1, so confidence tracks temporal overlap.
Backgrounds contribute only the softmax term.  Both forward and backward
are batch-level kernels over plain float64 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SOFTMAX_ONLY = "softmax-only"
COMBINED = "combined"

# -log is clamped at this probability floor; gradients use the raw P
_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1.0
    alpha: float = 0.25
    mode: str = COMBINED

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.mode not in (SOFTMAX_ONLY, COMBINED):
            raise ValueError(f"unknown loss mode {self.mode!r}")

    @property
    def overlap_weight(self) -> float:
        return 0.0 if self.mode == SOFTMAX_ONLY else self.lam


def softmax(scores: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("softmax input must be finite")
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _check_batch(probs: np.ndarray, labels: np.ndarray, overlaps: np.ndarray) -> None:
    n, width = probs.shape
    if n == 0:
        raise ValueError("loss batch must be nonempty")
    if labels.shape != (n,) or overlaps.shape != (n,):
        raise ValueError(
            f"shape mismatch: probs {probs.shape}, labels {labels.shape}, "
            f"overlaps {overlaps.shape}"
        )
    if labels.min() < 0 or labels.max() >= width:
        raise ValueError(f"labels must lie in [0, {width - 1}]")
    positive = labels > 0
    if np.any(positive):
        v = overlaps[positive]
        if np.any(v <= 0.0) or np.any(v > 1.0):
            raise ValueError("positive samples need overlap v in (0, 1]")


def loss_forward(
    probs: np.ndarray,
    labels: np.ndarray,
    overlaps: np.ndarray,
    cfg: LossConfig = LossConfig(),
) -> tuple[float, float, float]:
    """Batch loss from softmax probabilities.

    Returns (total, softmax part, overlap part); the total is
    softmax + weight * overlap with the weight 0 in softmax-only mode.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    overlaps = np.asarray(overlaps, dtype=np.float64)
    _check_batch(probs, labels, overlaps)

    n = probs.shape[0]
    taken = probs[np.arange(n), labels]
    softmax_part = float(-np.log(np.maximum(taken, _LOG_FLOOR)).sum() / n)

    weight = cfg.overlap_weight
    positive = labels > 0
    if np.any(positive):
        p = taken[positive]
        scale = overlaps[positive] ** cfg.alpha
        overlap_part = float((0.5 * (p * p / scale - 1.0)).sum() / n)
    else:
        overlap_part = 0.0

    if weight == 0.0:
        return softmax_part, softmax_part, overlap_part
    return softmax_part + weight * overlap_part, softmax_part, overlap_part


def loss_backward(
    scores: np.ndarray,
    labels: np.ndarray,
    overlaps: np.ndarray,
    cfg: LossConfig = LossConfig(),
) -> np.ndarray:
    """Analytic dL/dscores for a batch of final-layer outputs.

    Softmax part: (1/N)(P - onehot(k)).  Overlap part per positive sample,
    with q = P[k]^2 / v^alpha:  (1/N) * q * (1 - P[k]) at the true class and
    (1/N) * q * (-P[i]) elsewhere.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    overlaps = np.asarray(overlaps, dtype=np.float64)
    probs = softmax(scores)
    _check_batch(probs, labels, overlaps)

    n = probs.shape[0]
    rows = np.arange(n)
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    grad /= n

    weight = cfg.overlap_weight
    if weight != 0.0:
        positive = labels > 0
        if np.any(positive):
            p = probs[rows, labels][positive]
            q = p * p / overlaps[positive] ** cfg.alpha
            over = -probs[positive] * q[:, None]
            over[np.arange(len(q)), labels[positive]] = q * (1.0 - p)
            grad[positive] += (weight / n) * over
    return grad


def per_sample_loss_curve(
    v: float,
    alpha: float = 1.0,
    lam: float = 1.0,
    resolution: int = 10_000,
) -> np.ndarray:
    """Per-positive loss as a function of the true-class probability.

    Samples the open interval (0, 1) at spacing 1/resolution and returns an
    array of rows (P, L_softmax, L_overlap, L).  The combined loss attains
    its minimum at P = sqrt(v^alpha) when lam == 1.
    """
    if not 0.0 < v <= 1.0:
        raise ValueError(f"v must be in (0, 1], got {v}")
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    p = np.arange(1, resolution) / resolution
    softmax_part = -np.log(p)
    overlap_part = 0.5 * (p * p / v**alpha - 1.0)
    total = softmax_part + lam * overlap_part
    return np.column_stack([p, softmax_part, overlap_part, total])
