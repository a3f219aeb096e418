"""Segmentation losses (BCE, Dice, mixed total) and image-wise metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidDimensionError, InvariantViolation, ShapeError

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class LossWeights:
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 0.1
    epsDice: float = 1e-4
    epsMetric: float = 1e-6

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise InvariantViolation("loss weights must be non-negative")


@dataclass(frozen=True)
class PredictionPair:
    """Prediction P and label G, both (1, H, W); optional half-size side pair."""

    P: np.ndarray
    G: np.ndarray
    Ps: np.ndarray | None = None
    Gs: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        G = np.asarray(self.G, dtype=np.float64)
        _same_shape(P, G)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "G", G)
        if (self.Ps is None) != (self.Gs is None):
            raise InvariantViolation("side prediction and side label come together")
        if self.Ps is not None:
            Ps = np.asarray(self.Ps, dtype=np.float64)
            Gs = np.asarray(self.Gs, dtype=np.float64)
            _same_shape(Ps, Gs)
            if Ps.shape[-2:] != (P.shape[-2] // 2, P.shape[-1] // 2):
                raise ShapeError(f"side output must be half size: {Ps.shape} vs {P.shape}")
            object.__setattr__(self, "Ps", Ps)
            object.__setattr__(self, "Gs", Gs)


def _same_shape(P, G):
    if np.shape(P) != np.shape(G):
        raise ShapeError(f"prediction {np.shape(P)} and label {np.shape(G)} differ")


def bce(P, G) -> float:
    """Mean binary cross-entropy over pixels."""
    P = np.asarray(P, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    _same_shape(P, G)
    P = np.clip(P, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(G * np.log(P) + (1.0 - G) * np.log(1.0 - P)))


bce_side = bce


def dice_loss(P, G, eps: float = 1e-4) -> float:
    P = np.asarray(P, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    _same_shape(P, G)
    return float(1.0 - (2.0 * np.sum(P * G) + eps) / (np.sum(P) + np.sum(G) + eps))


def total_loss(batch: Sequence[PredictionPair], w: LossWeights = LossWeights()) -> float:
    """alpha1 * mean BCE + alpha2 * mean Dice + alpha3 * mean side BCE."""
    if len(batch) == 0:
        raise InvalidDimensionError("empty batch")
    if any(p.Ps is None for p in batch):
        raise InvariantViolation("every pair needs a side output")
    n = len(batch)
    l_bce = sum(bce(p.P, p.G) for p in batch) / n
    l_dice = sum(dice_loss(p.P, p.G, w.epsDice) for p in batch) / n
    l_side = sum(bce(p.Ps, p.Gs) for p in batch) / n
    return w.alpha1 * l_bce + w.alpha2 * l_dice + w.alpha3 * l_side


def _check_lists(preds, gts):
    if len(preds) != len(gts):
        raise ShapeError(f"{len(preds)} predictions vs {len(gts)} labels")
    if len(preds) == 0:
        raise InvalidDimensionError("no images")


def confusion_counts(P, G, threshold: float = 0.5):
    """(TP, FP, FN) with P binarized as P >= threshold."""
    P = np.asarray(P, dtype=np.float64)
    G = np.asarray(G) > 0.5
    _same_shape(P, G)
    pb = P >= threshold
    return int(np.sum(pb & G)), int(np.sum(pb & ~G)), int(np.sum(~pb & G))


def mi_iou(preds, gts, threshold: float = 0.5, eps: float = 1e-6) -> float:
    """Mean image-wise IoU in percent."""
    _check_lists(preds, gts)
    if not 0.0 < threshold < 1.0:
        raise InvariantViolation("threshold must lie in (0, 1)")
    total = 0.0
    for P, G in zip(preds, gts):
        tp, fp, fn = confusion_counts(P, G, threshold)
        total += (tp + eps) / (fn + fp + tp + eps)
    return total / len(preds) * 100.0


def mi_dice(preds, gts, eps: float = 1e-6) -> float:
    """Mean image-wise Dice coefficient in percent, on continuous predictions."""
    _check_lists(preds, gts)
    total = 0.0
    for P, G in zip(preds, gts):
        P = np.asarray(P, dtype=np.float64)
        G = np.asarray(G, dtype=np.float64)
        _same_shape(P, G)
        total += (2.0 * np.sum(P * G) + eps) / (np.sum(P) + np.sum(G) + eps)
    return total / len(preds) * 100.0
