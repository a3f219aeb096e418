import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mambalab import Rng
from mambalab.errors import InvalidDimensionError, InvariantViolation, ShapeError
from mambalab.losses import (
    LossWeights,
    PredictionPair,
    bce,
    bce_side,
    confusion_counts,
    dice_loss,
    mi_dice,
    mi_iou,
    total_loss,
)

G22 = np.array([[[1.0, 1.0], [0.0, 0.0]]])
P_HALF = np.array([[[0.5, 0.5], [0.0, 0.0]]])


def test_defaults():
    w = LossWeights()
    assert (w.alpha1, w.alpha2, w.alpha3, w.epsDice, w.epsMetric) == (1.0, 1.0, 0.1, 1e-4, 1e-6)
    with pytest.raises(InvariantViolation):
        LossWeights(alpha1=-1.0)


def test_bce_values():
    G = (Rng(1).uniform(size=(1, 6, 6)) > 0.5).astype(float)
    assert abs(bce(np.full_like(G, 0.5), G) - math.log(2)) < 1e-15
    assert bce(G, G) < 1e-10
    assert abs(bce(np.full((1, 2, 2), math.exp(-1)), np.ones((1, 2, 2))) - 1.0) < 1e-15
    assert bce_side is bce


def test_bce_nonnegative_and_finite():
    rng = Rng(2)
    for _ in range(20):
        P = rng.uniform(size=(1, 4, 4))
        G = (rng.uniform(size=(1, 4, 4)) > 0.5).astype(float)
        assert bce(P, G) >= 0
    assert math.isfinite(bce(np.zeros((1, 2, 2)), np.ones((1, 2, 2))))


def test_dice_loss_examples():
    G = (Rng(3).uniform(size=(1, 5, 5)) > 0.5).astype(float)
    assert dice_loss(G, G) == 0.0
    assert dice_loss(np.zeros((1, 3, 3)), np.zeros((1, 3, 3))) == 0.0
    assert abs(dice_loss(P_HALF, G22) - (1 - 2.0001 / 3.0001)) < 1e-15
    assert abs(dice_loss(P_HALF, G22) - 0.3333222) < 1e-7


def _pair(P, G):
    Ps = P[:, ::2, ::2]
    Gs = G[:, ::2, ::2]
    return PredictionPair(P, G, Ps, Gs)


def test_total_loss_golden():
    G = np.zeros((1, 64, 64))
    G[:, :32] = 1.0
    P = np.full((1, 64, 64), 0.5)
    pair = PredictionPair(P, G, np.full((1, 32, 32), 0.5), G[:, ::2, ::2])
    # BCE = ln 2, Dice = 1 - (2048 + eps)/(4096 + eps), side BCE = ln 2
    assert abs(total_loss([pair]) - 1.262462) < 1e-6
    expected = 1.1 * math.log(2) + 1 - (2048 + 1e-4) / (4096 + 1e-4)
    assert abs(total_loss([pair]) - expected) < 1e-15


def test_total_loss_perfect_and_weight_isolation():
    rng = Rng(4)
    G = (rng.uniform(size=(1, 8, 8)) > 0.5).astype(float)
    assert total_loss([_pair(G, G)]) < 1e-10
    pairs = [_pair(rng.uniform(size=(1, 8, 8)), G) for _ in range(3)]
    only_dice = total_loss(pairs, LossWeights(0, 1, 0))
    assert abs(only_dice - np.mean([dice_loss(p.P, p.G) for p in pairs])) < 1e-15


def test_total_loss_linear_in_alpha():
    rng = Rng(5)
    G = (rng.uniform(size=(1, 8, 8)) > 0.5).astype(float)
    pairs = [_pair(rng.uniform(0.01, 0.99, (1, 8, 8)), G) for _ in range(2)]
    base = total_loss(pairs, LossWeights(1, 1, 0.1))
    bumped = total_loss(pairs, LossWeights(3, 1, 0.1))
    l_bce = np.mean([bce(p.P, p.G) for p in pairs])
    assert abs(bumped - base - 2 * l_bce) < 1e-12


def test_total_loss_errors():
    G = np.zeros((1, 4, 4))
    with pytest.raises(InvalidDimensionError):
        total_loss([])
    with pytest.raises(InvariantViolation):
        total_loss([PredictionPair(G, G)])
    with pytest.raises(ShapeError):
        PredictionPair(G, G, np.zeros((1, 3, 3)), np.zeros((1, 3, 3)))
    with pytest.raises(InvariantViolation):
        PredictionPair(G, G, np.zeros((1, 2, 2)))
    with pytest.raises(ShapeError):
        bce(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))


def test_mi_iou_examples():
    G = (Rng(6).uniform(size=(1, 5, 5)) > 0.5).astype(float)
    assert abs(mi_iou([G], [G]) - 100.0) < 1e-12
    assert mi_iou([np.zeros((1, 3, 3))], [np.zeros((1, 3, 3))]) == 100.0
    P = np.array([[[1.0, 0.0], [1.0, 0.0]]])
    assert confusion_counts(P, G22) == (1, 1, 1)
    assert abs(mi_iou([P], [G22]) - 100 * (1 + 1e-6) / (3 + 1e-6)) < 1e-12
    assert abs(mi_iou([P], [G22]) - 33.3333) < 1e-4


def test_threshold_is_inclusive():
    assert confusion_counts(np.array([[[0.5]]]), np.array([[[1.0]]])) == (1, 0, 0)
    with pytest.raises(InvariantViolation):
        mi_iou([G22], [G22], threshold=1.0)


def test_mi_dice_examples():
    G = (Rng(7).uniform(size=(1, 5, 5)) > 0.5).astype(float)
    assert abs(mi_dice([G], [G]) - 100.0) < 1e-12
    assert abs(mi_dice([P_HALF], [G22]) - 100 * (2 + 1e-6) / (3 + 1e-6)) < 1e-12
    assert abs(mi_dice([P_HALF], [G22]) - 66.6666778) < 1e-7
    assert mi_dice([np.zeros((1, 2, 2))], [np.zeros((1, 2, 2))]) == 100.0


def test_metric_list_errors():
    with pytest.raises(ShapeError):
        mi_iou([G22], [G22, G22])
    with pytest.raises(InvalidDimensionError):
        mi_dice([], [])


def test_dice_at_least_iou_random_masks():
    rng = Rng(8)
    for _ in range(1000):
        h, w = rng.integers(1, 9), rng.integers(1, 9)
        P = (rng.uniform(size=(1, h, w)) > 0.5).astype(float)
        G = (rng.uniform(size=(1, h, w)) > 0.5).astype(float)
        iou, dice = mi_iou([P], [G]), mi_dice([P], [G])
        assert 0 <= iou <= dice + 1e-9 <= 100 + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32))
def test_dice_loss_matches_mi_dice(seed):
    rng = Rng(seed)
    P = rng.uniform(size=(1, 4, 4))
    G = (rng.uniform(size=(1, 4, 4)) > 0.5).astype(float)
    assert abs(dice_loss(P, G, 1e-6) - (1 - mi_dice([P], [G], 1e-6) / 100)) < 1e-12
