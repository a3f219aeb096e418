"""Elementwise nonlinearities and their derivatives."""
import numpy as np
from scipy.special import erf

_TINY = np.finfo(np.float64).tiny
_SQRT1_2 = np.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(x):
    """log(1 + e^x), clamped to the smallest normal double so it stays > 0."""
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return np.maximum(out, _TINY)


def silu(x):
    x = np.asarray(x, dtype=np.float64)
    return x * sigmoid(x)


def gelu(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x * _SQRT1_2))


def d_sigmoid(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def d_softplus(x):
    return sigmoid(x)


def d_silu(x):
    s = sigmoid(x)
    return s * (1.0 + np.asarray(x) * (1.0 - s))


def d_gelu(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (1.0 + erf(x * _SQRT1_2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)
