"""Continuous SSM parameters, HiPPO initialization and discretization."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvariantViolation, NumericRangeError, SingularMatrixError

# above this condition number a solve is treated as singular
_COND_LIMIT = 1e14


class Method(str, enum.Enum):
    EULER = "euler"
    BILINEAR = "bilinear"
    ZOH = "zoh"
    ZOH_APPROX = "zoh_approx"


@dataclass(frozen=True)
class ContinuousSSM:
    """h'(t) = A h(t) + B x(t), y(t) = C h(t).  No feedthrough term."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        n = A.shape[0]
        if A.shape != (n, n) or n == 0:
            raise InvariantViolation(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=np.float64).reshape(-1)
        C = np.asarray(self.C, dtype=np.float64).reshape(-1)
        if B.size != n or C.size != n:
            raise InvariantViolation(f"B, C must have {n} entries, got {B.size}, {C.size}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def N(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class DiscreteSSM:
    """h_k = Abar h_{k-1} + Bbar x_k, y_k = Cbar h_k."""

    Abar: np.ndarray
    Bbar: np.ndarray
    Cbar: np.ndarray
    dt: float = 1.0
    method: Method | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.Abar, dtype=np.float64))
        n = A.shape[0]
        if A.shape != (n, n):
            raise InvariantViolation(f"Abar must be square, got {A.shape}")
        B = np.asarray(self.Bbar, dtype=np.float64).reshape(-1)
        C = np.asarray(self.Cbar, dtype=np.float64).reshape(-1)
        if B.size != n or C.size != n:
            raise InvariantViolation("Bbar/Cbar size mismatch")
        if not self.dt > 0:
            raise InvariantViolation(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "Abar", A)
        object.__setattr__(self, "Bbar", B)
        object.__setattr__(self, "Cbar", C)

    @property
    def N(self) -> int:
        return self.Abar.shape[0]


def hippo(n: int) -> np.ndarray:
    """HiPPO-LegS state matrix, 0-based indices.

    A[i, j] = -sqrt((2i+1)(2j+1)) below the diagonal, -(i+1) on it, 0 above.
    """
    if n < 1:
        raise InvalidDimensionError(f"state dimension must be >= 1, got {n}")
    p = np.sqrt(2.0 * np.arange(n) + 1.0)
    A = -np.tril(np.outer(p, p), -1)
    A[np.diag_indices(n)] = -(np.arange(n) + 1.0)
    return A


def matrix_exp(A, scale: float = 1.0) -> np.ndarray:
    """exp(scale * A) by scaling and squaring around a truncated Taylor series."""
    M = np.atleast_2d(np.asarray(A, dtype=np.float64)) * scale
    if not np.all(np.isfinite(M)):
        raise NumericRangeError("matrix_exp input is not finite")
    n = M.shape[0]
    norm = np.linalg.norm(M, 1)
    s = 0
    if norm > 0.5:
        s = int(np.ceil(np.log2(norm / 0.5)))
        M = M / 2.0**s
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, 40):
        term = term @ M / k
        result = result + term
        if np.linalg.norm(term, 1) <= 1e-18 * np.linalg.norm(result, 1):
            break
    for _ in range(s):
        result = result @ result
    if not np.all(np.isfinite(result)):
        raise NumericRangeError("matrix_exp overflowed")
    return result


def _solve(M: np.ndarray, rhs: np.ndarray, method: str) -> np.ndarray:
    if np.linalg.cond(M) > _COND_LIMIT:
        raise SingularMatrixError(method)
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(method, str(exc)) from exc


def discretize(sys: ContinuousSSM, dt: float, method: Method | str) -> DiscreteSSM:
    method = Method(method)
    if not dt > 0:
        raise InvariantViolation(f"dt must be positive, got {dt}")
    A, B, n = sys.A, sys.B, sys.N
    eye = np.eye(n)
    if method is Method.EULER:
        Abar, Bbar = eye + dt * A, dt * B
    elif method is Method.BILINEAR:
        left = eye - (dt / 2.0) * A
        sol = _solve(left, np.column_stack([eye + (dt / 2.0) * A, dt * B]), method.value)
        Abar, Bbar = sol[:, :n], sol[:, n]
    elif method is Method.ZOH:
        Abar = matrix_exp(A, dt)
        Bbar = _solve(dt * A, (Abar - eye) @ (dt * B), method.value)
    else:
        Abar, Bbar = matrix_exp(A, dt), dt * B
    return DiscreteSSM(Abar, Bbar, sys.C.copy(), dt, method)
