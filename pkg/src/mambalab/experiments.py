"""Reusable experiment drivers shared by the CLI and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scan import SelectiveParams, build_kernel, kernel_drift, scan_conv, scan_recurrent
from .ssm import ContinuousSSM, DiscreteSSM, Method, discretize, matrix_exp
from .tensor import Rng

METHODS = (Method.EULER, Method.BILINEAR, Method.ZOH, Method.ZOH_APPROX)

EULER_BAND = (1.8, 2.2)
BILINEAR_BAND = (3.6, 4.4)
BBAR_GAP_BAND = (3.5, 4.5)
ZOH_EXACT_TOL = 1e-12


def scalar_system(a: float = -1.0, b: float = 1.0, c: float = 1.0) -> ContinuousSSM:
    return ContinuousSSM([[a]], [b], [c])


def exact_constant_input_output(sys: ContinuousSSM, horizon: float, u: float = 1.0) -> float:
    """y(T) for h(0) = 0 and constant input, via exp of the augmented [[A, Bu], [0, 0]]."""
    n = sys.N
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = sys.A
    M[:n, n] = sys.B * u
    hT = matrix_exp(M, horizon)[:n, n]
    return float(sys.C @ hT)


def trajectory_error(sys: ContinuousSSM, dt: float, horizon: float, method) -> float:
    steps = int(round(horizon / dt))
    if abs(steps * dt - horizon) > 1e-9 * horizon:
        raise ValueError(f"horizon {horizon} is not a multiple of dt {dt}")
    d = discretize(sys, dt, method)
    y, _ = scan_recurrent(d, np.ones(steps))
    return abs(float(y[-1]) - exact_constant_input_output(sys, horizon))


def bbar_gap(sys: ContinuousSSM, dt: float) -> float:
    """||Bbar_zoh - dt B||, the gap closed by the first-order approximation."""
    return float(np.linalg.norm(discretize(sys, dt, Method.ZOH).Bbar - dt * sys.B))


@dataclass
class ConvergenceReport:
    dts: list
    errors: dict  # method value -> list of errors
    gaps: list
    euler_ratios: list
    bilinear_ratios: list
    gap_ratios: list

    @property
    def ok(self) -> bool:
        return (
            all(EULER_BAND[0] <= r <= EULER_BAND[1] for r in self.euler_ratios)
            and all(BILINEAR_BAND[0] <= r <= BILINEAR_BAND[1] for r in self.bilinear_ratios)
            and all(BBAR_GAP_BAND[0] <= r <= BBAR_GAP_BAND[1] for r in self.gap_ratios)
            and all(e < ZOH_EXACT_TOL for e in self.errors["zoh"])
        )


def _ratios(v):
    return [a / b for a, b in zip(v, v[1:])]


def convergence_study(dts, horizon: float = 1.0, sys: ContinuousSSM | None = None) -> ConvergenceReport:
    sys = sys or scalar_system()
    errors = {m.value: [trajectory_error(sys, dt, horizon, m) for dt in dts] for m in METHODS}
    gaps = [bbar_gap(sys, dt) for dt in dts]
    return ConvergenceReport(
        list(dts), errors, gaps,
        _ratios(errors["euler"]), _ratios(errors["bilinear"]), _ratios(gaps),
    )


def random_lti(rng: Rng, n_max: int, l_max: int, radius_max: float = 0.99):
    """Random discrete system with spectral radius <= radius_max, plus an input sequence."""
    n = rng.integers(1, n_max + 1)
    L = rng.integers(1, l_max + 1)
    A = rng.normal(0.0, 1.0, (n, n))
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    A *= rng.uniform(0.1, radius_max) / rho
    sys = DiscreteSSM(A, rng.normal(0.0, 1.0, n), rng.normal(0.0, 1.0, n))
    return sys, rng.normal(0.0, 1.0, L)


def equivalence_error(sys: DiscreteSSM, x) -> float:
    y_rec, _ = scan_recurrent(sys, x)
    y_conv = scan_conv(build_kernel(sys, len(x)), x)
    return float(np.max(np.abs(y_rec - y_conv)))


def induced_lti(p: SelectiveParams, channel: int = 0) -> DiscreteSSM:
    """The per-channel LTI system of a constant-parameter selective configuration."""
    delta = float(p.project(np.zeros((1, p.D)))[1][0, channel])
    a = p.A[channel]
    return DiscreteSSM(np.diag(np.exp(delta * a)), delta * p.biasB, p.biasC)


def drift_trial(rng: Rng, L: int, D: int, N: int) -> bool:
    """True when a random input-dependent configuration is reported non-unified."""
    p = SelectiveParams.random(rng, D, N)
    x = rng.normal(0.0, 1.0, (L, D))
    return not kernel_drift(p, x).unified
