"""LTI and selective scans, convolutional form, and the vanilla Mamba block."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .activations import d_silu, d_softplus, silu, softplus
from .errors import InvalidDimensionError, NumericRangeError, ShapeError
from .ssm import DiscreteSSM
from .tensor import Rng

# exp(dt * A) with dt * A above this is rejected rather than returned as inf
EXP_ARG_LIMIT = 50.0
UNIFIED_TOL = 1e-12


# ---------------------------------------------------------------- LTI path


@dataclass(frozen=True)
class KernelBundle:
    krylov: np.ndarray  # (N, L), column k is Abar^k Bbar
    kernel: np.ndarray  # (L,)
    mulCount: int


def scan_recurrent(sys: DiscreteSSM, x, h0=None):
    """Run h_k = Abar h_{k-1} + Bbar x_k, y_k = Cbar h_k.  Returns (y, h_final)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size < 1:
        raise InvalidDimensionError("sequence must have L >= 1")
    h0 = np.zeros(sys.N) if h0 is None else np.asarray(h0, dtype=np.float64).reshape(-1)
    if h0.size != sys.N:
        raise ShapeError(f"h0 has {h0.size} entries, state dimension is {sys.N}")
    return kernels.lti_scan(sys.Abar, sys.Bbar, sys.Cbar, x, h0)


def build_kernel(sys: DiscreteSSM, L: int) -> KernelBundle:
    """Krylov matrix by L-1 successive matrix-vector products, then kernel = Cbar @ K."""
    if L < 1:
        raise InvalidDimensionError("L must be >= 1")
    K, ker, muls = kernels.krylov(sys.Abar, sys.Bbar, sys.Cbar, L)
    return KernelBundle(K, ker, muls)


def predicted_mul_count(n: int, L: int) -> int:
    return n * n * (L - 1) + n * L


def scan_conv(bundle, x) -> np.ndarray:
    """Causal convolution y_k = sum_{i<=k} K_i x_{k-i}."""
    ker = bundle.kernel if isinstance(bundle, KernelBundle) else np.asarray(bundle, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if ker.shape[0] != x.shape[0]:
        raise ShapeError(f"kernel length {ker.shape[0]} != sequence length {x.shape[0]}")
    return kernels.causal_conv(ker, x)


# ---------------------------------------------------------- selective path


@dataclass
class SelectiveParams:
    """Input-dependent SSM: B, C, and the step size are projections of the input.

    ``A`` is (D, N); row d is the diagonal state matrix for channel d.
    """

    A: np.ndarray
    WB: np.ndarray
    biasB: np.ndarray
    WC: np.ndarray
    biasC: np.ndarray
    Wdelta: np.ndarray
    biasDelta: float
    deltaParam: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        D, N = self.A.shape
        self.WB = np.asarray(self.WB, dtype=np.float64).reshape(D, N)
        self.WC = np.asarray(self.WC, dtype=np.float64).reshape(D, N)
        self.biasB = np.asarray(self.biasB, dtype=np.float64).reshape(N)
        self.biasC = np.asarray(self.biasC, dtype=np.float64).reshape(N)
        self.Wdelta = np.asarray(self.Wdelta, dtype=np.float64).reshape(D)
        self.deltaParam = np.asarray(self.deltaParam, dtype=np.float64).reshape(D)
        self.biasDelta = float(self.biasDelta)

    @property
    def D(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @classmethod
    def zeros(cls, D: int, N: int = 1) -> SelectiveParams:
        """All projections zero; A keeps the HiPPO diagonal so the system is stable."""
        A = np.tile(-(np.arange(N) + 1.0), (D, 1))
        z = np.zeros((D, N))
        return cls(A, z, np.zeros(N), z, np.zeros(N), np.zeros(D), 0.0, np.zeros(D))

    @classmethod
    def constant(cls, A, biasB, biasC, delta) -> SelectiveParams:
        """Input-independent parameters: an LTI system per channel."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        D, N = A.shape
        z = np.zeros((D, N))
        delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), (D,))
        raw = np.log(np.expm1(delta))  # inverse softplus
        return cls(A, z, biasB, z, biasC, np.zeros(D), 0.0, raw)

    @classmethod
    def memoryless(cls, D: int) -> SelectiveParams:
        """Abar == 0 and Cbar Bbar == 1 exactly, so every step returns its input.

        Step size 64 is exact under softplus and 64 * 2**-6 == 1 in binary.
        """
        return cls(
            A=np.full((D, 1), -1e3),
            WB=np.zeros((D, 1)),
            biasB=np.array([2.0**-6]),
            WC=np.zeros((D, 1)),
            biasC=np.array([1.0]),
            Wdelta=np.zeros(D),
            biasDelta=0.0,
            deltaParam=np.full(D, 64.0),
        )

    @classmethod
    def random(cls, rng: Rng, D: int, N: int, scale: float = 0.5,
               a_init: str = "hippo", bias_b: float = 0.0, bias_c: float = 0.0) -> SelectiveParams:
        if a_init == "hippo":
            # diagonal of the HiPPO matrix, -(n+1), shared by all channels
            A = np.tile(-(np.arange(N) + 1.0), (D, 1))
        else:
            A = -rng.uniform(0.5, 2.0, size=(D, N))
        return cls(
            A=A,
            WB=rng.normal(0.0, scale, size=(D, N)),
            biasB=bias_b + rng.normal(0.0, scale, size=N),
            WC=rng.normal(0.0, scale, size=(D, N)),
            biasC=bias_c + rng.normal(0.0, scale, size=N),
            Wdelta=rng.normal(0.0, scale, size=D),
            biasDelta=rng.normal(0.0, scale),
            deltaParam=rng.normal(0.0, scale, size=D),
        )

    def project(self, x):
        """Return (pre-softplus z, delta, B, C) for an (L, D) input."""
        s = x @ self.Wdelta + self.biasDelta
        z = self.deltaParam[None, :] + s[:, None]
        return z, softplus(z), x @ self.WB + self.biasB, x @ self.WC + self.biasC


@dataclass
class SelectiveTrace:
    """Per-step discretization records, kept for inspection and the adjoint."""

    x: np.ndarray
    z: np.ndarray
    delta: np.ndarray  # (L, D)
    B: np.ndarray  # (L, N)
    C: np.ndarray  # (L, N)
    dA: np.ndarray  # (L, D, N) Abar_k
    dB: np.ndarray  # (L, D, N) Bbar_k
    hs: np.ndarray = field(repr=False)  # (L, D, N) states


def _check_seq(p: SelectiveParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1 and p.D == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != p.D:
        raise ShapeError(f"expected (L, {p.D}) input, got {x.shape}")
    if x.shape[0] < 1:
        raise InvalidDimensionError("sequence must have L >= 1")
    return x


def selective_scan(p: SelectiveParams, x):
    """Selective scan with Abar_k = exp(delta_k A), Bbar_k = delta_k B_k.

    Returns ``(y, trace)`` with y of shape (L, D).
    """
    x = _check_seq(p, x)
    z, delta, B, C = p.project(x)
    arg = delta[:, :, None] * p.A[None, :, :]
    if not np.all(np.isfinite(arg)) or arg.max() > EXP_ARG_LIMIT:
        raise NumericRangeError(f"exp argument out of range (max {np.nanmax(arg):.3g})")
    dA = np.exp(arg)
    dB = delta[:, :, None] * B[:, None, :]
    y, hs = kernels.diag_scan_fwd(dA, dB * x[:, :, None], C)
    if not np.all(np.isfinite(y)):
        raise NumericRangeError("selective scan produced non-finite output")
    return y, SelectiveTrace(x, z, delta, B, C, dA, dB, hs)


def selective_scan_vjp(p: SelectiveParams, tr: SelectiveTrace, gy) -> np.ndarray:
    """Gradient of <gy, y> with respect to the scan input x."""
    gy = np.asarray(gy, dtype=np.float64)
    gh = kernels.diag_scan_bwd(tr.dA, tr.C, gy)
    h_prev = np.concatenate([np.zeros_like(tr.hs[:1]), tr.hs[:-1]], axis=0)
    x = tr.x
    gC = np.einsum("ld,ldn->ln", gy, tr.hs)
    g_dA = gh * h_prev
    g_dB = gh * x[:, :, None]
    gx = np.einsum("ldn,ldn->ld", gh, tr.dB)
    g_delta = np.einsum("ldn,ldn,dn->ld", g_dA, tr.dA, p.A) + np.einsum("ldn,ln->ld", g_dB, tr.B)
    gB = np.einsum("ldn,ld->ln", g_dB, tr.delta)
    gz = g_delta * d_softplus(tr.z)
    gs = gz.sum(axis=1)
    gx += gs[:, None] * p.Wdelta[None, :] + gB @ p.WB.T + gC @ p.WC.T
    return gx


@dataclass(frozen=True)
class DriftReport:
    leading: np.ndarray  # (L, D): Cbar_k Bbar_k
    second: np.ndarray  # (L-1, D): Cbar_k Abar_k Bbar_{k-1}, k >= 1
    unified: bool


def _all_equal(taps: np.ndarray, tol: float) -> bool:
    if taps.shape[0] <= 1:
        return True
    ref = taps[0]
    return bool(np.all(np.abs(taps - ref) <= tol * np.maximum(1.0, np.abs(ref))))


def kernel_drift(p: SelectiveParams, x, tol: float = UNIFIED_TOL) -> DriftReport:
    """Per-output-index convolution taps; LTI systems have identical taps."""
    x = _check_seq(p, x)
    if x.shape[0] < 2:
        raise InvalidDimensionError("kernel drift needs L >= 2")
    _, tr = selective_scan(p, x)
    leading = np.einsum("ln,ldn->ld", tr.C, tr.dB)
    second = np.einsum("ln,ldn,ldn->ld", tr.C[1:], tr.dA[1:], tr.dB[:-1])
    unified = _all_equal(leading, tol) and _all_equal(second, tol)
    return DriftReport(leading, second, unified)


# ------------------------------------------------------ vanilla Mamba block


def _silu_unit_preactivation() -> float:
    """The z with silu(z) == 1."""
    z = 1.0
    for _ in range(50):
        f = float(silu(z)) - 1.0
        z -= f / float(d_silu(z))
    return z


SILU_ONE = _silu_unit_preactivation()


def causal_dwconv1d(u, w, b):
    """Depth-wise causal conv over time: c[l] = b + sum_j w[:, j] * u[l - (k-1) + j]."""
    L = u.shape[0]
    kc = w.shape[1]
    c = np.broadcast_to(b, u.shape).copy()
    for j in range(kc):
        shift = kc - 1 - j
        if shift < L:
            c[shift:] += w[:, j] * u[: L - shift]
    return c


def causal_dwconv1d_vjp(gc, w):
    L = gc.shape[0]
    kc = w.shape[1]
    gu = np.zeros_like(gc)
    for j in range(kc):
        shift = kc - 1 - j
        if shift < L:
            gu[: L - shift] += w[:, j] * gc[shift:]
    return gu


@dataclass
class MambaWeights:
    in_x: np.ndarray  # (D, Di)
    in_x_b: np.ndarray
    in_z: np.ndarray  # (D, Di)
    in_z_b: np.ndarray
    conv: np.ndarray  # (Di, kc)
    conv_b: np.ndarray
    ssm: SelectiveParams
    out: np.ndarray  # (Di, D)
    out_b: np.ndarray

    @property
    def D(self) -> int:
        return self.in_x.shape[0]

    @classmethod
    def zeros(cls, D: int, expand: int = 2, N: int = 4, kc: int = 4) -> MambaWeights:
        Di = expand * D
        return cls(np.zeros((D, Di)), np.zeros(Di), np.zeros((D, Di)), np.zeros(Di),
                   np.zeros((Di, kc)), np.zeros(Di), SelectiveParams.zeros(Di, N),
                   np.zeros((Di, D)), np.zeros(D))

    @classmethod
    def random(cls, rng: Rng, D: int, expand: int = 2, N: int = 4, kc: int = 4,
               scale: float = 0.5) -> MambaWeights:
        Di = expand * D
        return cls(
            rng.normal(0, scale, (D, Di)), rng.normal(0, scale, Di),
            rng.normal(0, scale, (D, Di)), rng.normal(0, scale, Di),
            rng.normal(0, scale, (Di, kc)), rng.normal(0, scale, Di),
            SelectiveParams.random(rng, Di, N, scale),
            rng.normal(0, scale, (Di, D)), rng.normal(0, scale, D),
        )


def mamba_block_fwd(x, w: MambaWeights):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w.D:
        raise ShapeError(f"expected (L, {w.D}) input, got {x.shape}")
    u = x @ w.in_x + w.in_x_b
    c = causal_dwconv1d(u, w.conv, w.conv_b)
    a = silu(c)
    s, tr = selective_scan(w.ssm, a)
    z = x @ w.in_z + w.in_z_b
    g = silu(z)
    out = (s * g) @ w.out + w.out_b
    return out, (c, tr, s, z, g)


def mamba_block_bwd(w: MambaWeights, ctx, gout):
    c, tr, s, z, g = ctx
    gy = gout @ w.out.T
    gz = gy * s * d_silu(z)
    ga = selective_scan_vjp(w.ssm, tr, gy * g)
    gu = causal_dwconv1d_vjp(ga * d_silu(c), w.conv)
    return gz @ w.in_z.T + gu @ w.in_x.T


def vanilla_mamba_block(x, w: MambaWeights) -> np.ndarray:
    """Linear -> (causal DW conv -> SiLU -> selective scan) * SiLU(Linear) -> Linear."""
    return mamba_block_fwd(x, w)[0]
