"""Reference kernels in Python + numpy. Same signatures as ``_ckernels``."""
import numpy as np


def lti_scan(Abar, Bbar, Cbar, x, h0):
    L = x.shape[0]
    h = h0.copy()
    y = np.empty(L)
    for k in range(L):
        h = Abar @ h + Bbar * x[k]
        y[k] = Cbar @ h
    return y, h


def causal_conv(kernel, x):
    L = x.shape[0]
    y = np.empty(L)
    for k in range(L):
        # y_k = sum_{i<=k} K_i x_{k-i}
        y[k] = kernel[: k + 1] @ x[k::-1]
    return y


def krylov(Abar, Bbar, Cbar, L):
    n = Abar.shape[0]
    K = np.empty((n, L))
    v = Bbar.copy()
    muls = 0
    for k in range(L):
        if k:
            v = Abar @ v
            muls += n * n
        K[:, k] = v
    kernel = Cbar @ K
    muls += n * L
    return K, kernel, muls


def diag_scan_fwd(dA, dBx, C):
    """h_k = dA_k * h_{k-1} + dBx_k (elementwise over (D, N)); y_k = h_k @ C_k."""
    L, D, N = dA.shape
    hs = np.empty((L, D, N))
    h = np.zeros((D, N))
    for k in range(L):
        h = dA[k] * h + dBx[k]
        hs[k] = h
    y = np.einsum("ldn,ln->ld", hs, C)
    return y, hs


def diag_scan_bwd(dA, C, gy):
    """Adjoint of the state recurrence: returns dLoss/dh_k for every step."""
    L, D, N = dA.shape
    gh = np.empty((L, D, N))
    carry = np.zeros((D, N))
    for k in range(L - 1, -1, -1):
        carry = carry + gy[k][:, None] * C[k][None, :]
        gh[k] = carry
        carry = dA[k] * carry
    return gh
