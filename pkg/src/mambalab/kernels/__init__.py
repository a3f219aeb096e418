"""Hot scan kernels with a compiled core and a pure-Python fallback.

The compiled extension ``_ckernels`` is used when it was built; otherwise
the numpy reference in ``_pykernels`` is selected at import time.
:func:`use_backend` switches explicitly (tests and benchmarks run both).
"""
import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels

_active = _ckernels if _ckernels is not None else _pykernels


def backend_name() -> str:
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name: str) -> None:
    global _active
    try:
        _active = BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def lti_scan(Abar, Bbar, Cbar, x, h0):
    return _active.lti_scan(_c(Abar), _c(Bbar), _c(Cbar), _c(x), _c(h0))


def causal_conv(kernel, x):
    return _active.causal_conv(_c(kernel), _c(x))


def krylov(Abar, Bbar, Cbar, L):
    return _active.krylov(_c(Abar), _c(Bbar), _c(Cbar), int(L))


def diag_scan_fwd(dA, dBx, C):
    return _active.diag_scan_fwd(_c(dA), _c(dBx), _c(C))


def diag_scan_bwd(dA, C, gy):
    return _active.diag_scan_bwd(_c(dA), _c(C), _c(gy))
