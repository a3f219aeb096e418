"""Desk-scale laboratory for Mamba-style state space models."""
from . import kernels
from .ssm import ContinuousSSM, DiscreteSSM, Method, discretize, hippo, matrix_exp
from .scan import (
    KernelBundle,
    MambaWeights,
    SelectiveParams,
    build_kernel,
    kernel_drift,
    scan_conv,
    scan_recurrent,
    selective_scan,
    vanilla_mamba_block,
)
from .tensor import Rng, Tensor, pgm_read, pgm_write, tensor_read, tensor_write

__version__ = "0.1.0"
