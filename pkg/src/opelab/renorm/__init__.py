"""Renormalized products, their moments and convergence experiments."""

from .moments import (
    IPCResult,
    MomentSpec,
    TMResult,
    compute_IPC,
    estimate_TM,
    jackknife,
    moment_products,
    run_samples,
    wick_diagrams,
)
from .product import (
    GrKernel,
    LatticeRenorm,
    RenormFormat,
    compute_Mr,
    compute_Zr,
    compute_gr,
    field_half_spectrum,
    lattice_kernel,
)
from .study import RateReport, RateRow, exact_difference_norm2, exact_variance, fit_rate, mollifier_independence, telescoping_study

__all__ = [
    "GrKernel",
    "IPCResult",
    "LatticeRenorm",
    "MomentSpec",
    "RateReport",
    "RateRow",
    "RenormFormat",
    "TMResult",
    "compute_IPC",
    "compute_Mr",
    "compute_Zr",
    "compute_gr",
    "estimate_TM",
    "exact_difference_norm2",
    "exact_variance",
    "field_half_spectrum",
    "fit_rate",
    "jackknife",
    "lattice_kernel",
    "moment_products",
    "mollifier_independence",
    "run_samples",
    "telescoping_study",
    "wick_diagrams",
]
