"""Kernel density estimation with bandwidths chosen by the persistence of the
unimodal category across a bandwidth sweep."""

__version__ = "0.1.0"

from .bandwidth import (
    AmiseResult,
    ConfidenceBands,
    CVResult,
    TDEResult,
    UcatProfile,
    amise_bandwidth,
    bandwidth_grid,
    confidence_bands,
    cv_risk,
    cv_select,
    select_from_profile,
    tde_select,
    tde_select_stable_modes,
)
from .estimators import LSCVKernelDensity, TopologicalKDE, UnimodalDecomposer
from .kernels import DensityGrid, KernelKind, count_kernel_evals, kde_on_grid, kernel
from .unimodal import UnimodalDecomposition, count_local_maxima, sweep_decompose, ucat

__all__ = [
    "AmiseResult",
    "ConfidenceBands",
    "CVResult",
    "DensityGrid",
    "KernelKind",
    "LSCVKernelDensity",
    "TDEResult",
    "TopologicalKDE",
    "UcatProfile",
    "UnimodalDecomposer",
    "UnimodalDecomposition",
    "amise_bandwidth",
    "bandwidth_grid",
    "confidence_bands",
    "count_kernel_evals",
    "count_local_maxima",
    "cv_risk",
    "cv_select",
    "kde_on_grid",
    "kernel",
    "select_from_profile",
    "sweep_decompose",
    "tde_select",
    "tde_select_stable_modes",
    "ucat",
]
