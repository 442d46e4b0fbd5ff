"""Debiased doubly robust dose-response curve estimation.

Thin wrapper around the C++ core. Arrays are passed as NumPy arrays; ``w``
is an ``(n, d)`` covariate matrix.
"""

from ._drcurve import (
    DrcurveError,
    __version__,
    band,
    draw_dataset,
    estimate,
    kernel_constants,
    run_cli,
    select_bandwidth,
    true_theta,
    v_k_tau,
)

__all__ = [
    "DrcurveError",
    "__version__",
    "band",
    "draw_dataset",
    "estimate",
    "kernel_constants",
    "run_cli",
    "select_bandwidth",
    "true_theta",
    "v_k_tau",
]
