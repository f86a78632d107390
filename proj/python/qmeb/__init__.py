"""Two-qubit spin-boson master-equation benchmark.

Propagate six perturbative master equations and the exact pseudo-mode
reference, and assess them by error bound, relative error and positivity.

    import numpy as np, qmeb
    s, b = qmeb.SystemParams(1.0, 0.95), qmeb.BathParams(0.1, 2.0)
    t = np.linspace(0.0, 10.0, 101)
    rho = qmeb.propagate(qmeb.Method.QOME, s, b, qmeb.basis_projector(0), t)
"""

from ._qmeb import (
    POSITIVITY_THRESHOLD,
    BathParams,
    Method,
    NumericalError,
    SystemParams,
    TimeoutError,
    basis_projector,
    bcf,
    cg_coeff,
    evaluate_point,
    half_fourier,
    observables,
    pauli_product,
    prepare_reference,
    propagate,
    redfield_coeff,
    reference,
    run_config,
    spectral_density,
)

__all__ = [
    "POSITIVITY_THRESHOLD",
    "BathParams",
    "Method",
    "NumericalError",
    "SystemParams",
    "TimeoutError",
    "basis_projector",
    "bcf",
    "cg_coeff",
    "evaluate_point",
    "half_fourier",
    "observables",
    "pauli_product",
    "prepare_reference",
    "propagate",
    "redfield_coeff",
    "reference",
    "run_config",
    "spectral_density",
]
