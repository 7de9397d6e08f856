"""Spectral homogenisation of periodic elliptic and Maxwell systems on Bloch
fibres, with certified operator-norm error bounds and explicit constants."""

__version__ = "0.1.0"

from .abstract import (
    ErrorBudget,
    OperatorFamilyFibre,
    Tolerances,
    certify_resolvent_gap,
    kappa_constant,
    limit_resolvent,
    make_random_family,
    resolvent,
    surrogate_resolvent,
    validate_fibre,
)
from .cell import (
    CorrectorSolution,
    HomogenisedTensor,
    assemble_hom_tensor,
    classical_limit_check,
    hom_inverse_via_projection,
    lipschitz_sweep,
    mean_matrix,
    solve_cell,
)
from .elliptic import (
    BlockSystemFibre,
    EllipticWorkspace,
    build_block_fibre,
    certify_elliptic_rate,
    certify_flux,
    fibre_hom_resolvent,
)
from .fourier import (
    CoefficientField,
    ModeSet,
    QuasiPeriodicField,
    curl_theta_matrix,
    div_theta_matrix,
    grad_theta_matrix,
    multiplication_matrix,
    projection_n_matrix,
    projection_p_matrix,
)
from .maxwell import (
    MaxwellFibre,
    certify_maxwell_rate,
    curl_poincare_check,
    effective_tensor,
    effective_tensor_equivalence,
)
from .config import RunConfig, load_coefficient, load_run_config
from .runner import run

__all__ = [name for name in dir() if not name.startswith("_")]
