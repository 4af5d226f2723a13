"""Quantum KAM diagonalization of ``T + eps V`` on truncated lattices.

The unperturbed operator ``T`` is diagonal with simple eigenvalues
``lambda_n = h(omega . n)``; ``V`` is an off-diagonally decaying perturbation
stored by diagonals.  A quadratically convergent sequence of conjugations
removes the off-diagonal part, yielding perturbed eigenvalues, localized
eigenvectors and a ledger of the convergence conditions at every step.
"""

from .band import (
    BandOperator,
    alpha_norm,
    apply,
    compose,
    diagonal_part,
    from_dense,
    neumann_inverse,
    off_diagonal_part,
    operator_norm_bound,
    q_factor,
    to_dense,
)
from .constants import KamConstants
from .engine import (
    KamOptions,
    KamResult,
    KamState,
    diophantine_report,
    kam_step,
    localization_report,
    run_kam,
    solve_homological,
    unitarize,
)
from .lattice import Window, enumerate_window, l1_norm, shifted_domain
from .oracle import DenseEigResult, dense_symmetric_eig, match_spectra
from .perturbation import (
    PerturbationSpec,
    build_perturbation,
    hermitian_check,
    laplacian,
    verify_assumption_A4,
)
from .spectrum import (
    AssumptionReport,
    SpectrumModel,
    certify,
    check_h_conditions,
    diophantine_scan,
    verify_assumption_A1,
    verify_assumption_A2,
    verify_assumption_A3,
)
from .talgebra import SpectralGrid, TSequence, pointwise_product, reciprocal_difference, shift, t_norm

__version__ = "0.1.0"
