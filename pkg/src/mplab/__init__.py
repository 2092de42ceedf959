"""Discrete mountain-pass computations with polarization constraints.

The package builds Dirichlet grids (:mod:`mplab.grid`), semilinear energies
on them (:mod:`mplab.functional`), exact grid polarizations
(:mod:`mplab.polarization`), a quantitative deformation
(:mod:`mplab.deformation`) and the path-based minimax machinery that
extracts symmetric critical points (:mod:`mplab.minimax`).
"""

from .deformation import DeformationParams, deform, low_slope_search
from .errors import (
    BudgetExhausted,
    ConfigError,
    DomainError,
    FunctionalError,
    HalfSpaceError,
    HypothesisFailure,
    MPLabError,
    PathError,
    SolverError,
)
from .functional import EnergyFunctional, Nonlinearity
from .grid import GridDomain, GridFunction, build_domain, dual_norm, h1_inner, h1_norm, laplacian_solve
from .minimax import (
    Path,
    ShadowCertificate,
    make_initial_path,
    mountain_pass_symmetric,
    optimize_path,
    path_sup,
    shadow_extract,
    validate_certificate,
)
from .polarization import (
    HalfSpace,
    polarize,
    polarize_domain,
    random_polarization_pass,
    schwarz_rearrange,
    symmetry_defect,
)

__version__ = "0.1.0"
