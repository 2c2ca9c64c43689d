"""Numerical laboratory for the spectrum of Laplacian-preconditioned
second order elliptic operators.

The package assembles P1 finite element matrices A (coefficient k) and L
(Laplacian), solves the generalized eigenproblem A v = lambda L v, pairs
every eigenvalue with the range of k over one basis support via bipartite
matching, evaluates nodal-value error bounds, and explains preconditioned
CG convergence through Ritz values and distribution functions.
"""

from .assembly import (assemble_laplacian, assemble_rhs, assemble_stiffness,
                       export_matrix, export_vector)
from .bounds import BoundReport, convergence_table, evaluate_bounds
from .coefficient import (AnalyticField, ElementField, QuadrantField,
                          SamplingRule, SplitField, SupportInterval,
                          QUADRANT_HIGH, builtin, constant_field,
                          kellogg_solution, load_element_field, nodal_values,
                          random_element_field, support_interval,
                          support_intervals)
from .krylov import (DistributionFunction, IncompleteFactor, PcgTrace,
                     Preconditioner, distribution_function,
                     effective_condition_bound, exact_preconditioner, ichol,
                     ichol_preconditioner, identity_preconditioner,
                     laplace_preconditioner, pcg, ritz_values)
from .localization import (AdjacencyMatrix, PairingResult, build_adjacency,
                           canonical_matching, pair_spectrum,
                           perfect_matching, sorted_pairing_audit,
                           subset_counting_check)
from .mesh import (HalfPlanes, Mesh, Rectangle, read_mesh, reentrant_corner,
                   refine_local, support_patch, uniform_square, write_mesh)
from .quadrature import QuadratureRule, centroid_rule, degree4_rule, \
    midpoint_rule, rule_by_degree
from .scenarios import Report, Scenario, emit_plots, run, scenario_names
from .spectral import (CholeskyFactor, NotPositiveDefiniteError,
                       SpectrumResult, cholesky, generalized_eigs,
                       preconditioned_operator_spectrum)

__version__ = "0.1.0"
