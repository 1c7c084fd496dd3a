"""gibbsvar: pairwise-interaction Gibbs point processes, simulated and fitted.

Simulation uses a Metropolis-Hastings birth/death/move chain; fitting uses
the shift-invariant and grid variational estimators (linear systems built
from spatial derivatives of the energy, no normalizing constant needed) and
a maximum-pseudolikelihood baseline.
"""

from .errors import (DivergedError, GibbsvarError, InfeasibleDataError,
                     InsufficientCellsError, InvalidEstimateError,
                     SingularSystemError)
from .estimators import (EmpiricalSystem, EstimateResult, cell_residuals,
                         grid_system, pooled_estimate, sandwich_covariance,
                         shift_invariant_system, solve)
from .geometry import (CellIndex, Configuration, PairTable, Window,
                       build_index, neighbors_within, read_pattern,
                       write_pattern)
from .harness import (EstimatorSpec, ExperimentPlan, ExperimentReport,
                      child_seed, fit_one, run_experiment, summarize)
from .models import (GibbsModel, LennardJonesSpec, PotentialBasis, PsiWeight,
                     cell_taper, div_div_h_basis, div_h_basis,
                     div_psi_hardcore, grad_h_basis, grad_psi_hardcore,
                     hard_sphere_basis, inverse_power_basis,
                     laplacian_h_basis, lennard_jones_basis,
                     local_energy_basis, model_from_spec, model_to_spec,
                     psi_hardcore, sigma_eps_to_theta, theta_is_valid,
                     theta_to_sigma_eps, total_energy)
from .mple import Quadrature, build_quadrature, fit_mple
from .sampler import SamplerConfig, energy_trace, simulate

__version__ = "0.1.0"
