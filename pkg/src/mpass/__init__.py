"""mpass: minimax critical points of locally Lipschitz functions.

Subpackages
-----------
::

 oracle       -- functionals, closed-set level oracles, solver config
 clarke       -- sampled generalized gradients and min-norm residuals
 geodesic     -- the 1/(1+|x|)-weighted path metric and set distances
 ekeland      -- certified variational-principle refinement
 mountainpass -- discrete minimax, penalty, trimming, bound extraction
 hamiltonian  -- fixed-energy periodic orbits of -q'' in dV(q)
 cli          -- batch driver (saddle / orbit / verify / properties)
"""

from .oracle import (ClosedSetOracle, Functional, SolverConfig,
                     builtin_functional, finite_difference_gradient,
                     hyperplane_oracle)
from .clarke import (SubdifferentialEstimate, directional_derivative,
                     min_norm_element, scaled_residual, subdifferential_sample)
from .geodesic import (GeodesicConfig, delta_estimate, dist_delta_to_set,
                       path_metric_rho, segment_length)
from .ekeland import (EkelandCertificate, MetricSpaceView, ekeland_refine,
                      verify_certificate)
from .mountainpass import (CeramiPoint, DiscretePath, MinimaxEstimate,
                           cerami_sequence, cerami_step, gamma_estimate,
                           path_max, penalty_psi, separation_check)

__version__ = "0.1.0"
