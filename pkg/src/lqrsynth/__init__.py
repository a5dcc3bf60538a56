"""LQR synthesis by structured projected gradient descent and LMI/SDP design."""

from .errors import (ConsistencyError, ConvergenceError, DimensionError,
                     ExcitationError, InstabilityError, LqrError,
                     NumericalError, RecoveryError)
from .linalg import (BlockSym, CostSpec, ExcitationSpec, Gain, SystemModel,
                     closed_loop, closed_loop_state, dare_oracle, make_gain,
                     solve_stein_covariance, solve_stein_value,
                     spectral_radius)
from .modelfree import (gradient_model_free, pgd_modelfree_run,
                        solve_value_from_data)
from .sdp import (ConstraintSpec, SdpProblem, SdpSolution, build_dual_sdp,
                  build_sdp_constrained, build_sdp_design, extended_schur_lmi,
                  recover_gain, solve_sdp, verify_design)
from .structured import (ArmijoStep, ConstantStep, DiminishingStep, PgdConfig,
                         PgdRun, StructureMask, gradient_model_based, pgd_run,
                         project_structure)
from .trajectory import (LinearSystemSource, TrajectorySource,
                         discounted_cost, rollout_adjoint_aggregate,
                         rollout_augmented, rollout_state_aggregate)

__version__ = "0.1.0"
