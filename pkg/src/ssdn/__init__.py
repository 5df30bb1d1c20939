"""
Distributed double proximal primal-dual dynamics for consensus problems whose
local costs are one smooth term plus two proximable nonsmooth terms.
"""

from .graph import Graph, LaplacianData, build_graph, from_edges, is_connected, laplacian, path_graph
from .prox import (BallIndicator, BoxIndicator, L1Anchor, ProxResult, Zero, moreau_gradient,
                   prox, prox_oracle, subgradient_residual)
from .problem import (AgentObjective, ProblemSpec, Quadratic, evaluate_total_cost, gradient_f0,
                      scale_for_strong_convexity, validate_assumptions)
from .dynamics import (AlgorithmParams, SystemState, Trajectory, default_params, simulate, step,
                       subgradient_field, vector_field)
from .diagnostics import (EquilibriumCertificate, ResidualReport, analytic_certificate,
                          certificate_from_run, consensus_residual, fixed_point_residual,
                          kkt_residual, lyapunov_value)
from .scenario import Scenario, certify, load_scenario, run

__version__ = "0.1.0"
