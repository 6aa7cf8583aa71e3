"""Graph aggregation-diffusion dynamics: nonlinear diffusion plus
kernel-driven aggregation on graphs, with integrators, over-smoothing
diagnostics, and a small classifier trained through the unrolled dynamics.
"""

__version__ = "0.1.0"

from .diagnostics import (
    ClusterProfile,
    EnergySeries,
    cluster_count,
    default_cluster_eps,
    dirichlet_energy,
    feature_spread,
    metastability_profile,
    oversmoothing_verdict,
)
from .dynamics import (
    ActivationSpec,
    DynamicsConfig,
    aggregation_term,
    attention_adjacency,
    diffusion_term,
    rhs,
)
from .graph import (
    CsbmConfig,
    Dataset,
    Graph,
    csbm_generate,
    from_edge_list,
    min_degree_node,
    row_normalized_adjacency,
)
from .kernels import (
    KernelMatrix,
    KernelSpec,
    ProjectionParams,
    kernel_matrix,
    kernel_scalar,
    row_normalize,
)
from .solvers import (
    NumericalError,
    SolverConfig,
    Trajectory,
    euler_step,
    integrate,
    rk4_step,
)
from .training import (
    ModelParams,
    TrainConfig,
    finite_difference_grad,
    forward,
    gradient_check,
    loss,
    loss_and_grad,
    train,
)

__all__ = [
    "__version__",
    "ActivationSpec",
    "ClusterProfile",
    "CsbmConfig",
    "Dataset",
    "DynamicsConfig",
    "EnergySeries",
    "Graph",
    "KernelMatrix",
    "KernelSpec",
    "ModelParams",
    "NumericalError",
    "ProjectionParams",
    "SolverConfig",
    "TrainConfig",
    "Trajectory",
    "aggregation_term",
    "attention_adjacency",
    "cluster_count",
    "csbm_generate",
    "default_cluster_eps",
    "diffusion_term",
    "dirichlet_energy",
    "euler_step",
    "feature_spread",
    "finite_difference_grad",
    "forward",
    "from_edge_list",
    "gradient_check",
    "integrate",
    "kernel_matrix",
    "kernel_scalar",
    "loss",
    "loss_and_grad",
    "metastability_profile",
    "min_degree_node",
    "oversmoothing_verdict",
    "rhs",
    "rk4_step",
    "row_normalize",
    "row_normalized_adjacency",
    "train",
]
