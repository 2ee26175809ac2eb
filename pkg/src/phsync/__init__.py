"""Distributed port-Hamiltonian neural controllers with a built-in L2-gain
bound, a Kuramoto oscillator benchmark, a discrete-adjoint training engine,
and a numerical dissipativity verifier."""

from .controller import (
    HamiltonianSpec,
    LogCosh,
    PhController,
    PhParams,
    Quadratic,
    assemble,
    controller_from_checkpoint,
    checkpoint_from_json,
    checkpoint_to_json,
    controller_output,
    controller_rhs,
    grad_hamiltonian,
    hamiltonian,
    init_params,
)
from .numerics import (
    BlockMask,
    SeededRng,
    exp_diag,
    lambda_max_sym,
    masked_assemble,
    skew_from_free,
)
from .plant import (
    KuramotoParams,
    PlantState,
    SecondOrderKuramoto,
    plant_output,
    rhs_first_order,
    rhs_second_order,
    storage_value,
)
from .simulate import (
    ClosedLoopState,
    RolloutConfig,
    Trajectory,
    baseline_rollout,
    closed_loop_rhs,
    consensus_metric,
    rollout,
    sample_initial,
    trajectory_cost,
    trajectory_to_csv,
)
from .topology import (
    Complete,
    ErdosRenyi,
    Graph,
    SquareLattice,
    WattsStrogatz,
    adjacency,
    comm_mask,
    generate,
)
from .train import (
    AdamState,
    ControllerArch,
    ParamLayout,
    TrainConfig,
    adam_step,
    loss,
    loss_grad,
    train,
)
from .verify import (
    CertificateReport,
    L2Gain,
    OutputStrictPassive,
    Passive,
    closed_loop_check,
    empirical_l2_gain,
    matrix_certificate,
    trajectory_dissipation,
)

__version__ = "0.1.0"
