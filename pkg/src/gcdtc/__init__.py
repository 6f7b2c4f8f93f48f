"""Low-rank tensor completion via generalized CP decomposition.

Fits a fixed-rank CP model to the observed entries of a tensor under a
pluggable element likelihood (gaussian or poisson) plus an optional
quadratic-variation smoothness prior, then fills the missing entries from
the model. The poisson/nonnegative configuration is the smooth Poisson
tensor completion solver for count-like data such as images.
"""

from .imaging import (
    corrupt,
    psnr,
    read_history_csv,
    read_mask_pgm,
    read_ppm,
    synth_poisson_lowrank,
    write_history_csv,
    write_mask_pgm,
    write_ppm,
)
from .losses import GaussianLoss, PoissonLoss, build_y, get_loss
from .smoothness import qv_grad, qv_value
from .solver import (
    CompletionResult,
    NonFiniteError,
    SolverConfig,
    SolverState,
    alpha_ramp,
    complete,
    init_factors,
    init_state,
    objective,
    solve,
    sweep,
)
from .tensor_ops import (
    FactorSet,
    fold,
    khatri_rao,
    kr_except,
    kronecker,
    mttkrp,
    reconstruct,
    unfold,
)

__version__ = "0.1.0"

__all__ = [
    "CompletionResult",
    "FactorSet",
    "GaussianLoss",
    "NonFiniteError",
    "PoissonLoss",
    "SolverConfig",
    "SolverState",
    "alpha_ramp",
    "build_y",
    "complete",
    "corrupt",
    "fold",
    "get_loss",
    "init_factors",
    "init_state",
    "khatri_rao",
    "kr_except",
    "kronecker",
    "mttkrp",
    "objective",
    "psnr",
    "qv_grad",
    "qv_value",
    "read_history_csv",
    "read_mask_pgm",
    "read_ppm",
    "reconstruct",
    "solve",
    "sweep",
    "synth_poisson_lowrank",
    "unfold",
    "write_history_csv",
    "write_mask_pgm",
    "write_ppm",
]
