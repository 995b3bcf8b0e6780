"""Safe Bayesian optimization of PID gains with Nystrom-selected additive kernels."""
__version__ = "0.1.0"

from .gp import AdditiveGP, FactorizationError, Prediction, confidence_bounds, fit_gp, predict
from .kernels import (BaseKernelParams, KernelSpec, additive_kernel_eval, elementary_symmetric,
                      kernel_matrix)
from .optim import (BoConfig, BoTrace, acquire_next, run_linebo, run_safe_bo,
                    run_unconstrained_bo, safe_set, standard_kernel_baseline)
from .quad import (EpisodeConfig, EpisodeResult, GainBounds, PidGains, QuadParams,
                   QuadrotorBenchmark, dynamics_step, objective, performance, pid_controller,
                   run_episode)
from .sampling import RngStream, latin_hypercube
from .selection import (KernelRanking, NystromConfig, NystromKernelSelector, build_reduced_kernel,
                        fit_forest, nystrom_cree, rank_additive_kernels)

__all__ = [
    "AdditiveGP", "BaseKernelParams", "BoConfig", "BoTrace", "EpisodeConfig", "EpisodeResult",
    "FactorizationError", "GainBounds", "KernelRanking", "KernelSpec", "NystromConfig",
    "NystromKernelSelector", "PidGains", "Prediction", "QuadParams", "QuadrotorBenchmark",
    "RngStream", "acquire_next", "additive_kernel_eval", "build_reduced_kernel",
    "confidence_bounds", "dynamics_step", "elementary_symmetric", "fit_forest", "fit_gp",
    "kernel_matrix", "latin_hypercube", "nystrom_cree", "objective", "performance",
    "pid_controller", "predict", "rank_additive_kernels", "run_episode", "run_linebo",
    "run_safe_bo", "run_unconstrained_bo", "safe_set", "standard_kernel_baseline",
]
