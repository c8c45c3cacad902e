"""Latent-state MCMC for count-coupled hidden Markov epidemic models.

The package provides four samplers behind one dispatch function
(`run_chain`): two grid-rebound kernels that perturb the uniform draws
driving a non-centred representation of the latent matrix (untilted and
emission-tilted variants), an exact single-individual conditional
refresh, and an event-time sampler for the three-state linear model.
Diagnostics include jump-distance mixing summaries, credible-interval
coverage, an exact enumeration oracle for tiny instances, and a scaling
benchmark. The `rippler` console script drives simulation, inference,
benchmarks, and oracle comparisons from YAML configs.
"""

from .chmm import (
    InfeasibleStateError,
    InvariantError,
    KernelExport,
    ModelSpec,
    RipplerError,
    StateSpace,
    categorical_index,
    categorical_rows,
    observation_loglik_total,
    path_log_prior,
    rates_to_probs,
    simulate_centred,
    simulate_noncentred,
    snapshot_counts,
    state_counts,
)
from .models import (
    DiagnosticTestObservation,
    MultiStrainModel,
    MultiStrainParams,
    RecoveryTimeObservation,
    SeirModel,
    SeirParams,
    SirModel,
    SirParams,
    simulate_data_informed,
    simulate_dataset,
)
from .rippler import (
    AdaptiveTuner,
    ChainResult,
    compute_bounds,
    gaussian_walk_theta_updater,
    initial_state,
    materialise_grid,
    reconstruct,
    run_rippler,
    select_cells,
)
from .iffbs import run_iffbs
from .rjmcmc import run_rjmcmc
from .samplers import KERNEL_NAMES, run_chain
from .diagnostics import (
    credible_intervals,
    coverage_fraction,
    enumerate_posterior,
    empirical_config_probs,
    majd_indicator,
    majd_ordered,
    scaling_benchmark,
    tv_distance,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveTuner",
    "ChainResult",
    "DiagnosticTestObservation",
    "InfeasibleStateError",
    "InvariantError",
    "KERNEL_NAMES",
    "KernelExport",
    "ModelSpec",
    "MultiStrainModel",
    "MultiStrainParams",
    "RecoveryTimeObservation",
    "RipplerError",
    "SeirModel",
    "SeirParams",
    "SirModel",
    "SirParams",
    "StateSpace",
    "categorical_index",
    "categorical_rows",
    "compute_bounds",
    "coverage_fraction",
    "credible_intervals",
    "empirical_config_probs",
    "enumerate_posterior",
    "gaussian_walk_theta_updater",
    "initial_state",
    "majd_indicator",
    "majd_ordered",
    "materialise_grid",
    "observation_loglik_total",
    "path_log_prior",
    "rates_to_probs",
    "reconstruct",
    "run_chain",
    "run_iffbs",
    "run_rippler",
    "run_rjmcmc",
    "scaling_benchmark",
    "select_cells",
    "simulate_centred",
    "simulate_data_informed",
    "simulate_dataset",
    "simulate_noncentred",
    "snapshot_counts",
    "state_counts",
    "tv_distance",
]
