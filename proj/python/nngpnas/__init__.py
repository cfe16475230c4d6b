"""Monte-Carlo NNGP scoring of cell-based architectures."""

from ._nngpnas import (
    Cell,
    HybridModel,
    Network,
    NetworkPlan,
    NngpError,
    analytic_relu_mlp_kernel,
    default_reg_grid,
    discovered_performance,
    fit_hybrid,
    gp_predict,
    kendall_tau,
    make_synthetic,
    mnas_reward,
    monte_carlo_relu_mlp_kernel,
    nngp_accuracy,
    nngp_accuracy_from_kernels,
    nngp_flops,
    parse_arch,
    parse_arch_batch,
    pearson,
    pqetp,
    prune_cell,
    read_scores,
    reduce_search_space,
    run_experiment,
    sample_random_arch,
    standardize,
    subsample_balanced,
    synthetic_two_class_bayes_rate,
    training_flops,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
