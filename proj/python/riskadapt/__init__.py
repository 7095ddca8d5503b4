"""Python bindings for the riskadapt C++ core."""

from ._core import (
    BalancerConfig,
    BalancerState,
    Command,
    ConfigError,
    DimensionError,
    DomainError,
    NumericalAbort,
    adaptive_alpha,
    balancer_reset,
    balancer_step,
    clipped_surrogate,
    coefficient_of_variation,
    compute_gae,
    compute_reward,
    cvar_distortion,
    distorted_value,
    distortion_weights,
    evaluate_checkpoint,
    normal_cdf,
    normal_quantile,
    quantile_loss,
    resolve_config,
    train,
    wang_distortion,
)

__all__ = [
    "BalancerConfig",
    "BalancerState",
    "Command",
    "ConfigError",
    "DimensionError",
    "DomainError",
    "NumericalAbort",
    "adaptive_alpha",
    "balancer_reset",
    "balancer_step",
    "clipped_surrogate",
    "coefficient_of_variation",
    "compute_gae",
    "compute_reward",
    "cvar_distortion",
    "distorted_value",
    "distortion_weights",
    "evaluate_checkpoint",
    "normal_cdf",
    "normal_quantile",
    "quantile_loss",
    "resolve_config",
    "train",
    "wang_distortion",
]
