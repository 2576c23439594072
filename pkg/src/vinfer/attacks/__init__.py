"""Adversarial trace-forgery suite: gradient-descent reconstruction,
inverse transforms, logit swapping, and their pass-rate reporting."""

from .autodiff import Adam, PlainGd, forward_from, loss_and_grad
from .gradient import grad_reconstruct, run_gradient_attack
from .inverse import inverse_transform_attack, run_inverse_attack
from .linalg import pinv_normal_equations, pinv_regularized, pinv_via_svd, svd_small
from .report import (
    DEFAULT_THRESHOLDS,
    INVERSE_THRESHOLDS,
    PassRateTable,
    pass_rate_table,
    write_results_csv,
)
from .swap import run_swap_attack, swap_attack, swapped_logits
from .types import AttackConfig, AttackResult, LayerStats, layer_stats

__all__ = [
    "Adam",
    "AttackConfig",
    "AttackResult",
    "DEFAULT_THRESHOLDS",
    "INVERSE_THRESHOLDS",
    "LayerStats",
    "PassRateTable",
    "PlainGd",
    "forward_from",
    "grad_reconstruct",
    "inverse_transform_attack",
    "layer_stats",
    "loss_and_grad",
    "pass_rate_table",
    "pinv_normal_equations",
    "pinv_regularized",
    "pinv_via_svd",
    "run_gradient_attack",
    "run_inverse_attack",
    "run_swap_attack",
    "svd_small",
    "swap_attack",
    "swapped_logits",
    "write_results_csv",
]
