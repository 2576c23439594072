"""Shared attack configuration and result containers."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import VinferError

METHODS = ("grad-descent", "inverse-pinv", "inverse-svd", "inverse-regularized", "swap")


@dataclass
class AttackConfig:
    method: str = "grad-descent"
    learning_rate: float = 0.005
    max_iters: int = 10000
    convergence_loss: float = 1e-4
    l2_lambda: float = 0.0
    rounds: int = 1
    optimizer: str = "plain-gd"
    inject_layer: int = 0  # 0 = optimize the query, >=1 = injected activations
    paths_per_round: int = 100
    mask: tuple = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise VinferError(f"unknown attack method {self.method!r}")
        if self.learning_rate <= 0:
            raise VinferError("learning_rate must be positive")
        if self.max_iters < 1:
            raise VinferError("max_iters must be >= 1")
        if self.rounds < 1:
            raise VinferError("rounds must be >= 1")

    @classmethod
    def swap_defaults(cls, **kw):
        base = dict(
            method="swap", optimizer="adam", learning_rate=0.01, l2_lambda=0.001,
            max_iters=5000, inject_layer=1,
        )
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class LayerStats:
    minimum: float
    mean: float
    maximum: float

    def metric(self, name):
        return {"min": self.minimum, "mean": self.mean, "max": self.maximum}[name]


def layer_stats(values):
    v = np.asarray(values, dtype=np.float64)
    return LayerStats(float(v.min()), float(v.mean()), float(v.max()))


@dataclass
class AttackResult:
    method: str
    input_id: int
    round_id: int
    converged: bool
    iterations: int
    final_loss: float
    per_layer: list  # LayerStats per layer 1..L
    forged_trace: "Trace" = field(repr=False, default=None)
    path_separations: list = None  # per sampled path: mean |delta| along it

    @property
    def min_path_separation(self):
        if not self.path_separations:
            return None
        return min(self.path_separations)
