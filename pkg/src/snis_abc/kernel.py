"""Kernel weights and log-domain softmax normalization.

The only kernel family is the exponential-L2 kernel
``k(x, y) = exp(-||x - y||_2 / tau)``.  Weights are always carried as log
weights and normalized with max subtraction, so small temperatures cannot
underflow a whole batch to zero.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatchError, InvalidInputError


class KernelFamily(str, enum.Enum):
    EXPONENTIAL_L2 = "exponential-L2"


@dataclass(frozen=True)
class KernelSpec:
    tau: float
    family: KernelFamily = KernelFamily.EXPONENTIAL_L2

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise InvalidInputError(f"tau must be a positive finite number, got {self.tau!r}")
        object.__setattr__(self, "family", KernelFamily(self.family))


@dataclass(frozen=True)
class WeightProfile:
    """Softmax weights of one query against a batch.

    ``alpha`` sums to one; ``sum_alpha_sq`` lies in ``[1/n, 1]``.
    ``log_mean_weight`` is ``log((1/n) * sum_i w_i)`` for the unshifted
    weights.
    """

    log_weights: np.ndarray
    alpha: np.ndarray
    sum_alpha_sq: float
    log_mean_weight: float

    @property
    def n(self) -> int:
        return self.alpha.shape[0]


def as_points(batch, name="batch") -> np.ndarray:
    """Validate an ``(n, D)`` float64 matrix of finite coordinates."""
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyBatchError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite coordinates")
    return arr


def as_query(x, dim=None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"query must be a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise InvalidInputError(f"query has dimension {arr.shape[0]}, batch has {dim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("query contains non-finite coordinates")
    return arr


def eval_log_weights(x, batch, spec: KernelSpec) -> np.ndarray:
    """Return ``-||x - y_i||_2 / tau`` for every row ``y_i`` of ``batch``."""
    y = as_points(batch)
    q = as_query(x, y.shape[1])
    return -np.sqrt(np.sum((y - q) ** 2, axis=1)) / spec.tau


def normalize(log_weights) -> WeightProfile:
    lw = np.asarray(log_weights, dtype=np.float64)
    if lw.ndim != 1:
        raise InvalidInputError(f"log weights must be 1-D, got shape {lw.shape}")
    n = lw.shape[0]
    if n == 0:
        raise EmptyBatchError("no log weights to normalize")
    if not np.all(np.isfinite(lw)):
        raise InvalidInputError("log weights must be finite")
    top = lw.max()
    shifted = np.exp(lw - top)
    total = shifted.sum()
    alpha = shifted / total
    return WeightProfile(
        log_weights=lw,
        alpha=alpha,
        sum_alpha_sq=float(np.dot(alpha, alpha)),
        log_mean_weight=float(top + np.log(total) - np.log(n)),
    )


def weight_profile(x, batch, spec: KernelSpec) -> WeightProfile:
    """Shorthand for ``normalize(eval_log_weights(x, batch, spec))``."""
    return normalize(eval_log_weights(x, batch, spec))
