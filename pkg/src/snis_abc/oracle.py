"""Ground-truth quantities computed from a full reference pool.

All functions take the pool as the stand-in for the reference
distribution, so "expectations" here are exact averages over pool points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import SamplePool
from .errors import InvalidInputError
from .estimators import standard_centroid
from .kernel import KernelSpec, WeightProfile, eval_log_weights, normalize


@dataclass(frozen=True)
class TargetCentroid:
    value: np.ndarray
    mean_weight: float
    mean_weight_sq: float


@dataclass(frozen=True)
class LeadingBias:
    """Leading bias coefficient: the bias at batch size n is ``vector / n``."""

    vector: np.ndarray
    norm: float


def pool_profile(x, pool: SamplePool, kernel: KernelSpec) -> WeightProfile:
    return normalize(eval_log_weights(x, pool.points, kernel))


def _moments(profile: WeightProfile) -> tuple[float, float]:
    # mean of w and of w^2 over the pool, from the shifted log weights
    lw = profile.log_weights
    top = lw.max()
    mean_w = float(np.exp(top) * np.mean(np.exp(lw - top)))
    mean_w2 = float(np.exp(2 * top) * np.mean(np.exp(2 * (lw - top))))
    return mean_w, mean_w2


def target_centroid(x, pool: SamplePool, kernel: KernelSpec) -> TargetCentroid:
    """Softmax-weighted centroid of the whole pool at query ``x``."""
    profile = pool_profile(x, pool, kernel)
    value = standard_centroid(profile, pool.points).value
    mean_w, mean_w2 = _moments(profile)
    return TargetCentroid(value=value, mean_weight=mean_w, mean_weight_sq=mean_w2)


def leading_bias(x, pool: SamplePool, kernel: KernelSpec) -> LeadingBias:
    """``-E[w^2 (y - T*)] / E[w]^2`` over the pool.

    With pool softmax weights ``a_i`` this equals ``-N sum_i a_i^2 (y_i - T*)``,
    which is invariant to the scale of ``w``.
    """
    profile = pool_profile(x, pool, kernel)
    y = pool.points
    t_star = profile.alpha @ y
    vec = -pool.size * ((profile.alpha ** 2) @ (y - t_star))
    return LeadingBias(vector=vec, norm=float(np.linalg.norm(vec)))


def n1_bias(x, pool: SamplePool, kernel: KernelSpec) -> np.ndarray:
    """Exact bias of the single-sample estimate, ``-Cov(w, y) / E[w]``."""
    if pool.size < 2:
        raise InvalidInputError("the single-sample bias needs a pool of at least 2 points")
    lw = eval_log_weights(x, pool.points, kernel)
    w = np.exp(lw - lw.max())
    y = pool.points
    cov = np.mean((w - w.mean())[:, None] * (y - y.mean(axis=0)), axis=0)
    return -cov / w.mean()


def effective_sample_size(x, pool: SamplePool, kernel: KernelSpec, n: int) -> tuple[float, float]:
    """Return ``(n_eff, lam)`` with ``lam = E[w^2] / E[w]^2`` and ``n_eff = n / lam``."""
    if n < 1:
        raise InvalidInputError(f"n must be positive, got {n}")
    profile = pool_profile(x, pool, kernel)
    lam = max(1.0, pool.size * profile.sum_alpha_sq)
    return n / lam, lam
