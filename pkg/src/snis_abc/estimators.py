"""Centroid estimators for one query against one minibatch.

Every estimator targets the softmax-weighted centroid of the reference
distribution.  ``standard_centroid`` is the plain self-normalized estimate;
the others reduce its O(1/n) ratio bias:

* ``abc_centroid`` subtracts the plug-in leading bias term in closed form,
* ``jackknife_centroid`` uses closed-form leave-one-out centroids,
* ``bootstrap_centroid`` estimates the bias from index resamples,
* ``brsnis_centroid`` runs an i-SIR chain on fresh reference draws.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DominatedWeightError, InsufficientSamplesError, InvalidInputError
from .kernel import KernelSpec, WeightProfile, as_points, as_query, eval_log_weights, normalize

# jackknife refuses batches where one weight exceeds 1 - JACKKNIFE_EPS
JACKKNIFE_EPS = 1e-8


class Method(str, enum.Enum):
    STANDARD = "standard"
    ABC = "abc"
    JACKKNIFE = "jackknife"
    BOOTSTRAP = "bootstrap"
    BRSNIS = "brsnis"


FIXED_POOL_METHODS = (Method.STANDARD, Method.ABC, Method.JACKKNIFE, Method.BOOTSTRAP)


@dataclass(frozen=True)
class CentroidEstimate:
    value: np.ndarray
    method: Method
    extra_samples_consumed: int = 0


@dataclass(frozen=True)
class BootstrapSpec:
    replicates: int = 100

    def __post_init__(self):
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise InvalidInputError(f"bootstrap replicates must be a positive integer, got {self.replicates!r}")


@dataclass(frozen=True)
class BrSnisSpec:
    iterations: int = 10
    burn_in: int = 1

    def __post_init__(self):
        if self.iterations < 1 or not (0 <= self.burn_in < self.iterations):
            raise InvalidInputError(
                f"need iterations > burn_in >= 0, got iterations={self.iterations}, burn_in={self.burn_in}"
            )

    def samples_needed(self, n: int) -> int:
        return self.iterations * (n - 1) + 1


def _checked(profile: WeightProfile, batch) -> np.ndarray:
    y = as_points(batch)
    if y.shape[0] != profile.n:
        raise InvalidInputError(f"profile has {profile.n} weights but batch has {y.shape[0]} points")
    return y


def _done(value: np.ndarray, method: Method, extra: int = 0) -> CentroidEstimate:
    if not np.all(np.isfinite(value)):
        raise InvalidInputError(f"{method.value} estimate is not finite")
    return CentroidEstimate(value=value, method=method, extra_samples_consumed=extra)


def standard_centroid(profile: WeightProfile, batch) -> CentroidEstimate:
    """Self-normalized centroid ``sum_i alpha_i y_i``."""
    y = _checked(profile, batch)
    return _done(profile.alpha @ y, Method.STANDARD)


def abc_weights(alpha: np.ndarray) -> np.ndarray:
    """Convex weights ``gamma_i = alpha_i (1 - sum_j alpha_j^2) + alpha_i^2``.

    ``sum_i gamma_i y_i`` is the bias-corrected centroid; every
    ``gamma_i >= 0`` and they sum to one, so the result stays inside the
    convex hull of the batch.
    """
    a2 = alpha * alpha
    return alpha * (1.0 - a2.sum()) + a2


def abc_centroid(profile: WeightProfile, batch) -> CentroidEstimate:
    y = _checked(profile, batch)
    return _done(abc_weights(profile.alpha) @ y, Method.ABC)


def leave_one_out_centroids(profile: WeightProfile, batch) -> np.ndarray:
    """All ``n`` leave-one-out centroids, row ``i`` omitting point ``i``.

    Uses ``T_{-i} = (T - alpha_i y_i) / (1 - alpha_i)``, which removes one
    term from the softmax without renormalizing the remaining weights.
    """
    y = _checked(profile, batch)
    if profile.n < 2:
        raise InsufficientSamplesError("leave-one-out needs at least 2 points")
    alpha = profile.alpha
    if alpha.max() > 1.0 - JACKKNIFE_EPS:
        raise DominatedWeightError(
            f"max softmax weight {alpha.max():.17g} exceeds 1 - {JACKKNIFE_EPS:g}"
        )
    t = alpha @ y
    return (t[None, :] - alpha[:, None] * y) / (1.0 - alpha)[:, None]


def jackknife_centroid(profile: WeightProfile, batch) -> CentroidEstimate:
    y = _checked(profile, batch)
    n = profile.n
    loo = leave_one_out_centroids(profile, y)
    t = profile.alpha @ y
    return _done(n * t - (n - 1) * loo.mean(axis=0), Method.JACKKNIFE)


def bootstrap_centroid(
    profile: WeightProfile,
    batch,
    spec: BootstrapSpec,
    rng: np.random.Generator,
) -> CentroidEstimate:
    """Efron bias correction ``2 T - mean_b T*_b``.

    Replicates resample batch indices with replacement and renormalize the
    already computed log weights; the kernel is not re-evaluated.
    """
    y = _checked(profile, batch)
    n = profile.n
    if n < 2:
        raise InsufficientSamplesError("bootstrap needs at least 2 points")
    idx = rng.integers(0, n, size=(spec.replicates, n))
    lw = profile.log_weights[idx]
    w = np.exp(lw - lw.max(axis=1, keepdims=True))
    a = w / w.sum(axis=1, keepdims=True)
    reps = np.einsum("bn,bnd->bd", a, y[idx])
    t = profile.alpha @ y
    return _done(2.0 * t - reps.mean(axis=0), Method.BOOTSTRAP)


def brsnis_centroid(
    x,
    fresh_sampler: Callable[[int, np.random.Generator], np.ndarray],
    n: int,
    spec: BrSnisSpec,
    kernel: KernelSpec,
    rng: np.random.Generator,
) -> CentroidEstimate:
    """Bias-reduced SNIS via iterated sampling-importance resampling.

    ``fresh_sampler(count, rng)`` must return a ``(count, D)`` array of new
    reference draws.  The chain state starts at one fresh draw; each
    iteration pools the state with ``n - 1`` fresh draws, records the SNIS
    centroid of that pool and resamples the state by softmax weight.  The
    recorded centroids after the first ``burn_in`` iterations are averaged.
    """
    if n < 1:
        raise InvalidInputError(f"n must be positive, got {n}")
    q = as_query(x)
    need = spec.samples_needed(n)
    draws = np.asarray(fresh_sampler(need, rng), dtype=np.float64)
    if draws.ndim != 2 or draws.shape[0] < need:
        raise InsufficientSamplesError(f"sampler supplied {draws.shape[0] if draws.ndim else 0} of {need} draws")
    draws = as_points(draws[:need], "fresh draws")
    as_query(q, draws.shape[1])

    state = draws[0]
    fresh = draws[1:].reshape(spec.iterations, n - 1, draws.shape[1])
    recorded = np.empty((spec.iterations, draws.shape[1]))
    for k in range(spec.iterations):
        pool = np.vstack([state[None, :], fresh[k]])
        profile = normalize(eval_log_weights(q, pool, kernel))
        recorded[k] = profile.alpha @ pool
        state = pool[_categorical(profile.alpha, rng.random())]
    value = recorded[spec.burn_in:].mean(axis=0)
    return _done(value, Method.BRSNIS, extra=need - n)


def _categorical(alpha: np.ndarray, u: float) -> int:
    # inverse CDF; clip guards the u ~ 1 edge against rounding in cumsum
    return min(int(np.searchsorted(np.cumsum(alpha), u, side="right")), alpha.shape[0] - 1)


def estimate(method, profile: WeightProfile, batch, rng=None, bootstrap: BootstrapSpec | None = None) -> CentroidEstimate:
    """Dispatch one of the fixed-pool estimators by name."""
    method = Method(method)
    if method is Method.STANDARD:
        return standard_centroid(profile, batch)
    if method is Method.ABC:
        return abc_centroid(profile, batch)
    if method is Method.JACKKNIFE:
        return jackknife_centroid(profile, batch)
    if method is Method.BOOTSTRAP:
        if rng is None:
            raise InvalidInputError("bootstrap needs a random generator")
        return bootstrap_centroid(profile, batch, bootstrap or BootstrapSpec(), rng)
    raise InvalidInputError(f"{method.value} is not a fixed-pool estimator")
