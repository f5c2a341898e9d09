"""User-facing property suite behind ``snis-abc validate``.

Each property returns a ``PropertyResult``.  Randomized properties draw
their cases from a seeded generator; Monte Carlo properties run through the
harness at fixed seeds, so a run is reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np
from scipy.optimize import nnls

from .distributions import SamplePool, build_pool, build_queries, four_mode_spec, make_rng
from .estimators import (
    BootstrapSpec,
    BrSnisSpec,
    abc_centroid,
    abc_weights,
    bootstrap_centroid,
    brsnis_centroid,
    jackknife_centroid,
    leave_one_out_centroids,
    standard_centroid,
)
from .harness import ExperimentConfig, bias_corrected_norm, bias_standard_error, run_point
from .kernel import KernelSpec, normalize, weight_profile
from .oracle import effective_sample_size, leading_bias, n1_bias, target_centroid


@dataclass(frozen=True)
class ValidateOptions:
    cases: int = 1000
    seed: int = 0
    zero_bias_trials: int = 50_000
    zero_bias_n: int = 8
    n1_trials: int = 200_000
    leading_queries: int = 20
    leading_n: int = 256
    leading_trials: int = 200_000
    leading_tolerance: float = 0.15
    pool_size: int = 200_000
    tau: float = 0.1

    @classmethod
    def from_tree(cls, section: dict) -> "ValidateOptions":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in section.items() if k in names})


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str


AbcFn = Callable  # (WeightProfile, batch) -> CentroidEstimate


def broken_abc(profile, batch):
    """ABC with the correction added instead of subtracted (checker self-test)."""
    y = np.asarray(batch, dtype=np.float64)
    a = profile.alpha
    t = a @ y
    delta = (a * a) @ (t[None, :] - y)
    est = abc_centroid(profile, y)
    return type(est)(value=t + delta, method=est.method)


def random_case(rng: np.random.Generator, min_n: int = 1):
    """A random query, batch and kernel with varied size, dimension and scale."""
    n = int(rng.integers(min_n, 65))
    dim = int(rng.integers(1, 6))
    scale = 10.0 ** rng.uniform(-2, 2)
    y = scale * rng.standard_normal((n, dim))
    x = scale * rng.standard_normal(dim)
    tau = scale * 10.0 ** rng.uniform(-1.3, 0.5)
    return x, y, KernelSpec(tau)


def in_convex_hull(point, batch, tol: float = 1e-9) -> bool:
    """Membership via nonnegative least squares with a sum-to-one row."""
    y = np.asarray(batch, dtype=np.float64)
    scale = max(1.0, float(np.abs(y).max()))
    a = np.vstack([y.T / scale, np.ones(y.shape[0])])
    b = np.append(np.asarray(point) / scale, 1.0)
    _, residual = nnls(a, b)
    return residual <= tol


def _rel(a, b, scale) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(scale, 1e-300))


# --- randomized properties ------------------------------------------------

def check_convex_hull(opts: ValidateOptions, abc: AbcFn = abc_centroid) -> PropertyResult:
    rng = make_rng(opts.seed, 101)
    worst = 0.0
    for case in range(opts.cases):
        x, y, k = random_case(rng)
        p = weight_profile(x, y, k)
        g = abc_weights(p.alpha)
        worst = max(worst, abs(g.sum() - 1.0))
        if g.min() < 0 or abs(g.sum() - 1.0) > 1e-12:
            return PropertyResult("convex-hull", False, f"case {case}: gamma min {g.min():.3g}, sum-1 {g.sum() - 1:.3g}")
        value = abc(p, y).value
        if not in_convex_hull(value, y):
            return PropertyResult("convex-hull", False, f"case {case}: ABC estimate outside the batch convex hull")
    return PropertyResult("convex-hull", True, f"{opts.cases} cases, max |sum(gamma)-1| = {worst:.2e}")


def check_abc_relation(opts: ValidateOptions, abc: AbcFn = abc_centroid) -> PropertyResult:
    """ABC equals the standard centroid minus the plug-in bias term."""
    rng = make_rng(opts.seed, 102)
    worst = 0.0
    for case in range(opts.cases):
        x, y, k = random_case(rng)
        p = weight_profile(x, y, k)
        t = standard_centroid(p, y).value
        delta = sum(p.alpha[i] ** 2 * (t - y[i]) for i in range(p.n))
        err = _rel(abc(p, y).value, t - delta, max(np.linalg.norm(t - delta), np.abs(y).max()))
        worst = max(worst, err)
        if err > 1e-10:
            return PropertyResult("abc-relation", False, f"case {case}: relative error {err:.3g}")
    return PropertyResult("abc-relation", True, f"{opts.cases} cases, max relative error {worst:.2e}")


def check_jackknife_identity(opts: ValidateOptions, abc: AbcFn = abc_centroid) -> PropertyResult:
    rng = make_rng(opts.seed, 103)
    worst = 0.0
    checked = 0
    for case in range(opts.cases):
        x, y, k = random_case(rng, min_n=2)
        p = weight_profile(x, y, k)
        if p.alpha.max() > 1 - 1e-4:
            # identity holds but the check is ill-conditioned near a dominated weight
            continue
        loo = leave_one_out_centroids(p, y)
        for i in range(p.n):
            rest = np.delete(y, i, axis=0)
            direct = standard_centroid(weight_profile(x, rest, k), rest).value
            err = _rel(loo[i], direct, max(np.linalg.norm(direct), np.abs(y).max()))
            worst = max(worst, err)
            if err > 1e-10:
                return PropertyResult("jackknife-identity", False, f"case {case}, i={i}: relative error {err:.3g}")
        checked += 1
    return PropertyResult("jackknife-identity", True, f"{checked} cases, max relative error {worst:.2e}")


def check_shift_invariance(opts: ValidateOptions, abc: AbcFn = abc_centroid) -> PropertyResult:
    rng = make_rng(opts.seed, 104)
    for case in range(opts.cases):
        n = int(rng.integers(1, 65))
        lw = rng.uniform(-50, 0, n)
        c = rng.uniform(-1e3, 1e3)
        a0 = normalize(lw).alpha
        a1 = normalize(lw + c).alpha
        if np.max(np.abs(a0 - a1)) > 1e-12:
            return PropertyResult("shift-invariance", False, f"case {case}: max |d alpha| {np.max(np.abs(a0 - a1)):.3g}")
    return PropertyResult("shift-invariance", True, f"{opts.cases} cases")


def _all_estimates(x, y, k, seed):
    p = weight_profile(x, y, k)
    out = {
        "standard": standard_centroid(p, y).value,
        "abc": abc_centroid(p, y).value,
        "bootstrap": bootstrap_centroid(p, y, BootstrapSpec(8), make_rng(seed, 1)).value,
    }
    # near-dominated batches amplify rounding in the leave-one-out step
    if p.alpha.max() <= 1 - 1e-4:
        out["jackknife"] = jackknife_centroid(p, y).value
    return out


def check_equivariance(opts: ValidateOptions, abc: AbcFn = abc_centroid) -> PropertyResult:
    """Translations and orthogonal maps of query and batch carry through every estimator."""
    rng = make_rng(opts.seed, 105)
    worst = 0.0
    for case in range(opts.cases):
        x, y, k = random_case(rng, min_n=2)
        dim = y.shape[1]
        shift = rng.standard_normal(dim) * np.abs(y).max()
        rot, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        base = _all_estimates(x, y, k, case)
        moved = _all_estimates(x + shift, y + shift, k, case)
        turned = _all_estimates(rot @ x, y @ rot.T, k, case)
        scale = np.abs(y).max() + np.abs(shift).max()
        for name, v in base.items():
            if name not in moved or name not in turned:
                continue
            err = max(_rel(moved[name], v + shift, scale), _rel(turned[name], rot @ v, scale))
            worst = max(worst, err)
            if err > 1e-9:
                return PropertyResult("equivariance", False, f"case {case}: {name} off by {err:.3g}")
        # BR-SNIS: the sampler hands out transformed copies of the same draws
        draws = y[rng.integers(0, y.shape[0], size=BrSnisSpec(3, 1).samples_needed(4))]
        ests = []
        for xx, dd in ((x, draws), (x + shift, draws + shift), (rot @ x, draws @ rot.T)):
            ests.append(brsnis_centroid(xx, lambda c, r, dd=dd: dd[:c], 4, BrSnisSpec(3, 1), k, make_rng(case, 2)).value)
        err = max(_rel(ests[1], ests[0] + shift, scale), _rel(ests[2], rot @ ests[0], scale))
        worst = max(worst, err)
        if err > 1e-9:
            return PropertyResult("equivariance", False, f"case {case}: brsnis off by {err:.3g}")
    return PropertyResult("equivariance", True, f"{opts.cases} cases, max relative error {worst:.2e}")


def check_lambda(opts: ValidateOptions, abc: AbcFn = abc_centroid) -> PropertyResult:
    """lambda >= 1 and nondecreasing as the temperature drops."""
    rng = make_rng(opts.seed, 106)
    taus = np.geomspace(2.0, 0.02, 12)
    for case in range(opts.cases):
        n_pts = int(rng.integers(2, 200))
        dim = int(rng.integers(1, 4))
        pool = SamplePool.from_points(rng.standard_normal((n_pts, dim)))
        x = rng.standard_normal(dim)
        lams = [effective_sample_size(x, pool, KernelSpec(t), 10)[1] for t in taus]
        if min(lams) < 1.0:
            return PropertyResult("lambda", False, f"case {case}: lambda {min(lams):.17g} < 1")
        drops = np.diff(lams)
        if np.any(drops < -1e-12 * np.maximum(1.0, np.abs(lams[1:]))):
            return PropertyResult("lambda", False, f"case {case}: lambda decreases as tau drops")
    return PropertyResult("lambda", True, f"{opts.cases} cases over {len(taus)} temperatures")


# --- Monte Carlo properties ------------------------------------------------

def sphere_fixture(x, radius: float, count: int) -> SamplePool:
    """Points equidistant from ``x`` (constant kernel weight)."""
    angles = 2 * np.pi * (np.arange(count) + 0.25) / count
    return SamplePool.from_points(np.asarray(x) + radius * np.column_stack([np.cos(angles), np.sin(angles)]))


def symmetric_fixture(x, seed: int, pairs: int) -> SamplePool:
    """Pairs ``y, 2x - y`` around ``x`` from a lopsided cloud."""
    rng = make_rng(seed, 107)
    half = np.vstack([0.3 * rng.standard_normal((pairs // 2, 2)) + (0.4, 0.1), 0.2 * rng.standard_normal((pairs - pairs // 2, 2)) - (0.1, 0.5)])
    return SamplePool.from_points(np.vstack([half, 2 * np.asarray(x) - half]))


def zero_bias_results(opts: ValidateOptions) -> list:
    """``(fixture, b_hat, se)`` for the constant-weight and symmetric fixtures."""
    x = np.array([0.2, -0.1])
    kernel = KernelSpec(opts.tau)
    cfg = ExperimentConfig(n_grid=(opts.zero_bias_n,), trials=opts.zero_bias_trials, methods=("standard",),
                           tau=opts.tau, master_seed=opts.seed, timing=False)
    out = []
    for name, pool in (("constant-weight", sphere_fixture(x, 0.3, 64)), ("symmetric", symmetric_fixture(x, opts.seed, 400))):
        agg = run_point(x, opts.zero_bias_n, "standard", cfg, pool)
        target = target_centroid(x, pool, kernel).value
        b_hat, _ = bias_corrected_norm(agg, target)
        se = math.sqrt(agg.total_variance / agg.count)
        out.append((name, b_hat, se))
    return out


def check_zero_bias(opts: ValidateOptions, abc: AbcFn = abc_centroid) -> PropertyResult:
    parts = []
    ok = True
    for name, b_hat, se in zero_bias_results(opts):
        ok &= b_hat < 5 * se
        parts.append(f"{name}: b_hat={b_hat:.3g} (5 se = {5 * se:.3g})")
    return PropertyResult("zero-bias", bool(ok), "; ".join(parts))


def toy_pool(opts: ValidateOptions) -> SamplePool:
    return build_pool(four_mode_spec(), opts.pool_size, opts.seed)


def n1_results(opts: ValidateOptions, pool: SamplePool | None = None):
    """``(observed, predicted, se)`` per coordinate for the single-sample bias."""
    pool = pool or toy_pool(opts)
    kernel = KernelSpec(opts.tau)
    x = build_queries("from-p", 1, four_mode_spec(), opts.seed).queries[0]
    cfg = ExperimentConfig(n_grid=(1,), trials=opts.n1_trials, methods=("standard",), tau=opts.tau,
                           master_seed=opts.seed, timing=False)
    agg = run_point(x, 1, "standard", cfg, pool)
    observed = agg.mean - target_centroid(x, pool, kernel).value
    se = np.sqrt(agg.variance_percoord / agg.count)
    return observed, n1_bias(x, pool, kernel), se


def check_n1_bias(opts: ValidateOptions, abc: AbcFn = abc_centroid, pool=None) -> PropertyResult:
    observed, predicted, se = n1_results(opts, pool)
    z = np.abs(observed - predicted) / se
    return PropertyResult("n1-bias", bool(np.all(z < 5)), f"max |z| = {z.max():.2f} over {z.size} coordinates")


def leading_results(opts: ValidateOptions, pool: SamplePool | None = None):
    """Per query ``(n * b_hat, ||leading_bias||, n * se)`` for the standard estimator."""
    pool = pool or toy_pool(opts)
    kernel = KernelSpec(opts.tau)
    queries = build_queries("from-p", opts.leading_queries, four_mode_spec(), opts.seed + 1).queries
    cfg = ExperimentConfig(n_grid=(opts.leading_n,), trials=opts.leading_trials, methods=("standard",),
                           tau=opts.tau, master_seed=opts.seed, timing=False)
    out = []
    for q, x in enumerate(queries):
        agg = run_point(x, opts.leading_n, "standard", cfg, pool, query_index=q)
        target = target_centroid(x, pool, kernel).value
        b_hat, _ = bias_corrected_norm(agg, target)
        se = bias_standard_error(agg, target)
        out.append((opts.leading_n * b_hat, leading_bias(x, pool, kernel).norm, opts.leading_n * se))
    return out


def check_leading_constant(opts: ValidateOptions, abc: AbcFn = abc_centroid, pool=None) -> PropertyResult:
    pairs = leading_results(opts, pool)
    ratios = np.array([nb / lead for nb, lead, _ in pairs])
    rel_se = np.array([se / lead for _, lead, se in pairs])
    worst = int(np.argmax(np.abs(ratios - 1)))
    return PropertyResult(
        "leading-constant",
        abs(ratios[worst] - 1) <= opts.leading_tolerance,
        f"{len(pairs)} queries, n*b_hat/||lead|| in [{ratios.min():.3f}, {ratios.max():.3f}], "
        f"worst {ratios[worst]:.3f} +- {rel_se[worst]:.3f} (1 MC se)",
    )


PROPERTIES = {
    "zero-bias": check_zero_bias,
    "convex-hull": check_convex_hull,
    "abc-relation": check_abc_relation,
    "jackknife-identity": check_jackknife_identity,
    "shift-invariance": check_shift_invariance,
    "equivariance": check_equivariance,
    "lambda": check_lambda,
    "n1-bias": check_n1_bias,
    "leading-constant": check_leading_constant,
}


def run_properties(names, opts: ValidateOptions, abc: AbcFn = abc_centroid) -> list:
    return [PROPERTIES[name](opts, abc) for name in names]
