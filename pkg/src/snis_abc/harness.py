"""Deterministic Monte Carlo harness for the centroid estimators.

A run is a grid of work items ``(query, n)``.  Each item draws ``trials``
minibatches from the pool and evaluates every configured method on them,
accumulating per-coordinate first and second moments.  All random streams
are addressed by integer keys (master seed, query index, n, block index),
so a report depends only on its configuration and never on the number of
worker processes.

Fixed-pool methods share the same minibatch draws within a work item.
Method-specific randomness (bootstrap resamples, BR-SNIS fresh draws and
state moves) comes from a separate stream per method.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import _fast
from .distributions import (
    GaussianMixtureSpec,
    QueryScheme,
    QuerySet,
    SamplePool,
    build_pool,
    build_queries,
    draw_indices,
    draw_minibatch,
    four_mode_spec,
    make_rng,
)
from .errors import ExperimentError, InvalidInputError
from .estimators import (
    JACKKNIFE_EPS,
    BootstrapSpec,
    BrSnisSpec,
    Method,
    brsnis_centroid,
    estimate,
)
from .kernel import KernelSpec, eval_log_weights, weight_profile
from .oracle import target_centroid

TRIAL_STREAM = 2
METHOD_STREAM = 3
RETRY_STREAM = 4
TIMING_STREAM = 5

METHOD_CODES = {m: i for i, m in enumerate(Method)}

CSV_HEADER = ("n", "method", "bias_corrected", "bias_naive", "total_variance", "mean_time_us", "clamped_count", "retries")


@dataclass(frozen=True)
class ExperimentConfig:
    pool_spec: GaussianMixtureSpec = field(default_factory=four_mode_spec)
    pool_size: int = 200_000
    query_scheme: QueryScheme = QueryScheme.FROM_P
    query_count: int = 100
    query_scale: float = 0.5
    tau: float = 0.1
    n_grid: tuple = (16, 32, 64, 128, 256, 512)
    trials: int = 50_000
    methods: tuple = (Method.STANDARD, Method.ABC)
    replacement: bool = True
    bootstrap_replicates: int = 100
    brsnis_iterations: int = 10
    brsnis_burn_in: int = 1
    master_seed: int = 0
    pool_seed: int | None = None
    query_seed: int | None = None
    # trial blocks hold about this many sampled points; fixes the stream layout
    block_elements: int = 1 << 18
    timing: bool = True
    timed_trials: int = 20
    warmup_skip: int = 10
    max_retries: int = 100
    fit_min_n: int = 16
    slope_norm: str = "corrected"

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))
        object.__setattr__(self, "query_scheme", QueryScheme(self.query_scheme))
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise InvalidInputError("n_grid must be a non-empty list of positive integers")
        if list(self.n_grid) != sorted(set(self.n_grid)):
            raise InvalidInputError("n_grid must be sorted ascending with distinct entries")
        if self.trials < 1:
            raise InvalidInputError("trials must be positive")
        if not self.methods or len(set(self.methods)) != len(self.methods):
            raise InvalidInputError("methods must be a non-empty list without repeats")
        if self.pool_size < 1 or self.query_count < 1:
            raise InvalidInputError("pool_size and query_count must be positive")
        if not self.replacement and self.n_grid[-1] > self.pool_size:
            raise InvalidInputError(f"cannot draw n={self.n_grid[-1]} without replacement from {self.pool_size} points")
        if self.n_grid[0] < 2 and {Method.JACKKNIFE, Method.BOOTSTRAP} & set(self.methods):
            raise InvalidInputError("jackknife and bootstrap need n >= 2")
        if self.slope_norm not in ("corrected", "naive"):
            raise InvalidInputError("slope_norm must be 'corrected' or 'naive'")
        if self.block_elements < 1 or self.timed_trials < 0 or self.warmup_skip < 0 or self.max_retries < 0:
            raise InvalidInputError("block_elements, timed_trials, warmup_skip and max_retries must be nonnegative")
        KernelSpec(self.tau)
        self.bootstrap
        self.brsnis

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(self.tau)

    @property
    def bootstrap(self) -> BootstrapSpec:
        return BootstrapSpec(self.bootstrap_replicates)

    @property
    def brsnis(self) -> BrSnisSpec:
        return BrSnisSpec(self.brsnis_iterations, self.brsnis_burn_in)

    @property
    def seeds(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "pool_seed": self.master_seed if self.pool_seed is None else self.pool_seed,
            "query_seed": self.master_seed if self.query_seed is None else self.query_seed,
        }

    def rows_per_block(self, n: int) -> int:
        return max(1, min(self.trials, self.block_elements // n))

    def to_dict(self) -> dict:
        return {
            "pool_spec": self.pool_spec.to_dict(),
            "pool_size": self.pool_size,
            "query_scheme": self.query_scheme.value,
            "query_count": self.query_count,
            "query_scale": self.query_scale,
            "tau": self.tau,
            "n_grid": list(self.n_grid),
            "trials": self.trials,
            "methods": [m.value for m in self.methods],
            "replacement": self.replacement,
            "bootstrap_replicates": self.bootstrap_replicates,
            "brsnis_iterations": self.brsnis_iterations,
            "brsnis_burn_in": self.brsnis_burn_in,
            "master_seed": self.master_seed,
            "pool_seed": self.pool_seed,
            "query_seed": self.query_seed,
            "block_elements": self.block_elements,
            "timing": self.timing,
            "timed_trials": self.timed_trials,
            "warmup_skip": self.warmup_skip,
            "max_retries": self.max_retries,
            "fit_min_n": self.fit_min_n,
            "slope_norm": self.slope_norm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if isinstance(d.get("pool_spec"), dict):
            d["pool_spec"] = GaussianMixtureSpec.from_dict(d["pool_spec"])
        return cls(**d)


@dataclass
class TrialAggregate:
    """Running sums over the trials of one (query, n, method) point."""

    count: int
    sum: np.ndarray
    sum_sq_percoord: np.ndarray
    sum_time_ns: int = 0
    time_count: int = 0
    retries: int = 0

    @classmethod
    def empty(cls, dim: int) -> "TrialAggregate":
        return cls(0, np.zeros(dim), np.zeros(dim))

    def add(self, values: np.ndarray) -> None:
        self.count += values.shape[0]
        self.sum += values.sum(axis=0)
        self.sum_sq_percoord += (values * values).sum(axis=0)

    @property
    def mean(self) -> np.ndarray:
        return self.sum / self.count

    @property
    def variance_percoord(self) -> np.ndarray:
        """Unbiased per-coordinate sample variance (needs two trials)."""
        if self.count < 2:
            raise InvalidInputError("variance needs at least two trials")
        m = self.mean
        return np.maximum(self.sum_sq_percoord - self.count * m * m, 0.0) / (self.count - 1)

    @property
    def total_variance(self) -> float:
        return float(self.variance_percoord.sum())

    @property
    def mean_time_us(self) -> float:
        return self.sum_time_ns / self.time_count / 1e3 if self.time_count else math.nan


def bias_corrected_norm(agg: TrialAggregate, target) -> tuple[float, float]:
    """Return ``(b_hat, naive)`` for the trial mean against ``target``.

    ``naive = ||mean - target||`` and
    ``b_hat = sqrt(max(0, naive^2 - tr(Sigma) / M))`` where ``Sigma`` is the
    sample covariance of the trial centroids.
    """
    if agg.count < 2:
        raise InvalidInputError("the variance-corrected norm needs at least two trials")
    naive = float(np.linalg.norm(agg.mean - np.asarray(target, dtype=np.float64)))
    b2 = naive * naive - agg.total_variance / agg.count
    return math.sqrt(max(0.0, b2)), naive


def bias_standard_error(agg: TrialAggregate, target) -> float:
    """Delta-method Monte Carlo standard error of the bias norm.

    Cross-coordinate covariances are not tracked, so the projection uses
    the diagonal of the trial covariance.
    """
    v = agg.variance_percoord / agg.count
    diff = agg.mean - np.asarray(target, dtype=np.float64)
    norm = np.linalg.norm(diff)
    if norm == 0.0:
        return float(math.sqrt(v.max()))
    u = diff / norm
    return float(math.sqrt(np.dot(u * u, v)))


def fit_slope(points) -> tuple[float, float, float]:
    """OLS fit of ``log(value)`` on ``log(n)``; returns ``(slope, intercept, stderr)``."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise InvalidInputError("a slope fit needs at least 3 points")
    ns = np.array([p[0] for p in pts])
    vals = np.array([p[1] for p in pts])
    if len(set(ns)) != len(ns):
        raise InvalidInputError("n values must be distinct")
    if np.any(ns <= 0) or np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidInputError("slope fit needs positive n and positive finite values")
    res = stats.linregress(np.log(ns), np.log(vals))
    return float(res.slope), float(res.intercept), float(res.stderr)


# --- work items ----------------------------------------------------------

def _packed(x: np.ndarray, points: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    return np.ascontiguousarray(np.column_stack([eval_log_weights(x, points, kernel), points]))


def _fixed_pool_block(method, idx, packed, cfg, n, key):
    """Estimates for one block of minibatches; returns (values, retries)."""
    rows = idx.shape[0]
    dim = packed.shape[1] - 1
    out = np.empty((rows, dim))
    if method is Method.JACKKNIFE:
        dominated = np.zeros(rows, dtype=np.bool_)
        _fast.jackknife_block(idx, packed, JACKKNIFE_EPS, out, dominated)
        retries = 0
        if dominated.any():
            rng = make_rng(cfg.master_seed, RETRY_STREAM, *key)
            attempts = np.zeros(rows, dtype=np.int64)
            bad = np.flatnonzero(dominated)
            while bad.size:
                attempts[bad] += 1
                if attempts.max() > cfg.max_retries:
                    raise ExperimentError(
                        f"jackknife: trial still dominated after {cfg.max_retries} redraws "
                        f"(query {key[0]}, n={n}); max softmax weight exceeds 1 - {JACKKNIFE_EPS:g}"
                    )
                retries += bad.size
                new_idx = draw_indices(rng, packed.shape[0], bad.size, n, cfg.replacement)
                sub_out = np.empty((bad.size, dim))
                sub_dom = np.zeros(bad.size, dtype=np.bool_)
                _fast.jackknife_block(new_idx, packed, JACKKNIFE_EPS, sub_out, sub_dom)
                out[bad] = sub_out
                bad = bad[sub_dom]
        return out, retries
    if method is Method.BOOTSTRAP:
        rng = make_rng(cfg.master_seed, METHOD_STREAM, METHOD_CODES[method], *key)
        reps = cfg.bootstrap_replicates
        chunk = max(1, cfg.block_elements // (n * reps))
        for lo in range(0, rows, chunk):
            hi = min(rows, lo + chunk)
            resample = rng.integers(0, n, size=(hi - lo, reps, n))
            _fast.bootstrap_block(idx[lo:hi], packed, resample, out[lo:hi])
        return out, 0
    raise AssertionError(method)


def _brsnis_block(rows, packed, cfg, n, key):
    spec = cfg.brsnis
    rng = make_rng(cfg.master_seed, METHOD_STREAM, METHOD_CODES[Method.BRSNIS], *key)
    size = packed.shape[0]
    init = rng.integers(0, size, size=rows)
    fresh = rng.integers(0, size, size=(rows, spec.iterations, n - 1))
    uniforms = rng.random((rows, spec.iterations))
    out = np.empty((rows, packed.shape[1] - 1))
    _fast.brsnis_block(init, fresh, uniforms, packed, spec.burn_in, out)
    return out


def _time_method(method, x, points, n, cfg, q_index) -> tuple[int, int]:
    """Per-estimate wall time through the public single-estimate API.

    Runs ``warmup_skip + timed_trials`` estimates on fresh minibatches and
    returns the summed nanoseconds and count of the timed ones.
    """
    if not cfg.timing or cfg.timed_trials == 0:
        return 0, 0
    rng = make_rng(cfg.master_seed, TIMING_STREAM, q_index, n, METHOD_CODES[method])
    kernel = cfg.kernel
    total = 0
    count = 0
    pool = SamplePool.from_points(points)
    boot = cfg.bootstrap
    brs = cfg.brsnis

    def sampler(k, r):
        return points[r.integers(0, points.shape[0], size=k)]

    for i in range(cfg.warmup_skip + cfg.timed_trials):
        if method is Method.BRSNIS:
            start = time.perf_counter_ns()
            brsnis_centroid(x, sampler, n, brs, kernel, rng)
            elapsed = time.perf_counter_ns() - start
        else:
            batch = draw_minibatch(pool, n, cfg.replacement, rng)
            start = time.perf_counter_ns()
            try:
                estimate(method, weight_profile(x, batch, kernel), batch, rng=rng, bootstrap=boot)
            except ArithmeticError:
                pass
            elapsed = time.perf_counter_ns() - start
        if i >= cfg.warmup_skip:
            total += elapsed
            count += 1
    return total, count


def _run_item(x, q_index: int, n: int, cfg: ExperimentConfig, points: np.ndarray, methods) -> dict:
    x = np.asarray(x, dtype=np.float64)
    packed = _packed(x, points, cfg.kernel)
    dim = points.shape[1]
    aggs = {m: TrialAggregate.empty(dim) for m in methods}
    rows_per_block = cfg.rows_per_block(n)
    fixed = [m for m in methods if m is not Method.BRSNIS]
    for b, lo in enumerate(range(0, cfg.trials, rows_per_block)):
        rows = min(rows_per_block, cfg.trials - lo)
        key = (q_index, n, b)
        if fixed:
            idx = draw_indices(make_rng(cfg.master_seed, TRIAL_STREAM, *key), points.shape[0], rows, n, cfg.replacement)
            if Method.STANDARD in fixed or Method.ABC in fixed:
                out_std = np.empty((rows, dim))
                out_abc = np.empty((rows, dim))
                _fast.standard_abc_block(idx, packed, out_std, out_abc)
                if Method.STANDARD in aggs:
                    aggs[Method.STANDARD].add(out_std)
                if Method.ABC in aggs:
                    aggs[Method.ABC].add(out_abc)
            for m in fixed:
                if m in (Method.STANDARD, Method.ABC):
                    continue
                values, retries = _fixed_pool_block(m, idx, packed, cfg, n, key)
                aggs[m].add(values)
                aggs[m].retries += retries
        if Method.BRSNIS in aggs:
            aggs[Method.BRSNIS].add(_brsnis_block(rows, packed, cfg, n, key))
    for m in methods:
        aggs[m].sum_time_ns, aggs[m].time_count = _time_method(m, x, points, n, cfg, q_index)
    return aggs


def run_point(query, n: int, method, config: ExperimentConfig, pool: SamplePool, query_index: int = 0) -> TrialAggregate:
    """Run ``config.trials`` trials of one method at one query and batch size."""
    method = Method(method)
    return _run_item(query, query_index, n, config, pool.points, (method,))[method]


# --- experiment runs -----------------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(points, cfg, queries, methods):
    _WORKER_STATE.update(points=points, cfg=cfg, queries=queries, methods=methods)


def _worker(item):
    q, n = item
    s = _WORKER_STATE
    aggs = _run_item(s["queries"][q], q, n, s["cfg"], s["points"], s["methods"])
    return item, aggs


def _evaluate(cfg, points, queries, workers: int) -> dict:
    items = [(q, n) for q in range(queries.shape[0]) for n in cfg.n_grid]
    args = (points, cfg, queries, cfg.methods)
    if workers <= 1:
        _init_worker(*args)
        return dict(map(_worker, items))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=args) as ex:
        return dict(ex.map(_worker, items, chunksize=max(1, len(items) // (4 * workers))))


@dataclass(frozen=True)
class ReportRow:
    n: int
    method: Method
    bias_corrected: float
    bias_naive: float
    total_variance: float
    mean_time_us: float
    clamped_count: int
    retries: int
    bias_corrected_se: float
    samples_per_estimate: int


@dataclass
class ScalingReport:
    config: ExperimentConfig
    rows: list
    slopes: dict
    per_query: dict

    def row(self, n: int, method) -> ReportRow:
        method = Method(method)
        for r in self.rows:
            if r.n == n and r.method is method:
                return r
        raise KeyError((n, method.value))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.n, r.method.value, _fmt(r.bias_corrected), _fmt(r.bias_naive),
                        _fmt(r.total_variance), _fmt(r.mean_time_us), r.clamped_count, r.retries])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "config": self.config.to_dict(),
            "seeds": self.config.seeds,
            "slope_norm": self.config.slope_norm,
            "slopes": self.slopes,
            "rows": [
                {
                    "n": r.n,
                    "method": r.method.value,
                    "bias_corrected": _num(r.bias_corrected),
                    "bias_corrected_se": _num(r.bias_corrected_se),
                    "bias_naive": _num(r.bias_naive),
                    "total_variance": _num(r.total_variance),
                    "mean_time_us": _num(r.mean_time_us),
                    "clamped_count": r.clamped_count,
                    "retries": r.retries,
                    "samples_per_estimate": r.samples_per_estimate,
                }
                for r in self.rows
            ],
            "per_query": self.per_query,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def loglog(self) -> str:
        """Plot-ready ``log10 n, log10 bias`` pairs, one block per method."""
        key = "bias_corrected" if self.config.slope_norm == "corrected" else "bias_naive"
        lines = []
        for m in self.config.methods:
            lines.append(f"# method={m.value} column2=log10({key})")
            for r in self.rows:
                v = getattr(r, key)
                if r.method is m and v > 0 and math.isfinite(v):
                    lines.append(f"{math.log10(r.n)!r} {math.log10(v)!r}")
            lines.append("")
        return "\n".join(lines)

    def write(self, out_dir, stem: str) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{stem}.csv", out / f"{stem}.json", out / f"{stem}_loglog.dat"]
        with open(paths[0], "w", newline="") as fh:
            fh.write(self.to_csv())
        paths[1].write_text(self.to_json())
        paths[2].write_text(self.loglog())
        return paths


def _fmt(v: float) -> str:
    return repr(float(v))


def _num(v: float):
    return float(v) if math.isfinite(v) else None


def _samples_per_estimate(method: Method, n: int, cfg: ExperimentConfig) -> int:
    return cfg.brsnis.samples_needed(n) if method is Method.BRSNIS else n


def _summarize(cfg: ExperimentConfig, results: dict, targets: np.ndarray) -> ScalingReport:
    nq = targets.shape[0]
    rows = []
    per_query: dict = {}
    for n in cfg.n_grid:
        for m in cfg.methods:
            aggs = [results[(q, n)][m] for q in range(nq)]
            if aggs[0].count >= 2:
                pairs = [bias_corrected_norm(a, t) for a, t in zip(aggs, targets)]
                b_hat = np.array([p[0] for p in pairs])
                naive = np.array([p[1] for p in pairs])
                se = np.array([bias_standard_error(a, t) for a, t in zip(aggs, targets)])
                tv = np.array([a.total_variance for a in aggs])
                b_mean, tv_mean = float(b_hat.mean()), float(tv.mean())
                se_mean = float(math.sqrt(np.sum(se * se)) / nq)
                clamped = int(np.sum(b_hat == 0.0))
            else:
                naive = np.array([np.linalg.norm(a.mean - t) for a, t in zip(aggs, targets)])
                b_hat = np.full(nq, math.nan)
                b_mean = tv_mean = se_mean = math.nan
                clamped = 0
            times = sum(a.sum_time_ns for a in aggs)
            tcount = sum(a.time_count for a in aggs)
            rows.append(ReportRow(
                n=n,
                method=m,
                bias_corrected=b_mean,
                bias_naive=float(naive.mean()),
                total_variance=tv_mean,
                mean_time_us=times / tcount / 1e3 if tcount else math.nan,
                clamped_count=clamped,
                retries=int(sum(a.retries for a in aggs)),
                bias_corrected_se=se_mean,
                samples_per_estimate=_samples_per_estimate(m, n, cfg),
            ))
            per_query.setdefault(m.value, {})[str(n)] = {
                "bias_corrected": [_num(v) for v in b_hat],
                "bias_naive": [_num(v) for v in naive],
            }
    slopes = {}
    key = "bias_corrected" if cfg.slope_norm == "corrected" else "bias_naive"
    for m in cfg.methods:
        usable, excluded = [], []
        for r in rows:
            if r.method is not m or r.n < cfg.fit_min_n:
                continue
            v = getattr(r, key)
            (usable if v > 0 and math.isfinite(v) else excluded).append((r.n, v))
        entry = {"n_used": [p[0] for p in usable], "n_excluded": [p[0] for p in excluded]}
        if len(usable) >= 3:
            slope, intercept, stderr = fit_slope(usable)
            entry.update(slope=slope, intercept=intercept, stderr=stderr)
        else:
            entry.update(slope=None, intercept=None, stderr=None)
        slopes[m.value] = entry
    return ScalingReport(config=cfg, rows=rows, slopes=slopes, per_query=per_query)


def materialize(cfg: ExperimentConfig) -> tuple[SamplePool, QuerySet]:
    """Build the pool and query set a configuration describes."""
    seeds = cfg.seeds
    pool = build_pool(cfg.pool_spec, cfg.pool_size, seeds["pool_seed"])
    queries = build_queries(cfg.query_scheme, cfg.query_count, cfg.pool_spec, seeds["query_seed"], cfg.query_scale)
    return pool, queries


def run_scaling_experiment(config: ExperimentConfig, workers: int = 1, pool: SamplePool | None = None, queries=None) -> ScalingReport:
    """Bias, variance and timing on the ``n_grid`` for every configured method.

    ``pool`` and ``queries`` default to the ones built from the
    configuration; pass them to run on a hand-made fixture.
    """
    if pool is None or queries is None:
        built_pool, built_queries = materialize(config)
        pool = pool if pool is not None else built_pool
        queries = queries if queries is not None else built_queries
    q = np.asarray(queries.queries if isinstance(queries, QuerySet) else queries, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != pool.dim:
        raise InvalidInputError("queries must be a (Q, D) array matching the pool dimension")
    if not config.replacement and config.n_grid[-1] > pool.size:
        raise InvalidInputError(f"cannot draw n={config.n_grid[-1]} without replacement from {pool.size} points")
    targets = np.array([target_centroid(x, pool, config.kernel).value for x in q])
    results = _evaluate(config, pool.points, q, workers)
    return _summarize(config, results, targets)


def run_baseline_comparison(config: ExperimentConfig, workers: int = 1, pool: SamplePool | None = None, queries=None) -> ScalingReport:
    """Fixed-budget comparison of Standard against the bias corrections.

    Bias is reported with the naive norm, alongside total variance and the
    mean per-estimate wall time.
    """
    if Method.STANDARD not in config.methods:
        raise InvalidInputError("a baseline comparison needs the 'standard' method as its reference")
    if config.slope_norm != "naive":
        config = replace(config, slope_norm="naive")
    return run_scaling_experiment(config, workers=workers, pool=pool, queries=queries)
