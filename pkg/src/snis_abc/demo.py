"""Three-cluster illustration of the centroid contraction and its correction."""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .distributions import SamplePool, make_rng
from .estimators import abc_centroid, standard_centroid
from .kernel import KernelSpec, weight_profile
from .oracle import target_centroid


@dataclass(frozen=True)
class DemoOptions:
    seed: int = 0
    points_per_cluster: int = 100
    sigma: float = 0.2
    tau: float = 1.0
    n: int = 4
    query: tuple = (-0.5, 0.0)
    centers: tuple = ((-1.0, 0.0), (1.0, 0.8), (1.0, -0.8))

    @classmethod
    def from_tree(cls, section: dict) -> "DemoOptions":
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in section.items() if k in names}
        if "query" in kw:
            kw["query"] = tuple(kw["query"])
        if "centers" in kw:
            kw["centers"] = tuple(tuple(c) for c in kw["centers"])
        return cls(**kw)


@dataclass(frozen=True)
class DemoScene:
    clusters: np.ndarray  # (K * m, 2)
    labels: np.ndarray  # cluster index per point
    query: np.ndarray
    target: np.ndarray
    batch: np.ndarray
    standard: np.ndarray
    abc: np.ndarray


def cluster_pool(opts: DemoOptions) -> tuple[SamplePool, np.ndarray]:
    rng = make_rng(opts.seed, 200)
    centers = np.asarray(opts.centers, dtype=np.float64)
    m = opts.points_per_cluster
    points = np.repeat(centers, m, axis=0) + opts.sigma * rng.standard_normal((len(centers) * m, 2))
    return SamplePool.from_points(points), np.repeat(np.arange(len(centers)), m)


def build_scene(opts: DemoOptions) -> DemoScene:
    pool, labels = cluster_pool(opts)
    kernel = KernelSpec(opts.tau)
    x = np.asarray(opts.query, dtype=np.float64)
    rng = make_rng(opts.seed, 201)
    batch = pool.points[rng.integers(0, pool.size, size=opts.n)]
    p = weight_profile(x, batch, kernel)
    return DemoScene(
        clusters=pool.points,
        labels=labels,
        query=x,
        target=target_centroid(x, pool, kernel).value,
        batch=batch,
        standard=standard_centroid(p, batch).value,
        abc=abc_centroid(p, batch).value,
    )


def mean_errors(opts: DemoOptions, repeats: int = 10_000) -> tuple[float, float]:
    """Mean distance to the target of the standard and corrected centroids."""
    pool, _ = cluster_pool(opts)
    kernel = KernelSpec(opts.tau)
    x = np.asarray(opts.query, dtype=np.float64)
    target = target_centroid(x, pool, kernel).value
    rng = make_rng(opts.seed, 202)
    idx = rng.integers(0, pool.size, size=(repeats, opts.n))
    err_std = np.empty(repeats)
    err_abc = np.empty(repeats)
    for r in range(repeats):
        batch = pool.points[idx[r]]
        p = weight_profile(x, batch, kernel)
        err_std[r] = np.linalg.norm(standard_centroid(p, batch).value - target)
        err_abc[r] = np.linalg.norm(abc_centroid(p, batch).value - target)
    return float(err_std.mean()), float(err_abc.mean())


def write_scene(scene: DemoScene, path) -> int:
    """Write labeled rows ``label,cluster,x,y``; returns the row count."""
    rows = [("cluster_point", int(c), p[0], p[1]) for p, c in zip(scene.clusters, scene.labels)]
    rows += [
        ("query", "", *scene.query),
        ("target", "", *scene.target),
        ("standard", "", *scene.standard),
        ("abc", "", *scene.abc),
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(("label", "cluster", "x", "y"))
        for label, cluster, a, b in rows:
            w.writerow((label, cluster, repr(float(a)), repr(float(b))))
    return len(rows)
