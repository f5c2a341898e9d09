"""Synthetic reference distributions, pools, queries and minibatch draws.

Pools and query sets are deterministic functions of ``(spec, size, seed)``.
Random streams for Monte Carlo work are derived from integer keys with
``numpy.random.SeedSequence`` so results never depend on execution order.
"""
from __future__ import annotations

import enum
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class GaussianMixtureSpec:
    centers: tuple
    sigma: float
    mode_probs: tuple | None = None

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64)
        if centers.ndim != 2 or centers.shape[0] == 0:
            raise InvalidInputError("centers must be a non-empty list of equal-length vectors")
        if not np.all(np.isfinite(centers)):
            raise InvalidInputError("centers must be finite")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidInputError(f"sigma must be positive, got {self.sigma!r}")
        k = centers.shape[0]
        probs = np.full(k, 1.0 / k) if self.mode_probs is None else np.asarray(self.mode_probs, dtype=np.float64)
        if probs.shape != (k,) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidInputError("mode_probs must be a nonnegative vector summing to 1, one entry per center")
        object.__setattr__(self, "centers", tuple(tuple(float(v) for v in c) for c in centers))
        object.__setattr__(self, "mode_probs", tuple(float(p) for p in probs))

    @property
    def dim(self) -> int:
        return len(self.centers[0])

    @property
    def center_array(self) -> np.ndarray:
        return np.array(self.centers, dtype=np.float64)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        modes = rng.choice(len(self.centers), size=count, p=self.mode_probs)
        return self.center_array[modes] + self.sigma * rng.standard_normal((count, self.dim))

    def to_dict(self) -> dict:
        return {"centers": [list(c) for c in self.centers], "sigma": self.sigma, "mode_probs": list(self.mode_probs)}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixtureSpec":
        return cls(centers=d["centers"], sigma=d["sigma"], mode_probs=d.get("mode_probs"))


def four_mode_spec(sigma: float = 0.1) -> GaussianMixtureSpec:
    """Four equal-weight isotropic modes at ``(+-0.5, +-0.5)``."""
    return GaussianMixtureSpec(centers=((0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5)), sigma=sigma)


@dataclass(frozen=True, eq=False)
class SamplePool:
    points: np.ndarray
    source_spec: GaussianMixtureSpec | None
    seed: int | None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidInputError("a pool needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("pool coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def from_points(cls, points) -> "SamplePool":
        """Wrap a hand-built point set (test fixtures, demo clusters)."""
        return cls(points=np.asarray(points, dtype=np.float64), source_spec=None, seed=None)


class QueryScheme(str, enum.Enum):
    FROM_P = "from-p"
    ISOTROPIC_GAUSSIAN = "isotropic-gaussian"


@dataclass(frozen=True, eq=False)
class QuerySet:
    queries: np.ndarray
    scheme: QueryScheme
    scale: float | None = None
    seed: int | None = None

    def __post_init__(self):
        q = np.ascontiguousarray(self.queries, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] < 1:
            raise InvalidInputError("a query set needs at least one query")
        q.setflags(write=False)
        object.__setattr__(self, "queries", q)

    def __len__(self):
        return self.queries.shape[0]


# stream-kind tags keep the pool, query and trial streams disjoint
POOL_STREAM = 0
QUERY_STREAM = 1


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream addressed by ``(seed, *key)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def build_pool(spec: GaussianMixtureSpec, size: int, seed: int) -> SamplePool:
    if size < 1:
        raise InvalidInputError(f"pool size must be positive, got {size}")
    points = spec.sample(int(size), make_rng(seed, POOL_STREAM))
    return SamplePool(points=points, source_spec=spec, seed=int(seed))


def build_queries(scheme, count: int, spec: GaussianMixtureSpec, seed: int, scale: float = 0.5) -> QuerySet:
    """Query points drawn from the mixture itself or from ``N(0, scale^2 I)``."""
    scheme = QueryScheme(scheme)
    if count < 1:
        raise InvalidInputError(f"query count must be positive, got {count}")
    rng = make_rng(seed, QUERY_STREAM)
    if scheme is QueryScheme.FROM_P:
        return QuerySet(spec.sample(int(count), rng), scheme, None, int(seed))
    if scale < 0:
        raise InvalidInputError(f"scale must be nonnegative, got {scale}")
    return QuerySet(scale * rng.standard_normal((int(count), spec.dim)), scheme, float(scale), int(seed))


def draw_indices(rng: np.random.Generator, size: int, rows: int, n: int, replace: bool) -> np.ndarray:
    """``(rows, n)`` uniform pool indices, each row with or without replacement.

    Without replacement, small ``n`` uses rejection: rows of i.i.d. indices
    that contain a repeat are redrawn, which leaves the accepted rows
    uniform over ordered distinct tuples.
    """
    if n < 1:
        raise InvalidInputError(f"n must be positive, got {n}")
    if replace:
        return rng.integers(0, size, size=(rows, n))
    if n > size:
        raise InvalidInputError(f"cannot draw {n} distinct points from a pool of {size}")
    if n * n > 4 * size:
        if rows == 0:
            return np.empty((0, n), dtype=np.int64)
        return np.stack([rng.choice(size, n, replace=False) for _ in range(rows)])
    idx = rng.integers(0, size, size=(rows, n))
    bad = _rows_with_repeats(idx)
    while bad.size:
        idx[bad] = rng.integers(0, size, size=(bad.size, n))
        bad = bad[_rows_with_repeats(idx[bad])]
    return idx


def _rows_with_repeats(idx: np.ndarray) -> np.ndarray:
    if idx.shape[1] < 2:
        return np.empty(0, dtype=np.intp)
    s = np.sort(idx, axis=1)
    return np.flatnonzero(np.any(s[:, 1:] == s[:, :-1], axis=1))


def draw_minibatch(pool: SamplePool, n: int, replacement: bool, rng: np.random.Generator) -> np.ndarray:
    idx = draw_indices(rng, pool.size, 1, n, replacement)[0]
    return pool.points[idx]


# --- serialization -------------------------------------------------------
#
# Text format: one header line "# " + JSON object, then one CSV row per
# point in row-major order.  Floats are written with repr so a load
# reproduces the array bit for bit.

def _write_points(path, header: dict, points: np.ndarray) -> None:
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    for row in points:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def _read_points(path) -> tuple[dict, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise InvalidInputError(f"{path}: missing header line")
    header = json.loads(lines[0][2:])
    rows = [[float(v) for v in line.split(",")] for line in lines[1:] if line]
    points = np.array(rows, dtype=np.float64).reshape(len(rows), header["D"])
    if points.shape[0] != header["N"]:
        raise InvalidInputError(f"{path}: header says N={header['N']} but found {points.shape[0]} rows")
    return header, points


def save_pool(pool: SamplePool, path) -> None:
    header = {
        "kind": "pool",
        "D": pool.dim,
        "N": pool.size,
        "seed": pool.seed,
        "spec": pool.source_spec.to_dict() if pool.source_spec else None,
    }
    _write_points(path, header, pool.points)


def load_pool(path) -> SamplePool:
    header, points = _read_points(path)
    spec = GaussianMixtureSpec.from_dict(header["spec"]) if header.get("spec") else None
    return SamplePool(points=points, source_spec=spec, seed=header.get("seed"))


def save_queries(qs: QuerySet, path) -> None:
    header = {
        "kind": "queries",
        "D": qs.queries.shape[1],
        "N": len(qs),
        "seed": qs.seed,
        "scheme": qs.scheme.value,
        "scale": qs.scale,
    }
    _write_points(path, header, qs.queries)


def load_queries(path) -> QuerySet:
    header, points = _read_points(path)
    return QuerySet(points, QueryScheme(header["scheme"]), header.get("scale"), header.get("seed"))
