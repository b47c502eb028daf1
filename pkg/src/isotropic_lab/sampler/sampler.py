#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Random generation: measure samples, sphere directions, Haar subspaces and tilted draws.

Every random sequence is a pure function of a ``Seed``. Work split into chunks draws chunk
``i`` from the stream ``seed.child(tag, i)`` so results do not depend on the thread count.
"""

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Iterable, List, Optional, Tuple, TypeVar

import numpy as np
from scipy import stats

from src.isotropic_lab.config.settings import EstimatorSettings
from src.isotropic_lab.errors import (
    DegenerateMeasureError,
    LaplaceDomainError,
    UnsupportedMeasureError,
    UsageError,
)

if TYPE_CHECKING:
    from src.isotropic_lab.measures.measures import MeasureModel

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
HIT_AND_RUN_CHAINS = 64
ORTHONORMALITY_TOL = 1e-10
_UINT64 = 2**64


def derive_stream(master: int, stream_id: int, tag: str, index: int) -> int:
    """Counter-based child stream id: blake2b over (master, stream, tag, index)."""
    key = f"{master}:{stream_id}:{tag}:{index}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class Seed:
    """(master, stream_id) pair that fully determines a random sequence."""

    master: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.master < _UINT64 and 0 <= self.stream_id < _UINT64):
            raise UsageError("Seed components must be unsigned 64-bit integers")

    def child(self, tag: str, index: int = 0) -> "Seed":
        return Seed(self.master, derive_stream(self.master, self.stream_id, tag, index))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.master, self.stream_id])))


@dataclass(frozen=True, eq=False)
class Subspace:
    """Orthonormal k-frame in R^ambient representing a point of G_{n,k}."""

    ambient: int
    k: int
    frame: np.ndarray

    def __post_init__(self):
        if not 1 <= self.k <= self.ambient:
            raise UsageError(f"Subspace dimension k={self.k} must satisfy 1 <= k <= {self.ambient}")
        if self.frame.shape != (self.ambient, self.k):
            raise UsageError(f"Frame shape {self.frame.shape} != ({self.ambient}, {self.k})")
        defect = np.abs(self.frame.T @ self.frame - np.eye(self.k)).max()
        if defect > ORTHONORMALITY_TOL:
            raise UsageError(f"Frame is not orthonormal (defect {defect:.3g})")

    @classmethod
    def from_frame(cls, frame: np.ndarray) -> "Subspace":
        frame = np.asarray(frame, dtype=float)
        return cls(frame.shape[0], frame.shape[1], frame)

    @classmethod
    def coordinate(cls, n: int, axes: Iterable[int]) -> "Subspace":
        """Subspace spanned by the given coordinate axes."""
        axes = list(axes)
        return cls(n, len(axes), np.eye(n)[:, axes])

    def complement_frame(self) -> np.ndarray:
        """Orthonormal frame of the orthogonal complement (n, n - k)."""
        q, _ = np.linalg.qr(self.frame, mode="complete")
        return q[:, self.k :]

    def compose(self, inner: "Subspace") -> "Subspace":
        """Subspace of R^ambient spanned by frame @ inner.frame."""
        if inner.ambient != self.k:
            raise UsageError("Inner subspace must live in the coordinates of this frame")
        return Subspace(self.ambient, inner.k, self.frame @ inner.frame)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """A (count, dim) matrix of draws with provenance (measure tag, seed)."""

    points: np.ndarray
    provenance: Tuple[str, Seed]

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise UsageError("A sample batch needs at least one point")
        self.points.setflags(write=False)

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Map preserving input order, optionally on a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _chunk_sizes(count: int, chunk_size: int) -> List[int]:
    full, rest = divmod(count, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


########################################################################################
# Family samplers
########################################################################################


def _unit_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def hit_and_run(
    A: np.ndarray,
    b: np.ndarray,
    count: int,
    rng: np.random.Generator,
    burnin: int,
    thinning: int,
    chains: int = HIT_AND_RUN_CHAINS,
) -> np.ndarray:
    """Uniform samples from {x : A x <= b} by parallel hit-and-run chains started at 0.

    Rows are ordered by time step, so the first half of the output precedes the second
    half in every chain.
    """
    n = A.shape[1]
    chains = max(1, min(chains, count))
    per_chain = -(-count // chains)
    x = np.zeros((chains, n))
    recorded = []
    total = burnin + per_chain * thinning
    for step in range(1, total + 1):
        d = _unit_rows(rng, chains, n)
        ad = d @ A.T
        slack = np.maximum(b - x @ A.T, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = slack / ad
        t_hi = np.where(ad > 0, ratio, np.inf).min(axis=1)
        t_lo = np.where(ad < 0, ratio, -np.inf).max(axis=1)
        t = t_lo + rng.random(chains) * (t_hi - t_lo)
        x = x + t[:, None] * d
        if step > burnin and (step - burnin) % thinning == 0:
            recorded.append(x.copy())
    return np.concatenate(recorded, axis=0)[:count]


def _sample_family(
    m: "MeasureModel", rng: np.random.Generator, count: int, settings: EstimatorSettings
) -> np.ndarray:
    family = m.family
    n = m.dim
    if family == "gaussian":
        return rng.standard_normal((count, n))
    if family == "cube":
        return rng.uniform(-SQRT3, SQRT3, (count, n))
    if family == "product-exponential":
        return rng.laplace(0.0, 1.0 / SQRT2, (count, n))
    if family == "euclidean-ball":
        radii = m.params["radius"] * rng.random(count) ** (1.0 / n)
        return _unit_rows(rng, count, n) * radii[:, None]
    if family == "l1-ball":
        e = rng.standard_exponential((count, n + 1))
        signs = rng.choice(np.array([-1.0, 1.0]), size=(count, n))
        return m.params["radius"] * signs * e[:, :n] / e.sum(axis=1, keepdims=True)
    if family == "simplex":
        e = rng.standard_exponential((count, n + 1))
        bary = e / e.sum(axis=1, keepdims=True)
        return m.params["scale"] * (bary - 1.0 / (n + 1)) @ m.params["basis"]
    if family == "hpoly-body":
        return hit_and_run(
            m.params["A"],
            m.params["b"],
            count,
            rng,
            burnin=settings.burnin_factor * n,
            thinning=settings.thinning_factor * n,
        )
    if family == "marginal":
        base_points = _sample_family(m.params["base"], rng, count, settings)
        return base_points @ m.params["frame"]
    raise UnsupportedMeasureError(f"No sampler for family {family}")


def draw(
    m: "MeasureModel",
    count: int,
    seed: Seed,
    settings: Optional[EstimatorSettings] = None,
) -> SampleBatch:
    """Draw ``count`` samples of ``m``; bit-identical for a fixed seed at any thread count.

    Args:
        m: Measure to sample
        count: Number of samples
        seed: Stream seed
        settings: Chunk size, thread count and chain parameters

    Returns:
        SampleBatch: The samples
    """
    if count < 1:
        raise UsageError(f"count must be positive, got {count}")
    settings = settings or EstimatorSettings()
    sizes = _chunk_sizes(int(count), settings.chunk_size)

    def run_chunk(indexed: Tuple[int, int]) -> np.ndarray:
        index, size = indexed
        return _sample_family(m, seed.child("draw", index).generator(), size, settings)

    chunks = ordered_map(run_chunk, list(enumerate(sizes)), settings.threads)
    logger.debug("Drew %d samples of %s in %d chunks", count, m.tag, len(sizes))
    return SampleBatch(np.concatenate(chunks, axis=0), (m.tag, seed))


def sphere_directions(dim: int, count: int, seed: Seed) -> np.ndarray:
    """``count`` i.i.d. uniform unit vectors in R^dim."""
    return _unit_rows(seed.generator(), count, dim)


def haar_subspace(n: int, k: int, seed: Seed) -> Subspace:
    """Haar-distributed k-dimensional subspace of R^n.

    Args:
        n: Ambient dimension
        k: Subspace dimension
        seed: Stream seed

    Returns:
        Subspace: QR orthonormalisation of an n x k gaussian matrix
    """
    if not 1 <= k <= n:
        raise UsageError(f"Need 1 <= k <= n, got k={k}, n={n}")
    g = seed.generator().standard_normal((n, k))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return Subspace(n, k, q * signs)


def project(batch: SampleBatch, subspace: Subspace) -> SampleBatch:
    """Coordinates of the batch in the frame of E: samples of the marginal pi_E mu."""
    if batch.dim != subspace.ambient:
        raise UsageError(f"Batch dimension {batch.dim} != subspace ambient {subspace.ambient}")
    tag, seed = batch.provenance
    return SampleBatch(batch.points @ subspace.frame, (f"marginal[{subspace.k}]({tag})", seed))


########################################################################################
# Tilted draws
########################################################################################


def _tilted_cube(rng: np.random.Generator, x: np.ndarray, count: int) -> np.ndarray:
    # Per-axis inverse CDF of the density proportional to e^{t z} on [-sqrt 3, sqrt 3]
    u = rng.random((count, x.shape[0]))
    t = np.abs(x)
    safe = np.where(t > 0, t, 1.0)
    tilted = SQRT3 + np.log(u + (1.0 - u) * np.exp(-2.0 * SQRT3 * safe)) / safe
    z = np.where(t > 0, tilted, SQRT3 * (2.0 * u - 1.0))
    return np.where(x < 0, -z, z)


def _tilted_product_exponential(rng: np.random.Generator, x: np.ndarray, count: int) -> np.ndarray:
    positive = rng.random((count, x.shape[0])) < (SQRT2 + x) / (2.0 * SQRT2)
    rate = np.where(positive, SQRT2 - x, SQRT2 + x)
    magnitude = rng.standard_exponential((count, x.shape[0])) / rate
    return np.where(positive, magnitude, -magnitude)


def _tilted_rejection(
    m: "MeasureModel",
    rng: np.random.Generator,
    x: np.ndarray,
    count: int,
    settings: EstimatorSettings,
) -> np.ndarray:
    envelope = m.support_value(x)
    accepted: List[np.ndarray] = []
    have = 0
    proposed = 0
    while have < count:
        proposals = _sample_family(m, rng, max(count, 1024), settings)
        proposed += proposals.shape[0]
        keep = np.log(rng.random(proposals.shape[0])) < proposals @ x - envelope
        accepted.append(proposals[keep])
        have += int(keep.sum())
        if proposed > 1000 * count and have < count:
            raise DegenerateMeasureError(
                f"Rejection sampler for tilt of {m.tag} accepted {have}/{proposed} proposals"
            )
    logger.debug("Tilted rejection acceptance %.4f", have / proposed)
    return np.concatenate(accepted, axis=0)[:count]


def _tilted_metropolis(
    m: "MeasureModel",
    rng: np.random.Generator,
    x: np.ndarray,
    count: int,
    settings: EstimatorSettings,
) -> np.ndarray:
    burnin = settings.burnin_factor * m.dim
    proposals = _sample_family(m, rng, count + burnin, settings)
    scores = proposals @ x
    log_u = np.log(rng.random(proposals.shape[0]))
    chosen = np.empty(proposals.shape[0], dtype=np.int64)
    current = 0
    for i in range(proposals.shape[0]):
        if log_u[i] < scores[i] - scores[current]:
            current = i
        chosen[i] = current
    return proposals[chosen[burnin:]]


def _sample_tilted(
    m: "MeasureModel",
    rng: np.random.Generator,
    x: np.ndarray,
    count: int,
    settings: EstimatorSettings,
) -> np.ndarray:
    family = m.family
    if not np.any(x):
        return _sample_family(m, rng, count, settings)
    if family == "gaussian":
        return rng.standard_normal((count, m.dim)) + x
    if family == "cube":
        return _tilted_cube(rng, x, count)
    if family == "product-exponential":
        return _tilted_product_exponential(rng, x, count)
    if family in ("euclidean-ball", "l1-ball", "simplex"):
        return _tilted_rejection(m, rng, x, count, settings)
    if family == "hpoly-body":
        return _tilted_metropolis(m, rng, x, count, settings)
    if family == "marginal":
        frame = m.params["frame"]
        return _sample_tilted(m.params["base"], rng, frame @ x, count, settings) @ frame
    raise UnsupportedMeasureError(f"No tilted sampler for family {family}")


def tilted_draw(
    m: "MeasureModel",
    x: np.ndarray,
    count: int,
    seed: Seed,
    settings: Optional[EstimatorSettings] = None,
) -> SampleBatch:
    """Samples of the tilted measure with density proportional to e^{<z, x>} f(z).

    Raises:
        LaplaceDomainError: If the Laplace transform is infinite at x
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (m.dim,):
        raise UsageError(f"Tilt point has shape {x.shape}, expected ({m.dim},)")
    if not m.in_laplace_domain(x):
        raise LaplaceDomainError(f"Tilt point {x.tolist()} is outside the Laplace domain of {m.tag}")
    settings = settings or EstimatorSettings()
    sizes = _chunk_sizes(int(count), settings.chunk_size)

    def run_chunk(indexed: Tuple[int, int]) -> np.ndarray:
        index, size = indexed
        return _sample_tilted(m, seed.child("tilted", index).generator(), x, size, settings)

    chunks = ordered_map(run_chunk, list(enumerate(sizes)), settings.threads)
    return SampleBatch(np.concatenate(chunks, axis=0), (f"tilted({m.tag})", seed))


########################################################################################
# Diagnostics and frame files
########################################################################################


def stationarity_drift(batch: SampleBatch) -> float:
    """Largest first-moment difference between the two halves of a batch, in stderr units."""
    half = batch.count // 2
    if half < 2:
        raise UsageError("Need at least four samples to compare halves")
    first, second = batch.points[:half], batch.points[half:]
    se = np.sqrt(
        first.var(axis=0, ddof=1) / first.shape[0] + second.var(axis=0, ddof=1) / second.shape[0]
    )
    return float(np.max(np.abs(first.mean(axis=0) - second.mean(axis=0)) / se))


def rotation_invariance_pvalue(n: int, k: int, count: int, seed: Seed) -> float:
    """Two-sample KS p-value comparing ||Proj_E e_1||^2 for E and for R E."""
    rotation = haar_subspace(n, n, seed.child("rotation")).frame
    plain = np.empty(count)
    rotated = np.empty(count)
    for j in range(count):
        frame = haar_subspace(n, k, seed.child("plain", j)).frame
        plain[j] = float(np.sum(frame[0] ** 2))
        moved = rotation @ haar_subspace(n, k, seed.child("rotated", j)).frame
        rotated[j] = float(np.sum(moved[0] ** 2))
    return float(stats.ks_2samp(plain, rotated).pvalue)


def save_frame(path: str, subspace: Subspace) -> None:
    """Write a frame file: text matrix, rows = ambient dimension, columns = k."""
    np.savetxt(path, subspace.frame, fmt="%.17e", header=f"ambient={subspace.ambient} k={subspace.k}")


def load_frame(path: str) -> Subspace:
    """Read a frame file written by save_frame (or by hand)."""
    try:
        frame = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as e:
        raise UsageError(f"Cannot read frame file {path}: {e}") from e
    defect = np.abs(frame.T @ frame - np.eye(frame.shape[1])).max()
    if defect > 1e-8:
        raise UsageError(f"Frame in {path} is not orthonormal (defect {defect:.3g})")
    q, r = np.linalg.qr(frame)
    return Subspace.from_frame(q * np.sign(np.diag(r)))
