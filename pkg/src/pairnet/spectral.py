"""Shared numerical primitives: eigendecomposition, ASE, k-means, spectral clustering.

Everything here is deterministic given its RngStream: eigenvectors get a fixed
sign convention and k-means randomness is confined to the stream argument, so
bootstrap replicates are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ClusteringError, DegenerateInputError, RankDeficiencyError
from .netcore import Graph, ProbMatrix, RngStream

__all__ = [
    "EigenPairs",
    "CommunityAssignment",
    "LatentEmbedding",
    "top_eigenpairs",
    "ase",
    "kmeans",
    "spectral_cluster",
]

_SIGN_EPS = 1e-12


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray   # sorted by descending |value|
    vectors: np.ndarray  # orthonormal columns, fixed sign convention


@dataclass(frozen=True)
class CommunityAssignment:
    labels: np.ndarray
    K: int
    sizes: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sizes", np.asarray(self.sizes, dtype=np.int64))
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= self.K:
            raise ValueError("labels out of range")
        if self.sizes.sum() != len(labels):
            raise ValueError("sizes must sum to n")


@dataclass(frozen=True)
class LatentEmbedding:
    coords: np.ndarray
    d: int

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if not np.all(np.isfinite(c)):
            raise ValueError("embedding coordinates must be finite")
        if c.shape[1] != self.d or self.d < 1:
            raise ValueError("coords must be n x d with d >= 1")
        object.__setattr__(self, "coords", c)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its first coordinate above noise level is positive."""
    v = vectors.copy()
    for j in range(v.shape[1]):
        col = v[:, j]
        nz = np.flatnonzero(np.abs(col) > _SIGN_EPS)
        if nz.size and col[nz[0]] < 0:
            v[:, j] = -col
    return v


def _as_dense(m) -> np.ndarray:
    if isinstance(m, Graph):
        return m.adj.astype(np.float64)
    if isinstance(m, ProbMatrix):
        return m.p
    return np.asarray(m, dtype=np.float64)


def top_eigenpairs(m, k: int) -> EigenPairs:
    """k eigenpairs of largest |eigenvalue| of a symmetric matrix.

    Uses a full dense symmetric decomposition; at the target sizes (n up to a
    few hundred) a view over the full spectrum beats iterative solvers.
    """
    a = _as_dense(m)
    n = a.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for n={n}")
    w, v = np.linalg.eigh(a)
    order = np.argsort(-np.abs(w), kind="stable")[:k]
    return EigenPairs(values=w[order], vectors=_fix_signs(v[:, order]))


def ase(g, d: int) -> LatentEmbedding:
    """Adjacency spectral embedding: U_A S_A^{1/2} for the d top singular values.

    For a symmetric matrix the singular values are |eigenvalues|, so the
    scaling uses sqrt(|lambda|). Accepts a Graph or a dense symmetric matrix.
    """
    a = _as_dense(g)
    n = a.shape[0]
    if d > n:
        raise ValueError(f"embedding dimension d={d} exceeds n={n}")
    pairs = top_eigenpairs(a, d)
    svals = np.abs(pairs.values)
    if svals[-1] <= 1e-10 * max(1.0, svals[0]):
        raise RankDeficiencyError(
            f"singular value #{d} is numerically zero ({svals[-1]:.3e})"
        )
    coords = pairs.vectors * np.sqrt(svals)
    return LatentEmbedding(coords=coords, d=d)


def _kmeans_pp_init(points, K, gen):
    n = points.shape[0]
    centers = np.empty((K, points.shape[1]))
    centers[0] = points[gen.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, K):
        total = d2.sum()
        if total <= 0:
            idx = gen.integers(n)
        else:
            idx = gen.choice(n, p=d2 / total)
        centers[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(points, centers, max_iter):
    """Lloyd iterations; empty clusters get the point farthest from its center."""
    n, K = points.shape[0], centers.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        for j in range(K):
            if not np.any(new_labels == j):
                # steal the globally worst-fitting point to keep K clusters
                worst = dists[np.arange(n), new_labels].argmax()
                new_labels[worst] = j
                dists[worst, :] = np.inf
                dists[worst, j] = 0.0
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(K):
            centers[j] = points[labels == j].mean(axis=0)
    wcss = float(((points - centers[labels]) ** 2).sum())
    return labels, wcss


def kmeans(points: np.ndarray, K: int, rng: RngStream) -> CommunityAssignment:
    """k-means++ / Lloyd, best of 10 restarts by within-cluster sum of squares."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if K > n:
        raise ValueError(f"K={K} exceeds number of points n={n}")
    gen = rng.generator()
    best = None
    for _ in range(10):
        centers = _kmeans_pp_init(points, K, gen)
        labels, wcss = _lloyd(points, centers, max_iter=100)
        if len(np.unique(labels)) < K:
            continue
        if best is None or wcss < best[1]:
            best = (labels, wcss)
    if best is None:
        raise ClusteringError(
            f"could not form {K} nonempty clusters in any of 10 restarts"
        )
    labels = best[0]
    sizes = np.bincount(labels, minlength=K)
    return CommunityAssignment(labels=labels, K=K, sizes=sizes)


def spectral_cluster(
    g: Graph, K: int, row_normalize: bool, rng: RngStream
) -> CommunityAssignment:
    """Degree-regularized spectral clustering.

    L_tau = D_tau^{-1/2} A D_tau^{-1/2} with D_tau = D + tau*I and tau the
    mean degree; k-means on the rows of the K leading eigenvectors. With
    row_normalize, nonzero rows are scaled to unit length (zero rows stay
    zero and fall to whichever centroid is nearest).
    """
    if K < 2:
        raise ValueError("spectral_cluster requires K >= 2")
    a = g.adj.astype(np.float64)
    deg = a.sum(axis=1)
    tau = deg.mean()
    if tau <= 0:
        raise DegenerateInputError("cannot cluster an empty graph")
    inv_sqrt = 1.0 / np.sqrt(deg + tau)
    lap = inv_sqrt[:, None] * a * inv_sqrt[None, :]
    w, v = np.linalg.eigh(lap)
    vecs = _fix_signs(v[:, np.argsort(-w, kind="stable")[:K]])
    if row_normalize:
        norms = np.linalg.norm(vecs, axis=1)
        nz = norms > 0
        vecs = vecs.copy()
        vecs[nz] /= norms[nz, None]
    return kmeans(vecs, K, rng)
