"""Model-family estimators: graph -> fitted probability matrix.

Six families share one entry point, ``fit``, which is the plug-in used by the
bootstrap engine. Every estimator clips its output into [0, 1] and zeroes the
diagonal so the result is always usable as a Bernoulli generator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path
from scipy.special import expit

from .exceptions import DegenerateInputError, OptimizerError
from .netcore import Graph, ProbMatrix, RngStream
from .spectral import CommunityAssignment, ase, spectral_cluster

__all__ = [
    "Estimator",
    "ChungLuFit",
    "BlockFit",
    "PabmFit",
    "LatentFit",
    "fit",
    "fit_chung_lu",
    "fit_sbm",
    "fit_dcbm",
    "fit_rdpg",
    "fit_pabm",
    "fit_latent_distance",
]

FAMILIES = ("chung_lu", "sbm", "dcbm", "rdpg", "pabm", "latent")
_BLOCK_FAMILIES = ("sbm", "dcbm", "pabm")


@dataclass(frozen=True)
class Estimator:
    """A model family plus the hyperparameters its fit needs."""

    family: str
    K: int | None = None
    d: int | None = None
    fixed_communities: CommunityAssignment | None = None
    max_iter: int = 2000
    grad_tol: float = 1e-5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected {FAMILIES}")
        if self.family in _BLOCK_FAMILIES:
            if self.fixed_communities is None and (self.K is None or self.K < 2):
                raise ValueError(f"{self.family} requires K >= 2")
        if self.family in ("rdpg", "latent") and (self.d is None or self.d < 1):
            raise ValueError(f"{self.family} requires d >= 1")

    def describe(self) -> str:
        parts = [self.family]
        if self.K is not None:
            parts.append(f"K={self.K}")
        if self.d is not None:
            parts.append(f"d={self.d}")
        if self.fixed_communities is not None:
            parts.append("fixed_communities")
        return " ".join(parts)


@dataclass(frozen=True)
class ChungLuFit:
    theta_hat: np.ndarray  # d_i / sqrt(2m)


@dataclass(frozen=True)
class BlockFit:
    communities: CommunityAssignment
    omega_hat: np.ndarray          # probabilities (SBM) or edge counts (DCBM)
    theta_hat: np.ndarray | None = None


@dataclass(frozen=True)
class PabmFit:
    communities: CommunityAssignment
    lambda_hat: np.ndarray  # n x K popularity matrix


@dataclass(frozen=True)
class LatentFit:
    alpha_hat: float
    z_hat: np.ndarray
    loglik_trace: np.ndarray = field(repr=False)


def fit(est: Estimator, g: Graph, rng: RngStream) -> ProbMatrix:
    """Dispatch to the family-specific estimator."""
    if est.family == "chung_lu":
        return fit_chung_lu(g)
    if est.family == "sbm":
        return fit_sbm(g, est.K, est.fixed_communities, rng)
    if est.family == "dcbm":
        return fit_dcbm(g, est.K, est.fixed_communities, rng)
    if est.family == "rdpg":
        return fit_rdpg(g, est.d)
    if est.family == "pabm":
        return fit_pabm(g, est.K, est.fixed_communities, rng)
    if est.family == "latent":
        return fit_latent_distance(
            g, est.d, max_iter=est.max_iter, grad_tol=est.grad_tol
        )
    raise AssertionError(est.family)


def _communities(
    g: Graph,
    K: int | None,
    fixed: CommunityAssignment | None,
    rng: RngStream,
    row_normalize: bool,
) -> CommunityAssignment:
    if fixed is not None:
        if len(fixed.labels) != g.n:
            raise ValueError("fixed_communities length does not match graph")
        return fixed
    return spectral_cluster(g, K, row_normalize, rng)


def fit_chung_lu(g: Graph, *, return_details: bool = False):
    """P_hat(i,j) = d_i d_j / (2m), capped at 1, diagonal zeroed."""
    deg = g.degrees.astype(np.float64)
    two_m = deg.sum()
    if two_m <= 0:
        raise DegenerateInputError("Chung-Lu fit needs at least one edge")
    p = np.outer(deg, deg) / two_m
    pm = ProbMatrix.from_dense(p, clip=True)
    if return_details:
        return pm, ChungLuFit(theta_hat=deg / np.sqrt(two_m))
    return pm


def _block_masses(adj: np.ndarray, labels: np.ndarray, K: int) -> np.ndarray:
    """K x K matrix of double-sum edge-endpoint counts per block pair."""
    ind = np.zeros((len(labels), K))
    ind[np.arange(len(labels)), labels] = 1.0
    return ind.T @ adj @ ind


def fit_sbm(
    g: Graph,
    K: int | None,
    fixed_communities: CommunityAssignment | None = None,
    rng: RngStream | None = None,
    *,
    return_details: bool = False,
):
    """Block-density SBM fit under estimated or supplied communities."""
    comm = _communities(g, K, fixed_communities, rng, row_normalize=False)
    K = comm.K
    adj = g.adj.astype(np.float64)
    masses = _block_masses(adj, comm.labels, K)
    sizes = comm.sizes.astype(np.float64)
    denom = np.outer(sizes, sizes)
    np.fill_diagonal(denom, sizes * (sizes - 1))
    omega = np.zeros((K, K))
    ok = denom > 0
    omega[ok] = masses[ok] / denom[ok]
    if not np.all(ok):
        warnings.warn(
            "singleton community: within-block density set to 0", stacklevel=2
        )
    p = omega[comm.labels][:, comm.labels]
    pm = ProbMatrix.from_dense(p, clip=True)
    if return_details:
        return pm, BlockFit(communities=comm, omega_hat=omega)
    return pm


def fit_dcbm(
    g: Graph,
    K: int | None,
    fixed_communities: CommunityAssignment | None = None,
    rng: RngStream | None = None,
    *,
    return_details: bool = False,
):
    """Degree-corrected blockmodel: P_hat(i,j) = theta_i omega_{c_i c_j} theta_j.

    omega holds double-sum block edge counts, so theta_i = d_i / delta_r sums
    to one within each community and the product reproduces
    d_i d_j O_rs / (delta_r delta_s).
    """
    comm = _communities(g, K, fixed_communities, rng, row_normalize=True)
    K = comm.K
    adj = g.adj.astype(np.float64)
    deg = g.degrees.astype(np.float64)
    delta = np.bincount(comm.labels, weights=deg, minlength=K)
    if np.any(delta <= 0):
        raise DegenerateInputError("a community has zero total degree")
    omega = _block_masses(adj, comm.labels, K)
    theta = deg / delta[comm.labels]
    p = theta[:, None] * omega[comm.labels][:, comm.labels] * theta[None, :]
    pm = ProbMatrix.from_dense(p, clip=True)
    if return_details:
        return pm, BlockFit(communities=comm, omega_hat=omega, theta_hat=theta)
    return pm


def fit_rdpg(g, d: int) -> ProbMatrix:
    """P_hat = X_hat X_hat' from the adjacency spectral embedding, clipped."""
    x = ase(g, d).coords
    return ProbMatrix.from_dense(x @ x.T, clip=True)


def fit_pabm(
    g: Graph,
    K: int | None,
    fixed_communities: CommunityAssignment | None = None,
    rng: RngStream | None = None,
    *,
    return_details: bool = False,
):
    """Popularity-adjusted blockmodel fit.

    lambda_hat(i, r) = (edges from i into community r) / sqrt(mass of block
    (c_i, r)); P_hat(i,j) = lambda(i, c_j) lambda(j, c_i). A block with zero
    mass has all its numerators zero as well, so those popularities are 0.
    """
    comm = _communities(g, K, fixed_communities, rng, row_normalize=True)
    K = comm.K
    adj = g.adj.astype(np.float64)
    ind = np.zeros((g.n, K))
    ind[np.arange(g.n), comm.labels] = 1.0
    into = adj @ ind                      # into[i, r] = edges from i into r
    masses = ind.T @ into                 # masses[r, s] = block (r, s) mass
    denom = np.sqrt(masses[comm.labels])  # denom[i, r] = sqrt(mass(c_i, r))
    lam = np.zeros_like(into)
    nz = denom > 0
    lam[nz] = into[nz] / denom[nz]
    if np.any(into[~nz] > 0):
        raise DegenerateInputError("zero block mass under a nonzero numerator")
    p = lam[np.arange(g.n)[:, None], comm.labels[None, :]]
    p = p * p.T
    pm = ProbMatrix.from_dense(p, clip=True)
    if return_details:
        return pm, PabmFit(communities=comm, lambda_hat=lam)
    return pm


def _mds_init(g: Graph, d: int) -> np.ndarray:
    """Classical MDS of graph geodesics; disconnected pairs get max finite + 1."""
    dist = shortest_path(g.adj, method="D", unweighted=True, directed=False)
    finite = dist[np.isfinite(dist)]
    fill = (finite.max() + 1.0) if finite.size else 1.0
    dist[~np.isfinite(dist)] = fill
    n = g.n
    j = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * j @ (dist**2) @ j
    w, v = np.linalg.eigh(b)
    order = np.argsort(-w)[:d]
    coords = np.zeros((n, d))
    for col, idx in enumerate(order):
        if w[idx] > 0:
            coords[:, col] = v[:, idx] * np.sqrt(w[idx])
    return coords


def _latent_loglik_grad(adj, alpha, z):
    """Log-likelihood and analytic gradient of the logit-distance model."""
    diff = z[:, None, :] - z[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    eta = alpha - dist
    mask = ~np.eye(len(z), dtype=bool)
    ll = 0.5 * float((adj * eta - np.logaddexp(0.0, eta))[mask].sum())
    resid = (adj - expit(eta)) * mask
    grad_alpha = 0.5 * float(resid.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dist > 0, resid / dist, 0.0)
    grad_z = w @ z - w.sum(axis=1)[:, None] * z
    return ll, grad_alpha, grad_z


def fit_latent_distance(
    g: Graph,
    d: int,
    *,
    max_iter: int = 2000,
    grad_tol: float = 1e-5,
    return_details: bool = False,
):
    """MLE of logit P(i,j) = alpha - |z_i - z_j| by gradient ascent.

    Latent positions are a nuisance (identifiable only up to isometry); only
    the fitted probability matrix is returned, which is isometry-invariant.
    Backtracking line search keeps the log-likelihood trace non-decreasing.
    """
    if g.n < d + 2:
        raise ValueError(f"need n >= d + 2 (n={g.n}, d={d})")
    adj = g.adj.astype(np.float64)
    n_pairs = g.n * (g.n - 1) / 2
    density = (g.num_edges + 1.0) / (n_pairs + 2.0)
    alpha = float(np.log(density / (1.0 - density)))
    z = _mds_init(g, d)

    ll, g_a, g_z = _latent_loglik_grad(adj, alpha, z)
    if not np.isfinite(ll):
        raise OptimizerError("non-finite log-likelihood at initialization")
    trace = [ll]
    step = 1.0
    prev_grad = None
    for _ in range(max_iter):
        gnorm2 = g_a**2 + float((g_z**2).sum())
        if np.sqrt(gnorm2) <= grad_tol:
            break
        accepted = False
        t = step
        for _ in range(60):
            cand_ll, cand_ga, cand_gz = _latent_loglik_grad(
                adj, alpha + t * g_a, z + t * g_z
            )
            if np.isfinite(cand_ll) and cand_ll >= ll + 1e-4 * t * gnorm2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        # Barzilai-Borwein trial step for the next line search: far faster
        # than a fixed trial on ill-conditioned likelihood surfaces, while the
        # Armijo backtracking above keeps the trace monotone.
        y_a, y_z = cand_ga - g_a, cand_gz - g_z
        sy = abs(t * (g_a * y_a + float((g_z * y_z).sum())))
        yy = y_a**2 + float((y_z**2).sum())
        step = min(max(sy / yy, 1e-12), 1e6) if yy > 0 else t * 2.0
        alpha, z = alpha + t * g_a, z + t * g_z
        ll, g_a, g_z = cand_ll, cand_ga, cand_gz
        trace.append(ll)

    diff = z[:, None, :] - z[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    pm = ProbMatrix.from_dense(expit(alpha - dist), clip=True)
    if return_details:
        return pm, LatentFit(
            alpha_hat=alpha, z_hat=z, loglik_trace=np.asarray(trace)
        )
    return pm
