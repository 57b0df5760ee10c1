"""Frobenius-distance statistics and the parametric-bootstrap test engine.

The engine draws B synthetic network pairs from null-restricted fitted
models, refits each pair from scratch with the same estimator, and reads the
p-value off the empirical replicate distribution: p = (1/B) #{T <= T*_i}.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import (
    BootstrapAbortError,
    ClusteringError,
    ContractViolationError,
    DegenerateInputError,
    DimensionMismatchError,
    RankDeficiencyError,
)
from .models import Estimator, fit
from .netcore import Graph, ProbMatrix, RngStream, sample_graph

logger = logging.getLogger(__name__)

__all__ = [
    "TestResult",
    "t_frob",
    "t_scale",
    "pooled_equality",
    "pooled_scaling",
    "run_test",
    "run_general_test",
]

_MAX_RETRIES = 5
_CONTRACT_TOL = 1e-10
_RETRYABLE = (DegenerateInputError, ClusteringError, RankDeficiencyError)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    replicates: np.ndarray
    p_value: float
    B: int
    alpha: float
    reject: bool
    kind: str
    estimator: str
    seed: int
    rho1_hat: float | None = None
    rho2_hat: float | None = None
    extra: dict = field(default_factory=dict)

    def serialize(self, verbose: bool = False) -> str:
        lines = [
            f"kind: {self.kind}",
            f"estimator: {self.estimator}",
            f"statistic: {self.statistic:.10g}",
            f"p_value: {self.p_value:.10g}",
            f"B: {self.B}",
            f"alpha: {self.alpha:.10g}",
            f"reject: {str(self.reject).lower()}",
            f"seed: {self.seed}",
        ]
        if self.rho1_hat is not None:
            lines.append(f"rho1_hat: {self.rho1_hat:.10g}")
        if self.rho2_hat is not None:
            lines.append(f"rho2_hat: {self.rho2_hat:.10g}")
        for key, val in sorted(self.extra.items()):
            lines.append(f"{key}: {val}")
        if verbose and len(self.replicates):
            reps = " ".join(f"{t:.10g}" for t in self.replicates)
            lines.append(f"replicates: {reps}")
        return "\n".join(lines) + "\n"


def t_frob(p1_hat: ProbMatrix, p2_hat: ProbMatrix) -> float:
    """||P1_hat - P2_hat||_F."""
    if p1_hat.n != p2_hat.n:
        raise DimensionMismatchError("fitted matrices differ in size")
    return float(np.linalg.norm(p1_hat.p - p2_hat.p, "fro"))


def t_scale(p1_hat: ProbMatrix, p2_hat: ProbMatrix):
    """||P1/rho1 - P2/rho2||_F with rho_k = ||P_k||_F; returns (stat, rho1, rho2)."""
    if p1_hat.n != p2_hat.n:
        raise DimensionMismatchError("fitted matrices differ in size")
    rho1 = float(np.linalg.norm(p1_hat.p, "fro"))
    rho2 = float(np.linalg.norm(p2_hat.p, "fro"))
    if rho1 <= 0 or rho2 <= 0:
        raise DegenerateInputError("zero-norm fitted matrix in scaling statistic")
    stat = float(np.linalg.norm(p1_hat.p / rho1 - p2_hat.p / rho2, "fro"))
    return stat, rho1, rho2


def pooled_equality(p1_hat: ProbMatrix, p2_hat: ProbMatrix) -> ProbMatrix:
    """Pooled estimate (P1_hat + P2_hat) / 2."""
    if p1_hat.n != p2_hat.n:
        raise DimensionMismatchError("fitted matrices differ in size")
    return ProbMatrix(p1_hat.n, 0.5 * (p1_hat.p + p2_hat.p))


def pooled_scaling(p1_hat: ProbMatrix, p2_hat: ProbMatrix):
    """Scaled pooling: H_hat plus clipped null-restricted estimates of P1, P2."""
    _, rho1, rho2 = t_scale(p1_hat, p2_hat)
    h = 0.5 * (p1_hat.p / rho1 + p2_hat.p / rho2)
    h_hat = ProbMatrix(p1_hat.n, h)  # entries <= 1 since ||P||_F >= max |P(i,j)|
    p1_null = ProbMatrix.from_dense(rho1 * h, clip=True)
    p2_null = ProbMatrix.from_dense(rho2 * h, clip=True)
    return h_hat, p1_null, p2_null


def _tau_identity(p: np.ndarray) -> np.ndarray:
    return p


def _tau_scale(p: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(p)
    if norm <= 0:
        raise DegenerateInputError("zero-norm matrix under scaling feature")
    return p / norm


def _restrict_equality(p1: ProbMatrix, p2: ProbMatrix):
    pooled = 0.5 * (p1.p + p2.p)
    return pooled, pooled


def _restrict_scaling(p1: ProbMatrix, p2: ProbMatrix):
    _, rho1, rho2 = t_scale(p1, p2)
    h = 0.5 * (p1.p / rho1 + p2.p / rho2)
    return rho1 * h, rho2 * h


def _statistic(tau, p1: ProbMatrix, p2: ProbMatrix) -> float:
    return float(np.linalg.norm(np.ravel(tau(p1.p) - tau(p2.p))))


def _one_replicate(args):
    est, p1_null, p2_null, tau, seed, i = args
    stream = RngStream(seed, i)
    last_err = None
    for attempt in range(_MAX_RETRIES):
        try:
            a1 = sample_graph(p1_null, stream.child(attempt, 0))
            a2 = sample_graph(p2_null, stream.child(attempt, 1))
            q1 = fit(est, a1, stream.child(attempt, 2))
            q2 = fit(est, a2, stream.child(attempt, 3))
            return _statistic(tau, q1, q2)
        except _RETRYABLE as err:  # degenerate resample: retry on a fresh substream
            last_err = err
    raise BootstrapAbortError(
        f"replicate {i} failed {_MAX_RETRIES} times; last error: {last_err}"
    )


def run_general_test(
    tau: Callable[[np.ndarray], np.ndarray],
    null_restrict: Callable[[ProbMatrix, ProbMatrix], tuple],
    est: Estimator,
    a1: Graph,
    a2: Graph,
    B: int,
    alpha: float,
    seed: int,
    *,
    kind: str = "general",
    threads: int = 1,
) -> TestResult:
    """Generic similarity test for a caller-supplied feature tau.

    ``null_restrict(p1_hat, p2_hat)`` must return a pair of raw (pre-clip)
    matrices satisfying tau-equality to 1e-10; they are clipped into [0, 1]
    before use as bootstrap generators. Replicate i draws from stream
    (seed, i), so results are independent of thread scheduling.
    """
    if a1.n != a2.n:
        raise DimensionMismatchError("paired graphs must be node-aligned")
    if B < 1:
        raise ValueError("B must be >= 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")

    root = RngStream(seed, 0)
    p1_hat = fit(est, a1, root.child(0))
    p2_hat = fit(est, a2, root.child(1))
    statistic = _statistic(tau, p1_hat, p2_hat)

    raw1, raw2 = null_restrict(p1_hat, p2_hat)
    raw1 = np.asarray(raw1.p if isinstance(raw1, ProbMatrix) else raw1, dtype=float)
    raw2 = np.asarray(raw2.p if isinstance(raw2, ProbMatrix) else raw2, dtype=float)
    gap = float(np.linalg.norm(np.ravel(tau(raw1) - tau(raw2))))
    if gap > _CONTRACT_TOL:
        raise ContractViolationError(
            f"null restriction violates tau-equality by {gap:.3e}"
        )
    if np.any(raw1 > 1) or np.any(raw2 > 1) or np.any(raw1 < 0) or np.any(raw2 < 0):
        logger.info("null-restricted generator clipped into [0, 1]")
    p1_null = ProbMatrix.from_dense(raw1, clip=True)
    p2_null = ProbMatrix.from_dense(raw2, clip=True)

    jobs = [(est, p1_null, p2_null, tau, seed, i) for i in range(1, B + 1)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            replicates = np.fromiter(
                pool.map(_one_replicate, jobs, chunksize=8), dtype=float, count=B
            )
    else:
        replicates = np.fromiter(map(_one_replicate, jobs), dtype=float, count=B)

    p_value = float(np.mean(statistic <= replicates))
    result = TestResult(
        statistic=statistic,
        replicates=replicates,
        p_value=p_value,
        B=B,
        alpha=alpha,
        reject=p_value < alpha,
        kind=kind,
        estimator=est.describe(),
        seed=seed,
    )
    return result


def run_test(
    kind: str,
    est: Estimator,
    a1: Graph,
    a2: Graph,
    B: int,
    alpha: float,
    seed: int,
    *,
    threads: int = 1,
) -> TestResult:
    """Equality or scaling test via parametric bootstrap.

    Equality pools the two fits into one generator; scaling builds the pair
    (rho1 * H_hat, rho2 * H_hat). Each replicate refits both resampled graphs
    from scratch (communities/embeddings are never reused).
    """
    if kind == "equality":
        result = run_general_test(
            _tau_identity, _restrict_equality, est, a1, a2, B, alpha, seed,
            kind="equality", threads=threads,
        )
        return result
    if kind == "scaling":
        result = run_general_test(
            _tau_scale, _restrict_scaling, est, a1, a2, B, alpha, seed,
            kind="scaling", threads=threads,
        )
        root = RngStream(seed, 0)
        p1_hat = fit(est, a1, root.child(0))
        p2_hat = fit(est, a2, root.child(1))
        _, rho1, rho2 = t_scale(p1_hat, p2_hat)
        return TestResult(
            **{
                **result.__dict__,
                "rho1_hat": rho1,
                "rho2_hat": rho2,
            }
        )
    raise ValueError(f"unknown test kind {kind!r}")
