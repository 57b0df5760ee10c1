"""Scenario generators and the Monte Carlo experiment runner.

Each scenario builds a (P1, P2) pair with a declared truth label; the runner
drives per-run RNG substreams so results are independent of worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .baselines import AseConfig, run_ase_test, run_eig_test, scaled_difference_matrix
from .boottest import run_test
from .models import Estimator, fit, fit_sbm
from .netcore import ProbMatrix, RngStream, sample_graph
from .spectral import CommunityAssignment, ase as spectral_ase
from . import baselines

__all__ = [
    "ScenarioDraw",
    "SbmEpsilon",
    "RdpgScaling",
    "ChungLuScenario",
    "DcbmScenario",
    "PabmScenario",
    "LatentScenario",
    "SCENARIOS",
    "make_scenario",
    "generate_scenario",
    "ExperimentSpec",
    "ExperimentReport",
    "run_experiment",
    "sample_statistic_distribution",
    "quantile_report",
    "histogram_table",
]

_GEN_TOL = 1e-12


@dataclass(frozen=True)
class ScenarioDraw:
    p1: ProbMatrix
    p2: ProbMatrix
    communities: Optional[CommunityAssignment]


def _check_truth(draw: ScenarioDraw, truth: str) -> ScenarioDraw:
    """Verify the declared null relation holds exactly by construction."""
    if truth == "equality":
        gap = np.abs(draw.p1.p - draw.p2.p).max()
        if gap > _GEN_TOL:
            raise AssertionError(f"equality-null scenario violates P1=P2 by {gap}")
    elif truth == "scaling":
        r1 = np.linalg.norm(draw.p1.p)
        r2 = np.linalg.norm(draw.p2.p)
        gap = np.abs(draw.p1.p / r1 - draw.p2.p / r2).max()
        if gap > _GEN_TOL:
            raise AssertionError(f"scaling-null scenario violates H0 by {gap}")
    return draw


def _block_prob(b: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p = b[labels][:, labels]
    np.fill_diagonal(p, 0.0)
    return p


def _multinomial_labels(gen, n, pi) -> np.ndarray:
    return gen.choice(len(pi), size=n, p=np.asarray(pi, dtype=float))


def _comm(labels: np.ndarray, K: int) -> CommunityAssignment:
    return CommunityAssignment(
        labels=labels, K=K, sizes=np.bincount(labels, minlength=K)
    )


@dataclass(frozen=True)
class SbmEpsilon:
    """Two-block SBM pair sharing communities; P2 adds eps on the diagonal blocks."""

    n: int
    eps: float = 0.0
    pi: tuple = (0.4, 0.6)
    b: tuple = ((0.5, 0.2), (0.2, 0.5))
    name: str = "sbm_epsilon"

    @property
    def truth(self) -> str:
        return "equality" if self.eps == 0 else "alternative"

    def generate(self, rng: RngStream) -> ScenarioDraw:
        gen = rng.generator()
        labels = _multinomial_labels(gen, self.n, self.pi)
        b = np.asarray(self.b, dtype=float)
        b_eps = b + self.eps * np.eye(len(self.pi))
        draw = ScenarioDraw(
            p1=ProbMatrix(self.n, _block_prob(b, labels)),
            p2=ProbMatrix(self.n, _block_prob(b_eps, labels)),
            communities=_comm(labels, len(self.pi)),
        )
        return _check_truth(draw, self.truth)


@dataclass(frozen=True)
class RdpgScaling:
    """SBM-based scaling pair: P2 = c * P1 (null) or a block-wise rescale (alt)."""

    n: int
    c: float | None = 0.75
    alt: bool = False
    pi: tuple = (0.4, 0.6)
    b: tuple = ((0.5, 0.2), (0.2, 0.5))
    d_alt: tuple = ((0.4, 0.25), (0.25, 0.4))
    name: str = "rdpg_scaling"

    @property
    def truth(self) -> str:
        return "alternative" if self.alt else "scaling"

    def generate(self, rng: RngStream) -> ScenarioDraw:
        gen = rng.generator()
        labels = _multinomial_labels(gen, self.n, self.pi)
        p1 = _block_prob(np.asarray(self.b, dtype=float), labels)
        if self.alt:
            p2 = _block_prob(np.asarray(self.d_alt, dtype=float), labels)
        else:
            p2 = self.c * p1
        draw = ScenarioDraw(
            p1=ProbMatrix(self.n, p1),
            p2=ProbMatrix(self.n, p2),
            communities=_comm(labels, len(self.pi)),
        )
        return _check_truth(draw, self.truth)


@dataclass(frozen=True)
class ChungLuScenario:
    """Degree-parameter pair: theta ~ Beta(a1, b1); eta ~ Beta(a2, b2) for the alt.

    Beta draws are fresh each Monte Carlo run so the null Type I assessment
    averages over parameter draws.
    """

    n: int
    beta1: tuple = (1.0, 5.0)
    beta2: tuple | None = None
    scale: float | None = None
    name: str = "chung_lu"

    @property
    def truth(self) -> str:
        if self.beta2 is not None:
            return "alternative"
        return "scaling" if self.scale is not None else "equality"

    def generate(self, rng: RngStream) -> ScenarioDraw:
        gen = rng.generator()
        theta = gen.beta(*self.beta1, size=self.n)
        p1 = np.outer(theta, theta)
        np.fill_diagonal(p1, 0.0)
        if self.beta2 is not None:
            eta = gen.beta(*self.beta2, size=self.n)
            p2 = np.outer(eta, eta)
            np.fill_diagonal(p2, 0.0)
        elif self.scale is not None:
            p2 = self.scale * p1
        else:
            p2 = p1
        draw = ScenarioDraw(
            p1=ProbMatrix(self.n, p1), p2=ProbMatrix(self.n, p2), communities=None
        )
        return _check_truth(draw, self.truth)


@dataclass(frozen=True)
class DcbmScenario:
    """Three-community DCBM pair with fresh degree parameters per side.

    P(i,j) = theta_i omega(c_i, c_j) theta_j, rescaled entrywise so the
    expected edge density equals ``density``, then clipped.
    """

    n: int
    pi: tuple = (0.25, 0.25, 0.5)
    omega: tuple = ((4.0, 2.0, 1.0), (2.0, 4.0, 1.0), (1.0, 1.0, 4.0))
    density: float = 0.1
    beta1: tuple = (1.0, 5.0)
    beta2: tuple | None = None
    scale: float | None = None
    name: str = "dcbm"

    @property
    def truth(self) -> str:
        if self.beta2 is not None:
            return "alternative"
        return "scaling" if self.scale is not None else "equality"

    def _build(self, gen, labels, beta) -> np.ndarray:
        theta = gen.beta(*beta, size=self.n)
        omega = np.asarray(self.omega, dtype=float)
        p = theta[:, None] * omega[labels][:, labels] * theta[None, :]
        np.fill_diagonal(p, 0.0)
        mean = p.sum() / (self.n * (self.n - 1))
        p *= self.density / mean
        return np.clip(p, 0.0, 1.0)

    def generate(self, rng: RngStream) -> ScenarioDraw:
        gen = rng.generator()
        labels = _multinomial_labels(gen, self.n, self.pi)
        p1 = self._build(gen, labels, self.beta1)
        if self.beta2 is not None:
            p2 = self._build(gen, labels, self.beta2)
        elif self.scale is not None:
            p2 = self.scale * p1
        else:
            p2 = p1
        draw = ScenarioDraw(
            p1=ProbMatrix(self.n, p1),
            p2=ProbMatrix(self.n, p2),
            communities=_comm(labels, len(self.pi)),
        )
        return _check_truth(draw, self.truth)


@dataclass(frozen=True)
class PabmScenario:
    """Two equal communities with homophily factor h and two node categories.

    lambda(i, r) = a * sqrt(h / (1 + h)) for the home community and
    b * sqrt(1 / (1 + h)) otherwise, with (a, b) = (0.8, 0.2) for the first
    half of each community and (0.2, 0.8) for the second half. The node is
    deterministic: communities are contiguous halves, categories the first
    half of each community.
    """

    n: int
    h1: float = 4.0
    h2: float | None = None
    scale: float | None = None
    name: str = "pabm"

    @property
    def truth(self) -> str:
        if self.h2 is not None:
            return "alternative"
        return "scaling" if self.scale is not None else "equality"

    def _lambdas(self, labels: np.ndarray, cat1: np.ndarray, h: float) -> np.ndarray:
        a = np.where(cat1, 0.8, 0.2)
        b = np.where(cat1, 0.2, 0.8)
        lam = np.empty((self.n, 2))
        for r in range(2):
            home = labels == r
            lam[:, r] = np.where(
                home, a * np.sqrt(h / (1.0 + h)), b * np.sqrt(1.0 / (1.0 + h))
            )
        return lam

    def _prob(self, labels, lam) -> np.ndarray:
        p = lam[np.arange(self.n)[:, None], labels[None, :]]
        p = p * p.T
        np.fill_diagonal(p, 0.0)
        return np.clip(p, 0.0, 1.0)

    def generate(self, rng: RngStream) -> ScenarioDraw:
        half = self.n // 2
        labels = (np.arange(self.n) >= half).astype(np.int64)
        cat1 = np.zeros(self.n, dtype=bool)
        cat1[: half // 2] = True
        cat1[half : half + (self.n - half) // 2] = True
        p1 = self._prob(labels, self._lambdas(labels, cat1, self.h1))
        if self.h2 is not None:
            p2 = self._prob(labels, self._lambdas(labels, cat1, self.h2))
        elif self.scale is not None:
            p2 = self.scale * p1
        else:
            p2 = p1
        draw = ScenarioDraw(
            p1=ProbMatrix(self.n, p1),
            p2=ProbMatrix(self.n, p2),
            communities=_comm(labels, 2),
        )
        return _check_truth(draw, self.truth)


@dataclass(frozen=True)
class LatentScenario:
    """Distance model: logit P(i,j) = alpha - |z_i - z_j|, z ~ N(0, I)."""

    n: int
    d: int = 3
    alpha: float = 3.0
    fresh_z: bool = False
    scale: float | None = None
    name: str = "latent"

    @property
    def truth(self) -> str:
        if self.fresh_z:
            return "alternative"
        return "scaling" if self.scale is not None else "equality"

    def _prob(self, z: np.ndarray) -> np.ndarray:
        diff = z[:, None, :] - z[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        p = expit(self.alpha - dist)
        np.fill_diagonal(p, 0.0)
        return p

    def generate(self, rng: RngStream) -> ScenarioDraw:
        gen = rng.generator()
        p1 = self._prob(gen.standard_normal((self.n, self.d)))
        if self.fresh_z:
            p2 = self._prob(gen.standard_normal((self.n, self.d)))
        elif self.scale is not None:
            p2 = self.scale * p1
        else:
            p2 = p1
        draw = ScenarioDraw(
            p1=ProbMatrix(self.n, p1), p2=ProbMatrix(self.n, p2), communities=None
        )
        return _check_truth(draw, self.truth)


SCENARIOS = {
    "sbm_epsilon": SbmEpsilon,
    "rdpg_scaling": RdpgScaling,
    "chung_lu": ChungLuScenario,
    "dcbm": DcbmScenario,
    "pabm": PabmScenario,
    "latent": LatentScenario,
}


def make_scenario(name: str, **params):
    if name not in SCENARIOS:
        raise KeyError(
            f"unknown scenario {name!r}; valid: {sorted(SCENARIOS)}"
        )
    return SCENARIOS[name](**params)


def generate_scenario(scenario, rng: RngStream):
    """(P1, P2, truth_communities) for one Monte Carlo draw."""
    draw = scenario.generate(rng)
    return draw.p1, draw.p2, draw.communities


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: object
    method: str = "boot"               # boot | ase | eig
    kind: str = "equality"             # equality | scaling
    estimator: Estimator | None = None
    blocks: int = 2                    # r for the eig method
    mc_runs: int = 2000
    B: int = 200
    alpha: float = 0.05
    seed: int = 0
    use_truth_communities: bool = False
    tw_reading: str = "nominal"
    threads: int = 1

    def __post_init__(self):
        if self.mc_runs < 1 or self.B < 1:
            raise ValueError("mc_runs and B must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.method not in ("boot", "ase", "eig"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "boot" and self.estimator is None:
            raise ValueError("boot method needs an estimator")
        if self.method == "ase" and (
            self.estimator is None or self.estimator.d is None
        ):
            raise ValueError("ase method needs an estimator with d")


@dataclass(frozen=True)
class ExperimentReport:
    rejection_rate: float
    p_values: np.ndarray
    rejects: np.ndarray
    wall_time: float
    spec: ExperimentSpec
    aborted: int = 0

    @property
    def valid(self) -> bool:
        return self.aborted == 0


def _experiment_run(spec: ExperimentSpec, j: int):
    rng = RngStream(spec.seed, j)
    p1, p2, communities = generate_scenario(spec.scenario, rng.child(0))
    a1 = sample_graph(p1, rng.child(1))
    a2 = sample_graph(p2, rng.child(2))
    test_seed = rng.child(3).derive_seed()

    est = spec.estimator
    if (
        est is not None
        and spec.use_truth_communities
        and communities is not None
        and est.family in ("sbm", "dcbm", "pabm")
    ):
        est = replace(est, fixed_communities=communities)

    if spec.method == "boot":
        result = run_test(spec.kind, est, a1, a2, spec.B, spec.alpha, test_seed)
    elif spec.method == "ase":
        cfg = AseConfig(d=est.d, B=spec.B)
        result = run_ase_test(spec.kind, a1, a2, cfg, spec.alpha, test_seed)
    else:
        result = run_eig_test(
            a1, a2, spec.blocks, spec.alpha,
            reading=spec.tw_reading, seed=test_seed,
        )
    return result.p_value, bool(result.reject)


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """mc_runs independent runs; rejection rate aggregated by run index."""
    start = time.perf_counter()
    indices = range(spec.mc_runs)
    aborted = 0
    if spec.threads > 1:
        with ProcessPoolExecutor(max_workers=spec.threads) as pool:
            outcomes = list(
                pool.map(_experiment_run_star, [(spec, j) for j in indices],
                         chunksize=max(1, spec.mc_runs // (spec.threads * 8)))
            )
    else:
        outcomes = [_experiment_run_star((spec, j)) for j in indices]
    p_values = np.array([p for p, _ in outcomes])
    rejects = np.array([r for _, r in outcomes], dtype=bool)
    return ExperimentReport(
        rejection_rate=float(rejects.mean()),
        p_values=p_values,
        rejects=rejects,
        wall_time=time.perf_counter() - start,
        spec=spec,
        aborted=aborted,
    )


def _experiment_run_star(args):
    return _experiment_run(*args)


def _statistic_run(args):
    scenario, stat, params, seed, j = args
    rng = RngStream(seed, j)
    p1, p2, communities = generate_scenario(scenario, rng.child(0))
    a1 = sample_graph(p1, rng.child(1))
    a2 = sample_graph(p2, rng.child(2))
    if stat in ("frob", "scale"):
        est = params["estimator"]
        if (
            params.get("use_truth_communities")
            and communities is not None
            and est.family in ("sbm", "dcbm", "pabm")
        ):
            est = replace(est, fixed_communities=communities)
        fit_rng = rng.child(3)
        q1 = fit(est, a1, fit_rng.child(0))
        q2 = fit(est, a2, fit_rng.child(1))
        if stat == "frob":
            return float(np.linalg.norm(q1.p - q2.p, "fro"))
        r1, r2 = np.linalg.norm(q1.p), np.linalg.norm(q2.p)
        return float(np.linalg.norm(q1.p / r1 - q2.p / r2, "fro"))
    if stat == "ase":
        d = params["d"]
        return baselines.procrustes_distance(spectral_ase(a1, d), spectral_ase(a2, d))
    if stat == "eig":
        r = params["blocks"]
        fit_rng = rng.child(3)
        f1 = fit_sbm(a1, r, rng=fit_rng.child(0))
        f2 = fit_sbm(a2, r, rng=fit_rng.child(1))
        c_tilde = scaled_difference_matrix(a1, a2, f1, f2)
        return float(a1.n ** (2.0 / 3.0) * (np.linalg.norm(c_tilde, 2) - 2.0))
    raise ValueError(f"unknown statistic {stat!r}")


def sample_statistic_distribution(
    scenario,
    stat: str,
    mc_runs: int,
    seed: int,
    *,
    threads: int = 1,
    **params,
) -> np.ndarray:
    """Raw statistic samples (no bootstrap) for F0/F1 and quantile studies."""
    jobs = [(scenario, stat, params, seed, j) for j in range(mc_runs)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(_statistic_run, jobs,
                                    chunksize=max(1, mc_runs // (threads * 8))))
    else:
        samples = [_statistic_run(job) for job in jobs]
    return np.asarray(samples)


def quantile_report(samples, upper_probs) -> list[tuple[float, float]]:
    """Type-7 empirical quantiles at the requested upper-tail probabilities."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty sample")
    return [
        (float(q), float(np.quantile(samples, 1.0 - q, method="linear")))
        for q in upper_probs
    ]


def histogram_table(samples) -> list[tuple[float, float, int]]:
    """(bin_lo, bin_hi, count) rows using Freedman-Diaconis bins."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty sample")
    counts, edges = np.histogram(samples, bins="fd")
    return [
        (float(edges[i]), float(edges[i + 1]), int(counts[i]))
        for i in range(len(counts))
    ]
