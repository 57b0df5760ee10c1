"""Acceptance gate: desk-scale Monte Carlo reproduction targets.

Each criterion runs a reduced-size experiment with pinned seeds and asserts a
rejection-rate band (or margin) wide enough for Monte Carlo noise at the
stated run counts. One summary line per criterion is printed at the end of
the pytest run. Expect a long wall time: everything here is bootstrap-heavy
and runs serially.
"""

import time

import numpy as np
import pytest
from scipy.stats import kstest, rankdata

from pairnet.boottest import run_test, t_scale
from pairnet.harness import (
    ChungLuScenario,
    ExperimentSpec,
    LatentScenario,
    PabmScenario,
    RdpgScaling,
    SbmEpsilon,
    quantile_report,
    run_experiment,
    sample_statistic_distribution,
)
from pairnet.models import Estimator, fit, _latent_loglik_grad
from pairnet.netcore import ProbMatrix, RngStream
from pairnet.baselines import procrustes_distance
from pairnet.spectral import LatentEmbedding

import conftest
from conftest import random_graph, random_prob_matrix


def record(criterion: str, ok: bool, detail: str):
    line = f"[{criterion}] {'PASS' if ok else 'FAIL'} {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def boot_experiment(scenario, kind, estimator, mc_runs, B, seed, **kw):
    spec = ExperimentSpec(
        scenario=scenario, method="boot", kind=kind, estimator=estimator,
        mc_runs=mc_runs, B=B, seed=seed, **kw,
    )
    start = time.perf_counter()
    report = run_experiment(spec)
    return report, time.perf_counter() - start


def auc(null_samples, alt_samples) -> float:
    """Probability that an alternative draw exceeds a null draw (ties split)."""
    combined = np.concatenate([null_samples, alt_samples])
    ranks = rankdata(combined)
    n0, n1 = len(null_samples), len(alt_samples)
    return (ranks[n0:].sum() - n1 * (n1 + 1) / 2) / (n0 * n1)


@pytest.fixture(scope="module")
def chung_lu_null_report():
    report, wall = boot_experiment(
        ChungLuScenario(n=100), "equality", Estimator("chung_lu"), 500, 200, 1005
    )
    return report, wall


def test_criterion_01_equality_type_one_error_rdpg():
    report, wall = boot_experiment(
        SbmEpsilon(n=100, eps=0.0), "equality", Estimator("rdpg", d=2),
        500, 200, 1001,
    )
    rate = report.rejection_rate
    record(
        "criterion 01", 0.045 <= rate <= 0.115,
        f"rdpg equality null rate={rate:.3f} band=[0.045,0.115] wall={wall:.0f}s",
    )


def test_criterion_02_equality_power_rdpg():
    report, wall = boot_experiment(
        SbmEpsilon(n=100, eps=0.1), "equality", Estimator("rdpg", d=2),
        200, 200, 1002,
    )
    rate = report.rejection_rate
    record(
        "criterion 02", rate >= 0.82,
        f"rdpg equality power rate={rate:.3f} floor=0.82 wall={wall:.0f}s",
    )


def test_criterion_03a_embedding_baseline_null_rate():
    spec = ExperimentSpec(
        scenario=SbmEpsilon(n=100, eps=0.0), method="ase", kind="equality",
        estimator=Estimator("rdpg", d=2), mc_runs=500, B=200, seed=1003,
    )
    start = time.perf_counter()
    report = run_experiment(spec)
    wall = time.perf_counter() - start
    rate = report.rejection_rate
    record(
        "criterion 03a", 0.10 <= rate <= 0.20,
        f"embedding-test null rate={rate:.3f} band=[0.10,0.20] wall={wall:.0f}s",
    )


def test_criterion_03b_spectral_norm_baseline_null_rate():
    spec = ExperimentSpec(
        scenario=SbmEpsilon(n=100, eps=0.0), method="eig", blocks=2,
        mc_runs=500, seed=1004,
    )
    start = time.perf_counter()
    report = run_experiment(spec)
    wall = time.perf_counter() - start
    rate = report.rejection_rate
    record(
        "criterion 03b", rate <= 0.05,
        f"spectral-norm-test null rate={rate:.3f} cap=0.05 wall={wall:.0f}s",
    )


def test_criterion_04a_chung_lu_equality_null(chung_lu_null_report):
    report, wall = chung_lu_null_report
    rate = report.rejection_rate
    record(
        "criterion 04a", 0.01 <= rate <= 0.055,
        f"chung-lu equality null rate={rate:.3f} band=[0.01,0.055] wall={wall:.0f}s",
    )


def test_criterion_04b_chung_lu_equality_power():
    report, wall = boot_experiment(
        ChungLuScenario(n=100, beta2=(4.0, 3.0)), "equality",
        Estimator("chung_lu"), 200, 200, 1006,
    )
    rate = report.rejection_rate
    record(
        "criterion 04b", rate >= 0.99,
        f"chung-lu equality power rate={rate:.3f} floor=0.99 wall={wall:.0f}s",
    )


def test_criterion_05a_chung_lu_scaling_null():
    report, wall = boot_experiment(
        ChungLuScenario(n=100, scale=0.8), "scaling", Estimator("chung_lu"),
        500, 200, 1007,
    )
    rate = report.rejection_rate
    record(
        "criterion 05a", 0.05 <= rate <= 0.135,
        f"chung-lu scaling null rate={rate:.3f} band=[0.05,0.135] wall={wall:.0f}s",
    )


def test_criterion_05b_chung_lu_scaling_power():
    report, wall = boot_experiment(
        ChungLuScenario(n=100, beta2=(4.0, 3.0)), "scaling",
        Estimator("chung_lu"), 200, 200, 1008,
    )
    rate = report.rejection_rate
    record(
        "criterion 05b", rate >= 0.99,
        f"chung-lu scaling power rate={rate:.3f} floor=0.99 wall={wall:.0f}s",
    )


def test_criterion_06a_rdpg_scaling_null():
    report, wall = boot_experiment(
        RdpgScaling(n=100, c=0.75), "scaling", Estimator("rdpg", d=2),
        500, 200, 1009,
    )
    rate = report.rejection_rate
    record(
        "criterion 06a", 0.025 <= rate <= 0.09,
        f"rdpg scaling null rate={rate:.3f} band=[0.025,0.09] wall={wall:.0f}s",
    )


def test_criterion_06b_rdpg_scaling_power():
    report, wall = boot_experiment(
        RdpgScaling(n=100, alt=True), "scaling", Estimator("rdpg", d=2),
        200, 200, 1010,
    )
    rate = report.rejection_rate
    record(
        "criterion 06b", rate >= 0.80,
        f"rdpg scaling power rate={rate:.3f} floor=0.80 wall={wall:.0f}s",
    )


def test_criterion_07_spectral_norm_null_quantiles():
    start = time.perf_counter()
    samples = sample_statistic_distribution(
        SbmEpsilon(n=100, eps=0.0), "eig", 10_000, seed=1011, blocks=2
    )
    wall = time.perf_counter() - start
    [(_, q5), (_, q1)] = quantile_report(samples, [0.05, 0.01])
    ok = abs(q5 - 0.91) <= 0.10 and abs(q1 - 1.85) <= 0.20
    record(
        "criterion 07", ok,
        f"null quantiles q5={q5:.3f} (0.91 +/- 0.10) q1={q1:.3f} "
        f"(1.85 +/- 0.20) wall={wall:.0f}s",
    )


def test_criterion_08_statistic_separation():
    start = time.perf_counter()
    null_scen = SbmEpsilon(n=200, eps=0.0)
    alt_scen = SbmEpsilon(n=200, eps=0.1)
    aucs = {}
    for name, kw in (
        ("frob", dict(estimator=Estimator("rdpg", d=2))),
        ("eig", dict(blocks=2)),
        ("ase", dict(d=2)),
    ):
        f0 = sample_statistic_distribution(null_scen, name, 2000, seed=1112, **kw)
        f1 = sample_statistic_distribution(alt_scen, name, 2000, seed=1113, **kw)
        aucs[name] = auc(f0, f1)
    wall = time.perf_counter() - start
    ok = (
        aucs["frob"] >= aucs["eig"] + 0.05
        and aucs["frob"] >= aucs["ase"] + 0.05
    )
    record(
        "criterion 08", ok,
        "AUC frob={frob:.3f} eig={eig:.3f} ase={ase:.3f} "
        "margin>=0.05 wall={wall:.0f}s".format(wall=wall, **aucs),
    )


class TestCriterion09Properties:
    """Module invariants bundled into one criterion report."""

    results: list[bool] = []

    def test_estimator_outputs_valid_on_random_graphs(self):
        families = [
            Estimator("chung_lu"),
            Estimator("sbm", K=2),
            Estimator("dcbm", K=2),
            Estimator("rdpg", d=2),
            Estimator("pabm", K=2),
            Estimator("latent", d=2, max_iter=300),
        ]
        checked = 0
        gen = np.random.default_rng(0)
        while checked < 1000:
            est = families[checked % len(families)]
            n = int(gen.integers(12, 30))
            density = float(gen.uniform(0.25, 0.6))
            g = random_graph(n, density, 50_000 + checked)
            pm = fit(est, g, RngStream(60_000 + checked))
            assert np.array_equal(pm.p, pm.p.T)
            assert np.all(np.diag(pm.p) == 0)
            assert np.all((pm.p >= 0) & (pm.p <= 1))
            checked += 1
        self.results.append(True)

    def test_latent_gradient_matches_finite_differences(self):
        gen = np.random.default_rng(1)
        g = random_graph(12, 0.4, 2)
        adj = g.adj.astype(float)
        alpha = 0.3
        z = gen.standard_normal((12, 2))
        _, g_a, g_z = _latent_loglik_grad(adj, alpha, z)
        h = 1e-5

        def ll(a, zz):
            return _latent_loglik_grad(adj, a, zz)[0]

        fd_a = (ll(alpha + h, z) - ll(alpha - h, z)) / (2 * h)
        assert abs(g_a - fd_a) <= 1e-4 * max(1.0, abs(fd_a))
        for i, k in [(0, 0), (3, 1), (7, 0), (11, 1)]:
            zp, zm = z.copy(), z.copy()
            zp[i, k] += h
            zm[i, k] -= h
            fd = (ll(alpha, zp) - ll(alpha, zm)) / (2 * h)
            assert abs(g_z[i, k] - fd) <= 1e-4 * max(1.0, abs(fd))
        self.results.append(True)

    def test_procrustes_matches_orthogonal_grid(self):
        gen = np.random.default_rng(3)
        x1, x2 = gen.random((6, 2)), gen.random((6, 2))
        closed = procrustes_distance(
            LatentEmbedding(x1, 2), LatentEmbedding(x2, 2)
        )
        best = np.inf
        for theta in np.linspace(0, 2 * np.pi, 20_000, endpoint=False):
            c, s = np.cos(theta), np.sin(theta)
            rot = np.array([[c, -s], [s, c]])
            for w in (rot, rot @ np.diag([1.0, -1.0])):
                best = min(best, np.linalg.norm(x1 - x2 @ w))
        assert abs(closed - best) <= 1e-4
        self.results.append(True)

    def test_distance_quantile_and_pooling_oracles(self):
        a, b = random_prob_matrix(5, 4), random_prob_matrix(5, 5)
        from pairnet.netcore import frobenius_distance
        from pairnet.boottest import pooled_equality, pooled_scaling

        brute = np.sqrt(((a.p - b.p) ** 2).sum())
        assert frobenius_distance(a, b) == pytest.approx(brute, abs=1e-12)
        [(_, q)] = quantile_report(np.arange(1, 101, dtype=float), [0.05])
        assert q == pytest.approx(95.05)
        pooled = pooled_equality(a, b)
        assert np.allclose(pooled.p, 0.5 * (a.p + b.p))
        _, p1_null, p2_null = pooled_scaling(a, b)
        assert t_scale(p1_null, p2_null)[0] <= 1e-10
        self.results.append(True)

    def test_scale_statistic_vanishes_on_proportional_pair(self):
        for seed, c in [(6, 0.3), (7, 0.75), (8, 0.99)]:
            pm = random_prob_matrix(8, seed)
            scaled = ProbMatrix.from_dense(c * pm.p)
            assert t_scale(scaled, pm)[0] <= 1e-10
        self.results.append(True)

    def test_thread_count_bit_reproducibility(self):
        g1 = random_graph(60, 0.3, 9)
        g2 = random_graph(60, 0.4, 10)
        serial = run_test(
            "equality", Estimator("rdpg", d=2), g1, g2, 24, 0.05, 11
        )
        threaded = run_test(
            "equality", Estimator("rdpg", d=2), g1, g2, 24, 0.05, 11, threads=8
        )
        assert serial.statistic == threaded.statistic
        assert np.array_equal(serial.replicates, threaded.replicates)
        self.results.append(True)

    def test_zz_summary(self):
        ok = len(self.results) == 6 and all(self.results)
        record("criterion 09", ok, f"property suite {len(self.results)}/6 groups passed")


def test_criterion_10_latent_distance_desk_check():
    # documented fallback for the serial wall-time budget: B=100 with the
    # widened null band [0.005, 0.15]
    null_report, null_wall = boot_experiment(
        LatentScenario(n=30), "equality", Estimator("latent", d=3),
        100, 100, 1013,
    )
    power_report, power_wall = boot_experiment(
        LatentScenario(n=30, fresh_z=True), "equality", Estimator("latent", d=3),
        100, 100, 1014,
    )
    null_rate = null_report.rejection_rate
    power = power_report.rejection_rate
    ok = 0.005 <= null_rate <= 0.15 and power >= 0.95
    record(
        "criterion 10", ok,
        f"latent null rate={null_rate:.3f} band=[0.005,0.15] "
        f"power={power:.3f} floor=0.95 (B=100 fallback) "
        f"wall={null_wall + power_wall:.0f}s",
    )


def test_extra_pabm_fixed_community_null_band():
    report, wall = boot_experiment(
        PabmScenario(n=100), "equality", Estimator("pabm", K=2),
        200, 200, 1015, use_truth_communities=True,
    )
    rate = report.rejection_rate
    record(
        "extra pabm", 0.005 <= rate <= 0.13,
        f"pabm fixed-community null rate={rate:.3f} band=[0.005,0.13] "
        f"wall={wall:.0f}s",
    )


def test_extra_monotone_power_in_block_shift():
    rates = []
    wall = 0.0
    for i, eps in enumerate((0.0, 0.1, 0.2)):
        report, w = boot_experiment(
            SbmEpsilon(n=100, eps=eps), "equality", Estimator("sbm", K=2),
            200, 100, 1016 + i, use_truth_communities=True,
        )
        rates.append(report.rejection_rate)
        wall += w
    ok = all(
        rates[i + 1] >= rates[i] - 0.02 for i in range(2)
    )
    record(
        "extra monotone", ok,
        f"rates at block shifts (0, 0.1, 0.2) = {[f'{r:.3f}' for r in rates]} "
        f"wall={wall:.0f}s",
    )


def test_extra_null_p_values_near_uniform(chung_lu_null_report):
    report, _ = chung_lu_null_report
    ks = kstest(report.p_values, "uniform").statistic
    record(
        "extra calibration", ks <= 0.15,
        f"chung-lu null p-value KS distance={ks:.3f} cap=0.15",
    )
