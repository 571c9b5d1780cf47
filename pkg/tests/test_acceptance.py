"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines; the Monte Carlo criteria take a couple of minutes in total.
"""

import itertools
import time

import numpy as np
import pytest

from conformalqa import (
    CalibrationConfig,
    calibrate,
    cluster_answers,
    compute_centroids,
    conformal_quantile,
    count_test_clusters,
    estimate_transition,
    generate_dataset,
    invert_counts,
    normalized_entropy,
    run_trials,
    weighted_quantile,
)
from conformalqa.domains import TransitionMatrix
from conformalqa.evaluation import domain_count_error
from conformalqa.synthetic import ScenarioConfig, SyntheticDomainSpec

from test_clustering import oracle_ne, compositions


def report(criterion, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {criterion}] {detail} -> {status}")
    assert ok, f"criterion {criterion}: {detail}"


def one_domain_spec(rate, difficulty, m=20):
    return SyntheticDomainSpec(domain="d0", centroid_mean=(1.0, 0.0),
                               spread=0.2, answerable_rate=rate,
                               difficulty=difficulty, samples=m)


def test_criterion_1_exchangeable_coverage():
    t0 = time.time()
    scenario = ScenarioConfig(
        domains=(one_domain_spec(rate=1.0, difficulty=0.75),),
        calibration_mix={"d0": 1000}, test_mix={"d0": 1000},
        alphas=(0.1, 0.2), trials=50, seed=1101,
        modes=("bad",), balances=("none",))
    stats = run_trials(scenario)
    elapsed = time.time() - t0
    for row in stats.rows:
        target = 1.0 - row.alpha
        ok = abs(row.mean_coverage - target) <= 0.02
        report(1, ok, f"exchangeable coverage alpha={row.alpha}: "
                      f"{row.mean_coverage:.4f} (target {target:.2f} +/- 0.02, "
                      f"se {row.coverage_se:.4f})")
    report(1, elapsed < 60.0, f"runtime {elapsed:.1f}s (target < 60s)")


@pytest.fixture(scope="module")
def shift_domains():
    return (
        SyntheticDomainSpec(domain="easy", centroid_mean=(1.0, 0.0, 0.0, 0.0),
                            spread=0.15, answerable_rate=1.0, difficulty=0.25,
                            samples=20),
        SyntheticDomainSpec(domain="hard", centroid_mean=(0.0, 1.0, 0.0, 0.0),
                            spread=0.15, answerable_rate=1.0, difficulty=0.9,
                            samples=20),
    )


def test_criterion_2_shift_direction_and_balancing(shift_domains):
    alpha = 0.1
    results = {}
    for name, test_mix in (("easy-dominated", {"easy": 750, "hard": 250}),
                           ("hard-dominated", {"easy": 250, "hard": 750})):
        scenario = ScenarioConfig(
            domains=shift_domains,
            calibration_mix={"easy": 500, "hard": 500},
            cluster_mix={"easy": 500, "hard": 500},
            test_mix=test_mix, alphas=(alpha,), trials=50, seed=1202,
            modes=("bad",), balances=("none", "resample", "reweight"))
        stats = run_trials(scenario)
        results[name] = {row.balance: row.mean_coverage for row in stats.rows}

    easy_none = results["easy-dominated"]["none"]
    report(2, easy_none >= 0.9 + 0.03,
           f"easy-dominated unbalanced overcovers: {easy_none:.4f} >= 0.93")
    hard_none = results["hard-dominated"]["none"]
    report(2, hard_none <= 0.9 - 0.03,
           f"hard-dominated unbalanced undercovers: {hard_none:.4f} <= 0.87")
    for name, balance in itertools.product(results, ("resample", "reweight")):
        cov = results[name][balance]
        report(2, abs(cov - 0.9) <= 0.02,
               f"{name} with {balance}: {cov:.4f} (target 0.90 +/- 0.02)")


def five_domain_specs(spread):
    eye = np.eye(8)
    return tuple(SyntheticDomainSpec(
        domain=f"d{k}", centroid_mean=tuple(eye[k]), spread=spread,
        answerable_rate=1.0, difficulty=0.0, samples=2) for k in range(5))


def run_count_estimation(spread, trials, seed):
    specs = five_domain_specs(spread)
    buffer_mix = {f"d{k}": 1000 for k in range(5)}
    test_mix = {"d0": 1500, "d1": 1250, "d2": 1000, "d3": 750, "d4": 500}
    per_domain = {f"d{k}": [] for k in range(5)}
    accuracy = []
    for t in range(trials):
        cluster_ds = generate_dataset(specs, buffer_mix, seed=(seed, t, 0),
                                      role="cluster-split")
        cal_ds = generate_dataset(specs, buffer_mix, seed=(seed, t, 1),
                                  role="calibration")
        test_ds = generate_dataset(specs, test_mix, seed=(seed, t, 2))
        centroids = compute_centroids(cluster_ds)
        transition = estimate_transition(cal_ds, centroids)
        accuracy.append(float(np.trace(transition.p)) / 5.0)
        estimate = invert_counts(transition, count_test_clusters(test_ds, centroids))
        true_counts = {d: 0.0 for d in estimate.domains}
        for rec in test_ds.records:
            true_counts[rec.domain] += 1.0
        for d, err in domain_count_error(true_counts, estimate).per_domain.items():
            per_domain[d].append(err)
    return ({d: float(np.mean(v)) for d, v in per_domain.items()},
            float(np.mean(accuracy)))


def test_criterion_3_domain_count_estimation():
    deltas, accuracy = run_count_estimation(spread=0.4, trials=20, seed=1303)
    report(3, 0.8 <= accuracy <= 0.97,
           f"assignment accuracy near 90%: {accuracy:.3f}")
    for d, err in deltas.items():
        report(3, err <= 0.10,
               f"mean relative count error {d}: {err:.4f} <= 0.10")
    tight, _ = run_count_estimation(spread=0.01, trials=20, seed=1304)
    worst = max(tight.values())
    report(3, worst <= 0.02,
           f"near-perfect separability worst-domain error: {worst:.4f} <= 0.02")


@pytest.fixture(scope="module")
def rejection_scenario_stats():
    scenario = ScenarioConfig(
        domains=(one_domain_spec(rate=0.7, difficulty=0.35),),
        calibration_mix={"d0": 1000}, test_mix={"d0": 1000},
        alphas=(0.1,), trials=50, seed=1405,
        modes=("basic", "ar"), balances=("none",))
    stats = run_trials(scenario)
    return {row.mode: row for row in stats.rows}


def test_criterion_4_grid_search_dominance(rejection_scenario_stats):
    # exact dominance on the calibration set, per run
    rng = np.random.default_rng(1406)
    spec = one_domain_spec(rate=0.7, difficulty=0.35)
    for t in range(10):
        cal = generate_dataset((spec,), {"d0": 500}, seed=(1407, t),
                               role="calibration")
        art = calibrate(cal, CalibrationConfig(alpha=0.1, mode="ar"))
        assert art.grid["mean_size"] <= art.grid["baseline_mean_size"]
    report(4, True, "calibration-set mean size <= no-rejection baseline "
                    "on 10 independent runs (exact)")

    basic = rejection_scenario_stats["basic"]
    ar = rejection_scenario_stats["ar"]
    ok = ar.mean_efficiency <= basic.mean_efficiency + 0.1
    report(4, ok, f"held-out efficiency: ar {ar.mean_efficiency:.4f} <= "
                  f"basic {basic.mean_efficiency:.4f} + 0.1")


def test_criterion_5_ar_coverage_retention(rejection_scenario_stats):
    ar = rejection_scenario_stats["ar"]
    ok = abs(ar.mean_coverage - 0.9) <= 0.03
    report(5, ok, f"ar coverage at alpha=0.1: {ar.mean_coverage:.4f} "
                  f"(target 0.90 +/- 0.03, se {ar.coverage_se:.4f})")


def test_criterion_6_weighted_quantile_reduction():
    rng = np.random.default_rng(1606)
    checked = 0
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        scores = rng.random(n)
        alpha = float(rng.uniform(0.01, 0.99))
        a = conformal_quantile(scores, alpha)
        b = weighted_quantile(scores, np.ones(n), alpha)
        assert a == b  # bitwise: same selected order statistic
        checked += 1
    report(6, checked == 1000,
           f"uniform-weight reduction exact on {checked} random score lists")


def test_criterion_7_inversion_exactness():
    identity = TransitionMatrix(domains=("a", "b", "c"), p=np.eye(3))
    observed = np.array([410.0, 590.0, 137.0])
    est = invert_counts(identity, observed)
    report(7, est.estimated.tolist() == observed.tolist(),
           "identity transition returns observed counts exactly")

    rng = np.random.default_rng(1707)
    worst_recovery = 0.0
    worst_sum = 0.0
    fallback_sums_ok = True
    for _ in range(300):
        k = int(rng.integers(2, 7))
        p = rng.uniform(0.0, 0.15, size=(k, k))
        np.fill_diagonal(p, rng.uniform(1.0, 2.0, size=k))
        p /= p.sum(axis=1, keepdims=True)
        tm = TransitionMatrix(domains=tuple(f"d{i}" for i in range(k)), p=p)
        n_true = rng.integers(1, 5000, size=k).astype(float)
        forward = p.T @ n_true
        est = invert_counts(tm, forward)
        worst_recovery = max(worst_recovery,
                             float(np.max(np.abs(est.estimated - n_true))))
        worst_sum = max(worst_sum,
                        abs(float(est.estimated.sum() - forward.sum())))
    report(7, worst_recovery <= 1e-6,
           f"forward-map/invert recovery worst error {worst_recovery:.2e} <= 1e-6")

    # fallback paths preserve the observed total
    for p, obs in ((np.array([[0.5, 0.5], [0.5, 0.5]]), [400.0, 600.0]),
                   (np.array([[0.6, 0.4], [0.4, 0.6]]), [950.0, 50.0])):
        tm = TransitionMatrix(domains=("a", "b"), p=p)
        est = invert_counts(tm, obs)
        if not est.fallback_used or \
                abs(float(est.estimated.sum()) - sum(obs)) > 1e-6:
            fallback_sums_ok = False
    report(7, worst_sum <= 1e-6 and fallback_sums_ok,
           "sum preservation <= 1e-6 on solve and fallback paths")


def test_criterion_8_ne_oracle_equivalence():
    worst = 0.0
    count = 0
    for m in range(1, 13):
        for k in range(1, min(m, 5) + 1):
            for comp in compositions(m, k):
                samples = [f"t{c}" for c, size in enumerate(comp)
                           for _ in range(size)]
                clustered = cluster_answers(samples, 0.7)
                got = normalized_entropy(clustered)
                expected = oracle_ne(list(comp))
                worst = max(worst, abs(got - expected))
                assert 0.0 <= got <= 1.0
                count += 1
    report(8, worst <= 1e-12,
           f"normalized entropy matches the oracle on {count} compositions "
           f"(worst |diff| {worst:.2e} <= 1e-12)")
