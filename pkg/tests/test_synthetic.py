import math

import numpy as np
import pytest

from conformalqa import (
    DataError,
    cluster_answers,
    compute_centroids,
    count_test_clusters,
    estimate_transition,
    generate_dataset,
    invert_counts,
    run_trials,
)
from conformalqa.clustering import answerability
from conformalqa.synthetic import ScenarioConfig, SyntheticDomainSpec


def spec(domain="d0", dim=2, spread=0.2, rate=1.0, difficulty=0.5, m=12, axis=0):
    mean = [0.0] * dim
    mean[axis] = 1.0
    return SyntheticDomainSpec(domain=domain, centroid_mean=tuple(mean),
                               spread=spread, answerable_rate=rate,
                               difficulty=difficulty, samples=m)


class TestGenerateDataset:
    def test_easy_limit_single_cluster(self):
        ds = generate_dataset((spec(rate=1.0, difficulty=0.0),), {"d0": 40}, seed=1)
        for rec in ds.records:
            clustered = cluster_answers(rec.samples, 0.7)
            assert len(clustered.clusters) == 1
            assert clustered.clusters[0].freq == ds.m
            assert clustered.ne == 0.0
            label = answerability(clustered, rec.samples, rec.ground_truths)
            assert label.answerable

    def test_zero_rate_all_unanswerable(self):
        ds = generate_dataset((spec(rate=0.0),), {"d0": 40}, seed=2)
        for rec in ds.records:
            clustered = cluster_answers(rec.samples, 0.7)
            label = answerability(clustered, rec.samples, rec.ground_truths)
            assert not label.answerable

    def test_clustering_recovers_intended_sizes(self):
        # tokens are unique per intended cluster, so greedy clustering must
        # reproduce the generated composition exactly
        ds = generate_dataset((spec(rate=0.6, difficulty=0.8),), {"d0": 60}, seed=3)
        for rec in ds.records:
            clustered = cluster_answers(rec.samples, 0.7)
            intended = sorted(set(rec.samples))
            assert len(clustered.clusters) == len(intended)
            sizes = sorted(c.freq for c in clustered.clusters)
            counts = sorted(rec.samples.count(tok) for tok in intended)
            assert sizes == counts

    def test_deterministic(self):
        a = generate_dataset((spec(),), {"d0": 25}, seed=(9, 1))
        b = generate_dataset((spec(),), {"d0": 25}, seed=(9, 1))
        assert a == b

    def test_exact_mix_counts(self):
        specs = (spec("a", axis=0), spec("b", axis=1))
        ds = generate_dataset(specs, {"a": 30, "b": 12}, seed=4)
        counts = {d: 0 for d in ("a", "b")}
        for rec in ds.records:
            counts[rec.domain] += 1
        assert counts == {"a": 30, "b": 12}

    def test_orthogonal_centroids_identity_transition(self):
        specs = (spec("a", dim=4, axis=0, spread=0.01),
                 spec("b", dim=4, axis=1, spread=0.01))
        cluster_ds = generate_dataset(specs, {"a": 100, "b": 100}, seed=5,
                                      role="cluster-split")
        cal_ds = generate_dataset(specs, {"a": 100, "b": 100}, seed=6,
                                  role="calibration")
        cents = compute_centroids(cluster_ds)
        tm = estimate_transition(cal_ds, cents)
        assert tm.p == pytest.approx(np.eye(2), abs=1e-9)
        test_ds = generate_dataset(specs, {"a": 70, "b": 30}, seed=7)
        est = invert_counts(tm, count_test_clusters(test_ds, cents))
        assert est.estimated == pytest.approx((70.0, 30.0))

    def test_unknown_domain_in_mix_rejected(self):
        with pytest.raises(DataError):
            generate_dataset((spec("a"),), {"zzz": 5}, seed=0)


class TestRunTrials:
    def scenario(self, **kwargs):
        base = dict(
            domains=(spec(rate=0.8, difficulty=0.6, m=10),),
            calibration_mix={"d0": 120},
            test_mix={"d0": 120},
            alphas=(0.2,),
            trials=3,
            seed=17,
            modes=("bad", "ar"),
            balances=("none",),
        )
        base.update(kwargs)
        return ScenarioConfig(**base)

    def test_deterministic_stats(self):
        sc = self.scenario()
        assert run_trials(sc) == run_trials(sc)

    def test_row_per_combination(self):
        sc = self.scenario(alphas=(0.1, 0.2), modes=("bad", "basic"),
                           balances=("none", "reweight"))
        stats = run_trials(sc)
        assert len(stats.rows) == 8
        keys = {(r.alpha, r.mode, r.balance) for r in stats.rows}
        assert len(keys) == 8

    def test_multi_domain_reports_delta(self):
        sc = self.scenario(
            domains=(spec("a", dim=3, axis=0, spread=0.05, m=6),
                     spec("b", dim=3, axis=1, spread=0.05, m=6)),
            calibration_mix={"a": 60, "b": 60},
            test_mix={"a": 90, "b": 30},
            balances=("none", "resample", "reweight"),
            modes=("bad",),
        )
        stats = run_trials(sc)
        for row in stats.rows:
            assert row.mean_delta is not None
            assert row.mean_delta < 0.2

    def test_standard_error_nonnegative(self):
        stats = run_trials(self.scenario(trials=4))
        for row in stats.rows:
            assert row.coverage_se >= 0.0

    def test_resample_plan_shares_converge(self):
        # resampled calibration shares approach the estimated test shares
        from conformalqa.domains import build_balance_plan
        specs = (spec("a", dim=3, axis=0, spread=0.05, m=6),
                 spec("b", dim=3, axis=1, spread=0.05, m=6))
        cluster_ds = generate_dataset(specs, {"a": 150, "b": 150}, seed=31,
                                      role="cluster-split")
        cal_ds = generate_dataset(specs, {"a": 150, "b": 150}, seed=32,
                                  role="calibration")
        test_ds = generate_dataset(specs, {"a": 240, "b": 60}, seed=33)
        cents = compute_centroids(cluster_ds)
        tm = estimate_transition(cal_ds, cents)
        est = invert_counts(tm, count_test_clusters(test_ds, cents))
        target = 20000
        plan = build_balance_plan(est, cal_ds, "resample", target_size=target,
                                  seed=34)
        ids_a = {r.id for r in cal_ds.records if r.domain == "a"}
        share = est.estimated[0] / est.estimated.sum()
        drawn = sum(1 for rid in plan.resample_ids if rid in ids_a)
        sigma = math.sqrt(target * share * (1 - share))
        assert abs(drawn - target * share) <= 3 * sigma
