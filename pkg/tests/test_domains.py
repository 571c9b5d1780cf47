import math

import numpy as np
import pytest

from conformalqa import (
    DataError,
    NumericalError,
    assign_domain,
    build_balance_plan,
    compute_centroids,
    conformal_quantile,
    count_test_clusters,
    domain_balance_weights,
    estimate_transition,
    invert_counts,
    weighted_quantile,
)
from conformalqa.domains import DomainCentroid, DomainCountEstimate, TransitionMatrix
from conformalqa.records import Dataset, QuestionRecord


def embedded_dataset(rows, role="calibration"):
    """rows: list of (id, embedding, domain)."""
    records = tuple(
        QuestionRecord(id=rid, question="q", ground_truths=("t",),
                       samples=("a", "b"), embedding=tuple(emb), domain=dom)
        for rid, emb, dom in rows)
    return Dataset(records=records, m=2, dim=len(rows[0][1]), role=role)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


class TestCentroids:
    def test_mean_then_normalize(self):
        ds = embedded_dataset([("a", (1.0, 0.0), "d0"), ("b", (0.0, 1.0), "d0")],
                              role="cluster-split")
        (c,) = compute_centroids(ds)
        assert c.vector == pytest.approx(unit((0.5, 0.5)))

    def test_single_record(self):
        ds = embedded_dataset([("a", (3.0, 4.0), "d0")], role="cluster-split")
        (c,) = compute_centroids(ds)
        assert c.vector == pytest.approx((0.6, 0.8))

    def test_opposite_vectors_zero_mean(self):
        ds = embedded_dataset([("a", (1.0, 0.0), "d0"), ("b", (-1.0, 0.0), "d0")],
                              role="cluster-split")
        with pytest.raises(NumericalError, match="zero-norm"):
            compute_centroids(ds)

    def test_unit_norm_invariant(self):
        rng = np.random.default_rng(0)
        rows = [(f"r{i}", rng.normal(size=5), f"d{i % 3}") for i in range(30)]
        for c in compute_centroids(embedded_dataset(rows, role="cluster-split")):
            assert np.linalg.norm(c.vector) == pytest.approx(1.0, abs=1e-9)

    def test_missing_embedding_rejected(self):
        records = (QuestionRecord(id="a", question="q", ground_truths=("t",),
                                  samples=("a", "b"), domain="d0"),)
        ds = Dataset(records=records, m=2, dim=None, role="cluster-split")
        with pytest.raises(DataError, match="embedding"):
            compute_centroids(ds)


class TestAssignDomain:
    def setup_method(self):
        self.centroids = [DomainCentroid("d0", np.array([1.0, 0.0])),
                          DomainCentroid("d1", np.array([0.0, 1.0]))]

    def test_dominant_axis(self):
        assert assign_domain((0.9, 0.1), self.centroids) == "d0"

    def test_tie_breaks_to_first_listed(self):
        assert assign_domain((0.5, 0.5), self.centroids) == "d0"

    def test_zero_embedding_rejected(self):
        with pytest.raises(NumericalError):
            assign_domain((0.0, 0.0), self.centroids)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            h = rng.normal(size=2)
            if np.linalg.norm(h) == 0:
                continue
            lam = float(rng.uniform(0.01, 100.0))
            assert assign_domain(h, self.centroids) == \
                assign_domain(lam * h, self.centroids)


class TestTransition:
    def test_perfect_separability_identity(self):
        rows = [(f"a{i}", (1.0, 0.01 * i), "d0") for i in range(20)]
        rows += [(f"b{i}", (0.01 * i, 1.0), "d1") for i in range(20)]
        ds = embedded_dataset(rows)
        cents = [DomainCentroid("d0", np.array([1.0, 0.0])),
                 DomainCentroid("d1", np.array([0.0, 1.0]))]
        tm = estimate_transition(ds, cents)
        assert tm.p == pytest.approx(np.eye(2))

    def test_known_mixture_row(self):
        rows = [(f"a{i}", (1.0, 0.0) if i < 90 else (0.0, 1.0), "d0")
                for i in range(100)]
        rows += [(f"b{i}", (0.0, 1.0), "d1") for i in range(50)]
        ds = embedded_dataset(rows)
        cents = [DomainCentroid("d0", np.array([1.0, 0.0])),
                 DomainCentroid("d1", np.array([0.0, 1.0]))]
        tm = estimate_transition(ds, cents)
        assert tm.p[0] == pytest.approx((0.9, 0.1))
        assert tm.p[1] == pytest.approx((0.0, 1.0))

    def test_rows_sum_to_one_random(self):
        rng = np.random.default_rng(2)
        rows = [(f"r{i}", rng.normal(size=3), f"d{i % 4}") for i in range(200)]
        cents = [DomainCentroid(f"d{k}", unit(rng.normal(size=3))) for k in range(4)]
        tm = estimate_transition(embedded_dataset(rows), cents)
        assert tm.p.sum(axis=1) == pytest.approx(np.ones(4), abs=1e-9)
        assert np.all(tm.p >= 0) and np.all(tm.p <= 1)

    def test_empty_domain_rejected(self):
        rows = [("a", (1.0, 0.0), "d0")]
        cents = [DomainCentroid("d0", np.array([1.0, 0.0])),
                 DomainCentroid("d1", np.array([0.0, 1.0]))]
        with pytest.raises(DataError, match="no calibration records"):
            estimate_transition(embedded_dataset(rows), cents)


class TestCountTestClusters:
    def test_all_nearest_one_centroid(self):
        rows = [(f"r{i}", (0.0, 1.0), None) for i in range(100)]
        cents = [DomainCentroid("d0", np.array([1.0, 0.0])),
                 DomainCentroid("d1", np.array([0.0, 1.0])),
                 DomainCentroid("d2", np.array([-1.0, 0.0]))]
        counts = count_test_clusters(embedded_dataset(rows, role="test"), cents)
        assert counts.tolist() == [0.0, 100.0, 0.0]

    def test_total_preserved(self):
        rng = np.random.default_rng(3)
        rows = [(f"r{i}", rng.normal(size=2), None) for i in range(57)]
        cents = [DomainCentroid("d0", np.array([1.0, 0.0])),
                 DomainCentroid("d1", np.array([0.0, 1.0]))]
        counts = count_test_clusters(embedded_dataset(rows, role="test"), cents)
        assert counts.sum() == 57

    def test_empty_test_set_zero_vector(self):
        empty = Dataset(records=(), m=2, dim=2, role="test")
        cents = [DomainCentroid("d0", np.array([1.0, 0.0])),
                 DomainCentroid("d1", np.array([0.0, 1.0]))]
        assert count_test_clusters(empty, cents).tolist() == [0.0, 0.0]


class TestInvertCounts:
    def test_identity_transition_exact(self):
        tm = TransitionMatrix(domains=("a", "b"), p=np.eye(2))
        est = invert_counts(tm, [410.0, 590.0])
        assert est.estimated.tolist() == [410.0, 590.0]
        assert not est.fallback_used

    def test_hand_solved_2x2(self):
        tm = TransitionMatrix(domains=("a", "b"),
                              p=np.array([[0.9, 0.1], [0.2, 0.8]]))
        est = invert_counts(tm, [410.0, 590.0])
        assert est.estimated == pytest.approx((300.0, 700.0), abs=1e-6)

    def test_near_singular_falls_back_and_preserves_sum(self):
        tm = TransitionMatrix(domains=("a", "b"),
                              p=np.array([[0.5, 0.5], [0.5, 0.5]]))
        est = invert_counts(tm, [400.0, 600.0])
        assert est.fallback_used
        assert est.estimated.sum() == pytest.approx(1000.0, abs=1e-6)
        assert np.all(est.estimated >= 0)

    def test_negative_solution_clipped_rescaled(self):
        # strong off-diagonal: raw solve goes negative for skewed counts
        tm = TransitionMatrix(domains=("a", "b"),
                              p=np.array([[0.6, 0.4], [0.4, 0.6]]))
        est = invert_counts(tm, [950.0, 50.0])
        assert est.fallback_used
        assert np.all(est.estimated >= 0)
        assert est.estimated.sum() == pytest.approx(1000.0, abs=1e-6)

    def test_sum_preserved_random_diagonally_dominant(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            k = int(rng.integers(2, 7))
            p = rng.uniform(0.0, 0.2, size=(k, k))
            np.fill_diagonal(p, rng.uniform(1.0, 2.0, size=k))
            p /= p.sum(axis=1, keepdims=True)
            tm = TransitionMatrix(domains=tuple(f"d{i}" for i in range(k)), p=p)
            n_true = rng.integers(50, 2000, size=k).astype(float)
            observed = p.T @ n_true
            est = invert_counts(tm, observed)
            assert est.estimated == pytest.approx(n_true, abs=1e-6)
            assert est.estimated.sum() == pytest.approx(observed.sum(), abs=1e-6)

    def test_dimension_mismatch(self):
        tm = TransitionMatrix(domains=("a", "b"), p=np.eye(2))
        with pytest.raises(DataError):
            invert_counts(tm, [1.0, 2.0, 3.0])


def estimate_for(domains, estimated, observed=None):
    estimated = np.asarray(estimated, dtype=float)
    observed = estimated.copy() if observed is None else np.asarray(observed, float)
    return DomainCountEstimate(domains=tuple(domains), observed=observed,
                               estimated=estimated, conditioning=1.0,
                               fallback_used=False)


class TestBalancePlan:
    def make_cal(self, counts):
        rows = []
        i = 0
        for dom, n in counts.items():
            for _ in range(n):
                rows.append((f"r{i}", (1.0, float(i % 7)), dom))
                i += 1
        return embedded_dataset(rows)

    def test_no_shift_gives_unit_weights(self):
        cal = self.make_cal({"a": 50, "b": 50})
        est = estimate_for(("a", "b"), (500.0, 500.0))
        weights = domain_balance_weights(est, cal)
        assert weights == pytest.approx({"a": 1.0, "b": 1.0})

    def test_shifted_shares_density_ratio(self):
        cal = self.make_cal({"a": 50, "b": 50})
        est = estimate_for(("a", "b"), (750.0, 250.0))
        weights = domain_balance_weights(est, cal)
        assert weights["a"] == pytest.approx(1.5)
        assert weights["b"] == pytest.approx(0.5)

    def test_literal_weights_are_test_shares(self):
        cal = self.make_cal({"a": 80, "b": 20})
        est = estimate_for(("a", "b"), (750.0, 250.0))
        weights = domain_balance_weights(est, cal, literal=True)
        assert weights["a"] == pytest.approx(0.75)
        assert weights["b"] == pytest.approx(0.25)

    def test_unit_weights_leave_weighted_quantile_unchanged(self):
        cal = self.make_cal({"a": 30, "b": 30})
        est = estimate_for(("a", "b"), (100.0, 100.0))
        plan = build_balance_plan(est, cal, "reweight")
        rng = np.random.default_rng(5)
        scores = rng.random(60)
        w = np.array([plan.weights[rec.id] for rec in cal.records])
        for alpha in (0.1, 0.25, 0.5):
            assert weighted_quantile(scores, w, alpha) == \
                conformal_quantile(scores, alpha)

    def test_resample_deterministic_and_sized(self):
        cal = self.make_cal({"a": 40, "b": 40})
        est = estimate_for(("a", "b"), (300.0, 100.0))
        p1 = build_balance_plan(est, cal, "resample", seed=11)
        p2 = build_balance_plan(est, cal, "resample", seed=11)
        assert p1.resample_ids == p2.resample_ids
        assert len(p1.resample_ids) == 80

    def test_resample_shares_within_three_sigma(self):
        cal = self.make_cal({"a": 100, "b": 100})
        est = estimate_for(("a", "b"), (750.0, 250.0))
        plan = build_balance_plan(est, cal, "resample", target_size=10000, seed=13)
        ids_a = {rec.id for rec in cal.records if rec.domain == "a"}
        drawn_a = sum(1 for rid in plan.resample_ids if rid in ids_a)
        expect = 10000 * 0.75
        sigma = math.sqrt(10000 * 0.75 * 0.25)
        assert abs(drawn_a - expect) <= 3 * sigma

    def test_resample_empty_domain_with_mass_rejected(self):
        cal = self.make_cal({"a": 10})
        est = estimate_for(("a", "b"), (100.0, 100.0))
        with pytest.raises(DataError, match="no calibration records"):
            build_balance_plan(est, cal, "resample")

    def test_reweight_empty_domain_with_mass_rejected(self):
        cal = self.make_cal({"a": 10})
        est = estimate_for(("a", "b"), (100.0, 100.0))
        with pytest.raises(DataError, match="no calibration records"):
            build_balance_plan(est, cal, "reweight")
