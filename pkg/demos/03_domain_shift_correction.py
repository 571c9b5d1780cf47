"""
Estimating and correcting an unknown domain shift
=================================================

Calibration data is balanced across two domains; the test stream is
dominated 3:1 by the easy one.  Nearest-centroid assignment over question
embeddings gives observed per-domain counts; inverting the assignment
confusion matrix recovers the true mixture, which then reweights (or
resamples) calibration so its quantiles match the test distribution.
"""

import numpy as np

from conformalqa import (
    build_balance_plan,
    compute_centroids,
    count_test_clusters,
    domain_balance_weights,
    estimate_transition,
    generate_dataset,
    invert_counts,
)
from conformalqa.synthetic import SyntheticDomainSpec

specs = (
    SyntheticDomainSpec(domain="easy", centroid_mean=(1.0, 0.0, 0.0, 0.0),
                        spread=0.35, answerable_rate=1.0, difficulty=0.25,
                        samples=10),
    SyntheticDomainSpec(domain="hard", centroid_mean=(0.0, 1.0, 0.0, 0.0),
                        spread=0.35, answerable_rate=1.0, difficulty=0.9,
                        samples=10),
)
cluster_split = generate_dataset(specs, {"easy": 800, "hard": 800}, seed=7,
                                 role="cluster-split")
calibration = generate_dataset(specs, {"easy": 800, "hard": 800}, seed=8,
                               role="calibration")
test = generate_dataset(specs, {"easy": 1500, "hard": 500}, seed=9)

centroids = compute_centroids(cluster_split)
print("centroid norms:", [round(float(np.linalg.norm(c.vector)), 6)
                          for c in centroids])

transition = estimate_transition(calibration, centroids)
print("\nassignment confusion matrix (rows = true domain):")
for domain, row in zip(transition.domains, transition.p):
    print(f"  {domain}: {np.round(row, 3)}")

observed = count_test_clusters(test, centroids)
estimate = invert_counts(transition, observed)
true_counts = {d: 0 for d in estimate.domains}
for rec in test.records:
    true_counts[rec.domain] += 1
print(f"\n{'domain':6s} {'true':>6s} {'observed':>9s} {'estimated':>10s}")
for i, d in enumerate(estimate.domains):
    print(f"{d:6s} {true_counts[d]:6d} {estimate.observed[i]:9.0f} "
          f"{estimate.estimated[i]:10.1f}")
print(f"condition number {estimate.conditioning:.2f}, "
      f"fallback used: {estimate.fallback_used}")

weights = domain_balance_weights(estimate, calibration)
print("\nreweighting (estimated test share / calibration share):")
for d, w in weights.items():
    print(f"  {d}: weight {w:.3f}")

plan = build_balance_plan(estimate, calibration, "resample", seed=10)
drawn = {d: 0 for d in estimate.domains}
by_id = {rec.id: rec.domain for rec in calibration.records}
for rid in plan.resample_ids:
    drawn[by_id[rid]] += 1
print(f"\nresample plan of {len(plan.resample_ids)} draws:", drawn)
