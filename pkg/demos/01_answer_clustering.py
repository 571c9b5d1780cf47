"""
Clustering sampled answers and scoring uncertainty
==================================================

One question, ten sampled answers.  Rouge-L groups lexically equivalent
answers; the cluster-size distribution yields the normalized entropy (NE)
uncertainty score and, combined with a ground-truth match, the
nonconformity score that calibration consumes.
"""

from conformalqa import (
    answerability,
    cluster_answers,
    nonconformity_score,
    rouge_l,
)

samples = [
    "Paris",
    "paris",
    "The capital is Paris.",
    "Paris",
    "Lyon",
    "Paris!",
    "Marseille",
    "paris",
    "Lyon",
    "Paris",
]

print("pairwise Rouge-L examples:")
print("  paris vs paris                ->", rouge_l("paris", "paris"))
print("  Paris vs The capital is Paris ->",
      round(rouge_l("Paris", "The capital is Paris."), 3))
print("  Paris vs Lyon                 ->", rouge_l("Paris", "Lyon"))

clustered = cluster_answers(samples, threshold=0.7)
print(f"\n{len(clustered.clusters)} clusters from {clustered.m} samples:")
for c in clustered.clusters:
    print(f"  freq {c.freq}: representative {c.representative!r}")

print(f"\nnormalized entropy   NE = {clustered.ne:.4f}")
print(f"cannot-answer score  p0 = {clustered.p0:.4f}")
print(f"can-answer score     p1 = {clustered.p1:.4f}")

label = answerability(clustered, samples, ground_truths=["Paris"])
print(f"\nanswerable: {label.answerable} "
      f"(matched cluster {label.matched_cluster})")

for mode in ("frequency", "frequency-minus-ne"):
    score = nonconformity_score(clustered, label, mode)
    print(f"nonconformity [{mode}]: {score:.4f}")
