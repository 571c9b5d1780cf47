"""
Calibration modes and the adaptive-rejection grid search
========================================================

Calibrates the same synthetic dataset three ways:

* ``bad``   - plain sampling CP: one answer-score quantile, no abstention.
* ``basic`` - adds a "can't answer" label threshold, never rejects.
* ``ar``    - splits the error budget between labeling and rejection,
              grid-searched for the smallest expected prediction set.

The grid search can only improve on its own no-rejection endpoint, so the
``ar`` calibration-set mean size never exceeds the baseline.
"""

from conformalqa import (
    CalibrationConfig,
    calibrate,
    evaluate,
    generate_dataset,
    predict_dataset,
)
from conformalqa.synthetic import SyntheticDomainSpec

spec = SyntheticDomainSpec(domain="qa", centroid_mean=(1.0, 0.0), spread=0.2,
                           answerable_rate=0.7, difficulty=0.35, samples=20)
calibration = generate_dataset((spec,), {"qa": 1000}, seed=101,
                               role="calibration")
test = generate_dataset((spec,), {"qa": 1000}, seed=102, role="test")

alpha = 0.1
print(f"target coverage {1 - alpha:.2f}, "
      f"{len(calibration)} calibration / {len(test)} test questions\n")

for mode in ("bad", "basic", "ar"):
    artifact = calibrate(calibration, CalibrationConfig(alpha=alpha, mode=mode))
    q = artifact.quantiles
    outcomes, labels, _ = predict_dataset(test, artifact)
    report = evaluate(outcomes, test.records, labels)
    line = (f"{mode:5s}  coverage {report.coverage:.3f}  "
            f"mean size {report.efficiency:.3f}  "
            f"rejection rate {report.rejection_rate:.3f}")
    if report.unanswerable_efficiency is not None:
        line += f"  unanswerable size {report.unanswerable_efficiency:.3f}"
    print(line)
    if mode == "ar":
        print(f"       grid picked alpha0={q.alpha0:.4f} alpha1={q.alpha1:.4f}; "
              f"calibration mean size {artifact.grid['mean_size']:.3f} vs "
              f"baseline {artifact.grid['baseline_mean_size']:.3f}")

artifact = calibrate(calibration, CalibrationConfig(alpha=alpha, mode="ar"))
outcome = predict_dataset(test, artifact)[0][0]
print(f"\nfirst test question -> kind={outcome.kind}, "
      f"set size {outcome.set_size:g}, "
      f"label included: {outcome.includes_cant_answer}")
