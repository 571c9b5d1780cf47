"""Coverage, efficiency, and domain-count error metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .clustering import AnswerabilityLabel, MATCH_EXACT, _matches
from .domains import DomainCountEstimate
from .errors import DataError
from .prediction import KIND_REJECTED, PredictionOutcome
from .records import QuestionRecord


@dataclass(frozen=True)
class EvalReport:
    """Aggregate metrics over one evaluated dataset.

    ``unanswerable_efficiency`` is None when no question was unanswerable;
    ``per_domain`` maps each true domain to (coverage, efficiency, count).
    """

    coverage: float
    efficiency: float
    unanswerable_efficiency: float | None
    rejection_rate: float
    per_domain: dict[str, tuple[float, float, int]]
    n_evaluated: int


@dataclass(frozen=True)
class DomainErrorReport:
    """Relative error between true and estimated test-domain counts."""

    per_domain: dict[str, float]
    mean: float


def is_covered(outcome: PredictionOutcome, record: QuestionRecord,
               label: AnswerabilityLabel, match_mode: str = MATCH_EXACT) -> bool:
    """Whether the outcome covers the ground truth.

    An unanswerable question is covered by abstention or by the "can't
    answer" label; an answerable one only by a non-rejected set containing a
    cluster with a matching sampled answer (same normalization as the
    answerability labeling).
    """
    if not label.answerable:
        return outcome.kind == KIND_REJECTED or outcome.includes_cant_answer
    if outcome.kind == KIND_REJECTED:
        return False
    for cluster in outcome.clusters:
        for i in cluster.members:
            if _matches(record.samples[i], record.ground_truths, match_mode):
                return True
    return False


def evaluate(outcomes: Sequence[PredictionOutcome],
             records: Sequence[QuestionRecord],
             labels: Sequence[AnswerabilityLabel],
             ids: Sequence[str] | None = None,
             match_mode: str = MATCH_EXACT) -> EvalReport:
    """Aggregate coverage and set-size metrics over aligned outcome, record,
    and label sequences.

    ``ids``, when given, must mirror the record ids (this catches misaligned
    prediction files).  Rejections count as size 0 and the label as one
    element; per-domain splits use the records' true domain labels.
    """
    if not (len(outcomes) == len(records) == len(labels)):
        raise DataError("outcomes, records, and labels must be aligned")
    if not records:
        raise DataError("nothing to evaluate")
    if ids is not None:
        if len(ids) != len(records):
            raise DataError("ids not aligned with records")
        for given, rec in zip(ids, records):
            if given != rec.id:
                raise DataError(
                    f"id mismatch: outcome for {given!r} paired with record "
                    f"{rec.id!r}")

    covered = []
    sizes = []
    rejected = []
    unanswerable_sizes = []
    by_domain: dict[str, list[tuple[bool, float]]] = {}
    for outcome, record, label in zip(outcomes, records, labels):
        cov = is_covered(outcome, record, label, match_mode)
        size = outcome.set_size
        covered.append(cov)
        sizes.append(size)
        rejected.append(outcome.kind == KIND_REJECTED)
        if not label.answerable:
            unanswerable_sizes.append(size)
        if record.domain is not None:
            by_domain.setdefault(record.domain, []).append((cov, size))

    per_domain = {
        d: (float(np.mean([c for c, _ in rows])),
            float(np.mean([s for _, s in rows])),
            len(rows))
        for d, rows in sorted(by_domain.items())
    }
    return EvalReport(
        coverage=float(np.mean(covered)),
        efficiency=float(np.mean(sizes)),
        unanswerable_efficiency=(float(np.mean(unanswerable_sizes))
                                 if unanswerable_sizes else None),
        rejection_rate=float(np.mean(rejected)),
        per_domain=per_domain,
        n_evaluated=len(records),
    )


def domain_count_error(true_counts: Mapping[str, float] | Sequence[float],
                       estimate: DomainCountEstimate) -> DomainErrorReport:
    """Per-domain relative error |true - estimated| / true and its mean."""
    if isinstance(true_counts, Mapping):
        try:
            truth = [float(true_counts[d]) for d in estimate.domains]
        except KeyError as exc:
            raise DataError(f"no true count for domain {exc.args[0]!r}") from None
    else:
        truth = [float(v) for v in true_counts]
        if len(truth) != len(estimate.domains):
            raise DataError("true counts not aligned with estimated domains")
    per = {}
    for d, t, e in zip(estimate.domains, truth, estimate.estimated):
        if t <= 0.0:
            raise DataError(f"true count for domain {d!r} must be positive")
        per[d] = abs(t - float(e)) / t
    return DomainErrorReport(per_domain=per, mean=float(np.mean(list(per.values()))))
