"""Applying a calibration artifact to clustered test answers."""

from __future__ import annotations

from dataclasses import dataclass

from .calibration import (
    CASE_LABEL,
    CASE_REJECTED,
    CalibrationArtifact,
    MODE_AR,
    MODE_BAD,
    MODE_BASIC,
    rejection_case,
)
from .clustering import (
    AnswerabilityLabel,
    AnswerCluster,
    ClusteredAnswers,
    answerability,
    cluster_answers,
    cluster_nonconformity,
)
from .errors import DataError
from .records import Dataset

KIND_REJECTED = "rejected"
KIND_SET = "set"


@dataclass(frozen=True)
class PredictionOutcome:
    """Either an abstention or a prediction set of answer clusters.

    ``clusters`` holds the included clusters (empty when rejected);
    ``cluster_scores`` records the score of every candidate cluster, aligned
    with the clustering that produced the outcome.
    """

    kind: str
    clusters: tuple[AnswerCluster, ...]
    includes_cant_answer: bool
    p0: float
    p1: float
    cluster_scores: tuple[float, ...]
    included_indices: tuple[int, ...]

    @property
    def set_size(self) -> float:
        """Reported size: rejection is 0, the label counts as one element."""
        if self.kind == KIND_REJECTED:
            return 0.0
        return len(self.clusters) + (1.0 if self.includes_cant_answer else 0.0)


def predict(clustered: ClusteredAnswers,
            artifact: CalibrationArtifact) -> PredictionOutcome:
    """Build the prediction outcome for one question.

    In ``ar`` mode the question is rejected when p0 is under the label
    threshold while p1 exceeds the rejection threshold; labeled "can't
    answer" (in addition to threshold-passing clusters) when both are under;
    otherwise standard CP applies.  ``basic`` adds the label without ever
    rejecting; ``bad`` emits threshold-passing clusters only.  Clusters are
    included on a strict score-below-threshold test.
    """
    if artifact.m and clustered.m != artifact.m:
        raise DataError(
            f"clustering used m={clustered.m} but the artifact was calibrated "
            f"with m={artifact.m}")
    scores = cluster_nonconformity(clustered, artifact.scoring.score_mode)
    q = artifact.quantiles
    included = tuple(j for j, s in enumerate(scores) if s < q.q_text)

    if artifact.mode == MODE_AR:
        case = rejection_case(clustered.p0, clustered.p1, q.q0, q.q1)
        if case == CASE_REJECTED:
            return PredictionOutcome(
                kind=KIND_REJECTED, clusters=(), includes_cant_answer=False,
                p0=clustered.p0, p1=clustered.p1, cluster_scores=scores,
                included_indices=())
        label = case == CASE_LABEL
    elif artifact.mode == MODE_BASIC:
        label = clustered.p0 < q.q0
    elif artifact.mode == MODE_BAD:
        label = False
    else:
        raise DataError(f"unknown artifact mode {artifact.mode!r}")

    return PredictionOutcome(
        kind=KIND_SET,
        clusters=tuple(clustered.clusters[j] for j in included),
        includes_cant_answer=label,
        p0=clustered.p0, p1=clustered.p1, cluster_scores=scores,
        included_indices=included)


def predict_dataset(
    dataset: Dataset, artifact: CalibrationArtifact,
) -> tuple[list[PredictionOutcome], list[AnswerabilityLabel], list[ClusteredAnswers]]:
    """Cluster, label, and predict every record with the artifact's scoring
    configuration; returns outcome/label/clustering lists aligned with the
    dataset order."""
    outcomes = []
    labels = []
    clusterings = []
    for rec in dataset.records:
        clustered = cluster_answers(rec.samples, artifact.scoring.cluster_threshold)
        label = answerability(clustered, rec.samples, rec.ground_truths,
                              artifact.scoring.match_mode)
        outcomes.append(predict(clustered, artifact))
        labels.append(label)
        clusterings.append(clustered)
    return outcomes, labels, clusterings
