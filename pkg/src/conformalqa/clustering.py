"""Lexical clustering of sampled answers and the scores built on top of it.

The ``m`` answers sampled for one question are grouped by Rouge-L similarity;
the cluster-size distribution yields the normalized-entropy uncertainty score
and, together with a ground-truth match, the nonconformity score used for
conformal calibration.
"""

from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass
from typing import Sequence

from .errors import DataError

SCORE_FREQUENCY = "frequency"
SCORE_FREQUENCY_MINUS_NE = "frequency-minus-ne"
SCORE_MODES = (SCORE_FREQUENCY, SCORE_FREQUENCY_MINUS_NE)

MATCH_EXACT = "exact"
MATCH_REGEX = "regex"
MATCH_MODES = (MATCH_EXACT, MATCH_REGEX)

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


@dataclass(frozen=True, slots=True)
class AnswerCluster:
    """One group of lexically equivalent sampled answers.

    ``representative`` is the first member in sample order; ``members`` are
    0-based sample indices; ``freq`` equals ``len(members)``.
    """

    representative: str
    members: tuple[int, ...]
    freq: int


@dataclass(frozen=True, slots=True)
class ClusteredAnswers:
    """Clustering of one question's samples plus its uncertainty scores.

    ``ne`` is the normalized entropy of the cluster-size distribution in
    [0, 1]; ``p0 = ne`` estimates the probability the model cannot answer,
    ``p1 = 1 - ne`` that it can.
    """

    clusters: tuple[AnswerCluster, ...]
    m: int
    ne: float
    p0: float
    p1: float


@dataclass(frozen=True, slots=True)
class AnswerabilityLabel:
    """Whether any sampled answer matched a ground truth, and where."""

    answerable: bool
    matched_cluster: int | None = None


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # Two-row dynamic program; quadratic in token counts.
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for tok_a in a:
        cur = [0]
        append = cur.append
        best = 0
        for j, tok_b in enumerate(b):
            if tok_a == tok_b:
                v = prev[j] + 1
            else:
                v = prev[j + 1]
                if cur[j] > v:
                    v = cur[j]
            append(v)
        prev = cur
    return prev[-1]


def rouge_l(a: str, b: str) -> float:
    """Rouge-L F1 between two texts over whitespace tokens.

    Precision is LCS length over ``a``'s token count, recall over ``b``'s;
    returns 0.0 when either side is empty or the LCS is empty.  Symmetric.
    """
    ta = a.split()
    tb = b.split()
    if not ta or not tb:
        return 0.0
    lcs = _lcs_length(ta, tb)
    if lcs == 0:
        return 0.0
    p = lcs / len(ta)
    r = lcs / len(tb)
    return 2.0 * p * r / (p + r)


def cluster_answers(samples: Sequence[str], threshold: float = 0.7) -> ClusteredAnswers:
    """Greedy first-fit clustering of sampled answers by Rouge-L.

    Samples are scanned in order; each joins the first existing cluster whose
    representative scores at least ``threshold``, else it opens a new cluster
    with itself as representative.
    """
    if not 0.0 < threshold <= 1.0:
        raise DataError(f"cluster threshold must be in (0, 1], got {threshold}")
    if len(samples) < 1:
        raise DataError("cannot cluster an empty sample list")
    reps: list[str] = []
    members: list[list[int]] = []
    for i, sample in enumerate(samples):
        for c, rep in enumerate(reps):
            if rouge_l(rep, sample) >= threshold:
                members[c].append(i)
                break
        else:
            reps.append(sample)
            members.append([i])
    clusters = tuple(
        AnswerCluster(representative=rep, members=tuple(ms), freq=len(ms))
        for rep, ms in zip(reps, members))
    m = len(samples)
    ne = _normalized_entropy(tuple(c.freq for c in clusters), m)
    return ClusteredAnswers(clusters=clusters, m=m, ne=ne, p0=ne, p1=1.0 - ne)


def _normalized_entropy(freqs: Sequence[int], m: int) -> float:
    k = len(freqs)
    if k <= 1:
        return 0.0
    # -sum((f/m) log(f/m)) rewritten as log m - (1/m) sum(f log f); this form
    # is exact for singleton and equal-size compositions
    h = math.log(m) - sum(f * math.log(f) for f in freqs) / m
    return min(max(h / math.log(k), 0.0), 1.0)


def normalized_entropy(clustered: ClusteredAnswers) -> float:
    """Entropy of the cluster-size proportions divided by log of the cluster
    count; 0 for a single cluster, 1 for equal-size clusters."""
    total = sum(c.freq for c in clustered.clusters)
    if total != clustered.m:
        raise DataError(
            f"cluster sizes sum to {total}, expected {clustered.m}")
    return _normalized_entropy(tuple(c.freq for c in clustered.clusters), clustered.m)


def normalize_answer(text: str) -> str:
    """Canonical form for answer matching: lowercase, strip punctuation,
    collapse whitespace."""
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


def _matches(sample: str, truths: Sequence[str], match_mode: str) -> bool:
    norm = normalize_answer(sample)
    if match_mode == MATCH_EXACT:
        return any(norm == normalize_answer(t) for t in truths)
    if match_mode == MATCH_REGEX:
        return any(re.search(t, norm) is not None for t in truths)
    raise DataError(f"unknown match mode {match_mode!r}")


def answerability(clustered: ClusteredAnswers, samples: Sequence[str],
                  ground_truths: Sequence[str],
                  match_mode: str = MATCH_EXACT) -> AnswerabilityLabel:
    """Label a question answerable iff any sampled answer matches a ground
    truth.

    With the default mode, matching is equality after
    :func:`normalize_answer`; in ``regex`` mode each ground truth is treated
    as a pattern searched in the normalized sample.  The matched cluster is
    the one containing the first matching sample in sample order.
    """
    cluster_of: dict[int, int] = {}
    for c, cluster in enumerate(clustered.clusters):
        for i in cluster.members:
            cluster_of[i] = c
    for i, sample in enumerate(samples):
        if _matches(sample, ground_truths, match_mode):
            return AnswerabilityLabel(answerable=True, matched_cluster=cluster_of.get(i))
    return AnswerabilityLabel(answerable=False, matched_cluster=None)


def cluster_nonconformity(clustered: ClusteredAnswers, score_mode: str) -> tuple[float, ...]:
    """Per-cluster nonconformity scores under the configured mode.

    ``frequency``: 1 - freq/m.  ``frequency-minus-ne``: 1 - (freq/m - ne),
    which penalizes fragmented answer distributions.
    """
    if score_mode not in SCORE_MODES:
        raise DataError(f"unknown score mode {score_mode!r}")
    m = clustered.m
    if score_mode == SCORE_FREQUENCY:
        return tuple(1.0 - c.freq / m for c in clustered.clusters)
    ne = clustered.ne
    return tuple(1.0 - (c.freq / m - ne) for c in clustered.clusters)


def nonconformity_score(clustered: ClusteredAnswers, label: AnswerabilityLabel,
                        score_mode: str = SCORE_FREQUENCY_MINUS_NE,
                        no_match_score: float = 1.0) -> float:
    """Nonconformity of the ground truth for one question.

    Scores the matched cluster under ``score_mode``; when no sampled answer
    matched, returns ``no_match_score`` (default 1.0, i.e. maximally
    nonconforming; 0.0 is selectable for the literal sampling-CP convention).
    """
    if label.matched_cluster is None:
        return no_match_score
    return cluster_nonconformity(clustered, score_mode)[label.matched_cluster]
