"""Conformal calibration: quantiles, rejection thresholds, and grid search.

Three calibration modes are supported.  ``bad`` is plain sampling-based CP:
one answer-score quantile over every calibration item.  ``basic`` adds a
"can't answer" label threshold but never abstains.  ``ar`` (adaptive
rejection) splits the error budget between unanswerable labeling and
answerable rejection, grid-searching the split for the smallest expected
prediction set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import (
    ClusteredAnswers,
    MATCH_EXACT,
    MATCH_MODES,
    SCORE_FREQUENCY_MINUS_NE,
    SCORE_MODES,
    answerability,
    cluster_answers,
    cluster_nonconformity,
    nonconformity_score,
)
from .domains import BALANCE_NONE, BALANCE_RESAMPLE, BALANCE_REWEIGHT, BalancePlan
from .errors import DataError, NumericalError
from .records import Dataset

ARTIFACT_VERSION = "1"

MODE_BAD = "bad"
MODE_BASIC = "basic"
MODE_AR = "ar"
MODES = (MODE_BAD, MODE_BASIC, MODE_AR)

CASE_REJECTED = "rejected"
CASE_LABEL = "label"
CASE_STANDARD = "standard"


@dataclass(frozen=True, slots=True)
class ScoringConfig:
    """How answers are clustered and scored; shared by calibration and
    prediction and frozen into the artifact."""

    cluster_threshold: float = 0.7
    score_mode: str = SCORE_FREQUENCY_MINUS_NE
    no_match_score: float = 1.0
    match_mode: str = MATCH_EXACT

    def validate(self) -> "ScoringConfig":
        if not 0.0 < self.cluster_threshold <= 1.0:
            raise DataError(
                f"cluster threshold must be in (0, 1], got {self.cluster_threshold}")
        if self.score_mode not in SCORE_MODES:
            raise DataError(f"unknown score mode {self.score_mode!r}")
        if self.match_mode not in MATCH_MODES:
            raise DataError(f"unknown match mode {self.match_mode!r}")
        return self


@dataclass(frozen=True, slots=True)
class CalibrationConfig:
    alpha: float = 0.1
    mode: str = MODE_AR
    grid_points: int = 20
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    seed: int = 0

    def validate(self) -> "CalibrationConfig":
        if not 0.0 < self.alpha < 1.0:
            raise DataError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.mode not in MODES:
            raise DataError(f"unknown calibration mode {self.mode!r}")
        if self.grid_points < 2:
            raise DataError(f"grid_points must be >= 2, got {self.grid_points}")
        self.scoring.validate()
        return self


@dataclass(frozen=True)
class ScoredCalibrationItem:
    """One calibration question reduced to the quantities calibration needs."""

    record_id: str
    ne: float
    p0: float
    p1: float
    answerable: bool
    nonconformity: float
    weight: float = 1.0
    clustered: ClusteredAnswers | None = None


@dataclass(frozen=True, slots=True)
class ConformalQuantiles:
    """All thresholds produced by one calibration run.

    ``q0`` gates the "can't answer" label on the unanswerable-probability
    score, ``q1`` gates rejection on the answerable-probability score, and
    ``q_text`` is the answer-score threshold.  ``math.inf`` is the saturation
    sentinel: that threshold excludes nothing.
    """

    alpha: float
    alpha0: float
    alpha1: float
    q0: float
    q1: float
    q_text: float
    answerable_rate: float


@dataclass(frozen=True)
class CalibrationArtifact:
    """Frozen output of calibration; everything prediction needs."""

    mode: str
    quantiles: ConformalQuantiles
    balance: dict
    scoring: ScoringConfig
    m: int
    seed: int
    version: str = ARTIFACT_VERSION
    grid: dict | None = None


def conformal_quantile(scores: Sequence[float] | np.ndarray, alpha: float) -> float:
    """Split-conformal calibration quantile.

    Returns the ``ceil((n + 1) * (1 - alpha))``-th smallest score, or
    ``math.inf`` when that rank exceeds ``n`` (the finite-sample level is
    unattainable and every candidate must be admitted).
    """
    arr = np.asarray(scores, dtype=float)
    n = arr.size
    if n == 0:
        raise DataError("cannot take a quantile of an empty score list")
    rank = (n + 1.0) * (1.0 - alpha)
    if rank > n:
        return math.inf
    k = math.ceil(rank)
    return float(np.sort(arr)[max(k, 1) - 1])


def weighted_quantile(scores: Sequence[float] | np.ndarray,
                      weights: Sequence[float] | np.ndarray,
                      alpha: float) -> float:
    """Weighted conformal quantile.

    Smallest score whose cumulative weight fraction reaches the finite-sample
    level ``(n + 1)(1 - alpha) / n``; ``math.inf`` when that level exceeds 1.
    With uniform weights this selects exactly the same order statistic as
    :func:`conformal_quantile`.
    """
    arr = np.asarray(scores, dtype=float)
    w = np.asarray(weights, dtype=float)
    if arr.size == 0:
        raise DataError("cannot take a quantile of an empty score list")
    if arr.shape != w.shape:
        raise DataError("scores and weights must have equal length")
    if np.any(w <= 0.0):
        raise DataError("weights must be strictly positive")
    n = arr.size
    rank = (n + 1.0) * (1.0 - alpha)
    if rank > n:
        return math.inf
    level = rank / n
    order = np.argsort(arr, kind="stable")
    sorted_scores = arr[order]
    cum = np.cumsum(w[order])
    frac = cum / cum[-1]
    idx = int(np.searchsorted(frac, level, side="left"))
    idx = min(idx, n - 1)
    return float(sorted_scores[idx])


def _partition_quantile(scores: list[float], weights: list[float],
                        alpha: float) -> float:
    if not scores:
        return math.inf
    if all(w == 1.0 for w in weights):
        return conformal_quantile(scores, alpha)
    return weighted_quantile(scores, weights, alpha)


def alpha1_from_alpha0(alpha: float, alpha0: float, answerable_rate: float) -> float:
    """Answerable-rejection error level implied by the unanswerable level.

    Derived from the overall coverage decomposition; at ``alpha0 == alpha``
    this is 0 (no rejection budget left).
    """
    if answerable_rate <= 0.0:
        raise NumericalError(
            "no answerable calibration items; adaptive rejection unavailable")
    if not 0.0 <= alpha0 <= alpha:
        raise DataError(f"alpha0 must be in [0, alpha], got {alpha0}")
    return (1.0 - answerable_rate) * (alpha - alpha0) / (
        answerable_rate * (1.0 - alpha))


def reject_quantiles(items: Sequence[ScoredCalibrationItem], alpha0: float,
                     alpha1: float) -> tuple[float, float]:
    """Label and rejection thresholds from the answerability partition.

    ``q0`` is the quantile of unanswerable items' p0 at ``alpha0``; ``q1``
    the quantile of answerable items' p1 at ``alpha1``.  An empty partition
    yields the ``inf`` sentinel for its quantile.
    """
    p0_un = [it.p0 for it in items if not it.answerable]
    w_un = [it.weight for it in items if not it.answerable]
    p1_an = [it.p1 for it in items if it.answerable]
    w_an = [it.weight for it in items if it.answerable]
    q0 = _partition_quantile(p0_un, w_un, alpha0)
    q1 = _partition_quantile(p1_an, w_an, alpha1)
    return q0, q1


def answer_quantile(items: Sequence[ScoredCalibrationItem], alpha: float,
                    q1: float = math.inf) -> float:
    """Answer-score quantile over answerable items retained by the rejection
    threshold (p1 strictly below ``q1``); ``inf`` when nothing is retained."""
    retained = [it for it in items if it.answerable and it.p1 < q1]
    return _partition_quantile([it.nonconformity for it in retained],
                               [it.weight for it in retained], alpha)


def rejection_case(p0: float, p1: float, q0: float, q1: float) -> str:
    """Adaptive-rejection case split for one question.

    Rejected when the unanswerable score is under its threshold while the
    answerable score exceeds the rejection threshold; labeled when both are
    under; otherwise standard CP.
    """
    if p0 < q0:
        if p1 > q1:
            return CASE_REJECTED
        return CASE_LABEL
    return CASE_STANDARD


def _sorted_cluster_scores(items: Sequence[ScoredCalibrationItem],
                           score_mode: str) -> list[np.ndarray]:
    out = []
    for it in items:
        if it.clustered is None:
            raise DataError(
                f"calibration item {it.record_id!r} lacks cluster details "
                f"needed for set-size evaluation")
        out.append(np.sort(np.asarray(cluster_nonconformity(it.clustered, score_mode))))
    return out


def _mean_set_size(items: Sequence[ScoredCalibrationItem],
                   sorted_scores: list[np.ndarray],
                   q0: float, q1: float, q_text: float) -> float:
    """Weighted mean prediction-set size over the calibration items.

    Rejection contributes size 0 and the "can't answer" label counts as one
    element; clusters count when their score is strictly below ``q_text``.
    """
    total_w = 0.0
    total_size = 0.0
    for it, scores in zip(items, sorted_scores):
        case = rejection_case(it.p0, it.p1, q0, q1)
        if case == CASE_REJECTED:
            size = 0.0
        else:
            included = int(np.searchsorted(scores, q_text, side="left"))
            size = float(included) + (1.0 if case == CASE_LABEL else 0.0)
        total_w += it.weight
        total_size += it.weight * size
    return total_size / total_w


@dataclass(frozen=True, slots=True)
class GridSearchResult:
    quantiles: ConformalQuantiles
    mean_size: float
    baseline_mean_size: float


def grid_search(items: Sequence[ScoredCalibrationItem], alpha: float,
                grid_points: int = 20,
                score_mode: str = SCORE_FREQUENCY_MINUS_NE) -> GridSearchResult:
    """Pick the error split minimizing the expected prediction-set size.

    Evaluates ``alpha0`` on an even grid over [0, alpha], derives ``alpha1``
    from the coverage relation (skipping pairs with ``alpha1 > 1``), scores
    each pair by the mean set size over the calibration items themselves, and
    returns the minimizer; ties break toward larger ``alpha0`` (more
    rejection).  The endpoint pair ``(alpha, 0)`` is always on the grid, so
    the result never does worse than the no-rejection baseline.
    """
    if grid_points < 2:
        raise DataError(f"grid_points must be >= 2, got {grid_points}")
    if not items:
        raise DataError("no calibration items to grid-search over")
    total_w = sum(it.weight for it in items)
    r = sum(it.weight for it in items if it.answerable) / total_w
    sorted_scores = _sorted_cluster_scores(items, score_mode)

    def evaluate(alpha0: float, alpha1: float) -> tuple[ConformalQuantiles, float]:
        q0, q1 = reject_quantiles(items, alpha0, alpha1)
        q_text = answer_quantile(items, alpha, q1)
        quantiles = ConformalQuantiles(
            alpha=alpha, alpha0=alpha0, alpha1=alpha1,
            q0=q0, q1=q1, q_text=q_text, answerable_rate=r)
        return quantiles, _mean_set_size(items, sorted_scores, q0, q1, q_text)

    baseline_q, baseline_size = evaluate(alpha, 0.0)
    if r <= 0.0:
        # no answerable items: the rejection budget relation is undefined
        return GridSearchResult(quantiles=baseline_q, mean_size=baseline_size,
                                baseline_mean_size=baseline_size)
    best: tuple[ConformalQuantiles, float] | None = None
    for g in range(grid_points + 1):
        alpha0 = alpha * g / grid_points
        alpha1 = alpha1_from_alpha0(alpha, alpha0, r)
        if alpha1 > 1.0:
            continue
        quantiles, size = evaluate(alpha0, alpha1)
        if best is None or size <= best[1]:
            best = (quantiles, size)
    assert best is not None  # the (alpha, 0) endpoint is always feasible
    assert best[1] <= baseline_size + 1e-12, "grid search lost to its own baseline"
    return GridSearchResult(quantiles=best[0], mean_size=best[1],
                            baseline_mean_size=baseline_size)


def score_calibration_records(dataset: Dataset,
                              scoring: ScoringConfig) -> list[ScoredCalibrationItem]:
    """Cluster and score every record of a calibration dataset (weight 1)."""
    scoring.validate()
    items = []
    for rec in dataset.records:
        clustered = cluster_answers(rec.samples, scoring.cluster_threshold)
        label = answerability(clustered, rec.samples, rec.ground_truths,
                              scoring.match_mode)
        score = nonconformity_score(clustered, label, scoring.score_mode,
                                    scoring.no_match_score)
        items.append(ScoredCalibrationItem(
            record_id=rec.id, ne=clustered.ne, p0=clustered.p0, p1=clustered.p1,
            answerable=label.answerable, nonconformity=score, weight=1.0,
            clustered=clustered))
    return items


def apply_balance_plan(items: Sequence[ScoredCalibrationItem],
                       plan: BalancePlan) -> list[ScoredCalibrationItem]:
    """Materialize a balance plan over scored items.

    Resampling replaces the item list by the plan's multiset of ids (weight
    1); reweighting attaches the plan's per-record weights.
    """
    if plan.strategy == BALANCE_NONE:
        return list(items)
    by_id = {it.record_id: it for it in items}
    if plan.strategy == BALANCE_RESAMPLE:
        if plan.resample_ids is None:
            raise DataError("resample plan has no indices")
        try:
            return [by_id[rid] for rid in plan.resample_ids]
        except KeyError as exc:
            raise DataError(
                f"resample plan references unknown record id {exc.args[0]!r}") from None
    if plan.strategy == BALANCE_REWEIGHT:
        if plan.weights is None:
            raise DataError("reweight plan has no weights")
        out = []
        for it in items:
            try:
                w = plan.weights[it.record_id]
            except KeyError:
                raise DataError(
                    f"reweight plan is missing record id {it.record_id!r}") from None
            if w <= 0.0:
                raise DataError(f"non-positive weight for record {it.record_id!r}")
            out.append(ScoredCalibrationItem(
                record_id=it.record_id, ne=it.ne, p0=it.p0, p1=it.p1,
                answerable=it.answerable, nonconformity=it.nonconformity,
                weight=float(w), clustered=it.clustered))
        return out
    raise DataError(f"unknown balance strategy {plan.strategy!r}")


def _balance_summary(plan: BalancePlan) -> dict:
    summary: dict = {"strategy": plan.strategy}
    if plan.resample_ids is not None:
        summary["resample_size"] = len(plan.resample_ids)
    if plan.domain_weights is not None:
        summary["domain_weights"] = {d: float(w)
                                     for d, w in sorted(plan.domain_weights.items())}
    elif plan.weights is not None:
        summary["weighted_records"] = len(plan.weights)
    return summary


def calibrate_scored(items: Sequence[ScoredCalibrationItem],
                     config: CalibrationConfig,
                     balance: BalancePlan | None = None,
                     m: int = 0) -> CalibrationArtifact:
    """Calibrate from already-scored items; see :func:`calibrate`."""
    config.validate()
    plan = balance if balance is not None else BalancePlan(strategy=BALANCE_NONE)
    items = apply_balance_plan(items, plan)
    if not items:
        raise DataError("no calibration items after balancing")
    alpha = config.alpha
    total_w = sum(it.weight for it in items)
    r = sum(it.weight for it in items if it.answerable) / total_w
    grid_info: dict | None = None

    if config.mode == MODE_BAD:
        q_text = _partition_quantile([it.nonconformity for it in items],
                                     [it.weight for it in items], alpha)
        quantiles = ConformalQuantiles(
            alpha=alpha, alpha0=0.0, alpha1=0.0,
            q0=math.inf, q1=math.inf, q_text=q_text, answerable_rate=r)
    elif config.mode == MODE_BASIC:
        p0_un = [it.p0 for it in items if not it.answerable]
        w_un = [it.weight for it in items if not it.answerable]
        q0 = _partition_quantile(p0_un, w_un, alpha)
        q_text = _partition_quantile([it.nonconformity for it in items],
                                     [it.weight for it in items], alpha)
        quantiles = ConformalQuantiles(
            alpha=alpha, alpha0=alpha, alpha1=0.0,
            q0=q0, q1=math.inf, q_text=q_text, answerable_rate=r)
    else:
        result = grid_search(items, alpha, config.grid_points,
                             config.scoring.score_mode)
        quantiles = result.quantiles
        grid_info = {"mean_size": result.mean_size,
                     "baseline_mean_size": result.baseline_mean_size}

    return CalibrationArtifact(
        mode=config.mode, quantiles=quantiles, balance=_balance_summary(plan),
        scoring=config.scoring, m=m, seed=config.seed, grid=grid_info)


def calibrate(calibration: Dataset, config: CalibrationConfig,
              balance: BalancePlan | None = None) -> CalibrationArtifact:
    """Cluster, score, balance, and calibrate a dataset into an artifact.

    The balance plan (from :func:`conformalqa.domains.build_balance_plan`)
    is applied first: resampling materializes the drawn multiset, reweighting
    attaches record weights.  The artifact freezes the chosen thresholds, the
    scoring configuration, and the grid diagnostics for ``ar`` mode.
    """
    items = score_calibration_records(calibration, config.scoring)
    return calibrate_scored(items, config, balance, m=calibration.m)


def _quantiles_to_json(q: ConformalQuantiles) -> dict:
    def enc(v: float):
        return None if math.isinf(v) else v
    return {"alpha": q.alpha, "alpha0": q.alpha0, "alpha1": q.alpha1,
            "q0": enc(q.q0), "q1": enc(q.q1), "q_text": enc(q.q_text),
            "answerable_rate": q.answerable_rate}


def _quantiles_from_json(obj: dict) -> ConformalQuantiles:
    def dec(v) -> float:
        return math.inf if v is None else float(v)
    return ConformalQuantiles(
        alpha=float(obj["alpha"]), alpha0=float(obj["alpha0"]),
        alpha1=float(obj["alpha1"]), q0=dec(obj["q0"]), q1=dec(obj["q1"]),
        q_text=dec(obj["q_text"]), answerable_rate=float(obj["answerable_rate"]))


def artifact_to_json(artifact: CalibrationArtifact) -> str:
    """Serialize to a JSON document; infinite thresholds encode as null."""
    obj = {
        "version": artifact.version,
        "mode": artifact.mode,
        "quantiles": _quantiles_to_json(artifact.quantiles),
        "balance": artifact.balance,
        "scoring": asdict(artifact.scoring),
        "m": artifact.m,
        "seed": artifact.seed,
    }
    if artifact.grid is not None:
        obj["grid"] = artifact.grid
    return json.dumps(obj, indent=2, sort_keys=True)


def artifact_from_json(text: str) -> CalibrationArtifact:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed artifact JSON: {exc.msg}") from None
    if obj.get("version") != ARTIFACT_VERSION:
        raise DataError(
            f"unsupported artifact version {obj.get('version')!r}")
    try:
        return CalibrationArtifact(
            mode=obj["mode"],
            quantiles=_quantiles_from_json(obj["quantiles"]),
            balance=obj["balance"],
            scoring=ScoringConfig(**obj["scoring"]).validate(),
            m=int(obj["m"]),
            seed=int(obj["seed"]),
            version=obj["version"],
            grid=obj.get("grid"),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"artifact JSON is missing fields: {exc}") from None


def save_artifact(artifact: CalibrationArtifact, path: str | Path) -> None:
    Path(path).write_text(artifact_to_json(artifact), encoding="utf-8")


def load_artifact(path: str | Path) -> CalibrationArtifact:
    return artifact_from_json(Path(path).read_text(encoding="utf-8"))
