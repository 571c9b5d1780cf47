"""Synthetic multi-domain datasets and Monte Carlo coverage trials.

Questions are generated with controllable answerability, difficulty, and
embedding geometry.  Sampled-answer texts are single unique tokens per
intended cluster, so Rouge-L clustering at the default threshold recovers
the intended cluster sizes exactly and the trials measure the calibration
machinery rather than text artifacts.  Cluster-size compositions are
randomized so the induced scores take many distinct values; heavy score
atoms would distort strict-threshold coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .calibration import (
    CalibrationConfig,
    ScoringConfig,
    calibrate_scored,
    score_calibration_records,
)
from .clustering import answerability, cluster_answers
from .domains import (
    BALANCE_NONE,
    BALANCE_STRATEGIES,
    BalancePlan,
    build_balance_plan,
    compute_centroids,
    count_test_clusters,
    estimate_transition,
    invert_counts,
)
from .errors import DataError
from .evaluation import domain_count_error, evaluate
from .prediction import predict
from .records import Dataset, QuestionRecord

# Fragmentation bias of unanswerable questions' distractor compositions.
_UNANSWERABLE_SPLIT_RATE = 0.45
_ANSWERABLE_SPLIT_RATE = 0.5


@dataclass(frozen=True)
class SyntheticDomainSpec:
    """Generative knobs for one domain.

    ``difficulty`` scales down the ground-truth cluster's expected frequency
    share (0 = the model always answers identically and correctly);
    ``spread`` is the isotropic embedding noise scale around
    ``centroid_mean``.
    """

    domain: str
    centroid_mean: tuple[float, ...]
    spread: float
    answerable_rate: float
    difficulty: float
    samples: int

    def validate(self) -> "SyntheticDomainSpec":
        if self.spread <= 0.0:
            raise DataError(f"spread must be positive, got {self.spread}")
        if not 0.0 <= self.answerable_rate <= 1.0:
            raise DataError("answerable_rate must be in [0, 1]")
        if not 0.0 <= self.difficulty <= 1.0:
            raise DataError("difficulty must be in [0, 1]")
        if self.samples < 2:
            raise DataError("samples per question must be >= 2")
        if len(self.centroid_mean) < 2:
            raise DataError("centroid_mean must have dimension >= 2")
        return self


@dataclass(frozen=True)
class ScenarioConfig:
    """A full Monte Carlo experiment description.

    ``calibration_mix`` and ``test_mix`` give exact per-domain record counts;
    ``cluster_mix`` defaults to the calibration mix.  All (alpha, mode,
    balance) combinations are evaluated on the same per-trial datasets.
    """

    domains: tuple[SyntheticDomainSpec, ...]
    calibration_mix: Mapping[str, int]
    test_mix: Mapping[str, int]
    alphas: tuple[float, ...]
    trials: int
    seed: int
    modes: tuple[str, ...] = ("ar",)
    balances: tuple[str, ...] = (BALANCE_NONE,)
    cluster_mix: Mapping[str, int] | None = None
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    grid_points: int = 20
    resample_target: int | None = None

    def validate(self) -> "ScenarioConfig":
        if not self.domains:
            raise DataError("scenario needs at least one domain spec")
        for spec in self.domains:
            spec.validate()
        if self.trials < 1:
            raise DataError("trials must be >= 1")
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise DataError(f"alpha must be in (0, 1), got {a}")
        for b in self.balances:
            if b not in BALANCE_STRATEGIES:
                raise DataError(f"unknown balance strategy {b!r}")
        for mixname, mix in (("calibration_mix", self.calibration_mix),
                             ("test_mix", self.test_mix)):
            if sum(mix.values()) <= 0:
                raise DataError(f"{mixname} must select at least one record")
            if any(v < 0 for v in mix.values()):
                raise DataError(f"{mixname} has negative counts")
        return self


@dataclass(frozen=True)
class TrialRow:
    alpha: float
    mode: str
    balance: str
    mean_coverage: float
    coverage_se: float
    mean_efficiency: float
    mean_delta: float | None


@dataclass(frozen=True)
class TrialStats:
    rows: tuple[TrialRow, ...]


def _compose_sizes(rng: np.random.Generator, m: int, answerable: bool,
                   difficulty: float) -> tuple[list[int], int | None]:
    """Draw a cluster-size composition; returns (sizes, truth_index).

    The ground-truth cluster frequency is Binomial(m, 1 - difficulty * U);
    the remainder is split into a random number of distractor clusters with a
    uniformly random composition.  Unanswerable questions get distractors
    only, biased toward fragmented (high-entropy) compositions.
    """
    if answerable:
        p = 1.0 - difficulty * rng.random()
        truth_freq = int(rng.binomial(m, p))
    else:
        truth_freq = 0
    rest = m - truth_freq
    if rest == 0:
        return [truth_freq], 0
    if answerable:
        parts = 1 + int(rng.binomial(rest - 1, _ANSWERABLE_SPLIT_RATE)) if rest > 1 else 1
    else:
        # cap below `rest` so the all-singletons composition (an NE = 1 atom)
        # stays rare
        parts = 2 + int(rng.binomial(max(rest - 3, 0), _UNANSWERABLE_SPLIT_RATE))
        parts = min(parts, rest)
    if parts > 1:
        cuts = np.sort(rng.choice(rest - 1, size=parts - 1, replace=False)) + 1
        bounds = np.concatenate(([0], cuts, [rest]))
        sizes = list(np.diff(bounds).astype(int))
    else:
        sizes = [rest]
    if truth_freq > 0:
        return [truth_freq] + sizes, 0
    return sizes, None


def generate_dataset(specs: Sequence[SyntheticDomainSpec],
                     mix: Mapping[str, int],
                     seed: int | Sequence[int],
                     role: str = "test") -> Dataset:
    """Generate a dataset with exact per-domain counts from ``mix``.

    Deterministic given ``seed``; record order is shuffled.  Records keep
    their true domain label (synthetic evaluation uses it; the estimation
    path never reads it from test data).
    """
    by_domain = {s.domain: s.validate() for s in specs}
    unknown = set(mix) - set(by_domain)
    if unknown:
        raise DataError(f"mix references unknown domains: {sorted(unknown)}")
    m_values = {s.samples for s in specs}
    if len(m_values) != 1:
        raise DataError("all domain specs must share the samples count")
    dims = {len(s.centroid_mean) for s in specs}
    if len(dims) != 1:
        raise DataError("all domain specs must share the embedding dimension")
    m = m_values.pop()

    rng = np.random.default_rng(seed)
    records: list[QuestionRecord] = []
    qi = 0
    for spec in specs:
        count = int(mix.get(spec.domain, 0))
        mean = np.asarray(spec.centroid_mean, dtype=float)
        for _ in range(count):
            answerable = rng.random() < spec.answerable_rate
            sizes, truth_index = _compose_sizes(rng, m, answerable, spec.difficulty)
            truth_token = f"t{qi}"
            samples: list[str] = []
            for c, size in enumerate(sizes):
                token = truth_token if c == truth_index else f"d{qi}x{c}"
                samples.extend([token] * size)
            order = rng.permutation(m)
            samples = [samples[i] for i in order]
            embedding = mean + spec.spread * rng.standard_normal(mean.size)
            records.append(QuestionRecord(
                id=f"{role}-{qi}",
                question=f"q{qi}",
                ground_truths=(truth_token,),
                samples=tuple(samples),
                embedding=tuple(float(v) for v in embedding),
                domain=spec.domain,
            ))
            qi += 1
    if not records:
        raise DataError("mix selected no records")
    shuffle = rng.permutation(len(records))
    records = [records[i] for i in shuffle]
    return Dataset(records=tuple(records), m=m, dim=len(records[0].embedding),
                   role=role)


def run_trials(scenario: ScenarioConfig) -> TrialStats:
    """Run the full pipeline over fresh datasets per trial and aggregate.

    Each trial draws cluster-split, calibration, and test datasets from
    seed-derived streams, estimates the domain mixture once, then calibrates
    and evaluates every (alpha, mode, balance) combination on the shared
    data.  Results are means and standard errors across trials.
    """
    scenario.validate()
    cluster_mix = scenario.cluster_mix or scenario.calibration_mix
    combos = [(a, mode, bal) for a in scenario.alphas for mode in scenario.modes
              for bal in scenario.balances]
    coverage: dict[tuple, list[float]] = {c: [] for c in combos}
    efficiency: dict[tuple, list[float]] = {c: [] for c in combos}
    deltas: list[float] = []
    need_estimate = any(b != BALANCE_NONE for b in scenario.balances) \
        or len(scenario.domains) > 1

    for trial in range(scenario.trials):
        cal_ds = generate_dataset(scenario.domains, scenario.calibration_mix,
                                  seed=(scenario.seed, trial, 1),
                                  role="calibration")
        test_ds = generate_dataset(scenario.domains, scenario.test_mix,
                                   seed=(scenario.seed, trial, 2), role="test")
        scored = score_calibration_records(cal_ds, scenario.scoring)
        clusterings = []
        labels = []
        for rec in test_ds.records:
            clustered = cluster_answers(rec.samples, scenario.scoring.cluster_threshold)
            clusterings.append(clustered)
            labels.append(answerability(clustered, rec.samples, rec.ground_truths,
                                        scenario.scoring.match_mode))

        estimate = None
        if need_estimate:
            cluster_ds = generate_dataset(scenario.domains, cluster_mix,
                                          seed=(scenario.seed, trial, 0),
                                          role="cluster-split")
            centroids = compute_centroids(cluster_ds)
            transition = estimate_transition(cal_ds, centroids)
            observed = count_test_clusters(test_ds, centroids)
            estimate = invert_counts(transition, observed)
            if len(scenario.domains) > 1:
                true_counts = {d: 0.0 for d in estimate.domains}
                for rec in test_ds.records:
                    true_counts[rec.domain] += 1.0
                deltas.append(domain_count_error(true_counts, estimate).mean)

        for balance in scenario.balances:
            if balance == BALANCE_NONE or estimate is None:
                plan = BalancePlan(strategy=BALANCE_NONE)
            else:
                plan = build_balance_plan(
                    estimate, cal_ds, balance,
                    target_size=scenario.resample_target,
                    seed=(scenario.seed, trial, 3))
            for mode in scenario.modes:
                for alpha in scenario.alphas:
                    config = CalibrationConfig(
                        alpha=alpha, mode=mode, grid_points=scenario.grid_points,
                        scoring=scenario.scoring, seed=scenario.seed)
                    artifact = calibrate_scored(scored, config, plan, m=cal_ds.m)
                    outcomes = [predict(cl, artifact) for cl in clusterings]
                    report = evaluate(outcomes, test_ds.records, labels,
                                      match_mode=scenario.scoring.match_mode)
                    coverage[(alpha, mode, balance)].append(report.coverage)
                    efficiency[(alpha, mode, balance)].append(report.efficiency)

    mean_delta = float(np.mean(deltas)) if deltas else None
    rows = []
    for combo in combos:
        covs = np.asarray(coverage[combo])
        se = float(np.std(covs, ddof=1) / math.sqrt(len(covs))) if len(covs) > 1 else 0.0
        rows.append(TrialRow(
            alpha=combo[0], mode=combo[1], balance=combo[2],
            mean_coverage=float(covs.mean()), coverage_se=se,
            mean_efficiency=float(np.mean(efficiency[combo])),
            mean_delta=mean_delta))
    return TrialStats(rows=tuple(rows))
