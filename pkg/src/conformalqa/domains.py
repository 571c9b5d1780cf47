"""Domain-shift estimation from question embeddings.

Builds per-domain centroids from a held-out cluster split, assigns questions
to domains by cosine similarity, estimates the assignment confusion matrix on
labeled calibration data, inverts it to recover true test-domain counts, and
turns the counts into a resampling or reweighting plan for calibration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, NumericalError
from .records import Dataset

BALANCE_NONE = "none"
BALANCE_RESAMPLE = "resample"
BALANCE_REWEIGHT = "reweight"
BALANCE_STRATEGIES = (BALANCE_NONE, BALANCE_RESAMPLE, BALANCE_REWEIGHT)

# Condition number above which the count inversion is considered unreliable.
MAX_CONDITION = 1e6

# Floor for reweighting so estimated-empty domains keep strictly positive
# weights (a zero weight would drop the record from weighted quantiles).
MIN_WEIGHT = 1e-12


@dataclass(frozen=True)
class DomainCentroid:
    """Unit-norm mean embedding of one domain's cluster-split questions."""

    domain: str
    vector: np.ndarray


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic assignment confusion matrix.

    ``p[i, j]`` is the fraction of true-domain-``i`` calibration questions
    assigned to domain ``j``; rows follow ``domains`` order.
    """

    domains: tuple[str, ...]
    p: np.ndarray


@dataclass(frozen=True)
class DomainCountEstimate:
    """Observed assignment counts and the inversion-corrected estimates."""

    domains: tuple[str, ...]
    observed: np.ndarray
    estimated: np.ndarray
    conditioning: float
    fallback_used: bool


@dataclass(frozen=True)
class BalancePlan:
    """How calibration data is adjusted toward the estimated test mixture."""

    strategy: str
    resample_ids: tuple[str, ...] | None = None
    weights: Mapping[str, float] | None = None
    domain_weights: Mapping[str, float] | None = None


def _embedding_matrix(dataset: Dataset, what: str) -> np.ndarray:
    rows = []
    for rec in dataset.records:
        if rec.embedding is None:
            raise DataError(f"{what}: record {rec.id!r} has no embedding")
        rows.append(rec.embedding)
    return np.asarray(rows, dtype=float)


def compute_centroids(cluster_split: Dataset) -> list[DomainCentroid]:
    """Per-domain mean embedding, L2-normalized.

    Every record must carry an embedding and a domain label; domains are
    ordered by sorted label.
    """
    groups: dict[str, list[np.ndarray]] = {}
    for rec in cluster_split.records:
        if rec.domain is None:
            raise DataError(f"cluster split: record {rec.id!r} has no domain label")
        if rec.embedding is None:
            raise DataError(f"cluster split: record {rec.id!r} has no embedding")
        groups.setdefault(rec.domain, []).append(np.asarray(rec.embedding, dtype=float))
    if not groups:
        raise DataError("cluster split is empty")
    centroids = []
    for domain in sorted(groups):
        mean = np.mean(groups[domain], axis=0)
        norm = float(np.linalg.norm(mean))
        if norm <= 0.0:
            raise NumericalError(f"domain {domain!r} has a zero-norm mean embedding")
        centroids.append(DomainCentroid(domain=domain, vector=mean / norm))
    return centroids


def _centroid_matrix(centroids: Sequence[DomainCentroid]) -> np.ndarray:
    if not centroids:
        raise DataError("no centroids given")
    return np.stack([c.vector for c in centroids])


def _assign_indices(embeddings: np.ndarray,
                    centroids: Sequence[DomainCentroid]) -> np.ndarray:
    cmat = _centroid_matrix(centroids)
    norms = np.linalg.norm(embeddings, axis=1)
    if np.any(norms <= 0.0):
        bad = int(np.argmin(norms))
        raise NumericalError(f"zero-norm query embedding at position {bad}")
    sims = (embeddings / norms[:, None]) @ cmat.T
    # argmax takes the first maximum, i.e. ties break by centroid order
    return np.argmax(sims, axis=1)


def assign_domain(embedding: Sequence[float] | np.ndarray,
                  centroids: Sequence[DomainCentroid]) -> str:
    """Domain whose centroid has the highest cosine similarity with the
    query embedding; ties break toward the first-listed centroid."""
    emb = np.asarray(embedding, dtype=float).reshape(1, -1)
    idx = _assign_indices(emb, centroids)[0]
    return centroids[idx].domain


def estimate_transition(calibration: Dataset,
                        centroids: Sequence[DomainCentroid]) -> TransitionMatrix:
    """Empirical distribution of assigned domains per true domain.

    Row ``i`` of the result is the assignment histogram of calibration
    questions whose true domain is ``domains[i]``, normalized to sum to 1.
    """
    domains = tuple(c.domain for c in centroids)
    index = {d: i for i, d in enumerate(domains)}
    counts = np.zeros((len(domains), len(domains)))
    embeddings = _embedding_matrix(calibration, "calibration")
    assigned = _assign_indices(embeddings, centroids)
    for rec, j in zip(calibration.records, assigned):
        if rec.domain is None:
            raise DataError(f"calibration record {rec.id!r} has no domain label")
        i = index.get(rec.domain)
        if i is None:
            raise DataError(
                f"calibration record {rec.id!r} has domain {rec.domain!r} "
                f"with no centroid")
        counts[i, int(j)] += 1.0
    row_sums = counts.sum(axis=1)
    empty = np.nonzero(row_sums == 0)[0]
    if empty.size:
        raise DataError(f"domain {domains[int(empty[0])]!r} has no calibration records")
    return TransitionMatrix(domains=domains, p=counts / row_sums[:, None])


def count_test_clusters(test: Dataset,
                        centroids: Sequence[DomainCentroid]) -> np.ndarray:
    """Histogram of nearest-centroid assignments over the test set."""
    if not test.records:
        return np.zeros(len(centroids))
    embeddings = _embedding_matrix(test, "test")
    assigned = _assign_indices(embeddings, centroids)
    return np.bincount(assigned, minlength=len(centroids)).astype(float)


def invert_counts(transition: TransitionMatrix,
                  observed: Sequence[float] | np.ndarray) -> DomainCountEstimate:
    """Recover true test-domain counts from observed assignment counts.

    Solves ``P^T n_hat = n_obs``.  When the solution has negative entries or
    ``P^T`` is ill-conditioned, negatives are clipped to zero and the vector
    rescaled to preserve the observed total; if the solve fails outright the
    observed counts are returned as-is.  Either recovery path sets
    ``fallback_used``.
    """
    obs = np.asarray(observed, dtype=float)
    k = len(transition.domains)
    if obs.shape != (k,):
        raise DataError(
            f"observed counts have shape {obs.shape}, expected ({k},)")
    pt = transition.p.T
    cond = float(np.linalg.cond(pt))
    fallback = False
    try:
        est = np.linalg.solve(pt, obs)
    except np.linalg.LinAlgError:
        return DomainCountEstimate(
            domains=transition.domains, observed=obs, estimated=obs.copy(),
            conditioning=cond, fallback_used=True)
    if np.any(est < 0.0) or not np.isfinite(cond) or cond > MAX_CONDITION:
        fallback = True
        est = np.clip(est, 0.0, None)
        total = est.sum()
        if total > 0.0:
            est = est * (obs.sum() / total)
        else:
            est = obs.copy()
    return DomainCountEstimate(
        domains=transition.domains, observed=obs, estimated=est,
        conditioning=cond, fallback_used=fallback)


def _calibration_groups(calibration: Dataset,
                        domains: Sequence[str]) -> dict[str, list[str]]:
    known = set(domains)
    groups: dict[str, list[str]] = {d: [] for d in domains}
    for rec in calibration.records:
        if rec.domain is None:
            raise DataError(f"calibration record {rec.id!r} has no domain label")
        if rec.domain not in known:
            raise DataError(
                f"calibration record {rec.id!r} has domain {rec.domain!r} "
                f"outside the estimated domains")
        groups[rec.domain].append(rec.id)
    return groups


def domain_balance_weights(estimate: DomainCountEstimate, calibration: Dataset,
                           literal: bool = False) -> dict[str, float]:
    """Per-domain calibration weights for the estimated test mixture.

    Default is the density-ratio form, estimated test share over calibration
    share, so an unshifted mixture yields unit weights.  ``literal=True``
    instead uses the raw estimated test share of the record's domain.
    """
    groups = _calibration_groups(calibration, estimate.domains)
    total_est = float(estimate.estimated.sum())
    if total_est <= 0.0:
        raise NumericalError("estimated domain counts sum to zero")
    n_cal = len(calibration.records)
    weights: dict[str, float] = {}
    for d, est in zip(estimate.domains, estimate.estimated):
        share = float(est) / total_est
        if literal:
            weights[d] = max(share, MIN_WEIGHT)
            continue
        n_k = len(groups[d])
        if share > 0.0 and n_k == 0:
            raise DataError(
                f"domain {d!r} has estimated test mass but no calibration records")
        if n_k == 0:
            weights[d] = MIN_WEIGHT
        else:
            weights[d] = max(share / (n_k / n_cal), MIN_WEIGHT)
    return weights


def build_balance_plan(estimate: DomainCountEstimate, calibration: Dataset,
                       strategy: str, target_size: int | None = None,
                       seed: int | Sequence[int] | None = None,
                       literal_weights: bool = False) -> BalancePlan:
    """Turn estimated test-domain counts into a calibration adjustment.

    ``resample`` draws ``target_size`` record ids (default: the calibration
    size) with replacement so each domain's expected share matches its
    estimated test share; deterministic given ``seed``.  ``reweight`` attaches
    a positive weight to every calibration record via
    :func:`domain_balance_weights`.
    """
    if strategy not in BALANCE_STRATEGIES:
        raise DataError(f"unknown balance strategy {strategy!r}")
    if strategy == BALANCE_NONE:
        return BalancePlan(strategy=BALANCE_NONE)
    if strategy == BALANCE_REWEIGHT:
        per_domain = domain_balance_weights(estimate, calibration,
                                            literal=literal_weights)
        weights = {rec.id: per_domain[rec.domain] for rec in calibration.records}
        return BalancePlan(strategy=BALANCE_REWEIGHT, weights=weights,
                           domain_weights=per_domain)

    groups = _calibration_groups(calibration, estimate.domains)
    total_est = float(estimate.estimated.sum())
    if total_est <= 0.0:
        raise NumericalError("estimated domain counts sum to zero")
    shares = estimate.estimated / total_est
    for d, share in zip(estimate.domains, shares):
        if share > 0.0 and not groups[d]:
            raise DataError(
                f"domain {d!r} has estimated test mass but no calibration records")
    size = len(calibration.records) if target_size is None else int(target_size)
    if size <= 0:
        raise DataError(f"resample target size must be positive, got {size}")
    rng = np.random.default_rng(seed)
    domain_draws = rng.choice(len(shares), size=size, p=shares)
    ids: list[str] = []
    for j in domain_draws:
        pool = groups[estimate.domains[int(j)]]
        ids.append(pool[int(rng.integers(len(pool)))])
    return BalancePlan(strategy=BALANCE_RESAMPLE, resample_ids=tuple(ids))
