"""Conformal prediction sets for sampled open-ended QA answers.

Calibrates adaptive-rejection prediction sets from precomputed model answer
samples, corrects for unknown domain shift between calibration and test data
via confusion-matrix count inversion, and ships a synthetic Monte Carlo
harness that verifies the coverage and efficiency guarantees.
"""

from .calibration import (
    CalibrationArtifact,
    CalibrationConfig,
    ConformalQuantiles,
    GridSearchResult,
    ScoredCalibrationItem,
    ScoringConfig,
    alpha1_from_alpha0,
    answer_quantile,
    calibrate,
    calibrate_scored,
    conformal_quantile,
    grid_search,
    load_artifact,
    reject_quantiles,
    rejection_case,
    save_artifact,
    score_calibration_records,
    weighted_quantile,
)
from .clustering import (
    AnswerabilityLabel,
    AnswerCluster,
    ClusteredAnswers,
    answerability,
    cluster_answers,
    cluster_nonconformity,
    nonconformity_score,
    normalize_answer,
    normalized_entropy,
    rouge_l,
)
from .domains import (
    BalancePlan,
    DomainCentroid,
    DomainCountEstimate,
    TransitionMatrix,
    assign_domain,
    build_balance_plan,
    compute_centroids,
    count_test_clusters,
    domain_balance_weights,
    estimate_transition,
    invert_counts,
)
from .errors import DataError, NumericalError, UsageError
from .evaluation import (
    DomainErrorReport,
    EvalReport,
    domain_count_error,
    evaluate,
    is_covered,
)
from .prediction import PredictionOutcome, predict, predict_dataset
from .records import (
    Dataset,
    QuestionRecord,
    parse_dataset,
    serialize_dataset,
    split_buffer,
    write_dataset,
)
from .synthetic import (
    ScenarioConfig,
    SyntheticDomainSpec,
    TrialRow,
    TrialStats,
    generate_dataset,
    run_trials,
)

__version__ = "0.1.0"
