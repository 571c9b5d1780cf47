"""Command-line pipeline: validate, calibrate, predict, evaluate, simulate.

Flags may come from a plain ``key = value`` config file (``--config``);
command-line flags win.  Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.  Errors print one machine-parsable line to stderr:
``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

from .calibration import (
    CalibrationConfig,
    MODES,
    ScoringConfig,
    calibrate,
    load_artifact,
    save_artifact,
)
from .clustering import MATCH_MODES, SCORE_MODES
from .domains import (
    BALANCE_NONE,
    BALANCE_STRATEGIES,
    BalancePlan,
    build_balance_plan,
    compute_centroids,
    count_test_clusters,
    domain_balance_weights,
    estimate_transition,
    invert_counts,
)
from .errors import DataError, NumericalError, UsageError
from .evaluation import evaluate
from .prediction import predict_dataset
from .records import parse_dataset
from .synthetic import ScenarioConfig, SyntheticDomainSpec, run_trials

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the contract here is exit 1
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise UsageError(message)


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse a ``key = value`` config document; '#' starts a comment."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc.strerror}") from None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {line_no}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


_CONFIG_KEYS = ("alpha", "mode", "balance", "cluster_threshold", "score_mode",
                "no_match_score", "match_mode", "grid_points", "resample_target",
                "seed", "literal_weights", "calibration", "cluster_split",
                "test", "artifact", "output")


def _merge_config(args: argparse.Namespace) -> dict[str, str]:
    merged: dict[str, str] = {}
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
        unknown = set(file_values) - set(_CONFIG_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_values)
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = str(value)
    return merged


def _require(cfg: dict[str, str], key: str) -> str:
    if key not in cfg:
        raise UsageError(f"missing required option --{key.replace('_', '-')}")
    return cfg[key]


def _parse_float(cfg: dict[str, str], key: str, default: float) -> float:
    if key not in cfg:
        return default
    try:
        return float(cfg[key])
    except ValueError:
        raise UsageError(f"option {key} must be a number, got {cfg[key]!r}") from None


def _parse_int(cfg: dict[str, str], key: str, default: int) -> int:
    if key not in cfg:
        return default
    try:
        return int(cfg[key])
    except ValueError:
        raise UsageError(f"option {key} must be an integer, got {cfg[key]!r}") from None


def _single_alpha(cfg: dict[str, str]) -> float:
    raw = cfg.get("alpha", "0.1")
    if "," in raw:
        raise UsageError("this command takes a single alpha")
    try:
        return float(raw)
    except ValueError:
        raise UsageError(f"alpha must be a number, got {raw!r}") from None


def _scoring_config(cfg: dict[str, str]) -> ScoringConfig:
    score_mode = cfg.get("score_mode", "frequency-minus-ne")
    if score_mode not in SCORE_MODES:
        raise UsageError(f"score_mode must be one of {SCORE_MODES}")
    match_mode = cfg.get("match_mode", "exact")
    if match_mode not in MATCH_MODES:
        raise UsageError(f"match_mode must be one of {MATCH_MODES}")
    return ScoringConfig(
        cluster_threshold=_parse_float(cfg, "cluster_threshold", 0.7),
        score_mode=score_mode,
        no_match_score=_parse_float(cfg, "no_match_score", 1.0),
        match_mode=match_mode,
    )


def _load(cfg: dict[str, str], key: str, role: str):
    return parse_dataset(_require(cfg, key), role=role)


def _build_plan(cfg: dict[str, str], calibration) -> BalancePlan:
    strategy = cfg.get("balance", BALANCE_NONE)
    if strategy not in BALANCE_STRATEGIES:
        raise UsageError(f"balance must be one of {BALANCE_STRATEGIES}")
    if strategy == BALANCE_NONE:
        return BalancePlan(strategy=BALANCE_NONE)
    cluster_ds = _load(cfg, "cluster_split", "cluster-split")
    test_ds = _load(cfg, "test", "test")
    centroids = compute_centroids(cluster_ds)
    transition = estimate_transition(calibration, centroids)
    estimate = invert_counts(transition, count_test_clusters(test_ds, centroids))
    target_raw = cfg.get("resample_target", "auto")
    target = None if target_raw == "auto" else int(target_raw)
    return build_balance_plan(
        estimate, calibration, strategy, target_size=target,
        seed=_parse_int(cfg, "seed", 0),
        literal_weights=cfg.get("literal_weights", "false").lower() == "true")


def _cmd_validate(args) -> int:
    cfg = _merge_config(args)
    path = args.data or cfg.get("test")
    if not path:
        raise UsageError("missing required option --data")
    ds = parse_dataset(path, role="test")
    domains = ds.domains()
    embedded = sum(1 for r in ds.records if r.embedding is not None)
    print(f"ok: {len(ds)} records, {ds.m} samples per question, "
          f"embedding dim {ds.dim if ds.dim is not None else 'none'}, "
          f"{embedded} embedded, domains: {', '.join(domains) if domains else 'none'}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = _merge_config(args)
    calibration = _load(cfg, "calibration", "calibration")
    plan = _build_plan(cfg, calibration)
    mode = cfg.get("mode", "ar")
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    config = CalibrationConfig(
        alpha=_single_alpha(cfg), mode=mode,
        grid_points=_parse_int(cfg, "grid_points", 20),
        scoring=_scoring_config(cfg), seed=_parse_int(cfg, "seed", 0))
    artifact = calibrate(calibration, config, plan)
    out = _require(cfg, "artifact")
    save_artifact(artifact, out)
    q = artifact.quantiles
    print(f"calibrated mode={artifact.mode} alpha={q.alpha} alpha0={q.alpha0:.6g} "
          f"alpha1={q.alpha1:.6g} answerable_rate={q.answerable_rate:.4f} -> {out}")
    return EXIT_OK


def _cmd_estimate_domains(args) -> int:
    cfg = _merge_config(args)
    calibration = _load(cfg, "calibration", "calibration")
    cluster_ds = _load(cfg, "cluster_split", "cluster-split")
    test_ds = _load(cfg, "test", "test")
    centroids = compute_centroids(cluster_ds)
    transition = estimate_transition(calibration, centroids)
    estimate = invert_counts(transition, count_test_clusters(test_ds, centroids))
    literal = cfg.get("literal_weights", "false").lower() == "true"
    weights = domain_balance_weights(estimate, calibration, literal=literal)
    n_cal = len(calibration.records)
    cal_counts = {d: 0 for d in estimate.domains}
    for rec in calibration.records:
        cal_counts[rec.domain] += 1
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["domain", "observed", "estimated", "calibration_share", "weight"])
    for i, d in enumerate(estimate.domains):
        writer.writerow([d, f"{estimate.observed[i]:.6g}",
                         f"{estimate.estimated[i]:.6g}",
                         f"{cal_counts[d] / n_cal:.6g}", f"{weights[d]:.6g}"])
    out = cfg.get("output")
    if out:
        Path(out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    if estimate.fallback_used:
        print(f"note: inversion fallback used (condition {estimate.conditioning:.3g})",
              file=sys.stderr)
    return EXIT_OK


def _cmd_predict(args) -> int:
    cfg = _merge_config(args)
    artifact = load_artifact(_require(cfg, "artifact"))
    test_ds = _load(cfg, "test", "test")
    outcomes, _, _ = predict_dataset(test_ds, artifact)
    out = _require(cfg, "output")
    with open(out, "w", encoding="utf-8") as fh:
        for rec, outcome in zip(test_ds.records, outcomes):
            fh.write(json.dumps({
                "id": rec.id,
                "kind": outcome.kind,
                "clusters": [c.representative for c in outcome.clusters],
                "includes_cant_answer": outcome.includes_cant_answer,
                "p0": outcome.p0,
                "cluster_scores": list(outcome.cluster_scores),
            }) + "\n")
    print(f"predicted {len(outcomes)} records -> {out}")
    return EXIT_OK


_EVAL_COLUMNS = ["alpha", "mode", "balance", "domain", "coverage", "efficiency",
                 "unanswerable_efficiency", "rejection_rate", "n"]


def _cmd_evaluate(args) -> int:
    cfg = _merge_config(args)
    artifact = load_artifact(_require(cfg, "artifact"))
    test_ds = _load(cfg, "test", "test")
    outcomes, labels, _ = predict_dataset(test_ds, artifact)
    report = evaluate(outcomes, test_ds.records, labels,
                      match_mode=artifact.scoring.match_mode)
    balance = artifact.balance.get("strategy", BALANCE_NONE)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(_EVAL_COLUMNS)
    une = ("" if report.unanswerable_efficiency is None
           else f"{report.unanswerable_efficiency:.6g}")
    writer.writerow([artifact.quantiles.alpha, artifact.mode, balance, "overall",
                     f"{report.coverage:.6g}", f"{report.efficiency:.6g}",
                     une, f"{report.rejection_rate:.6g}", report.n_evaluated])
    for domain, (cov, eff, count) in report.per_domain.items():
        writer.writerow([artifact.quantiles.alpha, artifact.mode, balance, domain,
                         f"{cov:.6g}", f"{eff:.6g}", "", "", count])
    out = cfg.get("output")
    if out:
        Path(out).write_text(buf.getvalue(), encoding="utf-8")
        print(f"evaluated {report.n_evaluated} records -> {out}")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _scenario_from_json(path: str | Path) -> ScenarioConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read scenario file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed scenario JSON: {exc.msg}") from None

    def aslist(value) -> list:
        return value if isinstance(value, list) else [value]

    try:
        specs = tuple(SyntheticDomainSpec(
            domain=d["domain"],
            centroid_mean=tuple(float(v) for v in d["centroid_mean"]),
            spread=float(d["spread"]),
            answerable_rate=float(d["answerable_rate"]),
            difficulty=float(d["difficulty"]),
            samples=int(d["samples"]),
        ) for d in obj["domains"])
        scoring_obj = obj.get("scoring", {})
        return ScenarioConfig(
            domains=specs,
            calibration_mix={k: int(v) for k, v in obj["calibration_mix"].items()},
            test_mix={k: int(v) for k, v in obj["test_mix"].items()},
            cluster_mix=({k: int(v) for k, v in obj["cluster_mix"].items()}
                         if "cluster_mix" in obj else None),
            alphas=tuple(float(a) for a in aslist(obj["alphas"])),
            trials=int(obj["trials"]),
            seed=int(obj["seed"]),
            modes=tuple(aslist(obj.get("modes", obj.get("mode", "ar")))),
            balances=tuple(aslist(obj.get("balances", obj.get("balance", "none")))),
            scoring=ScoringConfig(**scoring_obj),
            grid_points=int(obj.get("grid_points", 20)),
            resample_target=(int(obj["resample_target"])
                             if "resample_target" in obj else None),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid scenario config: {exc}") from None


def _cmd_simulate(args) -> int:
    cfg = _merge_config(args)
    if not args.scenario:
        raise UsageError("missing required option --scenario")
    scenario = _scenario_from_json(args.scenario)
    stats = run_trials(scenario)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["alpha", "mode", "balance", "mean_coverage", "coverage_se",
                     "mean_efficiency", "mean_delta", "trials"])
    for row in stats.rows:
        writer.writerow([row.alpha, row.mode, row.balance,
                         f"{row.mean_coverage:.6g}", f"{row.coverage_se:.6g}",
                         f"{row.mean_efficiency:.6g}",
                         "" if row.mean_delta is None else f"{row.mean_delta:.6g}",
                         scenario.trials])
    out = cfg.get("output")
    if out:
        Path(out).write_text(buf.getvalue(), encoding="utf-8")
        print(f"simulated {scenario.trials} trials -> {out}")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _cmd_report(args) -> int:
    rows = []
    header: list[str] | None = None
    for path in args.inputs:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror}") from None
        reader = csv.reader(io.StringIO(text))
        this_header = next(reader, None)
        if this_header is None:
            raise DataError(f"{path}: empty CSV")
        if header is None:
            header = this_header
        elif this_header != header:
            raise DataError(f"{path}: column mismatch with earlier inputs")
        rows.extend(reader)
    if header is None:
        raise UsageError("no input CSV files given")
    key_idx = [header.index(k) for k in ("alpha", "mode", "balance") if k in header]
    rows.sort(key=lambda r: tuple(r[i] for i in key_idx))
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    if args.output:
        Path(args.output).write_text(buf.getvalue(), encoding="utf-8")
        print(f"merged {len(rows)} rows from {len(args.inputs)} files -> {args.output}")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file; flags override")
    parser.add_argument("--alpha")
    parser.add_argument("--mode")
    parser.add_argument("--balance")
    parser.add_argument("--cluster-threshold", dest="cluster_threshold")
    parser.add_argument("--score-mode", dest="score_mode")
    parser.add_argument("--no-match-score", dest="no_match_score")
    parser.add_argument("--match-mode", dest="match_mode")
    parser.add_argument("--grid-points", dest="grid_points")
    parser.add_argument("--resample-target", dest="resample_target")
    parser.add_argument("--seed")
    parser.add_argument("--literal-weights", dest="literal_weights")
    parser.add_argument("--calibration")
    parser.add_argument("--cluster-split", dest="cluster_split")
    parser.add_argument("--test")
    parser.add_argument("--artifact")
    parser.add_argument("--output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conformalqa",
                     description="Conformal prediction sets for sampled QA answers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a JSONL dataset against the schema")
    p.add_argument("--data", help="dataset to validate")
    _add_common(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("calibrate", help="calibrate thresholds into an artifact")
    _add_common(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("estimate-domains",
                       help="estimate test-domain counts and balance weights")
    _add_common(p)
    p.set_defaults(func=_cmd_estimate_domains)

    p = sub.add_parser("predict", help="apply an artifact to test data")
    _add_common(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="coverage/efficiency metrics CSV")
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("simulate", help="Monte Carlo trials from a scenario file")
    p.add_argument("--scenario", help="scenario JSON file")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("report", help="merge evaluate CSVs into one table")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
