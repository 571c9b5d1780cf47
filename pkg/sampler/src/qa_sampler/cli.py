"""Command line for harvest runs."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .client import HarvestError, harvest
from .config import RetryPolicy, SamplerConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qa-sampler",
        description="Sample an LLM repeatedly per question and emit "
                    "engine-ready JSONL")
    parser.add_argument("--questions", required=True,
                        help="CSV or JSONL of (id, question, ground_truths[, domain])")
    parser.add_argument("--output", required=True)
    parser.add_argument("--rejects", default=None)
    parser.add_argument("--chat-url", required=True)
    parser.add_argument("--chat-model", required=True)
    parser.add_argument("--embedding-url", required=True)
    parser.add_argument("--embedding-model", required=True)
    parser.add_argument("--samples", type=int, default=10,
                        help="completions per question (default 10)")
    parser.add_argument("--temperature", type=float, default=1.2)
    parser.add_argument("--top-p", type=float, default=0.9)
    parser.add_argument("--top-k", type=int, default=100)
    parser.add_argument("--repetition-penalty", type=float, default=1.0)
    parser.add_argument("--concurrency", type=int, default=4)
    parser.add_argument("--max-retries", type=int, default=3)
    parser.add_argument("--backoff", type=float, default=0.5)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = SamplerConfig(
        chat_url=args.chat_url,
        chat_model=args.chat_model,
        embedding_url=args.embedding_url,
        embedding_model=args.embedding_model,
        samples_per_question=args.samples,
        temperature=args.temperature,
        top_p=args.top_p,
        top_k=args.top_k,
        repetition_penalty=args.repetition_penalty,
        max_concurrency=args.concurrency,
        retry=RetryPolicy(max_retries=args.max_retries, backoff=args.backoff),
    )
    try:
        result = harvest(args.questions, config, args.output, args.rejects)
    except (HarvestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"harvested {result.harvested} questions -> {result.output_path} "
          f"({result.rejected} rejected -> {result.rejects_path})")
    return 0 if result.rejected == 0 else 2


if __name__ == "__main__":
    sys.exit(main())
