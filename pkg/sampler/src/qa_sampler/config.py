"""Harvest configuration: endpoints, sampling parameters, retry policy."""

from __future__ import annotations

import os
from dataclasses import dataclass

DEFAULT_PROMPT_TEMPLATE = (
    "Answer the question with a short answer.\n"
    "Question: {question}\n"
    "Answer:"
)


@dataclass(frozen=True)
class RetryPolicy:
    """Per-request retries with exponential backoff (seconds)."""

    max_retries: int = 3
    backoff: float = 0.5

    def delay(self, attempt: int) -> float:
        return self.backoff * (2.0 ** attempt)


@dataclass(frozen=True)
class SamplerConfig:
    """Everything one harvest run needs.

    ``samples_per_question`` is the number of independent chat completions
    collected per question.  The sampling parameters default to a
    high-temperature diverse-sampling setup (temperature 1.2, top-p 0.9,
    top-k 100, repetition penalty 1.0).  Bearer tokens are read from the
    environment variable named by ``api_key_env`` at request time.
    """

    chat_url: str
    chat_model: str
    embedding_url: str
    embedding_model: str
    samples_per_question: int = 10
    temperature: float = 1.2
    top_p: float = 0.9
    top_k: int = 100
    repetition_penalty: float = 1.0
    max_concurrency: int = 4
    retry: RetryPolicy = RetryPolicy()
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    api_key_env: str = "QA_SAMPLER_API_KEY"
    max_tokens: int = 64
    timeout: float = 60.0

    def validate(self) -> "SamplerConfig":
        if self.samples_per_question < 2:
            raise ValueError("samples_per_question must be >= 2")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.retry.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if "{question}" not in self.prompt_template:
            raise ValueError("prompt_template must contain {question}")
        return self

    def auth_headers(self) -> dict[str, str]:
        token = os.environ.get(self.api_key_env)
        return {"Authorization": f"Bearer {token}"} if token else {}
