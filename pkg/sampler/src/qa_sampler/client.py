"""Harvesting client: repeated chat completions plus one embedding per
question, written as engine-ready JSONL.

Each of the ``samples_per_question`` completions is an independent request,
retried individually, so one flaky response never discards the rest of a
question's samples.  Questions that exhaust retries go to a rejects file;
no input question is ever silently dropped.
"""

from __future__ import annotations

import csv
import io
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .config import SamplerConfig

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class HarvestError(Exception):
    """A request failed permanently (retries exhausted or bad payload)."""


@dataclass(frozen=True)
class QuestionInput:
    id: str
    question: str
    ground_truths: tuple[str, ...]
    domain: str | None = None


@dataclass(frozen=True)
class HarvestResult:
    """Where each input question ended up."""

    harvested: int
    rejected: int
    output_path: Path
    rejects_path: Path


def read_questions(path: str | Path) -> list[QuestionInput]:
    """Load questions from JSONL (keys id/question/ground_truths/domain) or
    CSV (columns id,question,ground_truths[,domain]; truths ';'-separated)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    questions: list[QuestionInput] = []
    seen: set[str] = set()

    def add(rid, question, truths, domain):
        if not rid or not question or not truths:
            raise HarvestError(
                f"{path}: question entries need id, question, ground_truths")
        if rid in seen:
            raise HarvestError(f"{path}: duplicate question id {rid!r}")
        seen.add(rid)
        questions.append(QuestionInput(
            id=str(rid), question=str(question),
            ground_truths=tuple(str(t) for t in truths),
            domain=str(domain) if domain else None))

    if path.suffix.lower() == ".csv":
        reader = csv.DictReader(io.StringIO(text))
        for row in reader:
            truths = [t for t in (row.get("ground_truths") or "").split(";") if t]
            add(row.get("id"), row.get("question"), truths, row.get("domain"))
    else:
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise HarvestError(f"{path} line {line_no}: {exc.msg}") from None
            add(obj.get("id"), obj.get("question"),
                obj.get("ground_truths") or [], obj.get("domain"))
    if not questions:
        raise HarvestError(f"{path}: no questions found")
    return questions


class _Requester:
    """Issues one HTTP request with per-request retries and backoff."""

    def __init__(self, client: httpx.Client, config: SamplerConfig,
                 sleep: Callable[[float], None] = time.sleep):
        self._client = client
        self._config = config
        self._sleep = sleep
        self._lock = threading.Lock()
        self.requests_sent = 0
        self.retries = 0

    def post_json(self, url: str, payload: dict) -> dict:
        policy = self._config.retry
        last_error: Exception | None = None
        for attempt in range(policy.max_retries + 1):
            if attempt > 0:
                with self._lock:
                    self.retries += 1
            with self._lock:
                self.requests_sent += 1
            try:
                response = self._client.post(
                    url, json=payload, headers=self._config.auth_headers(),
                    timeout=self._config.timeout)
            except httpx.HTTPError as exc:
                last_error = exc
                if attempt < policy.max_retries:
                    self._sleep(policy.delay(attempt))
                continue
            if response.status_code in RETRYABLE_STATUS:
                last_error = HarvestError(f"HTTP {response.status_code} from {url}")
                if attempt < policy.max_retries:
                    retry_after = response.headers.get("Retry-After")
                    delay = (float(retry_after) if retry_after
                             else policy.delay(attempt))
                    self._sleep(delay)
                continue
            if response.status_code != 200:
                raise HarvestError(
                    f"HTTP {response.status_code} from {url}: "
                    f"{response.text[:200]}")
            try:
                return response.json()
            except json.JSONDecodeError:
                raise HarvestError(f"non-JSON response from {url}") from None
        raise HarvestError(
            f"request to {url} failed after {policy.max_retries + 1} attempts: "
            f"{last_error}")


def _chat_payload(config: SamplerConfig, question: str) -> dict:
    return {
        "model": config.chat_model,
        "messages": [{"role": "user",
                      "content": config.prompt_template.format(question=question)}],
        "temperature": config.temperature,
        "top_p": config.top_p,
        "top_k": config.top_k,
        "repetition_penalty": config.repetition_penalty,
        "max_tokens": config.max_tokens,
    }


def _extract_completion(obj: dict) -> str:
    try:
        content = obj["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise HarvestError("chat response missing choices[0].message.content") \
            from None
    if not isinstance(content, str):
        raise HarvestError("chat completion content is not a string")
    return content


def _extract_embedding(obj: dict) -> list[float]:
    try:
        vector = obj["data"][0]["embedding"]
    except (KeyError, IndexError, TypeError):
        raise HarvestError("embedding response missing data[0].embedding") from None
    if (not isinstance(vector, list) or len(vector) < 2
            or not all(isinstance(v, (int, float)) for v in vector)):
        raise HarvestError("embedding is not a numeric vector of dimension >= 2")
    return [float(v) for v in vector]


def _harvest_one(requester: _Requester, config: SamplerConfig,
                 q: QuestionInput) -> dict:
    samples = []
    for _ in range(config.samples_per_question):
        obj = requester.post_json(config.chat_url, _chat_payload(config, q.question))
        samples.append(_extract_completion(obj))
    emb_obj = requester.post_json(config.embedding_url, {
        "model": config.embedding_model, "input": q.question})
    record = {
        "id": q.id,
        "question": q.question,
        "ground_truths": list(q.ground_truths),
        "samples": samples,
        "embedding": _extract_embedding(emb_obj),
    }
    if q.domain is not None:
        record["domain"] = q.domain
    return record


def harvest(questions: Sequence[QuestionInput] | str | Path,
            config: SamplerConfig,
            output_path: str | Path,
            rejects_path: str | Path | None = None,
            transport: httpx.BaseTransport | None = None,
            sleep: Callable[[float], None] = time.sleep) -> HarvestResult:
    """Collect samples and embeddings for every question.

    ``transport`` injects an ``httpx`` transport (tests use a deterministic
    mock).  Records are written in input-question order, so output bytes are
    stable regardless of worker scheduling.  Returns counts plus the paths
    written; the rejects file (default ``<output>.rejects.jsonl``) receives
    one line per failed question.
    """
    config.validate()
    if not isinstance(questions, (list, tuple)):
        questions = read_questions(questions)
    output_path = Path(output_path)
    rejects_path = (Path(rejects_path) if rejects_path is not None
                    else output_path.with_suffix(".rejects.jsonl"))

    results: list[dict | None] = [None] * len(questions)
    failures: list[tuple[int, str] | None] = [None] * len(questions)
    with httpx.Client(transport=transport) as client:
        requester = _Requester(client, config, sleep=sleep)

        def work(idx: int) -> None:
            try:
                results[idx] = _harvest_one(requester, config, questions[idx])
            except HarvestError as exc:
                failures[idx] = (idx, str(exc))

        with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
            list(pool.map(work, range(len(questions))))

    with output_path.open("w", encoding="utf-8") as fh:
        for record in results:
            if record is not None:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    rejected = [f for f in failures if f is not None]
    with rejects_path.open("w", encoding="utf-8") as fh:
        for idx, reason in rejected:
            q = questions[idx]
            fh.write(json.dumps({"id": q.id, "question": q.question,
                                 "error": reason}, ensure_ascii=False) + "\n")
    return HarvestResult(
        harvested=sum(1 for r in results if r is not None),
        rejected=len(rejected),
        output_path=output_path,
        rejects_path=rejects_path)
