"""Dataset contract: JSONL records of sampled answers, validation, buffer splits.

A dataset is a list of questions, each carrying the ``m`` answers sampled
from the model, the reference answers, an optional question embedding, and
an optional domain label.  Datasets are immutable after parsing and safe to
share across threads.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .errors import DataError

ROLES = ("cluster-split", "calibration", "test")


@dataclass(frozen=True, slots=True)
class QuestionRecord:
    """One question: sampled answers, references, optional embedding/domain."""

    id: str
    question: str
    ground_truths: tuple[str, ...]
    samples: tuple[str, ...]
    embedding: tuple[float, ...] | None = None
    domain: str | None = None


@dataclass(frozen=True, slots=True)
class Dataset:
    """An immutable collection of records sharing one sampling budget.

    ``m`` is the number of sampled answers per question (>= 2); ``dim`` is
    the shared embedding dimension, or None when no record is embedded.
    """

    records: tuple[QuestionRecord, ...]
    m: int
    dim: int | None
    role: str = "test"

    def __len__(self) -> int:
        return len(self.records)

    def domains(self) -> tuple[str, ...]:
        """Distinct domain labels present, in sorted order."""
        return tuple(sorted({r.domain for r in self.records if r.domain is not None}))


def _validate_role(role: str) -> str:
    if role not in ROLES:
        raise DataError(f"unknown dataset role {role!r}; expected one of {ROLES}")
    return role


def _record_from_obj(obj: dict, where: str) -> QuestionRecord:
    if not isinstance(obj, dict):
        raise DataError(f"{where}: record must be a JSON object")
    try:
        rid = obj["id"]
        question = obj["question"]
        truths = obj["ground_truths"]
        samples = obj["samples"]
    except KeyError as exc:
        raise DataError(f"{where}: missing required key {exc.args[0]!r}") from None
    if not isinstance(rid, str) or not rid:
        raise DataError(f"{where}: 'id' must be a non-empty string")
    if not isinstance(question, str):
        raise DataError(f"{where}: 'question' must be a string")
    if (not isinstance(truths, list) or not truths
            or not all(isinstance(t, str) for t in truths)):
        raise DataError(f"{where}: 'ground_truths' must be a non-empty list of strings")
    if not isinstance(samples, list) or not all(isinstance(s, str) for s in samples):
        raise DataError(f"{where}: 'samples' must be a list of strings")
    embedding = obj.get("embedding")
    if embedding is not None:
        if not isinstance(embedding, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in embedding):
            raise DataError(f"{where}: 'embedding' must be a list of numbers")
        if not all(math.isfinite(v) for v in embedding):
            raise DataError(f"{where}: 'embedding' contains non-finite values")
        embedding = tuple(float(v) for v in embedding)
    domain = obj.get("domain")
    if domain is not None and not isinstance(domain, str):
        raise DataError(f"{where}: 'domain' must be a string")
    return QuestionRecord(
        id=rid,
        question=question,
        ground_truths=tuple(truths),
        samples=tuple(samples),
        embedding=embedding,
        domain=domain,
    )


def parse_dataset(source: str | Path | bytes | IO[bytes] | IO[str],
                  role: str = "test") -> Dataset:
    """Parse a newline-delimited JSON dataset.

    Each line is one record with keys ``id``, ``question``, ``ground_truths``,
    ``samples`` and optional ``embedding`` / ``domain``.  The sampling budget
    ``m`` and the embedding dimension are inferred from the first record and
    enforced on every other record.

    Raises
    ------
    DataError
        On malformed lines (reported with their line number), inconsistent
        sample counts or embedding dimensions, duplicate ids, or an empty
        file.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    records: list[QuestionRecord] = []
    seen: set[str] = set()
    m: int | None = None
    dim: int | None = None
    record_no = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        record_no += 1
        where = f"line {line_no} (record {record_no})"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: malformed JSON: {exc.msg}") from None
        rec = _record_from_obj(obj, where)
        if rec.id in seen:
            raise DataError(f"{where}: duplicate id {rec.id!r}")
        seen.add(rec.id)
        if m is None:
            m = len(rec.samples)
            if m < 2:
                raise DataError(f"{where}: need at least 2 samples per question, got {m}")
        elif len(rec.samples) != m:
            raise DataError(
                f"{where}: record {rec.id!r} has {len(rec.samples)} samples, expected {m}")
        if rec.embedding is not None:
            if dim is None:
                dim = len(rec.embedding)
                if dim < 2:
                    raise DataError(f"{where}: embedding dimension must be >= 2, got {dim}")
            elif len(rec.embedding) != dim:
                raise DataError(
                    f"{where}: record {rec.id!r} has embedding of dimension "
                    f"{len(rec.embedding)}, expected {dim}")
        records.append(rec)
    if not records:
        raise DataError("empty dataset")
    return Dataset(records=tuple(records), m=m, dim=dim, role=_validate_role(role))


def serialize_dataset(dataset: Dataset) -> bytes:
    """Serialize to the JSONL wire format; inverse of :func:`parse_dataset`."""
    buf = io.StringIO()
    for rec in dataset.records:
        obj: dict = {
            "id": rec.id,
            "question": rec.question,
            "ground_truths": list(rec.ground_truths),
            "samples": list(rec.samples),
        }
        if rec.embedding is not None:
            obj["embedding"] = list(rec.embedding)
        if rec.domain is not None:
            obj["domain"] = rec.domain
        buf.write(json.dumps(obj, ensure_ascii=False))
        buf.write("\n")
    return buf.getvalue().encode("utf-8")


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_bytes(serialize_dataset(dataset))


def split_buffer(buffer: Dataset, n_cluster: int, n_cal: int,
                 seed: int | Sequence[int]) -> tuple[Dataset, Dataset]:
    """Disjoint uniform-random split of a buffer into cluster-split and
    calibration parts.

    Deterministic given ``seed``.  Every buffer record must carry a domain
    label; the first returned dataset has role ``cluster-split``, the second
    ``calibration``.
    """
    if n_cluster < 0 or n_cal < 0:
        raise DataError("split sizes must be non-negative")
    if n_cluster + n_cal > len(buffer.records):
        raise DataError(
            f"cannot split {len(buffer.records)} records into "
            f"{n_cluster} + {n_cal}")
    missing = [r.id for r in buffer.records if r.domain is None]
    if missing:
        raise DataError(
            f"buffer records missing domain labels (first: {missing[0]!r})")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(buffer.records))
    pick_cluster = sorted(order[:n_cluster])
    pick_cal = sorted(order[n_cluster:n_cluster + n_cal])
    cluster = Dataset(
        records=tuple(buffer.records[i] for i in pick_cluster),
        m=buffer.m, dim=buffer.dim, role="cluster-split")
    cal = Dataset(
        records=tuple(buffer.records[i] for i in pick_cal),
        m=buffer.m, dim=buffer.dim, role="calibration")
    return cluster, cal
