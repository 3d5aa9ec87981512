"""Long-context training-data sampler: length buckets, decile mini-contexts,
exponential anchor sampling, and the judge-score gate for generated QA.

The tokenizer and the QA judge are in-process interfaces; deterministic
mocks live here for tests and offline runs, and HTTP-backed clients are
configured with endpoint, auth token, timeout, and retry count.
"""
from __future__ import annotations

import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .errors import EmptyDocument, JudgeOutOfRange
from .records import Document, Language

__all__ = [
    "Tokenizer", "CharTokenizer", "WhitespaceTokenizer", "HttpTokenizer",
    "BucketPlan", "BucketedDoc", "BucketizeResult", "bucketize",
    "MiniContext", "extract_mini_contexts", "sample_anchors",
    "QaCandidate", "Judge", "MockJudge", "HttpJudge", "gate_qa", "GateReport",
]

log = logging.getLogger(__name__)

K = 1024


# --- tokenizer interface -----------------------------------------------------------

class Tokenizer(Protocol):
    def encode(self, text: str) -> list[int]: ...
    def decode(self, tokens: Sequence[int]) -> str: ...


class CharTokenizer:
    """One token per character; the deterministic mock used in tests."""

    def encode(self, text: str) -> list[int]:
        return [ord(c) for c in text]

    def decode(self, tokens: Sequence[int]) -> str:
        return "".join(chr(t) for t in tokens)


class WhitespaceTokenizer:
    """Word-id tokenizer over a growing vocabulary; decode joins with spaces."""

    def __init__(self):
        self.vocab: dict[str, int] = {}
        self.words: list[str] = []

    def encode(self, text: str) -> list[int]:
        out = []
        for w in text.split():
            if w not in self.vocab:
                self.vocab[w] = len(self.words)
                self.words.append(w)
            out.append(self.vocab[w])
        return out

    def decode(self, tokens: Sequence[int]) -> str:
        return " ".join(self.words[t] for t in tokens)


class HttpTokenizer:
    """Tokenizer served over HTTP: POST {"text": ...} -> {"tokens": [...]}.

    Endpoint/auth default to the CORPUSKIT_TOKENIZER_URL and
    CORPUSKIT_API_TOKEN environment variables.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        auth_token: str | None = None,
        timeout: float = 30.0,
        retries: int = 2,
    ):
        self.endpoint = endpoint or os.environ.get("CORPUSKIT_TOKENIZER_URL", "")
        self.auth_token = auth_token or os.environ.get("CORPUSKIT_API_TOKEN")
        self.timeout = timeout
        self.retries = retries
        if not self.endpoint:
            raise ValueError("HttpTokenizer needs an endpoint")

    def _post(self, payload: dict) -> dict:
        import httpx

        headers = {}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = httpx.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                return resp.json()
            except Exception as exc:   # noqa: BLE001 - retry any transport error
                last_exc = exc
        raise ConnectionError(f"tokenizer endpoint failed: {last_exc}")

    def encode(self, text: str) -> list[int]:
        return list(self._post({"text": text})["tokens"])

    def decode(self, tokens: Sequence[int]) -> str:
        return str(self._post({"tokens": list(tokens)})["text"])


# --- bucketed document selection ------------------------------------------------------

@dataclass(frozen=True)
class BucketPlan:
    """Token-length buckets from ``min_multiple*K`` to ``max_multiple*K`` in
    steps of K; with defaults that is 4K..32K at 1K intervals = 29 buckets."""

    unit: int = K
    min_multiple: int = 4
    max_multiple: int = 32
    quota_per_bucket_per_language: int = 2200
    languages: tuple[Language, ...] = (Language.KOREAN, Language.ENGLISH)

    def __post_init__(self):
        if self.quota_per_bucket_per_language <= 0:
            raise ValueError("quota must be positive")
        if self.max_multiple < self.min_multiple:
            raise ValueError("max_multiple < min_multiple")

    @property
    def bucket_lengths(self) -> tuple[int, ...]:
        return tuple(
            m * self.unit for m in range(self.min_multiple, self.max_multiple + 1)
        )

    def bucket_for(self, n_tokens: int) -> int | None:
        """Largest bucket length <= n_tokens, or None when below the smallest."""
        lengths = self.bucket_lengths
        if n_tokens < lengths[0]:
            return None
        m = min(n_tokens // self.unit, self.max_multiple)
        return m * self.unit


@dataclass(frozen=True)
class BucketedDoc:
    id: str
    language: Language
    bucket: int
    tokens: tuple[int, ...]         # truncated to exactly ``bucket`` tokens


@dataclass
class BucketizeResult:
    assignments: dict[tuple[int, Language], list[BucketedDoc]]
    skipped: list[tuple[str, str]]  # (doc id, reason)

    def ids_by_bucket(self) -> dict[tuple[int, str], list[str]]:
        return {
            (bucket, lang.value): [d.id for d in docs]
            for (bucket, lang), docs in self.assignments.items()
        }


def bucketize(
    corpus: Iterable[Document],
    plan: BucketPlan,
    tokenizer: Tokenizer,
) -> BucketizeResult:
    """Assign each doc to the largest bucket its length covers, truncating.

    Too-short documents are skipped with a log entry; selection stops per
    (bucket, language) once the quota is reached, in stable input order.
    """
    result = BucketizeResult(assignments={}, skipped=[])
    quota = plan.quota_per_bucket_per_language
    for doc in corpus:
        lang = doc.tags.language
        if lang not in plan.languages:
            result.skipped.append((doc.id, f"language {lang.value} not in plan"))
            continue
        tokens = tokenizer.encode(doc.text)
        bucket = plan.bucket_for(len(tokens))
        if bucket is None:
            result.skipped.append(
                (doc.id, f"{len(tokens)} tokens below smallest bucket")
            )
            log.debug("skipping %s: %d tokens too short", doc.id, len(tokens))
            continue
        key = (bucket, lang)
        assigned = result.assignments.setdefault(key, [])
        if len(assigned) >= quota:
            result.skipped.append((doc.id, "quota reached"))
            continue
        assigned.append(
            BucketedDoc(id=doc.id, language=lang, bucket=bucket, tokens=tuple(tokens[:bucket]))
        )
    return result


# --- decile mini-contexts ---------------------------------------------------------------

N_ANCHORS = 11                     # 0%, 10%, ..., 100%


@dataclass(frozen=True)
class MiniContext:
    """A verbatim token window anchored at a decile of the parent document.

    start_token = clamp(round(anchor/10 * (T - W)), 0, T - W), with round
    half-up, T the parent token count and W = min(window, T).
    """

    parent_id: str
    anchor_index: int               # 0..10
    start_token: int
    tokens: tuple[int, ...]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def anchor_start(anchor_index: int, total: int, window: int) -> int:
    span = total - window
    raw = _round_half_up(anchor_index / 10.0 * span)
    return max(0, min(raw, span))


def extract_mini_contexts(
    parent_id: str,
    doc_tokens: Sequence[int],
    window: int = 400,
) -> list[MiniContext]:
    """Eleven decile-anchored windows; duplicate start positions merge."""
    total = len(doc_tokens)
    if total == 0:
        raise EmptyDocument(f"doc {parent_id}: no tokens")
    w = min(window, total)
    out: list[MiniContext] = []
    seen_starts: set[int] = set()
    for anchor in range(N_ANCHORS):
        start = anchor_start(anchor, total, w)
        if start in seen_starts:
            continue
        seen_starts.add(start)
        out.append(
            MiniContext(
                parent_id=parent_id,
                anchor_index=anchor,
                start_token=start,
                tokens=tuple(doc_tokens[start : start + w]),
            )
        )
    return out


def sample_anchors(rng_seed: int, n_draws: int, lam: float) -> np.ndarray:
    """Draw anchor indices with p(i) proportional to exp(lam * i), i in 0..10.

    lam = 0 degenerates to uniform; the default elsewhere is ln 2 per decile,
    which weights the last anchor 2^10 times the first. Deterministic for a
    fixed seed.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    weights = np.exp(lam * np.arange(N_ANCHORS, dtype=np.float64))
    probs = weights / weights.sum()
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    return rng.choice(N_ANCHORS, size=n_draws, p=probs)


# --- QA gate ------------------------------------------------------------------------------

@dataclass(frozen=True)
class QaCandidate:
    mini_context: MiniContext
    question: str
    answer: str


class Judge(Protocol):
    def score(self, candidate: QaCandidate) -> int: ...


class MockJudge:
    """Deterministic judge driven by a scoring function (tests/offline)."""

    def __init__(self, fn: Callable[[QaCandidate], int]):
        self.fn = fn

    def score(self, candidate: QaCandidate) -> int:
        return self.fn(candidate)


class HttpJudge:
    """Scoring model over HTTP: POST {question, answer, context} -> {"score": n}."""

    def __init__(
        self,
        endpoint: str | None = None,
        auth_token: str | None = None,
        timeout: float = 30.0,
        retries: int = 2,
    ):
        self.endpoint = endpoint or os.environ.get("CORPUSKIT_JUDGE_URL", "")
        self.auth_token = auth_token or os.environ.get("CORPUSKIT_API_TOKEN")
        self.timeout = timeout
        self.retries = retries
        if not self.endpoint:
            raise ValueError("HttpJudge needs an endpoint")

    def score(self, candidate: QaCandidate) -> int:
        import httpx

        headers = {}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        payload = {
            "question": candidate.question,
            "answer": candidate.answer,
            "context": list(candidate.mini_context.tokens),
        }
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = httpx.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                return int(resp.json()["score"])
            except Exception as exc:   # noqa: BLE001
                last_exc = exc
        raise ConnectionError(f"judge endpoint failed: {last_exc}")


MIN_JUDGE_SCORE = 9                 # keep only 9..10 of 10


@dataclass
class GateReport:
    n_candidates: int
    n_retained: int
    histogram: Counter = field(default_factory=Counter)

    @property
    def retention_rate(self) -> float:
        return self.n_retained / self.n_candidates if self.n_candidates else 0.0


def gate_qa(
    candidates: Sequence[QaCandidate],
    judge: Judge,
    min_score: int = MIN_JUDGE_SCORE,
) -> tuple[list[QaCandidate], GateReport]:
    """Retain candidates scoring >= min_score; judge must answer in 0..10."""
    retained: list[QaCandidate] = []
    report = GateReport(n_candidates=len(candidates), n_retained=0)
    for cand in candidates:
        score = judge.score(cand)
        if not isinstance(score, int) or not (0 <= score <= 10):
            raise JudgeOutOfRange(f"judge returned {score!r}, expected integer 0..10")
        report.histogram[score] += 1
        if score >= min_score:
            retained.append(cand)
    report.n_retained = len(retained)
    log.info(
        "qa gate: retained %d/%d (%.1f%%)",
        report.n_retained, report.n_candidates, 100 * report.retention_rate,
    )
    return retained, report
