"""Near-duplicate removal: corpus-level TF-IDF/cosine and line-level passes.

Corpus dedup scans in stable input order and rejects a document iff its
cosine similarity against an *earlier kept* document reaches the threshold
(first seen wins), so results do not depend on worker count. Above
``exact_pairwise_limit`` candidate pairs come from an inverted index over
each kept document's eight rarest terms; this is a documented approximation,
exact all-pairs mode is used below the limit.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import hashing
from .errors import EmptyCorpus
from .records import Document, Stage, StageEvent, Verdict

__all__ = [
    "DedupConfig", "TfIdfVector", "vectorize", "cosine",
    "dedup_corpus", "dedup_lines", "Rejection",
]

_HASH_SEED = 0x7E0D


@dataclass(frozen=True)
class DedupConfig:
    tau: float = 0.85
    term_unit: int = 3          # character n-gram order
    exact_pairwise_limit: int = 2000
    top_terms: int = 8          # inverted-index terms per kept doc

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")


@dataclass(frozen=True)
class TfIdfVector:
    """Sparse TF-IDF vector: sorted 64-bit term ids, weights, cached norm."""

    term_ids: np.ndarray
    weights: np.ndarray
    norm: float

    @property
    def empty(self) -> bool:
        return self.term_ids.size == 0


@dataclass(frozen=True)
class Rejection:
    id: str
    duplicate_of: str
    similarity: float

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "duplicate_of": self.duplicate_of,
            "similarity": self.similarity,
        }


def _term_counts(text: str, cfg: DedupConfig) -> tuple[np.ndarray, np.ndarray]:
    return hashing.term_hashes(text, cfg.term_unit, _HASH_SEED)


def _vectorize_with_idf(
    corpus: list[Document], cfg: DedupConfig
) -> tuple[list[TfIdfVector], dict[int, float]]:
    if not corpus:
        raise EmptyCorpus("cannot vectorize an empty corpus")
    per_doc = [_term_counts(doc.text, cfg) for doc in corpus]
    df: dict[int, int] = {}
    for ids, _ in per_doc:
        for t in ids.tolist():
            df[t] = df.get(t, 0) + 1
    n = len(corpus)
    idf = {t: math.log(n / d) for t, d in df.items()}
    out = []
    for ids, counts in per_doc:
        if ids.size == 0:
            out.append(TfIdfVector(ids, counts, 0.0))
            continue
        w = counts * np.array([idf[t] for t in ids.tolist()])
        keep = w > 0.0
        ids, w = ids[keep], w[keep]
        norm = float(np.sqrt(np.sum(w * w)))
        out.append(TfIdfVector(ids, w, norm))
    return out, idf


def vectorize(corpus: list[Document], cfg: DedupConfig | None = None) -> list[TfIdfVector]:
    """TF-IDF vectors with tf = raw in-doc count and idf = ln(N / df).

    Terms present in every document (df = N) get weight 0 and are dropped,
    so a single-doc corpus vectorizes to an empty vector.
    """
    vectors, _ = _vectorize_with_idf(corpus, cfg or DedupConfig())
    return vectors


def cosine(a: TfIdfVector, b: TfIdfVector) -> float:
    """Cosine over the shared terms; 0 when either side is empty."""
    if a.empty or b.empty:
        return 0.0
    pos = np.searchsorted(a.term_ids, b.term_ids)
    pos_ok = pos < a.term_ids.size
    match = np.zeros(b.term_ids.size, dtype=bool)
    match[pos_ok] = a.term_ids[pos[pos_ok]] == b.term_ids[pos_ok]
    if not match.any():
        return 0.0
    dot = float(np.dot(a.weights[pos[match]], b.weights[match]))
    return dot / (a.norm * b.norm)


class _KeptIndex:
    """Inverted index over each kept document's ``top_terms`` rarest terms."""

    def __init__(self, cfg: DedupConfig, idf: dict[int, float]):
        self.cfg = cfg
        self.idf = idf
        self.by_term: dict[int, list[int]] = {}

    def add(self, kept_pos: int, vec: TfIdfVector) -> None:
        if vec.empty:
            return
        ids = vec.term_ids.tolist()
        # rarest first; term id breaks ties so the index is deterministic
        ranked = sorted(ids, key=lambda t: (-self.idf[t], t))
        for t in ranked[: self.cfg.top_terms]:
            self.by_term.setdefault(t, []).append(kept_pos)

    def candidates(self, vec: TfIdfVector) -> list[int]:
        seen: set[int] = set()
        for t in vec.term_ids.tolist():
            seen.update(self.by_term.get(t, ()))
        return sorted(seen)


def dedup_corpus(
    corpus: list[Document], cfg: DedupConfig | None = None
) -> tuple[list[Document], list[Rejection]]:
    """First-seen-wins near-duplicate removal over a shared idf table.

    Documents whose vectors are both empty (degenerate corpora) fall back
    to exact text equality. Output preserves input order.
    """
    cfg = cfg or DedupConfig()
    if not corpus:
        raise EmptyCorpus("cannot dedup an empty corpus")
    vectors, idf = _vectorize_with_idf(corpus, cfg)
    exact = len(corpus) <= cfg.exact_pairwise_limit
    index = _KeptIndex(cfg, idf)
    kept: list[Document] = []
    kept_vecs: list[TfIdfVector] = []
    empty_text_first: dict[str, str] = {}
    rejected: list[Rejection] = []
    for doc, vec in zip(corpus, vectors):
        dup_of: str | None = None
        sim = 0.0
        if vec.empty:
            prior = empty_text_first.get(doc.text)
            if prior is not None:
                dup_of, sim = prior, 1.0
        else:
            if exact:
                candidate_positions = range(len(kept_vecs))
            else:
                candidate_positions = index.candidates(vec)
            for pos in candidate_positions:
                other = kept_vecs[pos]
                if other.empty:
                    continue
                s = cosine(vec, other)
                if s >= cfg.tau:
                    dup_of, sim = kept[pos].id, s
                    break
        if dup_of is not None:
            rejected.append(Rejection(doc.id, dup_of, sim))
        else:
            if vec.empty:
                empty_text_first.setdefault(doc.text, doc.id)
            else:
                index.add(len(kept), vec)
            kept.append(doc)
            kept_vecs.append(vec)
    return kept, rejected


# --- line-level dedup ----------------------------------------------------------

_WS_RUN = re.compile(r"\s+")


def _normalize_line(line: str) -> str:
    return _WS_RUN.sub(" ", line.strip())


def dedup_lines(doc: Document) -> Document:
    """Within-document repetition removal: line pass then paragraph pass.

    Blank lines are structural and preserved; a dropped paragraph takes its
    separating blank run with it. Idempotent; appends a MODIFIED audit event
    only when something was actually dropped.
    """
    lines = doc.text.split("\n")
    seen: set[str] = set()
    kept_lines: list[str] = []
    for line in lines:
        key = _normalize_line(line)
        if key == "":
            kept_lines.append(line)
        elif key not in seen:
            seen.add(key)
            kept_lines.append(line)

    # group into blocks separated by blank-line runs
    blocks: list[list[str]] = []   # alternating: blank runs and content blocks
    kinds: list[str] = []
    for line in kept_lines:
        kind = "blank" if _normalize_line(line) == "" else "text"
        if kinds and kinds[-1] == kind:
            blocks[-1].append(line)
        else:
            blocks.append([line])
            kinds.append(kind)

    # paragraph pass; the global line pass usually subsumes it, kept for the
    # stated block-level contract
    seen_blocks: set[tuple[str, ...]] = set()
    out_lines: list[str] = []
    pending_blank: list[str] | None = None
    for kind, block in zip(kinds, blocks):
        if kind == "blank":
            pending_blank = block
            continue
        key = tuple(_normalize_line(l) for l in block)
        if key in seen_blocks:
            pending_blank = None     # drop the block and its leading separator
            continue
        seen_blocks.add(key)
        if pending_blank is not None:
            out_lines.extend(pending_blank)
        pending_blank = None
        out_lines.extend(block)
    if pending_blank is not None:
        out_lines.extend(pending_blank)       # trailing blanks

    new_text = "\n".join(out_lines)
    if new_text == doc.text:
        return doc
    dropped = len(lines) - len(out_lines)
    return doc.with_text(new_text).with_event(
        StageEvent(Stage.LINE_DEDUP, Verdict.MODIFIED, detail=f"dropped {dropped} lines")
    )
