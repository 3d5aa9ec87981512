"""Core Set construction: fill a domain-by-skill matrix with diverse samples.

Candidates are tagged with (subdomain, skill) metadata and a unit-norm
embedding, then admitted by a greedy loop that always serves the cell with
the lowest fill ratio. A candidate is excluded as a duplicate when its
embedding cosine against *any* already-accepted member reaches the
threshold: deduplication is global across the whole core set, which is the
stricter reading and prevents cross-cell repetition. The loop is a single
deterministic reducer; only embedding computation parallelizes.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import hashing
from .errors import EmptyCandidatePool
from .records import Document, default_registry

__all__ = [
    "SkillRegistry", "default_skill_registry", "TaggedCandidate",
    "CoreSetConfig", "CoreSetMatrix", "assign_metadata", "build_core_set",
    "hashed_tfidf_embedder",
]


@dataclass(frozen=True)
class SkillRegistry:
    """Functional skill taxonomy: 9 major categories, 26 subskills, of which
    a configured subset (13 by default) participates in core-set pairing."""

    majors: dict[str, tuple[str, ...]]
    pairing: tuple[str, ...]

    def __post_init__(self):
        all_skills = {s for subs in self.majors.values() for s in subs}
        missing = set(self.pairing) - all_skills
        if missing:
            raise ValueError(f"pairing skills not registered: {sorted(missing)}")

    def all_subskills(self) -> tuple[str, ...]:
        out: list[str] = []
        for major in self.majors.values():
            out.extend(major)
        return tuple(out)


_DEFAULT_MAJORS: dict[str, tuple[str, ...]] = {
    "commonsense": ("everyday-reasoning", "social-norms"),
    "knowledge": ("factual-qa", "domain-expertise", "current-events"),
    "comprehension": ("reading-comprehension", "summarization", "information-extraction"),
    "generation": ("creative-writing", "technical-writing", "rewriting"),
    "reasoning": ("logical-deduction", "math-problem-solving", "causal-analysis"),
    "instruction-following": ("format-compliance", "constraint-adherence", "style-transfer"),
    "multi-turn-conversation": ("context-tracking", "clarification", "persona-consistency"),
    "multi-step-reasoning": ("planning", "decomposition", "verification"),
    "long-context-handling": ("long-document-qa", "cross-section-synthesis", "needle-retrieval"),
}

_DEFAULT_PAIRING = (
    "everyday-reasoning", "factual-qa", "domain-expertise", "reading-comprehension",
    "summarization", "creative-writing", "technical-writing", "logical-deduction",
    "math-problem-solving", "format-compliance", "context-tracking", "planning",
    "long-document-qa",
)


def default_skill_registry() -> SkillRegistry:
    return SkillRegistry(majors=dict(_DEFAULT_MAJORS), pairing=_DEFAULT_PAIRING)


@dataclass(frozen=True)
class TaggedCandidate:
    doc_id: str
    subdomain: str
    skill: str
    embedding: np.ndarray       # unit L2 norm

    @property
    def cell(self) -> tuple[str, str]:
        return (self.subdomain, self.skill)


Embedder = Callable[[str], np.ndarray]


def hashed_tfidf_embedder(
    corpus_texts: Sequence[str], dim: int = 4096, order: int = 3, seed: int = 0x5EED
) -> Embedder:
    """Default embedder: unit-norm hashed character-n-gram TF-IDF vectors.

    idf comes from the given pool, so identical texts embed identically and
    common boilerplate is downweighted.
    """
    if dim & (dim - 1):
        raise ValueError("embedding dim must be a power of two")
    mask = np.uint64(dim - 1)
    n = len(corpus_texts)
    df: dict[int, int] = {}
    for text in corpus_texts:
        cp = hashing.codepoints(hashing.normalize_for_features(text))
        buckets = np.unique(hashing.ngram_hashes(cp, order, seed) & mask)
        for bkt in buckets.tolist():
            df[bkt] = df.get(bkt, 0) + 1
    idf = np.zeros(dim)
    for bkt, d in df.items():
        idf[bkt] = math.log((n + 1) / d)    # +1 keeps pool-wide terms nonzero

    def embed(text: str) -> np.ndarray:
        cp = hashing.codepoints(hashing.normalize_for_features(text))
        buckets = hashing.ngram_hashes(cp, order, seed) & mask
        vec = np.zeros(dim)
        if buckets.size:
            idx, counts = np.unique(buckets, return_counts=True)
            vec[idx.astype(np.int64)] = counts * idf[idx.astype(np.int64)]
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0        # degenerate text still embeds to a unit vector
            return vec
        return vec / norm

    return embed


def assign_metadata(
    candidates: Sequence[Document],
    *,
    embedder: Embedder | None = None,
    domain_tagger: Callable[[str], str] | None = None,
    skill_tagger: Callable[[str], str] | None = None,
) -> list[TaggedCandidate]:
    """Tag every candidate with (subdomain, skill) and a unit embedding.

    Tags default to document metadata (``tags.subdomain`` and an
    ``extra["skill"]`` field); the optional taggers fill gaps, e.g. with a
    trained classifier.
    """
    if not candidates:
        raise EmptyCandidatePool("no candidate documents")
    if embedder is None:
        embedder = hashed_tfidf_embedder([d.text for d in candidates])
    out: list[TaggedCandidate] = []
    for doc in candidates:
        subdomain = doc.tags.subdomain
        if subdomain is None and domain_tagger is not None:
            subdomain = domain_tagger(doc.text)
        skill = doc.extra.get("skill") if isinstance(doc.extra, dict) else None
        if skill is None and skill_tagger is not None:
            skill = skill_tagger(doc.text)
        if subdomain is None or skill is None:
            raise ValueError(f"candidate {doc.id}: missing subdomain or skill metadata")
        out.append(
            TaggedCandidate(
                doc_id=doc.id,
                subdomain=str(subdomain),
                skill=str(skill),
                embedding=embedder(doc.text),
            )
        )
    return out


@dataclass(frozen=True)
class CoreSetConfig:
    capacity: int                                   # per cell
    sim_threshold: float = 0.9
    subdomains: tuple[str, ...] | None = None       # default: the 20 registered
    skills: tuple[str, ...] | None = None           # default: the 13 pairing skills

    def __post_init__(self):
        if not (0.0 < self.sim_threshold < 1.0):
            raise ValueError("sim_threshold must lie in (0, 1)")
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")

    def resolved_cells(self) -> list[tuple[str, str]]:
        subs = self.subdomains or default_registry().all_subdomains()
        skills = self.skills or default_skill_registry().pairing
        return [(sub, skill) for sub in subs for skill in skills]


@dataclass
class CoreSetMatrix:
    """Fill state of the domain-by-skill grid plus the accepted embeddings."""

    capacity: dict[tuple[str, str], int]
    members: dict[tuple[str, str], list[str]]
    sim_threshold: float

    def fill_ratio(self, cell: tuple[str, str]) -> float:
        cap = self.capacity[cell]
        return 1.0 if cap == 0 else len(self.members[cell]) / cap

    def total_accepted(self) -> int:
        return sum(len(m) for m in self.members.values())

    def to_manifest(self) -> dict:
        return {
            "sim_threshold": self.sim_threshold,
            "cells": [
                {
                    "subdomain": sub,
                    "skill": skill,
                    "capacity": self.capacity[(sub, skill)],
                    "members": list(self.members[(sub, skill)]),
                }
                for (sub, skill) in sorted(self.capacity)
            ],
        }

    def fill_ratio_csv(self) -> str:
        """Matrix of fill ratios, subdomains as rows and skills as columns."""
        subs = sorted({c[0] for c in self.capacity})
        skills = sorted({c[1] for c in self.capacity})
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["subdomain"] + skills)
        for sub in subs:
            writer.writerow(
                [sub] + [f"{self.fill_ratio((sub, sk)):.4f}" for sk in skills]
            )
        return buf.getvalue()


@dataclass(frozen=True)
class CoreSetRejection:
    doc_id: str
    reason: str                     # "duplicate" | "cell_full" | "unknown_cell"
    similar_to: str | None = None
    similarity: float | None = None


def build_core_set(
    candidates: Sequence[TaggedCandidate],
    config: CoreSetConfig,
) -> tuple[CoreSetMatrix, list[CoreSetRejection]]:
    """Greedy lowest-fill-first selection under global embedding dedup.

    Each step serves the open cell with the lowest fill ratio (ties by
    lexicographic cell key) its next pending candidate in input order;
    the candidate joins unless an accepted embedding anywhere in the set is
    within ``sim_threshold`` cosine. Stops when every cell is full or out of
    candidates. Deterministic for a fixed input order.
    """
    cells = config.resolved_cells()
    cell_set = set(cells)
    matrix = CoreSetMatrix(
        capacity={c: config.capacity for c in cells},
        members={c: [] for c in cells},
        sim_threshold=config.sim_threshold,
    )
    rejections: list[CoreSetRejection] = []
    queues: dict[tuple[str, str], list[TaggedCandidate]] = {c: [] for c in cells}
    for cand in candidates:
        if cand.cell in cell_set:
            queues[cand.cell].append(cand)
        else:
            rejections.append(CoreSetRejection(cand.doc_id, "unknown_cell"))
    heads = {c: 0 for c in cells}

    accepted_ids: list[str] = []
    dim = candidates[0].embedding.size if candidates else 0
    accepted_buf = np.empty((64, dim))      # grows by doubling
    n_accepted = 0

    def open_cells() -> list[tuple[str, str]]:
        return [
            c for c in cells
            if len(matrix.members[c]) < matrix.capacity[c] and heads[c] < len(queues[c])
        ]

    while True:
        active = open_cells()
        if not active:
            break
        cell = min(active, key=lambda c: (matrix.fill_ratio(c), c))
        cand = queues[cell][heads[cell]]
        heads[cell] += 1
        dup_of: str | None = None
        sim = 0.0
        if n_accepted:
            sims = accepted_buf[:n_accepted] @ cand.embedding
            worst = int(np.argmax(sims))
            if float(sims[worst]) >= config.sim_threshold:
                dup_of, sim = accepted_ids[worst], float(sims[worst])
        if dup_of is not None:
            rejections.append(
                CoreSetRejection(cand.doc_id, "duplicate", similar_to=dup_of, similarity=sim)
            )
            continue
        matrix.members[cell].append(cand.doc_id)
        if n_accepted == accepted_buf.shape[0]:
            accepted_buf = np.vstack([accepted_buf, np.empty_like(accepted_buf)])
        accepted_buf[n_accepted] = cand.embedding
        n_accepted += 1
        accepted_ids.append(cand.doc_id)

    # leftover queue entries were never requested because their cell filled up
    for cell in cells:
        for cand in queues[cell][heads[cell]:]:
            if len(matrix.members[cell]) >= matrix.capacity[cell]:
                rejections.append(CoreSetRejection(cand.doc_id, "cell_full"))
    return matrix, rejections
