"""Canonical corpus record model: documents, classification tags, audit trail.

Documents are immutable value objects; every mutation helper returns a new
instance, so records can be shared freely between concurrent workers.
Corpus files are line-delimited JSON, one document per line, UTF-8; unknown
fields found on input are carried through verbatim in ``Document.extra``.
"""
from __future__ import annotations

import gzip
import io
import json
import unicodedata
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import DuplicateId, EmptyText, InvalidRecord, OrphanSubdomain

__all__ = [
    "Language", "SourceKind", "Subsource", "Domain", "Mode", "Tone",
    "Stage", "Verdict", "StageEvent", "TagSet", "Document",
    "DomainRegistry", "default_registry", "validate", "validate_corpus",
    "read_corpus", "write_corpus", "open_maybe_gzip",
]


class Language(str, Enum):
    ENGLISH = "english"
    KOREAN = "korean"
    CODE = "code"
    MATH = "math"
    MULTI_LANGUAGE = "multi_language"
    UNKNOWN = "unknown"


class SourceKind(str, Enum):
    ORGANIC = "organic"
    SYNTHETIC = "synthetic"


class Subsource(str, Enum):
    WEB = "web"
    GOVERNMENT = "government"
    BOOK = "book"
    NEWS = "news"
    PAPER = "paper"
    ENCYCLOPEDIA = "encyclopedia"
    OTHERS = "others"


class Domain(str, Enum):
    HUMANITY = "humanity"
    STEM = "stem"
    APPLIED_SCIENCE = "applied_science"
    HEALTH_FOOD = "health_food"
    LIFE_CULTURE = "life_culture"
    ETC = "etc"


class Mode(str, Enum):
    WRITTEN = "written"
    SPOKEN = "spoken"
    UNKNOWN = "unknown"


class Tone(str, Enum):
    FORMAL = "formal"
    INFORMAL = "informal"
    UNKNOWN = "unknown"


class Stage(str, Enum):
    """Pipeline stages plus the refiner and synthesis stages.

    ``order_index`` drives audit monotonicity: events must be appended in
    strictly increasing stage order. Synthesis and refinement both precede
    the eight filtering stages (they never co-occur on one document).
    """

    SYNTH = "synth"
    REFINE = "refine"
    DEDUP = "dedup"
    HEURISTIC = "heuristic"
    PERPLEXITY = "perplexity"
    BROKEN_FIX = "broken_fix"
    QUALITY = "quality"
    TOXICITY = "toxicity"
    LINE_DEDUP = "line_dedup"
    FINAL_REFINE = "final_refine"

    @property
    def order_index(self) -> int:
        return _STAGE_ORDER[self]


_STAGE_ORDER = {s: i for i, s in enumerate(Stage)}

#: The eight web-filtering stages, in the order the pipeline runs them.
PIPELINE_STAGES = (
    Stage.DEDUP, Stage.HEURISTIC, Stage.PERPLEXITY, Stage.BROKEN_FIX,
    Stage.QUALITY, Stage.TOXICITY, Stage.LINE_DEDUP, Stage.FINAL_REFINE,
)


class Verdict(str, Enum):
    KEPT = "kept"
    REJECTED = "rejected"
    MODIFIED = "modified"


@dataclass(frozen=True)
class StageEvent:
    """One entry of a document's audit trail.

    ``detail`` carries the rejection reason code for REJECTED events and a
    change summary for MODIFIED events. A REJECTED event is terminal: no
    later event may follow it.
    """

    stage: Stage
    verdict: Verdict
    detail: str | None = None
    score: float | None = None

    def to_dict(self) -> dict:
        d: dict = {"stage": self.stage.value, "verdict": self.verdict.value}
        if self.detail is not None:
            d["detail"] = self.detail
        if self.score is not None:
            d["score"] = self.score
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "StageEvent":
        return cls(
            stage=Stage(d["stage"]),
            verdict=Verdict(d["verdict"]),
            detail=d.get("detail"),
            score=d.get("score"),
        )


@dataclass(frozen=True)
class TagSet:
    """Up-to-five classification attributes of a document.

    Unset attributes stay at their Unknown/None defaults; ``subsource`` is
    only meaningful for organic documents.
    """

    language: Language = Language.UNKNOWN
    source: SourceKind | None = None
    subsource: Subsource | None = None
    domain: Domain | None = None
    subdomain: str | None = None
    mode: Mode = Mode.UNKNOWN
    tone: Tone = Tone.UNKNOWN

    def to_dict(self) -> dict:
        return {
            "language": self.language.value,
            "source": self.source.value if self.source else None,
            "subsource": self.subsource.value if self.subsource else None,
            "domain": self.domain.value if self.domain else None,
            "subdomain": self.subdomain,
            "mode": self.mode.value,
            "tone": self.tone.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TagSet":
        return cls(
            language=Language(d.get("language", "unknown")),
            source=SourceKind(d["source"]) if d.get("source") else None,
            subsource=Subsource(d["subsource"]) if d.get("subsource") else None,
            domain=Domain(d["domain"]) if d.get("domain") else None,
            subdomain=d.get("subdomain"),
            mode=Mode(d.get("mode", "unknown")),
            tone=Tone(d.get("tone", "unknown")),
        )


def char_count_of(text: str) -> int:
    """Character count on canonically composed text.

    NFC normalization first, so a Korean syllable counts as one character
    regardless of whether the producer emitted composed or decomposed form.
    """
    return len(unicodedata.normalize("NFC", text))


_RESERVED_KEYS = frozenset(
    {"id", "text", "tags", "source_name", "char_count", "parent_id", "audit"}
)


@dataclass(frozen=True)
class Document:
    """One corpus record with provenance and an append-only audit trail."""

    id: str
    text: str
    tags: TagSet = field(default_factory=TagSet)
    source_name: str = ""
    char_count: int = -1
    parent_id: str | None = None
    audit: tuple[StageEvent, ...] = ()
    extra: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.char_count < 0:
            object.__setattr__(self, "char_count", char_count_of(self.text))

    def with_text(self, text: str) -> "Document":
        return replace(self, text=text, char_count=char_count_of(text))

    def with_event(self, event: StageEvent) -> "Document":
        """Append an audit event; enforces monotonic, reject-terminal order."""
        if self.audit:
            last = self.audit[-1]
            if last.verdict is Verdict.REJECTED:
                raise InvalidRecord(
                    f"doc {self.id}: audit already terminated by rejection"
                )
            if event.stage.order_index < last.stage.order_index:
                raise InvalidRecord(
                    f"doc {self.id}: stage {event.stage.value} out of order "
                    f"after {last.stage.value}"
                )
        return replace(self, audit=self.audit + (event,))

    def last_event(self, stage: Stage) -> StageEvent | None:
        for ev in reversed(self.audit):
            if ev.stage is stage:
                return ev
        return None

    def to_dict(self) -> dict:
        d = dict(self.extra)
        d.update(
            id=self.id,
            text=self.text,
            tags=self.tags.to_dict(),
            source_name=self.source_name,
            char_count=self.char_count,
            audit=[ev.to_dict() for ev in self.audit],
        )
        if self.parent_id is not None:
            d["parent_id"] = self.parent_id
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Document":
        extra = {k: v for k, v in d.items() if k not in _RESERVED_KEYS}
        return cls(
            id=str(d["id"]),
            text=d["text"],
            tags=TagSet.from_dict(d.get("tags") or {}),
            source_name=d.get("source_name", ""),
            char_count=int(d.get("char_count", -1)),
            parent_id=d.get("parent_id"),
            audit=tuple(StageEvent.from_dict(e) for e in d.get("audit", ())),
            extra=extra,
        )


# --- domain/subdomain registry ---------------------------------------------

@dataclass(frozen=True)
class DomainRegistry:
    """Maps each of the six domains to its mid-level subdomain labels."""

    subdomains: Mapping[Domain, tuple[str, ...]]

    def parent_of(self, subdomain: str) -> Domain | None:
        for domain, subs in self.subdomains.items():
            if subdomain in subs:
                return domain
        return None

    def all_subdomains(self) -> tuple[str, ...]:
        out: list[str] = []
        for domain in Domain:
            out.extend(self.subdomains.get(domain, ()))
        return tuple(out)

    def check(self, domain: Domain, subdomain: str) -> None:
        if subdomain not in self.subdomains.get(domain, ()):
            raise OrphanSubdomain(
                f"subdomain {subdomain!r} is not registered under {domain.value}"
            )


# Default registry: 20 mid-level labels. History/Biology/APSC/ARTS/CULT are
# fixed; the rest are placeholder labels and expected to be overridden from
# the pipeline config for production taxonomies.
_DEFAULT_SUBDOMAINS: dict[Domain, tuple[str, ...]] = {
    Domain.HUMANITY: ("History", "Philosophy", "Literature", "Language", "SocialScience"),
    Domain.STEM: ("Biology", "Physics", "Chemistry", "Math", "ComputerScience"),
    Domain.APPLIED_SCIENCE: ("APSC", "Engineering", "Agriculture"),
    Domain.HEALTH_FOOD: ("Medicine", "Nutrition"),
    Domain.LIFE_CULTURE: ("ARTS", "CULT", "Travel", "Sports"),
    Domain.ETC: ("ETC",),
}


def default_registry() -> DomainRegistry:
    return DomainRegistry(subdomains=dict(_DEFAULT_SUBDOMAINS))


def registry_from_mapping(mapping: Mapping[str, Iterable[str]]) -> DomainRegistry:
    """Build a registry from a plain {domain_name: [labels]} mapping (config)."""
    subs = {Domain(k): tuple(v) for k, v in mapping.items()}
    return DomainRegistry(subdomains=subs)


# --- validation --------------------------------------------------------------

def validate(
    doc: Document,
    registry: DomainRegistry | None = None,
    seen_ids: set[str] | None = None,
) -> Document:
    """Check record invariants; returns the document unchanged if they hold.

    ``seen_ids`` enables the corpus-level unique-id check and is updated
    in place when given.
    """
    if len(doc.text) == 0:
        raise EmptyText(f"doc {doc.id}: empty text")
    if seen_ids is not None:
        if doc.id in seen_ids:
            raise DuplicateId(f"duplicate document id {doc.id!r}")
        seen_ids.add(doc.id)
    expected = char_count_of(doc.text)
    if doc.char_count != expected:
        raise InvalidRecord(
            f"doc {doc.id}: char_count {doc.char_count} != {expected}"
        )
    if doc.tags.subsource is not None and doc.tags.source is not SourceKind.ORGANIC:
        raise InvalidRecord(f"doc {doc.id}: subsource set on non-organic document")
    if doc.tags.subdomain is not None:
        if doc.tags.domain is None:
            raise OrphanSubdomain(f"doc {doc.id}: subdomain without domain")
        (registry or default_registry()).check(doc.tags.domain, doc.tags.subdomain)
    last_index = -1
    for ev in doc.audit:
        if ev.stage.order_index <= last_index:
            raise InvalidRecord(f"doc {doc.id}: audit stages not strictly increasing")
        last_index = ev.stage.order_index
    for ev in doc.audit[:-1]:
        if ev.verdict is Verdict.REJECTED:
            raise InvalidRecord(f"doc {doc.id}: events found after a rejection")
    return doc


def validate_corpus(
    docs: Iterable[Document], registry: DomainRegistry | None = None
) -> Iterator[Document]:
    seen: set[str] = set()
    for doc in docs:
        yield validate(doc, registry=registry, seen_ids=seen)


# --- line-delimited I/O ------------------------------------------------------

def open_maybe_gzip(path: str | Path, mode: str = "rt"):
    """Open a corpus file, transparently handling ``.gz`` suffixes."""
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8" if "t" in mode else None)
    return open(path, mode, encoding="utf-8" if "t" in mode else None)


def read_corpus(path: str | Path) -> Iterator[Document]:
    with open_maybe_gzip(path, "rt") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield Document.from_dict(json.loads(line))


def dumps_document(doc: Document) -> str:
    return json.dumps(doc.to_dict(), ensure_ascii=False, sort_keys=True)


def write_corpus(docs: Iterable[Document], path: str | Path) -> int:
    """Write documents as JSONL; returns the number written."""
    n = 0
    with open_maybe_gzip(path, "wt") as fh:
        for doc in docs:
            fh.write(dumps_document(doc))
            fh.write("\n")
            n += 1
    return n


def write_corpus_stream(fh: io.TextIOBase, doc: Document) -> None:
    fh.write(dumps_document(doc))
    fh.write("\n")
