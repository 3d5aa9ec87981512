"""Source-specific refinement plug-ins for non-web corpora.

Shipped refiners cover licensed news articles (headline tags, bylines,
stray image captions) and court judgments (skeleton-section extraction and
party-name masking). A registry dispatches refiners by ``source_name``;
unrecognized sources pass through untouched, with an audit note. Refined
documents still run the shared dedup and PII stages downstream.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from .errors import DuplicateName, MissingSkeleton
from .records import Document, Stage, StageEvent, Verdict

__all__ = [
    "NewsRefinerConfig", "refine_news",
    "JudgmentRefinerConfig", "refine_judgment",
    "RefinerRegistry", "default_registry_with_builtins",
]


# --- news -----------------------------------------------------------------------

@dataclass(frozen=True)
class NewsRefinerConfig:
    # tags found only in domestic online news headlines; removed as bracketed
    # or leading tokens, never mid-sentence words
    headline_tags: tuple[str, ...] = ("속보", "상보", "단독")
    caption_markers: tuple[str, ...] = ("사진=", "(사진)", "〈사진〉")
    caption_max_chars: int = 40


_EMAIL = r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+"


def _byline_pattern() -> re.Pattern:
    # Hangul name + 기자 + optional email, as its own trailing chunk
    return re.compile(
        rf"\s*[가-힣]{{2,4}}\s*기자\s*(?:{_EMAIL})?\s*$"
    )


def refine_news(doc: Document, cfg: NewsRefinerConfig | None = None) -> Document:
    """Strip headline tags, trailing bylines, and orphan caption lines."""
    cfg = cfg or NewsRefinerConfig()
    tags = "|".join(re.escape(t) for t in cfg.headline_tags)
    bracketed = re.compile(rf"(?m)^(\s*)[\[(〈【](?:{tags})[\])〉】]\s*")
    leading = re.compile(rf"(?m)^(\s*)(?:{tags})\s*[:·\-]\s*")

    text = bracketed.sub(r"\1", doc.text)
    text = leading.sub(r"\1", text)

    lines = []
    for line in text.split("\n"):
        stripped = line.strip()
        is_caption = (
            0 < len(stripped) < cfg.caption_max_chars
            and any(m in stripped for m in cfg.caption_markers)
        )
        if not is_caption:
            lines.append(line)
    text = "\n".join(lines)
    text = _byline_pattern().sub("", text)

    if text == doc.text:
        return doc
    return doc.with_text(text).with_event(
        StageEvent(Stage.REFINE, Verdict.MODIFIED, detail="news refiner")
    )


# --- court judgments ---------------------------------------------------------------

@dataclass(frozen=True)
class JudgmentRefinerConfig:
    # standard Korean judgment skeleton: claims, reasoning, ruling
    skeleton_headers: tuple[str, ...] = ("청구취지", "이유", "주문")
    party_roles: tuple[str, ...] = ("원고", "피고")


def _header_match(line: str, headers: tuple[str, ...]) -> str | None:
    bare = line.strip().strip("【】[]〈〉<> ").replace(" ", "")
    return bare if bare in headers else None


def refine_judgment(doc: Document, cfg: JudgmentRefinerConfig | None = None) -> Document:
    """Keep only skeleton sections; mask declared party names with role tokens.

    The alias table is built from header lines such as ``원고 김철수``; every
    later occurrence of a declared name becomes ``⟨원고⟩``/``⟨피고⟩``. Raises
    MissingSkeleton when no configured section header is present.
    """
    cfg = cfg or JudgmentRefinerConfig()
    lines = doc.text.split("\n")
    header_at: list[tuple[int, str]] = []
    for i, line in enumerate(lines):
        name = _header_match(line, cfg.skeleton_headers)
        if name is not None:
            header_at.append((i, name))
    if not header_at:
        raise MissingSkeleton(f"doc {doc.id}: no judgment section headers found")

    roles = "|".join(cfg.party_roles)
    declare = re.compile(rf"^\s*(?P<role>{roles})\s*[:：]?\s+(?P<name>[가-힣]{{2,4}})\s*$")
    aliases: dict[str, str] = {}
    first_header = header_at[0][0]
    for line in lines[:first_header]:
        m = declare.match(line)
        if m and m.group("name") not in aliases:
            aliases[m.group("name")] = f"⟨{m.group('role')}⟩"

    sections: list[str] = []
    bounds = [i for i, _ in header_at] + [len(lines)]
    for (start, _name), end in zip(header_at, bounds[1:]):
        sections.append("\n".join(lines[start:end]).rstrip())
    text = "\n\n".join(sections)
    for name, token in aliases.items():
        text = text.replace(name, token)

    if text == doc.text:
        return doc
    return doc.with_text(text).with_event(
        StageEvent(Stage.REFINE, Verdict.MODIFIED, detail="judgment refiner")
    )


# --- registry ------------------------------------------------------------------------

Refiner = Callable[[Document], Document]


@dataclass
class RefinerRegistry:
    """Dispatch table from ``source_name`` to a refiner callable."""

    refiners: dict[str, Refiner] = field(default_factory=dict)

    def register(self, name: str, refiner: Refiner) -> "RefinerRegistry":
        if name in self.refiners:
            raise DuplicateName(f"refiner {name!r} already registered")
        self.refiners[name] = refiner
        return self

    def apply(self, doc: Document) -> Document:
        """Refine by source; unknown sources pass through with an audit note."""
        refiner = self.refiners.get(doc.source_name)
        if refiner is None:
            return doc.with_event(
                StageEvent(Stage.REFINE, Verdict.KEPT, detail="no refiner for source")
            )
        return refiner(doc)


def default_registry_with_builtins(
    news_cfg: NewsRefinerConfig | None = None,
    judgment_cfg: JudgmentRefinerConfig | None = None,
) -> RefinerRegistry:
    reg = RefinerRegistry()
    reg.register("news", lambda d: refine_news(d, news_cfg))
    reg.register("court", lambda d: refine_judgment(d, judgment_cfg))
    return reg
