"""Corpus distribution accounting and pipeline yield reports.

Distributions are reported per classification axis with document counts,
token counts, and token share (document share is derivable from the docs
column); outputs are a fixed-column CSV plus a plot-ready JSON series.
Yield reports are reconstructed from document audit trails and must satisfy
per-stage conservation: in = out + rejected, corrections counting as out.
"""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .errors import IncompleteAudit
from .records import Document, Stage, Verdict

__all__ = [
    "DistributionRow", "distribution", "distribution_csv", "distribution_json_series",
    "StageReport", "yield_report", "whitespace_token_count",
]

AXES = ("language", "source", "subsource", "domain", "subdomain", "mode", "tone", "source_name")


def whitespace_token_count(text: str) -> int:
    return len(text.split())


def _axis_label(doc: Document, axis: str) -> str:
    tags = doc.tags
    if axis == "language":
        return tags.language.value
    if axis == "source":
        return tags.source.value if tags.source else "unknown"
    if axis == "subsource":
        return tags.subsource.value if tags.subsource else "unknown"
    if axis == "domain":
        return tags.domain.value if tags.domain else "unknown"
    if axis == "subdomain":
        return tags.subdomain or "unknown"
    if axis == "mode":
        return tags.mode.value
    if axis == "tone":
        return tags.tone.value
    if axis == "source_name":
        return doc.source_name or "unknown"
    raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")


@dataclass(frozen=True)
class DistributionRow:
    axis: str
    label: str
    docs: int
    tokens: int
    share: float        # token share within the axis


def distribution(
    corpus: Iterable[Document],
    axis: str,
    token_count: Callable[[str], int] = whitespace_token_count,
) -> list[DistributionRow]:
    """Per-label (doc count, token count, token share) for one axis.

    Shares sum to 1 within 1e-9 across the axis; unknown/untagged documents
    appear as their own "unknown" label rather than being folded in.
    """
    doc_counts: Counter = Counter()
    token_counts: Counter = Counter()
    for doc in corpus:
        label = _axis_label(doc, axis)
        doc_counts[label] += 1
        token_counts[label] += token_count(doc.text)
    total_tokens = sum(token_counts.values())
    rows = [
        DistributionRow(
            axis=axis,
            label=label,
            docs=doc_counts[label],
            tokens=token_counts[label],
            share=(token_counts[label] / total_tokens) if total_tokens else 0.0,
        )
        for label in sorted(doc_counts)
    ]
    return rows


def distribution_csv(rows: Sequence[DistributionRow]) -> str:
    """Fixed columns: axis, label, docs, tokens, share."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["axis", "label", "docs", "tokens", "share"])
    for r in rows:
        writer.writerow([r.axis, r.label, r.docs, r.tokens, f"{r.share:.9f}"])
    return buf.getvalue()


def distribution_json_series(rows: Sequence[DistributionRow]) -> str:
    """Bar-chart-ready series mirroring the distribution figures."""
    series = {
        "axis": rows[0].axis if rows else "",
        "labels": [r.label for r in rows],
        "docs": [r.docs for r in rows],
        "tokens": [r.tokens for r in rows],
        "shares": [r.share for r in rows],
    }
    return json.dumps(series, ensure_ascii=False, sort_keys=True)


# --- pipeline yield -----------------------------------------------------------------

@dataclass
class StageReport:
    stage: str
    n_in: int = 0
    n_out: int = 0
    n_rejected: int = 0
    n_modified: int = 0
    reasons: dict[str, int] = field(default_factory=dict)

    @property
    def stage_yield(self) -> float:
        return self.n_out / self.n_in if self.n_in else 1.0

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "in": self.n_in,
            "out": self.n_out,
            "rejected": self.n_rejected,
            "modified": self.n_modified,
            "reasons": dict(sorted(self.reasons.items())),
        }


def yield_report(
    processed: Iterable[Document],
    stages: Sequence[Stage],
) -> list[StageReport]:
    """Reconstruct per-stage counts from audit trails.

    ``processed`` must contain every document that entered the run (kept and
    rejected alike), each carrying one event per stage it reached. A kept
    document missing an enabled stage's event raises IncompleteAudit.
    """
    reports = {stage: StageReport(stage=stage.value) for stage in stages}
    for doc in processed:
        events = {ev.stage: ev for ev in doc.audit if ev.stage in reports}
        rejected_at: Stage | None = None
        for stage in stages:
            ev = events.get(stage)
            if rejected_at is not None:
                if ev is not None:
                    raise IncompleteAudit(
                        f"doc {doc.id}: event for {stage.value} after rejection"
                    )
                continue
            if ev is None:
                raise IncompleteAudit(
                    f"doc {doc.id}: missing event for stage {stage.value}"
                )
            rep = reports[stage]
            rep.n_in += 1
            if ev.verdict is Verdict.REJECTED:
                rep.n_rejected += 1
                reason = (ev.detail or "unspecified").split(":", 1)[0]
                rep.reasons[reason] = rep.reasons.get(reason, 0) + 1
                rejected_at = stage
            else:
                rep.n_out += 1
                if ev.verdict is Verdict.MODIFIED:
                    rep.n_modified += 1
    return [reports[stage] for stage in stages]


def cumulative_yield(reports: Sequence[StageReport]) -> float:
    if not reports or reports[0].n_in == 0:
        return 1.0
    return reports[-1].n_out / reports[0].n_in
