"""Two-stage rewrite orchestration with a pluggable generator.

Stage one asks the generator for a structured topic analysis (central topic,
relevant paragraph indices, split points separating concatenated articles);
stage two prompts it with only the relevant paragraphs and tags the result
Synthetic with provenance back to the parent. Rewritten documents must then
re-enter the full filtering pipeline before admission; documents that are
already Synthetic are never accepted as rewrite input.

Also hosts the domain-balance feedback loop that turns distribution deficits
into generation work orders.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Mapping, Protocol, Sequence

import yaml

from .classify import detect_language
from .errors import AnalysisFailed, GenerationFailed, SyntheticReentry
from .records import (
    Document,
    SourceKind,
    Stage,
    StageEvent,
    TagSet,
    Verdict,
)

__all__ = [
    "GeneratorRequest", "GeneratorResponse", "Generator",
    "EchoGenerator", "ScriptedGenerator", "HttpGenerator",
    "TopicAnalysis", "parse_analysis_reply", "split_paragraphs",
    "analyze_topic", "split_document", "rewrite", "refilter",
    "WorkOrder", "balance_feedback", "render_template", "load_template",
]


# --- generator interface ---------------------------------------------------------

@dataclass(frozen=True)
class GeneratorRequest:
    template_id: str
    variables: Mapping[str, str]
    seed: int = 0


@dataclass(frozen=True)
class GeneratorResponse:
    text: str
    generator_id: str


class Generator(Protocol):
    def generate(self, request: GeneratorRequest) -> GeneratorResponse: ...


def load_template(template_id: str) -> str:
    path = resources.files("corpuskit.templates").joinpath(f"{template_id}.txt")
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise GenerationFailed(f"unknown template {template_id!r}") from None


def render_template(template_id: str, variables: Mapping[str, str]) -> str:
    """Fill a prompt template; every placeholder must be bound."""
    template = load_template(template_id)
    try:
        return template.format(**variables)
    except KeyError as exc:
        raise GenerationFailed(f"template {template_id}: unbound variable {exc}") from None


class EchoGenerator:
    """Returns the request's ``content`` variable verbatim (test double)."""

    generator_id = "echo"

    def generate(self, request: GeneratorRequest) -> GeneratorResponse:
        content = request.variables.get("content")
        if content is None:
            raise GenerationFailed("echo generator needs a 'content' variable")
        return GeneratorResponse(text=content, generator_id=self.generator_id)


class ScriptedGenerator:
    """Plays back a fixed list of replies in order (test double)."""

    generator_id = "scripted"

    def __init__(self, replies: Sequence[str]):
        self.replies = list(replies)
        self.calls = 0

    def generate(self, request: GeneratorRequest) -> GeneratorResponse:
        if self.calls >= len(self.replies):
            raise GenerationFailed("scripted generator exhausted")
        text = self.replies[self.calls]
        self.calls += 1
        return GeneratorResponse(text=text, generator_id=self.generator_id)


class HttpGenerator:
    """Generation endpoint: POST {model, prompt, seed} -> {"text": ...}.

    Configured by endpoint URL, model name, auth token, and timeout, each
    overridable from the environment (CORPUSKIT_GENERATOR_URL,
    CORPUSKIT_GENERATOR_MODEL, CORPUSKIT_API_TOKEN).
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model: str | None = None,
        auth_token: str | None = None,
        timeout: float = 60.0,
        retries: int = 2,
    ):
        self.endpoint = endpoint or os.environ.get("CORPUSKIT_GENERATOR_URL", "")
        self.model = model or os.environ.get("CORPUSKIT_GENERATOR_MODEL", "default")
        self.auth_token = auth_token or os.environ.get("CORPUSKIT_API_TOKEN")
        self.timeout = timeout
        self.retries = retries
        if not self.endpoint:
            raise ValueError("HttpGenerator needs an endpoint")
        self.generator_id = f"http:{self.model}"

    def generate(self, request: GeneratorRequest) -> GeneratorResponse:
        import httpx

        prompt = render_template(request.template_id, request.variables)
        headers = {}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        payload = {"model": self.model, "prompt": prompt, "seed": request.seed}
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = httpx.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                return GeneratorResponse(
                    text=str(resp.json()["text"]), generator_id=self.generator_id
                )
            except Exception as exc:   # noqa: BLE001
                last_exc = exc
        raise GenerationFailed(f"generator endpoint failed: {last_exc}")


# --- stage 1: topic analysis --------------------------------------------------------

@dataclass(frozen=True)
class TopicAnalysis:
    central_topic: str
    relevant_paragraph_indices: tuple[int, ...]
    split_points: tuple[int, ...] = ()


def split_paragraphs(text: str) -> list[str]:
    return [p for p in re.split(r"\n\s*\n", text) if p.strip()]


_FENCE = re.compile(r"```analysis\s*\n(.*?)```", re.DOTALL)


def parse_analysis_reply(reply: str, n_paragraphs: int) -> TopicAnalysis:
    """Parse the fenced ``analysis`` YAML block a generator must return."""
    m = _FENCE.search(reply)
    if not m:
        raise AnalysisFailed("no fenced analysis block in reply")
    try:
        data = yaml.safe_load(m.group(1))
    except yaml.YAMLError as exc:
        raise AnalysisFailed(f"unparseable analysis block: {exc}") from None
    if not isinstance(data, dict):
        raise AnalysisFailed("analysis block is not a mapping")
    topic = data.get("topic")
    paragraphs = data.get("paragraphs")
    splits = data.get("splits") or []
    if not topic or not isinstance(paragraphs, list):
        raise AnalysisFailed("analysis block missing topic or paragraphs")
    try:
        indices = tuple(int(i) for i in paragraphs)
        split_points = tuple(int(i) for i in splits)
    except (TypeError, ValueError):
        raise AnalysisFailed("indices must be integers") from None
    if any(i < 0 or i >= n_paragraphs for i in indices):
        raise AnalysisFailed(f"paragraph index out of range 0..{n_paragraphs - 1}")
    if any(i <= 0 or i >= n_paragraphs for i in split_points):
        raise AnalysisFailed("split points must fall strictly inside the document")
    if any(b <= a for a, b in zip(split_points, split_points[1:])):
        raise AnalysisFailed("split points must be strictly increasing")
    return TopicAnalysis(
        central_topic=str(topic),
        relevant_paragraph_indices=indices,
        split_points=split_points,
    )


def _check_rewrite_input(doc: Document) -> None:
    if doc.tags.source is SourceKind.SYNTHETIC:
        raise SyntheticReentry(f"doc {doc.id} is already synthetic; no re-rewriting")


def analyze_topic(
    doc: Document,
    generator: Generator,
    retries: int = 2,
    seed: int = 0,
) -> TopicAnalysis:
    """Ask the generator for topic metadata; retry unparseable replies."""
    _check_rewrite_input(doc)
    paragraphs = split_paragraphs(doc.text)
    request = GeneratorRequest(
        template_id="topic_analysis",
        variables={"document": doc.text, "n_paragraphs": str(len(paragraphs))},
        seed=seed,
    )
    last_error: Exception | None = None
    for _ in range(retries + 1):
        try:
            reply = generator.generate(request)
            return parse_analysis_reply(reply.text, len(paragraphs))
        except (AnalysisFailed, GenerationFailed) as exc:
            last_error = exc
    raise AnalysisFailed(f"doc {doc.id}: analysis failed after retries: {last_error}")


def split_document(doc: Document, analysis: TopicAnalysis) -> list[Document]:
    """Slice a multi-article document at the analysis split points.

    Children copy the parent's tags (pending re-classification) and link
    back via parent_id; without split points the document passes through.
    """
    if not analysis.split_points:
        return [doc]
    paragraphs = split_paragraphs(doc.text)
    bounds = [0, *analysis.split_points, len(paragraphs)]
    children = []
    for n, (start, end) in enumerate(zip(bounds, bounds[1:])):
        text = "\n\n".join(paragraphs[start:end])
        children.append(
            Document(
                id=f"{doc.id}#{n}",
                text=text,
                tags=doc.tags,
                source_name=doc.source_name,
                parent_id=doc.id,
            )
        )
    return children


# --- stage 2: rewrite ------------------------------------------------------------------

def rewrite(
    doc: Document,
    analysis: TopicAnalysis,
    generator: Generator,
    seed: int = 0,
    domain_classifier: Callable[[str], tuple] | None = None,
) -> Document:
    """Generate the excerpt-and-rewrite document, tagged Synthetic.

    The generator sees only the topic-relevant paragraphs. Language is
    re-detected; domain is re-classified when a classifier is supplied,
    otherwise the parent's tags carry over pending re-classification.
    """
    _check_rewrite_input(doc)
    paragraphs = split_paragraphs(doc.text)
    relevant = [paragraphs[i] for i in analysis.relevant_paragraph_indices]
    if not relevant:
        raise GenerationFailed(f"doc {doc.id}: no relevant paragraphs to rewrite")
    content = "\n\n".join(relevant)
    response = generator.generate(
        GeneratorRequest(
            template_id="rewrite",
            variables={"topic": analysis.central_topic, "content": content},
            seed=seed,
        )
    )
    if not response.text.strip():
        raise GenerationFailed(f"doc {doc.id}: generator returned empty text")
    language, _ = detect_language(response.text)
    domain, subdomain = doc.tags.domain, doc.tags.subdomain
    if domain_classifier is not None:
        domain, subdomain, _ = domain_classifier(response.text)
    tags = TagSet(
        language=language,
        source=SourceKind.SYNTHETIC,
        domain=domain,
        subdomain=subdomain,
        mode=doc.tags.mode,
        tone=doc.tags.tone,
    )
    return Document(
        id=f"{doc.id}::rw",
        text=response.text,
        tags=tags,
        source_name=doc.source_name,
        parent_id=doc.id,
        audit=(
            StageEvent(
                Stage.SYNTH,
                Verdict.MODIFIED,
                detail=f"rewritten from {doc.id} by {response.generator_id}",
            ),
        ),
    )


def refilter(
    synthetic_docs: Sequence[Document],
    pipeline: Callable[[Sequence[Document]], tuple[list[Document], list[Document]]],
) -> tuple[list[Document], list[Document]]:
    """Run rewritten documents through the standard filtering pipeline.

    ``pipeline`` is the same (kept, rejected) callable used for organic web
    documents; only survivors may enter the corpus.
    """
    return pipeline(synthetic_docs)


# --- domain-balance feedback loop ----------------------------------------------------

@dataclass(frozen=True)
class WorkOrder:
    label: str
    template_id: str
    count: int


def balance_feedback(
    current_shares: Mapping[str, float],
    target_shares: Mapping[str, float],
    templates: Mapping[str, str],
    total_orders: int = 1000,
) -> list[WorkOrder]:
    """Deficit-proportional generation orders for under-target labels.

    Counts are apportioned by largest remainder so they sum exactly to
    ``total_orders`` (when any deficit exists); output is sorted largest
    order first. Deterministic for fixed inputs.
    """
    deficits = {
        label: target - current_shares.get(label, 0.0)
        for label, target in target_shares.items()
        if target - current_shares.get(label, 0.0) > 0.0
    }
    if not deficits or total_orders <= 0:
        return []
    total_deficit = sum(deficits.values())
    raw = {
        label: total_orders * deficit / total_deficit
        for label, deficit in deficits.items()
    }
    counts = {label: int(raw[label]) for label in raw}
    leftover = total_orders - sum(counts.values())
    by_remainder = sorted(
        raw, key=lambda label: (raw[label] - counts[label], label), reverse=True
    )
    for label in by_remainder[:leftover]:
        counts[label] += 1
    orders = [
        WorkOrder(label=label, template_id=templates.get(label, "textbook"), count=n)
        for label, n in counts.items()
        if n > 0
    ]
    orders.sort(key=lambda o: (-o.count, o.label))
    return orders
