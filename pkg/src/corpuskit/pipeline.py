"""Eight-stage filtering pipeline: orchestration, streaming, run manifests.

Stage order is fixed (a config may skip stages but never reorder them):

    dedup -> heuristic -> perplexity -> broken_fix -> quality -> toxicity
          -> line_dedup -> final_refine

Corpus-level work (the dedup scan) runs on a single reducer in input order;
per-document stages are pure and fan out to a worker pool whose size has no
effect on output bytes. Input is re-streamed rather than held in memory:
document texts never accumulate, only the kept TF-IDF vectors the dedup scan
needs. A deterministic manifest (config hash, seed, stage reports, output
digest) accompanies every run.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import multiprocessing
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from . import dedup as dedup_mod
from . import ngram_lm
from .classify import load_model
from .config import PipelineConfig
from .dedup import DedupConfig, TfIdfVector
from .errors import ConfigInvalid, IoError
from .heuristics import (
    BrokenFixConfig,
    HeuristicRule,
    HeuristicRuleSet,
    RefineConfig,
    default_pii_patterns,
    default_rules,
    final_refine_with_counts,
    fix_broken,
    heuristic_filter,
)
from .quality import (
    QualityEnsemble,
    ToxicityTaxonomy,
    score_quality,
    score_toxicity,
)
from .records import (
    Document,
    Stage,
    StageEvent,
    Verdict,
    dumps_document,
    open_maybe_gzip,
    read_corpus,
    validate,
)
from .refiners import RefinerRegistry, default_registry_with_builtins
from .stats import StageReport, cumulative_yield

log = logging.getLogger(__name__)

_CHUNKSIZE = 16     # fixed; order-preserving imap keeps output worker-independent

MANIFEST_VERSION = 1


# --- configured stage components -----------------------------------------------------

@dataclass
class WorkerContext:
    """Everything the per-document stages need; picklable for worker pools."""

    stages: tuple[Stage, ...]
    rules: HeuristicRuleSet
    broken_cfg: BrokenFixConfig
    lm: ngram_lm.NgramModel | None
    band: ngram_lm.PerplexityBand | None
    quality_ensemble: QualityEnsemble | None
    toxicity: ToxicityTaxonomy | None
    refine_cfg: RefineConfig

    def __post_init__(self):
        if Stage.PERPLEXITY in self.stages and (self.lm is None or self.band is None):
            raise ConfigInvalid("perplexity stage enabled without model and band")
        if Stage.QUALITY in self.stages and self.quality_ensemble is None:
            raise ConfigInvalid("quality stage enabled without trained ensemble")
        if Stage.TOXICITY in self.stages and self.toxicity is None:
            raise ConfigInvalid("toxicity stage enabled without trained model")


def _heuristic_rules_from(cfg: PipelineConfig) -> HeuristicRuleSet:
    spec = cfg.section("heuristics").get("rules")
    if not spec:
        return default_rules()
    rules = []
    for entry in spec:
        rules.append(HeuristicRule(
            name=entry["name"],
            action=entry.get("action", "reject"),
            threshold=float(entry.get("threshold", 0.0)),
            metric=entry.get("metric"),
            pattern=entry.get("pattern"),
            at_or_above=bool(entry.get("at_or_above", True)),
        ))
    return HeuristicRuleSet(rules=tuple(rules))


def build_worker_context(
    cfg: PipelineConfig, stages: tuple[Stage, ...]
) -> WorkerContext:
    lm = band = None
    if Stage.PERPLEXITY in stages:
        lm = ngram_lm.load_lm(cfg.model_path("perplexity", "model"))
        band_path = cfg.model_path("perplexity", "band")
        with open(band_path, encoding="utf-8") as fh:
            band = ngram_lm.PerplexityBand.from_dict(json.load(fh))
        lm.index()      # build the scoring index once, before any fork

    ensemble = None
    if Stage.QUALITY in stages:
        qsec = cfg.section("quality")
        thresholds = tuple(qsec.get("thresholds", (0.5, 0.5)))
        ensemble = QualityEnsemble(
            general=load_model(cfg.model_path("quality", "general_model")),
            educational=load_model(cfg.model_path("quality", "educational_model")),
            thresholds=(float(thresholds[0]), float(thresholds[1])),
            combine=str(qsec.get("combine", "both")),
        )

    toxicity = None
    if Stage.TOXICITY in stages:
        tsec = cfg.section("toxicity")
        model = load_model(cfg.model_path("toxicity", "model"))
        toxicity = ToxicityTaxonomy(
            categories=tuple(tsec.get("categories", model.classes)),
            model=model,
            threshold=float(tsec.get("threshold", 0.5)),
        )

    bsec = cfg.section("broken_fix")
    broken_cfg = BrokenFixConfig(
        replacement_density_max=float(bsec.get("replacement_density_max", 0.005)),
        signatures=tuple(bsec.get("signatures", BrokenFixConfig().signatures)),
    )
    fsec = cfg.section("final_refine")
    refine_cfg = RefineConfig(
        pii=default_pii_patterns(),
        fold_fullwidth_punct=bool(fsec.get("fold_fullwidth_punct", True)),
    )
    return WorkerContext(
        stages=stages,
        rules=_heuristic_rules_from(cfg),
        broken_cfg=broken_cfg,
        lm=lm,
        band=band,
        quality_ensemble=ensemble,
        toxicity=toxicity,
        refine_cfg=refine_cfg,
    )


def _dedup_config_from(cfg: PipelineConfig) -> DedupConfig:
    d = cfg.section("dedup")
    return DedupConfig(
        tau=float(d.get("tau", 0.85)),
        term_unit=int(d.get("term_unit", 3)),
        exact_pairwise_limit=int(d.get("exact_pairwise_limit", 2000)),
    )


# --- per-document stage chain ----------------------------------------------------------

def _close_stage(doc: Document, stage: Stage, score: float | None = None) -> Document:
    """Ensure exactly one audit event per stage: append Kept if the op didn't."""
    if doc.audit and doc.audit[-1].stage is stage:
        return doc
    return doc.with_event(StageEvent(stage, Verdict.KEPT, score=score))


def _reject(doc: Document, stage: Stage, reason: str, score: float | None = None) -> Document:
    return doc.with_event(StageEvent(stage, Verdict.REJECTED, detail=reason, score=score))


def process_document(doc: Document, ctx: WorkerContext) -> Document:
    """Run one document through the per-document stages (2..8).

    Returns the document with a complete audit trail; a terminal REJECTED
    event means it goes to the rejects stream.
    """
    stages = ctx.stages
    if Stage.HEURISTIC in stages:
        outcome = heuristic_filter(doc, ctx.rules)
        if not outcome.kept:
            return _reject(doc, Stage.HEURISTIC, outcome.reason)
        doc = _close_stage(outcome.doc, Stage.HEURISTIC)
        if not doc.text.strip():
            return _reject(doc, Stage.HEURISTIC, "empty_after_strip")

    if Stage.PERPLEXITY in stages:
        ppl = ngram_lm.perplexity(ctx.lm, doc.text)
        if ppl < ctx.band.low:
            return _reject(doc, Stage.PERPLEXITY, "ppl_low", score=ppl)
        if ppl > ctx.band.high:
            return _reject(doc, Stage.PERPLEXITY, "ppl_high", score=ppl)
        doc = _close_stage(doc, Stage.PERPLEXITY, score=ppl)

    if Stage.BROKEN_FIX in stages:
        outcome = fix_broken(doc, ctx.broken_cfg)
        if not outcome.kept:
            return _reject(doc, Stage.BROKEN_FIX, outcome.reason)
        doc = _close_stage(outcome.doc, Stage.BROKEN_FIX)
        if not doc.text.strip():
            return _reject(doc, Stage.BROKEN_FIX, "empty_after_repair")

    if Stage.QUALITY in stages:
        qs = score_quality(ctx.quality_ensemble, doc)
        if not qs.kept:
            return _reject(doc, Stage.QUALITY, qs.reason, score=min(qs.general, qs.educational))
        doc = _close_stage(doc, Stage.QUALITY, score=min(qs.general, qs.educational))

    if Stage.TOXICITY in stages:
        ts = score_toxicity(ctx.toxicity, doc)
        if not ts.kept:
            return _reject(doc, Stage.TOXICITY, ts.reason, score=max(ts.scores.values()))
        doc = _close_stage(doc, Stage.TOXICITY)

    if Stage.LINE_DEDUP in stages:
        doc = dedup_mod.dedup_lines(doc)
        doc = _close_stage(doc, Stage.LINE_DEDUP)
        if not doc.text.strip():
            return _reject(doc, Stage.LINE_DEDUP, "empty_after_dedup")

    if Stage.FINAL_REFINE in stages:
        doc, _counts = final_refine_with_counts(doc, ctx.refine_cfg)
        doc = _close_stage(doc, Stage.FINAL_REFINE)
        if not doc.text.strip():
            return _reject(doc, Stage.FINAL_REFINE, "empty_after_refine")

    return doc


_WORKER_CTX: WorkerContext | None = None


def _init_worker(ctx: WorkerContext) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker_process(doc: Document) -> Document:
    return process_document(doc, _WORKER_CTX)


# --- streaming dedup scan ----------------------------------------------------------------

class _DedupScanner:
    """Order-stable first-seen-wins scan against retained kept vectors."""

    def __init__(self, cfg: DedupConfig, idf: dict[int, float], exact: bool):
        self.cfg = cfg
        self.idf = idf
        self.exact = exact
        self.kept_vecs: list[TfIdfVector] = []
        self.kept_ids: list[str] = []
        self.index = dedup_mod._KeptIndex(cfg, idf)
        self.empty_first: dict[str, str] = {}

    def vector_of(self, text: str) -> TfIdfVector:
        ids, counts = dedup_mod._term_counts(text, self.cfg)
        if ids.size == 0:
            return TfIdfVector(ids, counts, 0.0)
        w = counts * np.array([self.idf.get(t, 0.0) for t in ids.tolist()])
        keep = w > 0.0
        ids, w = ids[keep], w[keep]
        return TfIdfVector(ids, w, float(np.sqrt(np.sum(w * w))))

    def check(self, doc: Document) -> tuple[str, float] | None:
        """Returns (duplicate_of, similarity) or None when the doc is kept."""
        vec = self.vector_of(doc.text)
        if vec.empty:
            prior = self.empty_first.get(doc.text)
            if prior is not None:
                return prior, 1.0
            self.empty_first[doc.text] = doc.id
        else:
            positions = (
                range(len(self.kept_vecs)) if self.exact else self.index.candidates(vec)
            )
            for pos in positions:
                other = self.kept_vecs[pos]
                if other.empty:
                    continue
                sim = dedup_mod.cosine(vec, other)
                if sim >= self.cfg.tau:
                    return self.kept_ids[pos], sim
            self.index.add(len(self.kept_vecs), vec)
        self.kept_vecs.append(vec)
        self.kept_ids.append(doc.id)
        return None


# --- run orchestration ----------------------------------------------------------------------

@dataclass
class RunResult:
    manifest: dict
    kept_path: Path | None = None
    rejects_path: Path | None = None

    @property
    def reports(self) -> list[dict]:
        return self.manifest["reports"]


def _report_for(reports: dict[Stage, StageReport], doc: Document, stages) -> None:
    rejected = False
    events = {ev.stage: ev for ev in doc.audit}
    for stage in stages:
        ev = events.get(stage)
        if rejected or ev is None:
            break
        rep = reports[stage]
        rep.n_in += 1
        if ev.verdict is Verdict.REJECTED:
            rep.n_rejected += 1
            # coarse reason code: "duplicate_of:<id>" histograms as "duplicate_of"
            reason = (ev.detail or "unspecified").split(":", 1)[0]
            rep.reasons[reason] = rep.reasons.get(reason, 0) + 1
            rejected = True
        else:
            rep.n_out += 1
            if ev.verdict is Verdict.MODIFIED:
                rep.n_modified += 1


def _stream_documents(
    input_docs: Callable[[], Iterator[Document]],
    registry: RefinerRegistry | None,
) -> Iterator[Document]:
    seen_ids: set[str] = set()
    for doc in input_docs():
        doc = validate(doc, seen_ids=seen_ids)
        if registry is not None:
            doc = registry.apply(doc)
        yield doc


def run_documents(
    cfg: PipelineConfig,
    input_docs: Callable[[], Iterator[Document]],
    *,
    stages: tuple[Stage, ...] | None = None,
    workers: int = 1,
    on_kept: Callable[[Document], None] | None = None,
    on_rejected: Callable[[Document], None] | None = None,
    on_dedup_reject: Callable[[dict], None] | None = None,
    worker_ctx: WorkerContext | None = None,
) -> list[StageReport]:
    """Core engine over a re-streamable document source.

    ``input_docs`` is a zero-argument callable returning a fresh iterator;
    the dedup stage needs two passes (df table, then the scan), every other
    stage streams once. Callbacks receive finished documents in input order.
    """
    stages = stages if stages is not None else cfg.stages()
    ctx = worker_ctx or build_worker_context(cfg, stages)
    registry = None
    if cfg.section("refiners").get("enabled"):
        registry = default_registry_with_builtins()

    dedup_enabled = Stage.DEDUP in stages
    scanner: _DedupScanner | None = None
    n_input = 0
    if dedup_enabled:
        dcfg = _dedup_config_from(cfg)
        df: dict[int, int] = {}
        n = 0
        for doc in _stream_documents(input_docs, registry):
            ids, _ = dedup_mod._term_counts(doc.text, dcfg)
            for t in ids.tolist():
                df[t] = df.get(t, 0) + 1
            n += 1
        idf = {t: math.log(n / d) for t, d in df.items()} if n else {}
        scanner = _DedupScanner(dcfg, idf, exact=n <= dcfg.exact_pairwise_limit)

    reports = {stage: StageReport(stage=stage.value) for stage in stages}

    def survivors() -> Iterator[Document]:
        nonlocal n_input
        for doc in _stream_documents(input_docs, registry):
            n_input += 1
            if scanner is not None:
                hit = scanner.check(doc)
                if hit is not None:
                    dup_of, sim = hit
                    rejected = _reject(doc, Stage.DEDUP, f"duplicate_of:{dup_of}", score=sim)
                    _report_for(reports, rejected, stages)
                    if on_dedup_reject is not None:
                        on_dedup_reject(
                            {"id": doc.id, "duplicate_of": dup_of, "similarity": sim}
                        )
                    if on_rejected is not None:
                        on_rejected(rejected)
                    continue
                doc = _close_stage(doc, Stage.DEDUP)
            yield doc

    if workers > 1:
        pool = multiprocessing.get_context("fork").Pool(
            processes=workers, initializer=_init_worker, initargs=(ctx,)
        )
        try:
            results: Iterable[Document] = pool.imap(
                _worker_process, survivors(), chunksize=_CHUNKSIZE
            )
            _consume(results, reports, stages, on_kept, on_rejected)
        finally:
            pool.close()
            pool.join()
    else:
        results = (process_document(doc, ctx) for doc in survivors())
        _consume(results, reports, stages, on_kept, on_rejected)

    return [reports[stage] for stage in stages]


def _consume(results, reports, stages, on_kept, on_rejected) -> None:
    for doc in results:
        _report_for(reports, doc, stages)
        terminal_reject = doc.audit and doc.audit[-1].verdict is Verdict.REJECTED
        if terminal_reject:
            if on_rejected is not None:
                on_rejected(doc)
        else:
            if on_kept is not None:
                on_kept(doc)


def run_pipeline(
    cfg: PipelineConfig,
    input_path: str | Path,
    output_path: str | Path,
    *,
    workers: int = 1,
    stages_override: list[str] | None = None,
    seed: int | None = None,
) -> RunResult:
    """File-to-file pipeline run; returns the manifest.

    Outputs: kept corpus at ``output_path``, rejected documents with audit
    trails at ``<output>.rejects.jsonl``, a dedup log at
    ``<output>.dedup_log.jsonl``, and the manifest at ``<output>.manifest.json``.
    Identical (input, config, seed) produce byte-identical outputs and
    manifests regardless of ``workers``.
    """
    input_path = Path(input_path)
    output_path = Path(output_path)
    if not input_path.exists():
        raise IoError(f"input not found: {input_path}")
    stages = cfg.stages(stages_override)
    seed = cfg.seed if seed is None else seed
    output_path.parent.mkdir(parents=True, exist_ok=True)
    rejects_path = output_path.with_suffix(output_path.suffix + ".rejects.jsonl")
    dedup_log_path = output_path.with_suffix(output_path.suffix + ".dedup_log.jsonl")
    manifest_path = output_path.with_suffix(output_path.suffix + ".manifest.json")

    n_kept = 0
    with open_maybe_gzip(output_path, "wt") as kept_fh, \
            open(rejects_path, "w", encoding="utf-8") as rej_fh, \
            open(dedup_log_path, "w", encoding="utf-8") as log_fh:

        def on_kept(doc: Document) -> None:
            nonlocal n_kept
            kept_fh.write(dumps_document(doc) + "\n")
            n_kept += 1

        def on_rejected(doc: Document) -> None:
            rej_fh.write(dumps_document(doc) + "\n")

        def on_dedup_reject(record: dict) -> None:
            log_fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")

        reports = run_documents(
            cfg,
            lambda: read_corpus(input_path),
            stages=stages,
            workers=workers,
            on_kept=on_kept,
            on_rejected=on_rejected,
            on_dedup_reject=on_dedup_reject,
        )

    n_in = reports[0].n_in if reports else 0
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "config_hash": cfg.config_hash(),
        "seed": seed,
        "stages": [s.value for s in stages],
        "input": {"path": str(input_path), "documents": n_in},
        "output": {
            "path": str(output_path),
            "documents": n_kept,
            "sha256": _file_digest(output_path),
        },
        "reports": [r.to_dict() for r in reports],
        "cumulative_yield": cumulative_yield(reports),
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    log.info(
        "pipeline done: %d in, %d kept (yield %.1f%%)",
        n_in, n_kept, 100.0 * manifest["cumulative_yield"],
    )
    return RunResult(manifest=manifest, kept_path=output_path, rejects_path=rejects_path)


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def make_refilter_callable(
    cfg: PipelineConfig,
    *,
    stages: tuple[Stage, ...] | None = None,
    reference_docs: Sequence[Document] = (),
) -> Callable[[Sequence[Document]], tuple[list[Document], list[Document]]]:
    """In-memory pipeline callable for synth.refilter (same stages, same configs).

    ``reference_docs`` (e.g. the already-kept corpus) are prepended to the
    scan so a synthetic duplicate of an existing document is rejected at the
    dedup stage; only the batch's own results are returned.
    """
    resolved = stages if stages is not None else cfg.stages()
    ctx = build_worker_context(cfg, resolved)
    # reference docs re-enter the scan with fresh audits (their prior trail
    # would collide with the new stage events)
    refs = [replace(d, audit=()) for d in reference_docs]

    def run(docs: Sequence[Document]) -> tuple[list[Document], list[Document]]:
        batch_ids = {d.id for d in docs}
        combined = refs + list(docs)
        kept: list[Document] = []
        rejected: list[Document] = []
        run_documents(
            cfg,
            lambda: iter(combined),
            stages=resolved,
            workers=1,
            on_kept=kept.append,
            on_rejected=rejected.append,
            worker_ctx=ctx,
        )
        return (
            [d for d in kept if d.id in batch_ids],
            [d for d in rejected if d.id in batch_ids],
        )

    return run
