"""corpuskit: corpus curation toolkit for LLM pretraining data.

Library surface: document records and tagging (`records`, `classify`),
the eight-stage web filtering pipeline (`dedup`, `heuristics`, `ngram_lm`,
`quality`, `pipeline`), source-specific refiners (`refiners`), core-set
construction (`coreset`), long-context sampling (`longctx`), synthetic
rewriting (`synth`), and distribution reporting (`stats`).
"""

from .records import (
    Document,
    Domain,
    Language,
    Mode,
    PIPELINE_STAGES,
    SourceKind,
    Stage,
    StageEvent,
    Subsource,
    TagSet,
    Tone,
    Verdict,
    default_registry,
    read_corpus,
    validate,
    write_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "Document", "TagSet", "StageEvent", "Stage", "Verdict",
    "Language", "SourceKind", "Subsource", "Domain", "Mode", "Tone",
    "PIPELINE_STAGES", "default_registry", "validate",
    "read_corpus", "write_corpus", "__version__",
]
