"""Model-based quality and toxicity filtering on the linear classifier engine.

Stage 5 combines two binary classifiers (general quality, educational
quality); stage 6 scores a set of toxicity categories one-vs-rest and
rejects on the worst category. Scoring is pure and parallel-safe.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classify import FeatureSpec, LinearTextModel, train_linear_classifier
from .errors import UntrainedModel
from .records import Document

__all__ = [
    "POSITIVE_LABEL", "NEGATIVE_LABEL", "CLEAN_LABEL", "DEFAULT_TOXICITY_CATEGORIES",
    "QualityEnsemble", "QualityScore", "score_quality", "train_quality_model",
    "ToxicityTaxonomy", "ToxicityScore", "score_toxicity", "train_toxicity_model",
]

POSITIVE_LABEL = "good"
NEGATIVE_LABEL = "bad"
CLEAN_LABEL = "clean"

#: Korean toxicity/bias taxonomy shape: seven named harm classes.
DEFAULT_TOXICITY_CATEGORIES = (
    "sexual_content",
    "violations",
    "violence",
    "bias_discrimination",
    "politics",
    "disasters",
    "profanity",
)


def _positive_index(model: LinearTextModel) -> int:
    try:
        return model.classes.index(POSITIVE_LABEL)
    except ValueError:
        raise UntrainedModel(
            f"binary model lacks a {POSITIVE_LABEL!r} class: {model.classes}"
        ) from None


def train_quality_model(
    labeled: list[tuple[str, str]],
    spec: FeatureSpec | None = None,
    **train_kwargs,
) -> LinearTextModel:
    """Binary classifier from (text, good|bad) records."""
    return train_linear_classifier(labeled, spec, **train_kwargs)


@dataclass(frozen=True)
class QualityEnsemble:
    general: LinearTextModel | None
    educational: LinearTextModel | None
    thresholds: tuple[float, float] = (0.5, 0.5)
    combine: str = "both"           # "both" | "either"

    def __post_init__(self):
        for t in self.thresholds:
            if not (0.0 < t < 1.0):
                raise ValueError(f"thresholds must lie in (0, 1), got {self.thresholds}")
        if self.combine not in ("both", "either"):
            raise ValueError(f"combine must be 'both' or 'either', got {self.combine!r}")


@dataclass(frozen=True)
class QualityScore:
    general: float
    educational: float
    kept: bool
    reason: str | None = None


def score_quality(ensemble: QualityEnsemble, doc: Document | str) -> QualityScore:
    """Kept iff the configured combination of probability thresholds holds."""
    if ensemble.general is None or ensemble.educational is None:
        raise UntrainedModel("quality ensemble is missing a trained model")
    text = doc.text if isinstance(doc, Document) else doc
    p_gen = float(
        ensemble.general.predict_sigmoid(text)[_positive_index(ensemble.general)]
    )
    p_edu = float(
        ensemble.educational.predict_sigmoid(text)[_positive_index(ensemble.educational)]
    )
    ok_gen = p_gen >= ensemble.thresholds[0]
    ok_edu = p_edu >= ensemble.thresholds[1]
    if ensemble.combine == "both":
        kept = ok_gen and ok_edu
    else:
        kept = ok_gen or ok_edu
    reason = None
    if not kept:
        reason = "general_quality" if not ok_gen else "educational_quality"
    return QualityScore(general=p_gen, educational=p_edu, kept=kept, reason=reason)


def train_toxicity_model(
    labeled: list[tuple[str, str]],
    categories: tuple[str, ...] = DEFAULT_TOXICITY_CATEGORIES,
    spec: FeatureSpec | None = None,
    **train_kwargs,
) -> LinearTextModel:
    """One-vs-rest over harm categories; ``clean`` rows are pure negatives.

    The returned model's classes are exactly ``categories`` (clean is not a
    class; a clean document simply scores low everywhere).
    """
    seen = {lab for _, lab in labeled}
    unknown = seen - set(categories) - {CLEAN_LABEL}
    if unknown:
        raise ValueError(f"labels outside the taxonomy: {sorted(unknown)}")
    model = train_linear_classifier(
        [(t, lab if lab in categories else CLEAN_LABEL) for t, lab in labeled],
        spec,
        **train_kwargs,
    )
    keep = [model.classes.index(c) for c in categories if c in model.classes]
    classes = tuple(model.classes[i] for i in keep)
    return LinearTextModel(
        spec=model.spec,
        classes=classes,
        weights=model.weights[keep],
        bias=model.bias[keep],
    )


@dataclass(frozen=True)
class ToxicityTaxonomy:
    categories: tuple[str, ...] = DEFAULT_TOXICITY_CATEGORIES
    model: LinearTextModel | None = None
    threshold: float = 0.5

    def __post_init__(self):
        if not self.categories:
            raise ValueError("taxonomy needs at least one category")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")


@dataclass(frozen=True)
class ToxicityScore:
    scores: dict[str, float]
    kept: bool
    reason: str | None = None       # arg-max category when rejected


def score_toxicity(taxonomy: ToxicityTaxonomy, doc: Document | str) -> ToxicityScore:
    """Rejected iff the maximum category score reaches the threshold."""
    if taxonomy.model is None:
        raise UntrainedModel("toxicity taxonomy has no trained model")
    text = doc.text if isinstance(doc, Document) else doc
    sig = taxonomy.model.predict_sigmoid(text)
    scores: dict[str, float] = {}
    for cat in taxonomy.categories:
        if cat in taxonomy.model.classes:
            scores[cat] = float(sig[taxonomy.model.classes.index(cat)])
        else:
            scores[cat] = 0.0
    worst = int(np.argmax([scores[c] for c in taxonomy.categories]))
    worst_cat = taxonomy.categories[worst]
    if scores[worst_cat] >= taxonomy.threshold:
        return ToxicityScore(scores=scores, kept=False, reason=worst_cat)
    return ToxicityScore(scores=scores, kept=True)
