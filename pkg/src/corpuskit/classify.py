"""Tag assignment: language detection, linear domain classifier, mode/tone rules.

The trainable engine is a one-vs-rest logistic regression over hashed
character n-grams. Training is plain full-batch gradient descent with a
zero init, so a (data order, seed) pair reproduces the exact same weights
bit for bit; no external ML stack is involved. Inference is pure and safe
to run from any number of workers.
"""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from . import hashing
from .errors import (
    EmptyText,
    EmptyTrainingSet,
    FeatureSpecMismatch,
    OrphanSubdomain,
    SingleClass,
)
from .records import (
    Domain,
    DomainRegistry,
    Language,
    Mode,
    Tone,
    default_registry,
)

__all__ = [
    "FeatureSpec", "LinearTextModel", "detect_language",
    "train_linear_classifier", "train_domain_classifier", "classify_domain",
    "tag_mode", "tag_tone", "save_model", "load_model",
]


# --- language detection ------------------------------------------------------

_CODE_FENCE = "```"
_CODE_KEYWORDS = re.compile(
    r"\b(def|return|import|class|lambda|function|var|const|let|void|printf"
    r"|include|public|static|elif|endif|struct|typedef)\b"
)
_CODE_PUNCT = frozenset("{}();=<>[]")
_MATH_SYMBOLS = frozenset("=+−*/^<>∑∏∫√≤≥≠≈±∞∂∇·×÷⊂⊃∈∀∃λθπΣΔ")


def _is_hangul(cp: int) -> bool:
    return (
        0xAC00 <= cp <= 0xD7A3      # syllables
        or 0x1100 <= cp <= 0x11FF   # conjoining jamo
        or 0x3130 <= cp <= 0x318F   # compatibility jamo
    )


def detect_language(text: str) -> tuple[Language, float]:
    """Script-based language tag with a confidence in [0, 1].

    Deterministic rules, checked in order: code fences / code keywords,
    math-symbol density, then the Hangul-vs-Latin letter histogram with a
    70% dominance threshold (between the thresholds -> MultiLanguage).
    """
    if not text.strip():
        raise EmptyText("cannot detect language of empty text")

    if _CODE_FENCE in text:
        return Language.CODE, 0.95
    keyword_hits = len(_CODE_KEYWORDS.findall(text))
    punct_hits = sum(1 for c in text if c in _CODE_PUNCT)
    if keyword_hits >= 2 and punct_hits >= 2:
        return Language.CODE, 0.8

    non_space = [c for c in text if not c.isspace()]
    math_hits = sum(1 for c in non_space if c in _MATH_SYMBOLS)
    if non_space and math_hits / len(non_space) >= 0.08:
        return Language.MATH, min(1.0, 0.5 + math_hits / len(non_space))

    hangul = latin = 0
    for c in text:
        cp = ord(c)
        if _is_hangul(cp):
            hangul += 1
        elif c.isalpha() and cp < 0x2500:
            latin += 1
    letters = hangul + latin
    if letters == 0:
        return Language.UNKNOWN, 0.0
    share = hangul / letters
    if share >= 0.7:
        return Language.KOREAN, share
    if share <= 0.3:
        return Language.ENGLISH, 1.0 - share
    return Language.MULTI_LANGUAGE, 1.0 - abs(share - 0.5) * 2.0


# --- hashed-feature linear models ---------------------------------------------

@dataclass(frozen=True)
class FeatureSpec:
    """Hashed n-gram feature space: 2**b buckets over the given orders."""

    b: int = 20
    orders: tuple[int, ...] = (2, 3)
    seed: int = 0

    @property
    def n_buckets(self) -> int:
        return 1 << self.b

    def vector(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        """L2-normalized sparse feature vector (indices, values)."""
        idx, counts = hashing.hashed_counts(text, self.orders, self.seed, self.n_buckets)
        if idx.size == 0:
            raise EmptyText("text yields no features")
        norm = np.sqrt(np.sum(counts * counts))
        return idx, counts / norm


@dataclass
class LinearTextModel:
    """One-vs-rest logistic model over hashed character n-grams.

    ``weights`` has one row of length 2**spec.b per class; multi-class
    probabilities come from a softmax over the per-class scores, while
    independent (multi-label) uses read the per-row sigmoids.
    """

    spec: FeatureSpec
    classes: tuple[str, ...]
    weights: np.ndarray
    bias: np.ndarray
    version: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.weights.shape != (len(self.classes), self.spec.n_buckets):
            raise FeatureSpecMismatch(
                f"weight matrix {self.weights.shape} does not match "
                f"{len(self.classes)} classes x 2^{self.spec.b} buckets"
            )

    def scores(self, text: str) -> np.ndarray:
        idx, vals = self.spec.vector(text)
        return self.scores_sparse(idx, vals)

    def scores_sparse(self, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
        if idx.size and int(idx.max()) >= self.spec.n_buckets:
            raise FeatureSpecMismatch("feature index out of range for this model")
        return self.weights[:, idx] @ vals + self.bias

    def predict_proba(self, text: str) -> np.ndarray:
        """Softmax probabilities over classes (sums to 1)."""
        return softmax(self.scores(text))

    def predict_sigmoid(self, text: str) -> np.ndarray:
        """Independent per-class sigmoid probabilities."""
        return _sigmoid(self.scores(text))


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - np.max(scores)
    e = np.exp(z)
    return e / e.sum()


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _feature_matrix(texts: list[str], spec: FeatureSpec) -> sparse.csr_matrix:
    indptr = [0]
    indices: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for text in texts:
        idx, vals = spec.vector(text)
        indices.append(idx)
        data.append(vals)
        indptr.append(indptr[-1] + idx.size)
    return sparse.csr_matrix(
        (np.concatenate(data), np.concatenate(indices), np.array(indptr)),
        shape=(len(texts), spec.n_buckets),
    )


def train_linear_classifier(
    labeled: list[tuple[str, str]],
    spec: FeatureSpec | None = None,
    *,
    seed: int = 0,
    epochs: int = 200,
    lr: float = 2.0,
    l2: float = 1e-6,
) -> LinearTextModel:
    """Train one-vs-rest logistic regressions by deterministic gradient steps.

    Reproducible bit for bit for a fixed (data order, seed): weights start
    at zero and every step is a full-batch update.
    """
    if not labeled:
        raise EmptyTrainingSet("no training examples")
    spec = spec or FeatureSpec(seed=seed)
    texts = [t for t, _ in labeled]
    labels = [y for _, y in labeled]
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise SingleClass(f"need >=2 labels, got {classes}")

    X = _feature_matrix(texts, spec)
    Xt = X.T.tocsr()
    n = X.shape[0]
    weights = np.zeros((len(classes), spec.n_buckets), dtype=np.float64)
    bias = np.zeros(len(classes), dtype=np.float64)
    for ci, cls in enumerate(classes):
        y = np.array([1.0 if lab == cls else 0.0 for lab in labels])
        w = weights[ci]
        b = 0.0
        for _ in range(epochs):
            p = _sigmoid(X @ w + b)
            err = (p - y) / n
            grad_w = Xt @ err
            if l2:
                grad_w += l2 * w
            w -= lr * grad_w
            b -= lr * float(err.sum())
        bias[ci] = b
    return LinearTextModel(spec=spec, classes=classes, weights=weights, bias=bias)


def train_domain_classifier(
    labeled: list[tuple[str, str]],
    *,
    seed: int,
    b: int = 20,
    orders: tuple[int, ...] = (2, 3),
    epochs: int = 200,
    lr: float = 2.0,
) -> LinearTextModel:
    """Domain classifier over subdomain labels (parent domain via registry)."""
    spec = FeatureSpec(b=b, orders=orders, seed=seed)
    return train_linear_classifier(labeled, spec, epochs=epochs, lr=lr)


def classify_domain(
    model: LinearTextModel,
    text: str,
    registry: DomainRegistry | None = None,
) -> tuple[Domain, str, float]:
    """(domain, subdomain, probability) for the argmax class of ``model``."""
    probs = model.predict_proba(text)
    best = int(np.argmax(probs))
    subdomain = model.classes[best]
    registry = registry or default_registry()
    domain = registry.parent_of(subdomain)
    if domain is None:
        raise OrphanSubdomain(f"model class {subdomain!r} not in registry")
    return domain, subdomain, float(probs[best])


# --- rule-based mode and tone --------------------------------------------------

SPOKEN_MARKERS = ("ㅋㅋ", "ㅎㅎ", "ㅠㅠ", "ㅜㅜ", "^^", ";;", "!?", "~")
FORMAL_ENDINGS = ("습니다", "습니까", "입니다", "합니다", "십시오", "요")
INFORMAL_ENDINGS = ("야", "냐", "니", "어", "지", "셈", "임")

_SENTENCE_SPLIT = re.compile(r"[.!?\n]+")


def _marker_density(text: str, markers: tuple[str, ...]) -> float:
    hits = sum(text.count(m) for m in markers)
    return 100.0 * hits / max(1, len(text))


def tag_mode(text: str, *, spoken_density: float = 0.8) -> Mode:
    """Spoken when chat-marker/ellipsis density passes the threshold."""
    if not text.strip():
        return Mode.UNKNOWN
    density = _marker_density(text, SPOKEN_MARKERS) + _marker_density(text, ("…", "...."))
    return Mode.SPOKEN if density >= spoken_density else Mode.WRITTEN


def tag_tone(text: str) -> Tone:
    """Formal iff honorific sentence endings dominate; emoticons count informal."""
    if not text.strip():
        return Tone.UNKNOWN
    formal = informal = 0
    for sentence in _SENTENCE_SPLIT.split(text):
        sentence = sentence.strip()
        if not sentence:
            continue
        if sentence.endswith(FORMAL_ENDINGS):
            formal += 1
        elif sentence.endswith(INFORMAL_ENDINGS):
            informal += 1
    informal += sum(text.count(m) for m in ("ㅋㅋ", "ㅎㅎ", "ㅠㅠ"))
    if formal > informal and formal > 0:
        return Tone.FORMAL
    if informal > formal:
        return Tone.INFORMAL
    return Tone.UNKNOWN


# --- versioned binary model file ------------------------------------------------

_MAGIC = b"CKLT"
_VERSION = 1


def save_model(model: LinearTextModel, path: str | Path) -> None:
    """Write header {magic, version, b, orders, seed} + class table + f32 weights."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HBB", _VERSION, model.spec.b, len(model.spec.orders)))
        fh.write(struct.pack(f"<{len(model.spec.orders)}B", *model.spec.orders))
        fh.write(struct.pack("<qI", model.spec.seed, len(model.classes)))
        for cls in model.classes:
            raw = cls.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(model.bias.astype("<f4").tobytes())
        for row in model.weights:
            fh.write(row.astype("<f4").tobytes())


def load_model(path: str | Path) -> LinearTextModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FeatureSpecMismatch(f"{path}: not a linear text model file")
        version, b, n_orders = struct.unpack("<HBB", fh.read(4))
        if version != _VERSION:
            raise FeatureSpecMismatch(f"{path}: unsupported model version {version}")
        orders = struct.unpack(f"<{n_orders}B", fh.read(n_orders))
        seed, n_classes = struct.unpack("<qI", fh.read(12))
        classes = []
        for _ in range(n_classes):
            (ln,) = struct.unpack("<H", fh.read(2))
            classes.append(fh.read(ln).decode("utf-8"))
        spec = FeatureSpec(b=b, orders=tuple(orders), seed=seed)
        bias = np.frombuffer(fh.read(4 * n_classes), dtype="<f4").astype(np.float64)
        n_buckets = spec.n_buckets
        weights = np.empty((n_classes, n_buckets), dtype=np.float64)
        for ci in range(n_classes):
            row = np.frombuffer(fh.read(4 * n_buckets), dtype="<f4")
            weights[ci] = row.astype(np.float64)
    return LinearTextModel(
        spec=spec, classes=tuple(classes), weights=weights, bias=bias, version=version
    )
