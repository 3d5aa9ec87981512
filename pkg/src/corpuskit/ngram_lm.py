"""Interpolated character n-gram model for perplexity filtering.

Probabilities mix maximum-likelihood estimates of every order with a uniform
floor over vocab+UNK, so each observed context distributes exactly unit mass
and perplexity is always finite. "Abnormal" is operationalized as a two-sided
percentile band: degenerate repetition undershoots, gibberish overshoots.

Counting happens in plain string-keyed maps (hand-checkable, serializable);
scoring goes through a derived sorted-hash index so a full document scores in
a handful of vectorized lookups.
"""
from __future__ import annotations

import logging
import math
import re
import struct
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import hashing
from .errors import CorpusTooSmall, EmptyText, SampleTooSmall
from .records import Document

__all__ = [
    "NgramModel", "PerplexityBand", "train_lm", "perplexity", "probability",
    "calibrate_band", "save_lm", "load_lm", "lm_normalize",
]

log = logging.getLogger(__name__)

_BOS = "\x02"
_EOS = "\x03"
_UNK = "\x01"
_BOS_CP = ord(_BOS)
_EOS_CP = ord(_EOS)
_UNK_CP = ord(_UNK)

_CONTROL = re.compile("[\x00-\x08]")

_LM_SEED = 0x1A95


def lm_normalize(text: str) -> str:
    """NFC composition; strips low control bytes reserved for sentinels."""
    return _CONTROL.sub("", unicodedata.normalize("NFC", text))


class _LmIndex:
    """Sorted uint64 hash tables over (context+symbol) grams and contexts."""

    def __init__(self, model: "NgramModel"):
        self.gram_keys: list[np.ndarray] = []
        self.gram_counts: list[np.ndarray] = []
        self.ctx_keys: list[np.ndarray] = []
        self.ctx_totals: list[np.ndarray] = []
        self.unigram_total = 0.0
        self.vocab_cp = np.array(sorted(ord(c) for c in model.vocab), dtype=np.uint64)
        for k in range(1, model.order + 1):
            grams: list[int] = []
            counts: list[float] = []
            ctxs: list[int] = []
            totals: list[float] = []
            for ctx, syms in model.counts[k - 1].items():
                total = float(sum(syms.values()))
                if k == 1:
                    self.unigram_total = total
                else:
                    ctxs.append(hashing.seq_hash64(ctx, _LM_SEED))
                    totals.append(total)
                for sym, cnt in syms.items():
                    grams.append(hashing.seq_hash64(ctx + sym, _LM_SEED))
                    counts.append(float(cnt))
            gk = np.array(grams, dtype=np.uint64)
            order = np.argsort(gk, kind="stable")
            gk = gk[order]
            if gk.size > 1 and np.any(gk[1:] == gk[:-1]):
                raise RuntimeError("64-bit gram hash collision (rebuild with new seed)")
            self.gram_keys.append(gk)
            self.gram_counts.append(np.array(counts, dtype=np.float64)[order])
            ck = np.array(ctxs, dtype=np.uint64)
            corder = np.argsort(ck, kind="stable")
            self.ctx_keys.append(ck[corder])
            self.ctx_totals.append(np.array(totals, dtype=np.float64)[corder])

    @staticmethod
    def _lookup(keys: np.ndarray, vals: np.ndarray, queries: np.ndarray) -> np.ndarray:
        out = np.zeros(queries.size, dtype=np.float64)
        if keys.size == 0:
            return out
        pos = np.searchsorted(keys, queries)
        ok = pos < keys.size
        hit = np.zeros(queries.size, dtype=bool)
        hit[ok] = keys[pos[ok]] == queries[ok]
        out[hit] = vals[pos[hit]]
        return out


@dataclass
class NgramModel:
    """Character model of the given order with interpolation weights.

    ``lambdas[0]`` weighs the uniform floor; ``lambdas[k]`` weighs the
    order-k maximum-likelihood term. ``counts[k-1]`` maps a (k-1)-character
    context string to its symbol counts.
    """

    order: int
    lambdas: tuple[float, ...]
    counts: tuple[dict[str, dict[str, int]], ...]
    vocab: frozenset[str]
    _index: _LmIndex | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.lambdas) != self.order + 1:
            raise ValueError("need one lambda per order plus the floor term")
        if abs(sum(self.lambdas) - 1.0) > 1e-12:
            raise ValueError("lambdas must sum to 1")
        if any(l < 0 for l in self.lambdas):
            raise ValueError("lambdas must be non-negative")

    @property
    def vocab_size_with_unk(self) -> int:
        return len(self.vocab) + 1

    def index(self) -> _LmIndex:
        if self._index is None:
            self._index = _LmIndex(self)
        return self._index


def _uniform_lambdas(order: int) -> tuple[float, ...]:
    return tuple([1.0 / (order + 1)] * (order + 1))


def train_lm(
    corpus: Iterable[Document | str],
    order: int = 5,
    lambdas: Sequence[float] | None = None,
) -> NgramModel:
    """Collect counts for orders 1..order over sentinel-padded documents.

    Deterministic: same corpus in the same order reproduces the same model.
    """
    texts = [lm_normalize(d.text if isinstance(d, Document) else d) for d in corpus]
    texts = [t for t in texts if t]
    total = sum(len(t) for t in texts)
    if total < order:
        raise CorpusTooSmall(f"{total} characters < order {order}")
    counts: tuple[dict[str, dict[str, int]], ...] = tuple({} for _ in range(order))
    vocab: set[str] = {_EOS}
    bos = _BOS * (order - 1)
    for t in texts:
        vocab.update(t)
        seq = bos + t + _EOS
        for pos in range(order - 1, len(seq)):
            sym = seq[pos]
            for k in range(1, order + 1):
                ctx = seq[pos - k + 1 : pos]
                by_sym = counts[k - 1].setdefault(ctx, {})
                by_sym[sym] = by_sym.get(sym, 0) + 1
    lam = tuple(lambdas) if lambdas is not None else _uniform_lambdas(order)
    return NgramModel(order=order, lambdas=lam, counts=counts, vocab=frozenset(vocab))


def probability(model: NgramModel, context: str, symbol: str) -> float:
    """Interpolated p(symbol | context); reference (map-based) route.

    ``context`` is the up-to-(order-1) preceding characters, already
    sentinel-padded by the caller when at document start.
    """
    if symbol not in model.vocab and symbol != _UNK:
        symbol = _UNK
    p = model.lambdas[0] / model.vocab_size_with_unk
    for k in range(1, model.order + 1):
        ctx = context[len(context) - (k - 1) :] if k > 1 else ""
        by_sym = model.counts[k - 1].get(ctx)
        if by_sym:
            total = sum(by_sym.values())
            p += model.lambdas[k] * (by_sym.get(symbol, 0) / total)
    return p


def _encode(model: NgramModel, text: str) -> np.ndarray:
    """Sentinel-padded codepoints with out-of-vocab symbols mapped to UNK."""
    vocab_cp = model.index().vocab_cp
    cp = hashing.codepoints(text)
    pos = np.searchsorted(vocab_cp, cp)
    ok = pos < vocab_cp.size
    known = np.zeros(cp.size, dtype=bool)
    known[ok] = vocab_cp[pos[ok]] == cp[ok]
    cp = np.where(known, cp, np.uint64(_UNK_CP))
    head = np.full(model.order - 1, _BOS_CP, dtype=np.uint64)
    return np.concatenate([head, cp, np.array([_EOS_CP], dtype=np.uint64)])


def token_log_probs(model: NgramModel, text: str) -> np.ndarray:
    """ln p(x_t | context) for every scored position, including end sentinel."""
    normed = lm_normalize(text)
    if not normed:
        raise EmptyText("cannot score empty text")
    seq = _encode(model, normed)
    idx = model.index()
    L = seq.size
    T = L - (model.order - 1)
    p = np.full(T, model.lambdas[0] / model.vocab_size_with_unk, dtype=np.float64)
    for k in range(1, model.order + 1):
        grams = hashing.ngram_hashes(seq, k, _LM_SEED)[model.order - k : L - k + 1]
        cnt = idx._lookup(idx.gram_keys[k - 1], idx.gram_counts[k - 1], grams)
        if k == 1:
            tot = np.full(T, idx.unigram_total)
        else:
            ctxs = hashing.ngram_hashes(seq, k - 1, _LM_SEED)[model.order - k : L - k + 1]
            tot = idx._lookup(idx.ctx_keys[k - 1], idx.ctx_totals[k - 1], ctxs)
        ml = np.divide(cnt, tot, out=np.zeros_like(cnt), where=tot > 0)
        p += model.lambdas[k] * ml
    return np.log(p)


def perplexity(model: NgramModel, text: str) -> float:
    """exp of the mean negative log-probability per character (with EOS)."""
    lp = token_log_probs(model, text)
    return float(math.exp(-lp.sum() / lp.size))


# --- two-sided calibration ---------------------------------------------------

@dataclass(frozen=True)
class PerplexityBand:
    low: float
    high: float
    calibration_quantiles: tuple[float, float] = (0.01, 0.99)

    def __post_init__(self):
        if not (0.0 < self.low < self.high):
            raise ValueError(f"band requires 0 < low < high, got ({self.low}, {self.high})")

    def contains(self, ppl: float) -> bool:
        return self.low <= ppl <= self.high

    def to_dict(self) -> dict:
        return {
            "low": self.low,
            "high": self.high,
            "quantiles": list(self.calibration_quantiles),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PerplexityBand":
        return cls(d["low"], d["high"], tuple(d.get("quantiles", (0.01, 0.99))))


def _nearest_rank(sorted_vals: list[float], q: float) -> float:
    n = len(sorted_vals)
    rank = max(1, math.ceil(q * n))
    return sorted_vals[min(rank, n) - 1]


def calibrate_band(
    model: NgramModel,
    sample: Sequence[Document | str],
    quantiles: tuple[float, float] = (0.01, 0.99),
    min_sample: int = 100,
) -> PerplexityBand:
    """Empirical nearest-rank quantile band over sample perplexities.

    A degenerate (all-identical) sample yields low == high; the band is then
    widened by 1% each way and a warning is logged.
    """
    if len(sample) < min_sample:
        raise SampleTooSmall(f"calibration needs >= {min_sample} docs, got {len(sample)}")
    ppls = sorted(
        perplexity(model, d.text if isinstance(d, Document) else d) for d in sample
    )
    low = _nearest_rank(ppls, quantiles[0])
    high = _nearest_rank(ppls, quantiles[1])
    if low == high:
        log.warning("degenerate perplexity band at %.6g; widening by ±1%%", low)
        low, high = low * 0.99, high * 1.01
    return PerplexityBand(low=low, high=high, calibration_quantiles=quantiles)


# --- versioned binary persistence -----------------------------------------------

_MAGIC = b"CKNG"
_VERSION = 1


def save_lm(model: NgramModel, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HBB", _VERSION, model.order, len(model.lambdas)))
        fh.write(struct.pack(f"<{len(model.lambdas)}d", *model.lambdas))
        vocab_cp = sorted(ord(c) for c in model.vocab)
        fh.write(struct.pack("<I", len(vocab_cp)))
        fh.write(np.array(vocab_cp, dtype="<u4").tobytes())
        for k in range(1, model.order + 1):
            table = model.counts[k - 1]
            fh.write(struct.pack("<I", len(table)))
            for ctx, syms in table.items():
                fh.write(np.array([ord(c) for c in ctx], dtype="<u4").tobytes())
                fh.write(struct.pack("<I", len(syms)))
                for sym, cnt in syms.items():
                    fh.write(struct.pack("<IQ", ord(sym), cnt))


def load_lm(path: str | Path) -> NgramModel:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not an n-gram model file")
        version, order, n_lambdas = struct.unpack("<HBB", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        lambdas = struct.unpack(f"<{n_lambdas}d", fh.read(8 * n_lambdas))
        (n_vocab,) = struct.unpack("<I", fh.read(4))
        vocab_cp = np.frombuffer(fh.read(4 * n_vocab), dtype="<u4")
        vocab = frozenset(chr(int(c)) for c in vocab_cp)
        counts: list[dict[str, dict[str, int]]] = []
        for k in range(1, order + 1):
            (n_ctx,) = struct.unpack("<I", fh.read(4))
            table: dict[str, dict[str, int]] = {}
            for _ in range(n_ctx):
                raw = fh.read(4 * (k - 1))
                ctx = "".join(chr(int(c)) for c in np.frombuffer(raw, dtype="<u4"))
                (n_syms,) = struct.unpack("<I", fh.read(4))
                syms: dict[str, int] = {}
                for _ in range(n_syms):
                    cp, cnt = struct.unpack("<IQ", fh.read(12))
                    syms[chr(cp)] = cnt
                table[ctx] = syms
            counts.append(table)
    return NgramModel(order=order, lambdas=tuple(lambdas), counts=tuple(counts), vocab=vocab)
