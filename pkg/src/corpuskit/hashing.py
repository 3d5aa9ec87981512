"""Deterministic character n-gram hashing shared by the feature-based modules.

Hashes are computed with fixed 64-bit polynomial rolling arithmetic plus a
splitmix-style finalizer, entirely in numpy uint64 (wrap-around is modular
and well defined), so identical text produces identical ids on every run,
platform, and worker count. Python's builtin ``hash`` is never used.
"""
from __future__ import annotations

import unicodedata

import numpy as np

_MASK = (1 << 64) - 1
_POLY_I = 1099511628211                 # FNV prime, used as polynomial base
_SEED_MIX_I = 0x9E3779B97F4A7C15
_MIX1_I = 0xFF51AFD7ED558CCD
_MIX2_I = 0xC4CEB9FE1A85EC53

_POLY = np.uint64(_POLY_I)
_MIX1 = np.uint64(_MIX1_I)
_MIX2 = np.uint64(_MIX2_I)
_SHIFT = np.uint64(33)

_EMPTY = np.empty(0, dtype=np.uint64)


def mix64(h: np.ndarray) -> np.ndarray:
    """Finalize to a well-distributed 64-bit value (vectorized)."""
    h = h.astype(np.uint64, copy=True)
    h ^= h >> _SHIFT
    h *= _MIX1
    h ^= h >> _SHIFT
    h *= _MIX2
    h ^= h >> _SHIFT
    return h


def _mix64_int(h: int) -> int:
    h ^= h >> 33
    h = (h * _MIX1_I) & _MASK
    h ^= h >> 33
    h = (h * _MIX2_I) & _MASK
    h ^= h >> 33
    return h


def codepoints(text: str) -> np.ndarray:
    """Text as a uint64 array of Unicode codepoints."""
    if not text:
        return _EMPTY
    return np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32).astype(np.uint64)


def ngram_hashes(cp: np.ndarray, order: int, seed: int) -> np.ndarray:
    """64-bit hashes of every length-``order`` window over codepoints ``cp``."""
    n = len(cp) - order + 1
    if n <= 0:
        return _EMPTY
    init = (seed * _SEED_MIX_I + order) & _MASK
    h = np.full(n, np.uint64(init), dtype=np.uint64)
    for k in range(order):
        h *= _POLY
        h += cp[k : k + n]
    return mix64(h)


def seq_hash64(s: str, seed: int) -> int:
    """Scalar hash of a whole string; agrees with ``ngram_hashes`` windows."""
    h = (seed * _SEED_MIX_I + len(s)) & _MASK
    for c in s:
        h = (h * _POLY_I + ord(c)) & _MASK
    return _mix64_int(h)


def normalize_for_features(text: str) -> str:
    """Canonical text form used before term/feature extraction.

    NFC composition, case folding, and whitespace runs collapsed to single
    spaces; keeps hashing stable across cosmetic variations.
    """
    text = unicodedata.normalize("NFC", text).casefold()
    return " ".join(text.split())


def hashed_counts(
    text: str, orders: tuple[int, ...], seed: int, n_buckets: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sparse hashed n-gram counts of ``text``.

    Returns (bucket indices sorted ascending, counts), both numpy arrays.
    ``n_buckets`` must be a power of two.
    """
    cp = codepoints(normalize_for_features(text))
    mask = np.uint64(n_buckets - 1)
    parts = [ngram_hashes(cp, order, seed) & mask for order in orders]
    all_buckets = np.concatenate(parts) if parts else _EMPTY
    if all_buckets.size == 0:
        return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))
    idx, counts = np.unique(all_buckets, return_counts=True)
    return idx.astype(np.int64), counts.astype(np.float64)


def term_hashes(text: str, order: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Full 64-bit term ids (sorted, unique) and counts for one n-gram order."""
    cp = codepoints(normalize_for_features(text))
    grams = ngram_hashes(cp, order, seed)
    if grams.size == 0:
        return _EMPTY, np.empty(0, dtype=np.float64)
    ids, counts = np.unique(grams, return_counts=True)
    return ids, counts.astype(np.float64)
