import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpuskit.dedup import (
    DedupConfig,
    cosine,
    dedup_corpus,
    dedup_lines,
    vectorize,
)
from corpuskit.errors import EmptyCorpus
from corpuskit.records import Document, Stage, Verdict


# --- independent brute-force references --------------------------------------------

def _normalize(text: str) -> str:
    import unicodedata

    return " ".join(unicodedata.normalize("NFC", text).casefold().split())


def _trigram_counts(text: str) -> dict[str, int]:
    text = _normalize(text)
    out: dict[str, int] = {}
    for i in range(len(text) - 2):
        g = text[i : i + 3]
        out[g] = out.get(g, 0) + 1
    return out


def reference_tfidf(texts: list[str]) -> list[dict[str, float]]:
    """Pure-dict TF-IDF over explicit trigram strings (no hashing)."""
    counts = [_trigram_counts(t) for t in texts]
    n = len(texts)
    df: dict[str, int] = {}
    for c in counts:
        for g in c:
            df[g] = df.get(g, 0) + 1
    vecs = []
    for c in counts:
        vec = {g: tf * math.log(n / df[g]) for g, tf in c.items()}
        vecs.append({g: w for g, w in vec.items() if w > 0.0})
    return vecs


def reference_cosine(a: dict[str, float], b: dict[str, float]) -> float:
    if not a or not b:
        return 0.0
    dot = sum(w * b[g] for g, w in a.items() if g in b)
    na = math.sqrt(sum(w * w for w in a.values()))
    nb = math.sqrt(sum(w * w for w in b.values()))
    return dot / (na * nb)


def reference_dedup(texts: list[str], tau: float) -> tuple[list[int], list[tuple[int, int]]]:
    """O(n^2) first-seen-wins scan on the reference vectors."""
    vecs = reference_tfidf(texts)
    kept: list[int] = []
    rejected: list[tuple[int, int]] = []
    for i, vec in enumerate(vecs):
        dup_of = None
        for j in kept:
            other = vecs[j]
            if not vec and not other:
                if texts[i] == texts[j]:
                    dup_of = j
                    break
                continue
            if reference_cosine(vec, other) >= tau:
                dup_of = j
                break
        if dup_of is None:
            kept.append(i)
        else:
            rejected.append((i, dup_of))
    return kept, rejected


# --- vectorize ---------------------------------------------------------------------

def test_identical_pair_yields_empty_vectors():
    docs = [Document(id="a", text="같은 본문"), Document(id="b", text="같은 본문")]
    vecs = vectorize(docs)
    assert all(v.empty for v in vecs)


def test_single_doc_corpus_empty_vector():
    vecs = vectorize([Document(id="a", text="하나뿐인 문서")])
    assert vecs[0].empty


def test_three_doc_weights_match_reference_within_1e9():
    texts = ["서울의 역사 이야기", "서울의 문화 이야기", "completely different words"]
    docs = [Document(id=str(i), text=t) for i, t in enumerate(texts)]
    vecs = vectorize(docs)
    refs = reference_tfidf(texts)
    for vec, ref in zip(vecs, refs):
        got = sorted(vec.weights.tolist())
        want = sorted(ref.values())
        assert len(got) == len(want)
        for g, w in zip(got, want):
            assert abs(g - w) < 1e-9
        assert abs(vec.norm - math.sqrt(sum(w * w for w in ref.values()))) < 1e-9


def test_empty_corpus_raises():
    with pytest.raises(EmptyCorpus):
        vectorize([])
    with pytest.raises(EmptyCorpus):
        dedup_corpus([])


# --- cosine properties -----------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.data())
def test_cosine_properties(data):
    words = ["서울", "역사", "문화", "science", "history", "네모", "세모"]
    t1 = " ".join(data.draw(st.lists(st.sampled_from(words), min_size=2, max_size=10)))
    t2 = " ".join(data.draw(st.lists(st.sampled_from(words), min_size=2, max_size=10)))
    docs = [
        Document(id="a", text=t1),
        Document(id="b", text=t2),
        Document(id="c", text="completely unrelated padding text zzz"),
    ]
    va, vb, _ = vectorize(docs)
    if not va.empty:
        assert abs(cosine(va, va) - 1.0) < 1e-9
    s1, s2 = cosine(va, vb), cosine(vb, va)
    assert abs(s1 - s2) < 1e-12
    assert -1e-12 <= s1 <= 1.0 + 1e-12


# --- dedup_corpus -------------------------------------------------------------------------

def test_copy_rejected_with_similarity_one():
    docs = [
        Document(id="A", text="서울의 역사와 문화에 관한 설명문"),
        Document(id="copy", text="서울의 역사와 문화에 관한 설명문"),
        Document(id="B", text="totally disjoint english words"),
    ]
    kept, rejected = dedup_corpus(docs)
    assert [d.id for d in kept] == ["A", "B"]
    assert len(rejected) == 1
    assert rejected[0].id == "copy"
    assert rejected[0].duplicate_of == "A"
    assert abs(rejected[0].similarity - 1.0) < 1e-9


def test_five_doc_corpus_matches_reference():
    texts = [
        "경제 지표가 빠르게 변화하고 있습니다",
        "경제 지표가 빠르게 변화하고 있습니다 덧붙임",
        "오늘의 날씨는 맑고 화창합니다",
        "전혀 다른 주제의 문서",
        "오늘의 날씨는 맑고 화창합니다",
    ]
    docs = [Document(id=str(i), text=t) for i, t in enumerate(texts)]
    cfg = DedupConfig(tau=0.8)
    kept, rejected = dedup_corpus(docs, cfg)
    ref_kept, ref_rejected = reference_dedup(texts, 0.8)
    assert [d.id for d in kept] == [str(i) for i in ref_kept]
    assert [(int(r.id), int(r.duplicate_of)) for r in rejected] == ref_rejected


def test_no_pair_above_tau_keeps_everything():
    docs = [
        Document(id="a", text="하나의 주제 첫번째"),
        Document(id="b", text="전혀 다른 두번째 이야기"),
        Document(id="c", text="another unrelated topic"),
    ]
    kept, rejected = dedup_corpus(docs)
    assert [d.id for d in kept] == ["a", "b", "c"]
    assert rejected == []


def test_kept_set_is_pairwise_below_tau():
    rng = np.random.default_rng(5)
    words = ["서울", "역사", "문화", "경제", "교육", "과학", "음악", "여행"]
    docs = [
        Document(id=str(i), text=" ".join(rng.choice(words, size=6).tolist()))
        for i in range(40)
    ]
    cfg = DedupConfig(tau=0.85)
    kept, _ = dedup_corpus(docs, cfg)
    # similarity is defined on the input corpus's shared idf table
    originals = vectorize(docs, cfg)
    by_id = {d.id: originals[int(d.id)] for d in docs}
    for i in range(len(kept)):
        for j in range(i + 1, len(kept)):
            a, b = by_id[kept[i].id], by_id[kept[j].id]
            if a.empty and b.empty:
                assert kept[i].text != kept[j].text
            else:
                assert cosine(a, b) < cfg.tau


def test_dedup_idempotent_on_kept_set():
    docs = [
        Document(id=str(i), text=t)
        for i, t in enumerate(["주제 하나", "주제 하나", "둘째 이야기", "third text"])
    ]
    kept, _ = dedup_corpus(docs)
    kept2, rejected2 = dedup_corpus(kept)
    assert [d.id for d in kept2] == [d.id for d in kept]
    assert rejected2 == []


def test_candidate_mode_still_catches_duplicates():
    texts = ["완전히 동일한 문서 내용입니다 하나", "완전히 동일한 문서 내용입니다 하나",
             "전혀 다른 문서", "yet another doc entirely"]
    docs = [Document(id=str(i), text=t) for i, t in enumerate(texts)]
    cfg = DedupConfig(tau=0.85, exact_pairwise_limit=0)   # force the index path
    kept, rejected = dedup_corpus(docs, cfg)
    assert [d.id for d in kept] == ["0", "2", "3"]
    assert rejected[0].duplicate_of == "0"


# --- dedup_lines -------------------------------------------------------------------------------

def test_line_dedup_keeps_first_occurrence():
    doc = Document(id="x", text="a\nb\na")
    out = dedup_lines(doc)
    assert out.text == "a\nb"
    assert out.audit[-1].stage is Stage.LINE_DEDUP
    assert out.audit[-1].verdict is Verdict.MODIFIED


def test_line_dedup_unique_lines_unchanged_no_event():
    doc = Document(id="x", text="하나\n둘\n셋")
    out = dedup_lines(doc)
    assert out is doc
    assert out.audit == ()


def test_line_dedup_repeated_ad_line():
    lines = [f"줄 {i}" for i in range(60)] + ["광고"] * 40
    # oracle: simulate the first-occurrence rule directly
    seen, expect = set(), []
    for line in lines:
        if line not in seen:
            seen.add(line)
            expect.append(line)
    assert len(expect) == 61
    out = dedup_lines(Document(id="x", text="\n".join(lines)))
    assert out.text.split("\n") == expect


def test_line_dedup_normalizes_whitespace_for_keys():
    doc = Document(id="x", text="a  b\na b\nc")
    out = dedup_lines(doc)
    assert out.text == "a  b\nc"


def test_line_dedup_paragraph_blocks():
    doc = Document(id="x", text="문단 하나\n\n문단 둘\n\n문단 하나 다시")
    out = dedup_lines(doc)
    assert out is doc      # all blocks unique


def test_line_dedup_idempotent():
    doc = Document(id="x", text="a\nb\na\n\nc\nc\n\na")
    once = dedup_lines(doc)
    twice = dedup_lines(once.with_text(once.text))   # fresh audit context
    assert twice.text == once.text
