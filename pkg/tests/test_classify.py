import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpuskit.classify import (
    FeatureSpec,
    classify_domain,
    detect_language,
    load_model,
    save_model,
    softmax,
    tag_mode,
    tag_tone,
    train_domain_classifier,
    train_linear_classifier,
)
from corpuskit.errors import EmptyText, EmptyTrainingSet, FeatureSpecMismatch, SingleClass
from corpuskit.records import Domain, Language, Mode, Tone

HISTORY_DOCS = [
    "세종대왕은 조선의 네 번째 왕으로 한글을 창제한 역사 속 인물입니다",
    "임진왜란은 조선 역사에서 가장 큰 전쟁이었습니다",
    "고려 왕조의 역사 기록은 사관들이 남겼습니다",
    "조선왕조실록은 역사 연구의 핵심 사료입니다",
    "왕과 왕비의 역사 이야기가 책에 기록되어 있습니다",
    "삼국 시대의 역사와 유물은 박물관에 전시됩니다",
    "역사 학자들이 고문서를 분석했습니다",
    "근대사의 역사적 전환점을 공부합니다",
    "왕릉의 역사 유적이 발굴되었습니다",
    "역사 드라마는 왕조 이야기를 다룹니다",
]
BIOLOGY_DOCS = [
    "엽록소는 광합성을 수행하는 식물 세포의 색소입니다",
    "세포는 생물의 기본 단위이며 유전자를 담고 있습니다",
    "광합성은 식물이 빛을 에너지로 바꾸는 생물 과정입니다",
    "유전자와 단백질은 세포 생물학의 중심 개념입니다",
    "식물의 엽록체 안에서 광합성이 일어납니다",
    "미생물과 세균은 현미경으로 관찰하는 생물입니다",
    "진화는 생물 종이 변화하는 과정입니다",
    "효소는 세포 안에서 생물 반응을 촉진합니다",
    "생태계의 생물 다양성이 줄어들고 있습니다",
    "유전 정보는 세포핵의 염색체에 저장됩니다",
]


# --- language detection ------------------------------------------------------

def test_detect_korean_book_review():
    lang, conf = detect_language("세종대왕에 관한 어린이 책")
    assert lang is Language.KOREAN
    assert 0.0 <= conf <= 1.0


def test_detect_code_by_keyword_rule():
    assert detect_language("def f(x): return x")[0] is Language.CODE
    assert detect_language("```\nprint(1)\n```")[0] is Language.CODE


def test_detect_even_mix_is_multilanguage():
    korean = "대한민국 수도 서울 역사 문화 교육"     # 14 Hangul letters
    english = "seoul history push"                    # 16 Latin letters
    lang, conf = detect_language(korean + " " + english)
    assert lang is Language.MULTI_LANGUAGE
    assert 0.0 <= conf <= 1.0


def test_detect_english():
    assert detect_language("plain english sentence about nothing")[0] is Language.ENGLISH


def test_detect_empty_raises():
    with pytest.raises(EmptyText):
        detect_language("   ")


# --- training ------------------------------------------------------------------

def _ngram_separability_oracle(labeled, orders=(2, 3)):
    """Exhaustive search over single-n-gram indicator classifiers.

    If some character n-gram occurs in every document of one class and in
    none of the other, a linear model over character-n-gram counts separates
    the set (one-hot weight on that n-gram's bucket).
    """
    classes = sorted({lab for _, lab in labeled})
    assert len(classes) == 2
    grams = set()
    for text, _ in labeled:
        for k in orders:
            grams.update(text[i : i + k] for i in range(len(text) - k + 1))
    for g in sorted(grams):
        presence = {lab: {g in text for text, l in labeled if l == lab} for lab in classes}
        if presence[classes[0]] == {True} and presence[classes[1]] == {False}:
            return True
        if presence[classes[0]] == {False} and presence[classes[1]] == {True}:
            return True
    return False


def test_two_class_separable_toy_set_reaches_train_accuracy_one():
    labeled = [(t, "History") for t in HISTORY_DOCS] + [(t, "Biology") for t in BIOLOGY_DOCS]
    assert len(labeled) == 20
    # independent oracle first: the 20-doc set is linearly separable
    assert _ngram_separability_oracle(labeled)
    model = train_domain_classifier(labeled, seed=3, b=14)
    correct = 0
    for text, label in labeled:
        _, predicted, _ = classify_domain(model, text)
        correct += predicted == label
    assert correct == len(labeled)


def test_empty_training_set():
    with pytest.raises(EmptyTrainingSet):
        train_linear_classifier([])


def test_single_class_rejected():
    with pytest.raises(SingleClass):
        train_linear_classifier([("a text", "x"), ("b text", "x")])


def test_retrain_same_seed_identical_weights():
    labeled = [(t, "History") for t in HISTORY_DOCS[:5]] + [
        (t, "Biology") for t in BIOLOGY_DOCS[:5]
    ]
    m1 = train_domain_classifier(labeled, seed=9, b=14)
    m2 = train_domain_classifier(labeled, seed=9, b=14)
    assert np.array_equal(m1.weights, m2.weights)
    assert np.array_equal(m1.bias, m2.bias)
    assert m1.classes == m2.classes


# --- inference -------------------------------------------------------------------

@pytest.fixture(scope="module")
def domain_model():
    labeled = [(t, "History") for t in HISTORY_DOCS] + [(t, "Biology") for t in BIOLOGY_DOCS]
    return train_domain_classifier(labeled, seed=3, b=14)


def test_worked_example_history(domain_model):
    domain, sub, p = classify_domain(
        domain_model, "세종대왕이라는 어린이 책에 대한 감상문, 왕과 역사 인물 이야기"
    )
    assert (domain, sub) == (Domain.HUMANITY, "History")
    assert 0.0 < p <= 1.0


def test_worked_example_biology(domain_model):
    domain, sub, _ = classify_domain(
        domain_model, "엽록소와 광합성을 설명하는 교과서 구절, 식물 세포의 작용"
    )
    assert (domain, sub) == (Domain.STEM, "Biology")


def test_whitespace_only_raises(domain_model):
    with pytest.raises(EmptyText):
        classify_domain(domain_model, "   \n  ")


def test_probabilities_sum_to_one(domain_model):
    probs = domain_model.predict_proba("역사와 생물 이야기")
    assert abs(float(probs.sum()) - 1.0) < 1e-9


def test_hash_determinism(domain_model):
    spec = domain_model.spec
    i1, v1 = spec.vector("같은 텍스트 identical text")
    i2, v2 = spec.vector("같은 텍스트 identical text")
    assert np.array_equal(i1, i2) and np.array_equal(v1, v2)


@settings(max_examples=60, deadline=None)
@given(
    scores=st.lists(st.floats(-30, 30), min_size=2, max_size=8),
    scale=st.floats(0.01, 100.0),
)
def test_softmax_argmax_scaling_invariance(scores, scale):
    z = np.array(scores)
    if np.unique(z).size < z.size:
        z = z + np.arange(z.size) * 1e-6    # break exact ties
    assert int(np.argmax(softmax(z * scale))) == int(np.argmax(softmax(z)))


def test_feature_spec_mismatch_detected(domain_model):
    bad_idx = np.array([domain_model.spec.n_buckets + 5])
    with pytest.raises(FeatureSpecMismatch):
        domain_model.scores_sparse(bad_idx, np.array([1.0]))


# --- model file round trip ----------------------------------------------------------

def test_model_save_load_round_trip(domain_model, tmp_path):
    path = tmp_path / "domain.bin"
    save_model(domain_model, path)
    loaded = load_model(path)
    assert loaded.classes == domain_model.classes
    assert loaded.spec == domain_model.spec
    text = "역사 속 왕의 이야기"
    p1 = domain_model.predict_proba(text)
    p2 = loaded.predict_proba(text)
    assert np.allclose(p1, p2, atol=1e-6)   # f32 storage
    # a second save of the loaded model is byte-identical
    path2 = tmp_path / "domain2.bin"
    save_model(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bogus.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(FeatureSpecMismatch):
        load_model(path)


# --- mode and tone rules ----------------------------------------------------------------

def test_tone_formal_endings():
    assert tag_tone("오늘 날씨가 맑습니다. 내일도 맑겠습니다.") is Tone.FORMAL
    assert tag_tone("지금 갈게요. 조금만 기다려요.") is Tone.FORMAL


def test_tone_informal_markers():
    assert tag_tone("야 뭐해 ㅋㅋ 나 지금 간다 ㅋㅋㅋ") is Tone.INFORMAL


def test_mode_spoken_vs_written():
    assert tag_mode("ㅋㅋ 진짜? ㅎㅎ 대박 ~~ ㅠㅠ") is Mode.SPOKEN
    assert tag_mode("이 보고서는 분기 실적을 요약한 문서입니다.") is Mode.WRITTEN
    assert tag_mode("") is Mode.UNKNOWN
