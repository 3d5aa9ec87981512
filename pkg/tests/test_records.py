import json
import unicodedata

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpuskit.errors import DuplicateId, EmptyText, InvalidRecord, OrphanSubdomain
from corpuskit.records import (
    Document,
    Domain,
    Language,
    SourceKind,
    Stage,
    StageEvent,
    Subsource,
    TagSet,
    Verdict,
    char_count_of,
    default_registry,
    read_corpus,
    validate,
    validate_corpus,
    write_corpus,
)


def test_validate_empty_text():
    with pytest.raises(EmptyText):
        validate(Document(id="a", text=""))


def test_validate_orphan_subdomain():
    doc = Document(id="a", text="x", tags=TagSet(domain=Domain.STEM, subdomain="History"))
    with pytest.raises(OrphanSubdomain):
        validate(doc)


def test_validate_identity_on_well_formed_doc():
    doc = Document(
        id="a",
        text="세종대왕 이야기",
        tags=TagSet(
            language=Language.KOREAN,
            source=SourceKind.ORGANIC,
            subsource=Subsource.WEB,
            domain=Domain.HUMANITY,
            subdomain="History",
        ),
        source_name="cc",
    )
    assert validate(doc) is doc


def test_validate_duplicate_id():
    docs = [Document(id="a", text="x"), Document(id="a", text="y")]
    with pytest.raises(DuplicateId):
        list(validate_corpus(docs))


def test_char_count_uses_canonical_composition():
    decomposed = unicodedata.normalize("NFD", "한국어")
    assert len(decomposed) > 3
    assert char_count_of(decomposed) == 3
    doc = Document(id="a", text=decomposed)
    assert doc.char_count == 3
    validate(doc)


def test_subsource_requires_organic():
    doc = Document(
        id="a", text="x",
        tags=TagSet(source=SourceKind.SYNTHETIC, subsource=Subsource.WEB),
    )
    with pytest.raises(InvalidRecord):
        validate(doc)


def test_default_registry_has_twenty_subdomains():
    reg = default_registry()
    subs = reg.all_subdomains()
    assert len(subs) == 20
    assert len(set(subs)) == 20
    for label in ("History", "Biology", "APSC", "ARTS", "CULT"):
        assert label in subs
    assert reg.parent_of("History") is Domain.HUMANITY
    assert reg.parent_of("Biology") is Domain.STEM


def test_audit_rejected_is_terminal():
    doc = Document(id="a", text="x").with_event(
        StageEvent(Stage.DEDUP, Verdict.REJECTED, detail="duplicate_of:b")
    )
    with pytest.raises(InvalidRecord):
        doc.with_event(StageEvent(Stage.HEURISTIC, Verdict.KEPT))


def test_audit_stage_order_enforced():
    doc = Document(id="a", text="x").with_event(StageEvent(Stage.QUALITY, Verdict.KEPT))
    with pytest.raises(InvalidRecord):
        doc.with_event(StageEvent(Stage.DEDUP, Verdict.KEPT))


def test_unknown_extra_fields_preserved(tmp_path):
    raw = {
        "id": "a",
        "text": "본문",
        "source_name": "cc",
        "char_count": 2,
        "custom_field": {"nested": [1, 2, 3]},
        "another": "value",
    }
    doc = Document.from_dict(raw)
    out = doc.to_dict()
    assert out["custom_field"] == {"nested": [1, 2, 3]}
    assert out["another"] == "value"
    path = tmp_path / "c.jsonl"
    write_corpus([doc], path)
    reloaded = list(read_corpus(path))[0]
    assert reloaded.extra["custom_field"] == {"nested": [1, 2, 3]}


_languages = st.sampled_from(list(Language))
_texts = st.text(
    alphabet=st.characters(
        codec="utf-8", exclude_categories=("Cs", "Cc"),
    ),
    min_size=1,
    max_size=80,
)


@st.composite
def documents(draw):
    domain = draw(st.sampled_from([None, Domain.HUMANITY, Domain.STEM]))
    subdomain = None
    if domain is Domain.HUMANITY:
        subdomain = draw(st.sampled_from(["History", "Philosophy"]))
    elif domain is Domain.STEM:
        subdomain = draw(st.sampled_from(["Biology", "Math"]))
    events = []
    if draw(st.booleans()):
        events.append(StageEvent(Stage.DEDUP, Verdict.KEPT))
        if draw(st.booleans()):
            events.append(
                StageEvent(Stage.HEURISTIC, Verdict.MODIFIED, detail="strip", score=0.5)
            )
    return Document(
        id=draw(st.uuids()).hex,
        text=draw(_texts),
        tags=TagSet(
            language=draw(_languages),
            source=draw(st.sampled_from([None, SourceKind.ORGANIC, SourceKind.SYNTHETIC])),
            domain=domain,
            subdomain=subdomain,
        ),
        source_name=draw(st.sampled_from(["cc", "news", "aihub"])),
        audit=tuple(events),
        extra={"k": draw(st.integers())} if draw(st.booleans()) else {},
    )


@settings(max_examples=100, deadline=None)
@given(documents())
def test_serialization_round_trip(doc):
    line = json.dumps(doc.to_dict(), ensure_ascii=False)
    assert Document.from_dict(json.loads(line)) == doc


@settings(max_examples=50, deadline=None)
@given(documents())
def test_audit_indices_strictly_increase(doc):
    indices = [ev.stage.order_index for ev in doc.audit]
    assert indices == sorted(indices)
    assert len(set(indices)) == len(indices)
