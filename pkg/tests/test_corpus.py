from __future__ import annotations

import json

import pytest

from phibench.corpus import (
    EVALUATED_CATEGORIES,
    Category,
    Corpus,
    Document,
    LabelMap,
    PhiSpan,
    apply_label_map,
    builtin_label_maps,
    load_corpus,
    resolve_label_map,
    save_corpus,
    whitespace_tokens,
)
from phibench.errors import ValidationError


def _write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), "utf-8")
    return path


def _rec(doc_id="n1", text="a 1/2", spans=((2, 5, "DATE"),)):
    return {"doc_id": doc_id, "patient_id": "p", "text": text, "note_type": "", "demographics": {},
            "spans": [{"start": s, "end": e, "label": lab} for s, e, lab in spans]}


def test_minimal_record(tmp_path):
    corpus = load_corpus(_write(tmp_path / "c.jsonl", [_rec()]))
    assert len(corpus) == 1
    assert corpus.documents[0].spans == (PhiSpan(2, 5, Category.DATE),)


def test_span_out_of_bounds(tmp_path):
    path = _write(tmp_path / "c.jsonl", [_rec(text="0123456789", spans=((0, 999, "DATE"),))])
    with pytest.raises(ValidationError, match="span out of bounds"):
        load_corpus(path)


def test_duplicate_doc_id(tmp_path):
    path = _write(tmp_path / "c.jsonl", [_rec(), _rec()])
    with pytest.raises(ValidationError, match="duplicate doc_id n1"):
        load_corpus(path)


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(_rec()) + "\n{not json\n", "utf-8")
    with pytest.raises(ValidationError, match=":2:"):
        load_corpus(path)


def test_unknown_label_strict(tmp_path):
    path = _write(tmp_path / "c.jsonl", [_rec(spans=((2, 5, "MEDICALRECORD"),))])
    with pytest.raises(ValidationError):
        load_corpus(path)
    assert load_corpus(path, strict_labels=False).documents[0].spans[0].category == "MEDICALRECORD"


def test_span_invariants():
    with pytest.raises(ValidationError):
        PhiSpan(3, 3, Category.DATE)
    with pytest.raises(ValidationError):
        PhiSpan(0, 2, Category.DATE, confidence=1.5)
    with pytest.raises(ValidationError, match="overlapping"):
        Document("d", "p", "abcdef", spans=(PhiSpan(0, 3, Category.DATE), PhiSpan(2, 5, Category.DATE)))
    # different categories may overlap
    Document("d", "p", "abcdef", spans=(PhiSpan(0, 3, Category.DATE), PhiSpan(2, 5, Category.AGE)))


def test_round_trip_keeps_extra_keys(tmp_path):
    rec = _rec()
    rec["text_hash"] = "abc"
    rec["spans"][0]["confidence"] = 0.5
    src = _write(tmp_path / "a.jsonl", [rec])
    corpus = load_corpus(src)
    save_corpus(corpus, tmp_path / "b.jsonl")
    assert json.loads((tmp_path / "b.jsonl").read_text("utf-8")) == rec


def test_i2b2_map():
    m = builtin_label_maps()["i2b2"]
    assert m["MEDICALRECORD"] is Category.ID
    assert m["FAX"] is Category.PHONE
    for loc in ("STREET", "CITY", "STATE", "ZIP", "COUNTRY", "LOCATION-OTHER"):
        assert m[loc] is Category.LOCATION
    assert m["PROFESSION"] is Category.OTHER


def test_aimi_crossover():
    m = builtin_label_maps()["aimi"]
    assert m["VENDOR"] is Category.HOSPITAL
    assert m["HOSPITAL"] is Category.LOCATION
    assert m["HCW"] is Category.DOCTOR
    assert m["DATES"] is Category.DATE


def test_apply_map_and_drop_other():
    doc = Document("d", "p", "nurse at X", spans=(PhiSpan(0, 5, "PROFESSION"), PhiSpan(9, 10, "CITY")))
    corpus = Corpus("c", (doc,))
    mapped = apply_label_map(corpus, resolve_label_map("i2b2"))
    assert [s.category for s in mapped.documents[0].spans] == [Category.OTHER, Category.LOCATION]
    dropped = apply_label_map(corpus, resolve_label_map("i2b2"), drop_other=True)
    assert [s.category for s in dropped.documents[0].spans] == [Category.LOCATION]


def test_identity_map_is_noop():
    doc = Document("d", "p", "seen 1/2", spans=(PhiSpan(5, 8, Category.DATE),))
    corpus = Corpus("c", (doc,))
    assert apply_label_map(corpus, LabelMap.identity()) == corpus


def test_unmapped_label_raises():
    doc = Document("d", "p", "abc", spans=(PhiSpan(0, 1, "MYSTERY"),))
    with pytest.raises(ValidationError, match="unmapped"):
        apply_label_map(Corpus("c", (doc,)), resolve_label_map("i2b2"))


def test_custom_map_file(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"NAME": "PATIENT"}), "utf-8")
    assert resolve_label_map(str(path))["NAME"] is Category.PATIENT


def test_category_parse():
    assert Category.parse("DATE") is Category.DATE
    with pytest.raises(ValidationError):
        Category.parse("NAME")
    assert Category.OTHER not in EVALUATED_CATEGORIES
    assert len(EVALUATED_CATEGORIES) == 9


def test_whitespace_tokens():
    assert [t for t, _, _ in whitespace_tokens("a\tb\nc")] == ["a", "b", "c"]
    assert whitespace_tokens("  Dr. Smith") == [("Dr.", 2, 5), ("Smith", 6, 11)]
