"""Core data types, corpus JSONL IO and label-taxonomy mapping."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

from phibench.errors import ValidationError


class Category(str, Enum):
    """Unified PHI taxonomy. OTHER is mapped but never scored."""

    AGE = "AGE"
    DATE = "DATE"
    DOCTOR = "DOCTOR"
    HOSPITAL = "HOSPITAL"
    ID = "ID"
    LOCATION = "LOCATION"
    PATIENT = "PATIENT"
    PHONE = "PHONE"
    WEB = "WEB"
    OTHER = "OTHER"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, value: str) -> Category:
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(f"unknown category {value!r}") from None


EVALUATED_CATEGORIES: tuple[Category, ...] = tuple(c for c in Category if c is not Category.OTHER)

# A span label is a Category once mapped; raw source labels (e.g. i2b2
# "MEDICALRECORD") are plain strings until apply_label_map runs.
Label = Union[Category, str]


def label_name(label: Label) -> str:
    return label.value if isinstance(label, Category) else label


@dataclass(frozen=True)
class PhiSpan:
    """Labeled half-open character interval ``[start, end)``."""

    start: int
    end: int
    category: Label
    confidence: float | None = None

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValidationError(f"invalid span offsets ({self.start}, {self.end})")
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")

    def __len__(self) -> int:
        return self.end - self.start

    def overlap(self, other: PhiSpan) -> int:
        return max(0, min(self.end, other.end) - max(self.start, other.start))


def _span_sort_key(span: PhiSpan) -> tuple[int, int, str]:
    return (span.start, span.end, label_name(span.category))


@dataclass(frozen=True)
class Document:
    doc_id: str
    patient_id: str
    text: str
    note_type: str = ""
    demographics: Mapping[str, str] = field(default_factory=dict)
    spans: tuple[PhiSpan, ...] = ()
    # Unrecognised JSONL keys (e.g. text_hash on released corpora), kept for round trips.
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        spans = tuple(sorted(self.spans, key=_span_sort_key))
        object.__setattr__(self, "spans", spans)
        n = len(self.text)
        for s in spans:
            if s.end > n:
                raise ValidationError(
                    f"span out of bounds: ({s.start}, {s.end}) on text of length {n} in {self.doc_id}"
                )
        last_end: dict[str, int] = {}
        for s in spans:
            key = label_name(s.category)
            if s.start < last_end.get(key, -1):
                raise ValidationError(f"overlapping {key} spans in {self.doc_id} at offset {s.start}")
            last_end[key] = max(last_end.get(key, -1), s.end)

    def span_text(self, span: PhiSpan) -> str:
        return self.text[span.start : span.end]


@dataclass(frozen=True)
class Corpus:
    name: str
    documents: tuple[Document, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "documents", tuple(self.documents))
        seen: set[str] = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise ValidationError(f"duplicate doc_id {doc.doc_id}")
            seen.add(doc.doc_id)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def by_id(self) -> dict[str, Document]:
        return {d.doc_id: d for d in self.documents}

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.documents]


@dataclass(frozen=True)
class LabelMap:
    """Total mapping from a source taxonomy onto :class:`Category`."""

    entries: Mapping[str, Category]

    def __getitem__(self, label: str) -> Category:
        return self.entries[label]

    def __contains__(self, label: object) -> bool:
        return label in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_dict(cls, raw: Mapping[str, str]) -> LabelMap:
        return cls({str(k): Category.parse(v) for k, v in raw.items()})

    @classmethod
    def identity(cls) -> LabelMap:
        return cls({c.value: c for c in Category})


_I2B2 = {
    "DATE": "DATE",
    "PATIENT": "PATIENT",
    "DOCTOR": "DOCTOR",
    "MEDICALRECORD": "ID",
    "IDNUM": "ID",
    "USERNAME": "ID",
    "DEVICE": "ID",
    "AGE": "AGE",
    "HOSPITAL": "HOSPITAL",
    "PHONE": "PHONE",
    "FAX": "PHONE",
    "STREET": "LOCATION",
    "CITY": "LOCATION",
    "STATE": "LOCATION",
    "ZIP": "LOCATION",
    "COUNTRY": "LOCATION",
    "LOCATION-OTHER": "LOCATION",
    "EMAIL": "WEB",
    "PROFESSION": "OTHER",
    "ORGANIZATION": "OTHER",
}

# AIMI's HOSPITAL and VENDOR cross over: VENDOR is the institution, HOSPITAL the place.
_AIMI = {
    "DATES": "DATE",
    "PATIENT": "PATIENT",
    "HCW": "DOCTOR",
    "UNIQUE": "ID",
    "HOSPITAL": "LOCATION",
    "VENDOR": "HOSPITAL",
    "PHONE": "PHONE",
    "AGE": "AGE",
}


def builtin_label_maps() -> dict[str, LabelMap]:
    """The i2b2 2014 and AIMI source-to-unified mappings."""
    return {"i2b2": LabelMap.from_dict(_I2B2), "aimi": LabelMap.from_dict(_AIMI)}


def load_label_map(path: str | Path) -> LabelMap:
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: label map must be a JSON object")
    return LabelMap.from_dict(raw)


def resolve_label_map(name_or_path: str) -> LabelMap:
    maps = builtin_label_maps()
    if name_or_path in maps:
        return maps[name_or_path]
    if name_or_path == "identity":
        return LabelMap.identity()
    return load_label_map(name_or_path)


def apply_label_map(corpus: Corpus, label_map: LabelMap, drop_other: bool = False) -> Corpus:
    """Relabel every span through ``label_map``.

    Raises:
        ValidationError: a span label is missing from the map.
    """
    docs = []
    for doc in corpus:
        spans = []
        for s in doc.spans:
            name = label_name(s.category)
            if name not in label_map:
                raise ValidationError(f"unmapped label {name} in {doc.doc_id}")
            cat = label_map[name]
            if drop_other and cat is Category.OTHER:
                continue
            spans.append(replace(s, category=cat))
        docs.append(replace(doc, spans=tuple(spans)))
    return Corpus(corpus.name, tuple(docs))


# ---------------------------------------------------------------------------
# JSONL IO

_TOKEN_RE = re.compile(r"\S+")

_KNOWN_KEYS = {"doc_id", "patient_id", "text", "note_type", "demographics", "spans"}


def document_from_record(rec: Any, strict_labels: bool = True) -> Document:
    if not isinstance(rec, dict):
        raise ValidationError("record is not a JSON object")
    for key in ("doc_id", "text"):
        if not isinstance(rec.get(key), str):
            raise ValidationError(f"missing or non-string {key}")
    raw_spans = rec.get("spans", [])
    if not isinstance(raw_spans, list):
        raise ValidationError("spans must be an array")
    spans = []
    for raw in raw_spans:
        try:
            start, end, label = raw["start"], raw["end"], raw["label"]
        except (KeyError, TypeError):
            raise ValidationError("span needs start, end and label") from None
        if not (isinstance(start, int) and isinstance(end, int)) or isinstance(start, bool):
            raise ValidationError("span offsets must be integers")
        if not isinstance(label, str):
            raise ValidationError("span label must be a string")
        category: Label = Category.parse(label) if strict_labels else label
        if not strict_labels and label in Category.__members__:
            category = Category(label)
        conf = raw.get("confidence")
        spans.append(PhiSpan(start, end, category, None if conf is None else float(conf)))
    demo = rec.get("demographics") or {}
    if not isinstance(demo, dict):
        raise ValidationError("demographics must be an object")
    return Document(
        doc_id=rec["doc_id"],
        patient_id=str(rec.get("patient_id", "")),
        text=rec["text"],
        note_type=str(rec.get("note_type", "")),
        demographics={str(k): str(v) for k, v in demo.items()},
        spans=tuple(spans),
        extra={k: v for k, v in rec.items() if k not in _KNOWN_KEYS},
    )


def document_to_record(doc: Document) -> dict[str, Any]:
    spans = []
    for s in doc.spans:
        item: dict[str, Any] = {"start": s.start, "end": s.end, "label": label_name(s.category)}
        if s.confidence is not None:
            item["confidence"] = s.confidence
        spans.append(item)
    rec: dict[str, Any] = {
        "doc_id": doc.doc_id,
        "patient_id": doc.patient_id,
        "text": doc.text,
        "note_type": doc.note_type,
        "demographics": dict(doc.demographics),
        "spans": spans,
    }
    rec.update(doc.extra)
    return rec


def load_corpus(path: str | Path, format: str = "jsonl", strict_labels: bool = True, name: str | None = None) -> Corpus:
    """Read a corpus JSONL file, one document per line.

    With ``strict_labels=False`` span labels outside the unified taxonomy
    are kept as raw strings so a source corpus can be loaded and then passed
    through :func:`apply_label_map`.

    Raises:
        ValidationError: malformed line (with its line number), span out of
            bounds, duplicate doc_id or unknown category.
    """
    if format != "jsonl":
        raise ValidationError(f"unsupported corpus format {format!r}")
    path = Path(path)
    docs = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = document_from_record(rec, strict_labels=strict_labels)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if doc.doc_id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate doc_id {doc.doc_id}")
            seen.add(doc.doc_id)
            docs.append(doc)
    return Corpus(name or path.stem, tuple(docs))


def save_corpus(corpus: Corpus | Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc in corpus:
            f.write(json.dumps(document_to_record(doc), ensure_ascii=False, sort_keys=True))
            f.write("\n")


def whitespace_tokens(text: str) -> list[tuple[str, int, int]]:
    """Maximal non-whitespace runs with their character offsets."""
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]
