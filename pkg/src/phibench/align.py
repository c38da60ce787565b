"""Turn LLM extraction JSON into character spans and BIO training data.

The expected response shape is
``{"DATE": [{"text": "3/5/23", "confidence": 0.95}], ...}`` with ``{}``
meaning no PHI. Extracted strings are grounded by exact search in the note.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from phibench.corpus import Category, Corpus, Document, PhiSpan, whitespace_tokens
from phibench.errors import ValidationError

logger = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"^\s*```[A-Za-z]*\s*\n?(.*?)\n?\s*```\s*$", re.DOTALL)


@dataclass(frozen=True)
class Extraction:
    text: str
    confidence: float


@dataclass(frozen=True)
class ExtractionOutput:
    entities: Mapping[Category, tuple[Extraction, ...]] = field(default_factory=dict)
    fenced: bool = False  # response was wrapped in a markdown code fence

    def __len__(self) -> int:
        return sum(len(v) for v in self.entities.values())

    def items(self) -> Iterable[tuple[Category, Extraction]]:
        for cat in sorted(self.entities, key=lambda c: c.value):
            for e in self.entities[cat]:
                yield cat, e


def parse_extraction(raw: str) -> ExtractionOutput:
    """Strictly parse one LLM response.

    A markdown fence around an otherwise valid object is tolerated and
    recorded in ``fenced``. Repeated strings within a category keep their
    highest confidence. A missing confidence counts as 1.0.

    Raises:
        ValidationError: invalid JSON, unknown entity type, non-list value,
            entry without a ``text`` string, confidence outside [0, 1].
    """
    fenced = False
    m = _FENCE_RE.match(raw)
    if m:
        raw, fenced = m.group(1), True
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ValidationError("response must be a JSON object")
    entities: dict[Category, tuple[Extraction, ...]] = {}
    for key, value in data.items():
        try:
            cat = Category(key)
        except ValueError:
            raise ValidationError(f"unknown entity type {key}") from None
        if not isinstance(value, list):
            raise ValidationError(f"value for {key} must be a list")
        best: dict[str, float] = {}
        for item in value:
            if not isinstance(item, dict) or not isinstance(item.get("text"), str):
                raise ValidationError(f"{key} entry is missing a text field")
            conf = item.get("confidence", 1.0)
            if isinstance(conf, bool) or not isinstance(conf, (int, float)) or not (0.0 <= conf <= 1.0):
                raise ValidationError(f"{key} entry has invalid confidence {conf!r}")
            text = item["text"]
            best[text] = max(best.get(text, 0.0), float(conf))
        if best:
            entities[cat] = tuple(Extraction(t, c) for t, c in best.items())
    if fenced:
        logger.warning("response wrapped in a markdown fence; parsed its contents")
    return ExtractionOutput(entities, fenced)


@dataclass(frozen=True)
class Grounding:
    spans: tuple[PhiSpan, ...]
    ungroundable: tuple[tuple[Category, str], ...] = ()


def _occurrences(text: str, needle: str) -> list[int]:
    out, i = [], text.find(needle)
    while i != -1:
        out.append(i)
        i = text.find(needle, i + 1)
    return out


def ground_spans(note_text: str, ext: ExtractionOutput, min_confidence: float = 0.0) -> Grounding:
    """Map extracted strings to every exact occurrence in ``note_text``.

    Matching is case- and whitespace-sensitive. Overlapping candidates of the
    same category collapse to the longer one (earlier start on ties);
    different categories may overlap. Entries with no occurrence are listed
    in ``ungroundable``.
    """
    if not (0.0 <= min_confidence <= 1.0):
        raise ValidationError("min_confidence must be in [0, 1]")
    candidates: list[PhiSpan] = []
    missing = []
    for cat, e in ext.items():
        if e.confidence < min_confidence or not e.text:
            continue
        starts = _occurrences(note_text, e.text)
        if not starts:
            missing.append((cat, e.text))
        candidates.extend(PhiSpan(s, s + len(e.text), cat, e.confidence) for s in starts)

    kept: list[PhiSpan] = []
    for span in sorted(candidates, key=lambda s: (-(s.end - s.start), s.start, s.category.value)):
        if any(k.category == span.category and k.overlap(span) for k in kept):
            continue
        kept.append(span)
    kept.sort(key=lambda s: (s.start, s.end, s.category.value))
    return Grounding(tuple(kept), tuple(missing))


# ---------------------------------------------------------------------------
# BIO


@dataclass(frozen=True)
class BioSequence:
    tokens: tuple[tuple[str, int, int], ...]
    tags: tuple[str, ...]

    def valid(self) -> bool:
        prev = "O"
        for tag in self.tags:
            if tag.startswith("I-") and (prev == "O" or prev[2:] != tag[2:]):
                return False
            prev = tag
        return True


def to_bio(doc: Document, include_other: bool = False) -> BioSequence:
    """Whitespace-token BIO tags.

    A token belongs to the span it overlaps most (earlier start on ties);
    the first token of each span gets ``B-``, later ones ``I-``.
    """
    spans = [s for s in doc.spans if include_other or s.category is not Category.OTHER]
    tokens = whitespace_tokens(doc.text)
    tags = []
    prev_owner = None
    for _, start, end in tokens:
        owner = None
        best = None
        for idx, s in enumerate(spans):
            ov = max(0, min(end, s.end) - max(start, s.start))
            if ov == 0:
                continue
            key = (-ov, s.start)
            if best is None or key < best:
                best, owner = key, idx
        if owner is None:
            tags.append("O")
        else:
            prefix = "I" if owner == prev_owner else "B"
            tags.append(f"{prefix}-{Category(spans[owner].category).value}")
        prev_owner = owner
    return BioSequence(tuple(tokens), tuple(tags))


def spans_from_bio(seq: BioSequence) -> list[PhiSpan]:
    """Inverse of :func:`to_bio` for token-aligned spans."""
    out = []
    cur = None  # (start, end, category)
    for (_, start, end), tag in zip(seq.tokens, seq.tags):
        if tag.startswith("I-") and cur is not None and cur[2] == tag[2:]:
            cur = (cur[0], end, cur[2])
            continue
        if cur is not None:
            out.append(PhiSpan(cur[0], cur[1], Category(cur[2])))
            cur = None
        if tag != "O":
            cur = (start, end, tag[2:])
    if cur is not None:
        out.append(PhiSpan(cur[0], cur[1], Category(cur[2])))
    return out


def write_conll(docs: Iterable[Document], path: str | Path, include_other: bool = False) -> None:
    """``token<TAB>tag`` lines with a blank line between documents."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc in docs:
            seq = to_bio(doc, include_other)
            for (tok, _, _), tag in zip(seq.tokens, seq.tags):
                f.write(f"{tok}\t{tag}\n")
            f.write("\n")


def load_responses(path: str | Path) -> dict[str, str]:
    """doc_id -> raw response, from a JSONL file or a directory of files named by doc_id."""
    path = Path(path)
    if path.is_dir():
        return {p.stem: p.read_text("utf-8") for p in sorted(path.iterdir()) if p.is_file()}
    out = {}
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out[str(rec["doc_id"])] = rec["response"] if isinstance(rec["response"], str) else json.dumps(rec["response"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad response record ({exc})") from None
    return out


@dataclass
class AlignmentReport:
    fenced: list[str] = field(default_factory=list)
    ungroundable: list[dict] = field(default_factory=list)


def align_corpus(notes: Corpus, responses: Mapping[str, str], min_confidence: float = 0.0) -> tuple[Corpus, AlignmentReport]:
    """Silver-labelled copy of ``notes`` with spans grounded from ``responses``.

    Notes without a response get no spans.
    """
    report = AlignmentReport()
    docs = []
    for doc in notes:
        raw = responses.get(doc.doc_id)
        spans: Sequence[PhiSpan] = ()
        if raw is not None:
            try:
                ext = parse_extraction(raw)
            except ValidationError as exc:
                raise ValidationError(f"{doc.doc_id}: {exc}") from None
            if ext.fenced:
                report.fenced.append(doc.doc_id)
            g = ground_spans(doc.text, ext, min_confidence)
            spans = g.spans
            report.ungroundable.extend(
                {"doc_id": doc.doc_id, "category": c.value, "text_len": len(t)} for c, t in g.ungroundable
            )
        docs.append(Document(doc.doc_id, doc.patient_id, doc.text, doc.note_type, dict(doc.demographics),
                             tuple(spans), dict(doc.extra)))
    return Corpus(notes.name, tuple(docs)), report
