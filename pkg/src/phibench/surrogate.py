"""Deterministic surrogate replacement for corpus release.

Every PHI span is swapped for a type-consistent surrogate derived from a
secret key, dates move by a per-patient day offset, and span offsets are
realigned to the rewritten text. Output is a pure function of
(document, key).
"""

from __future__ import annotations

import hashlib
import hmac
import json
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

from phibench.corpus import Category, Document, PhiSpan
from phibench.dates import UnshiftableDate, parse_dates, shift_date
from phibench.errors import ValidationError

JITTER_MIN = 3
JITTER_MAX = 90

AGE_BANDS = ((0, "0-17"), (18, "18-29"), (30, "30-44"), (45, "45-59"), (60, "60-74"), (75, "75-89"), (90, "90+"))

HONORIFICS = frozenset(
    "dr mr mrs ms miss mx prof md do rn np pa pa-c phd dds dmd mba mph jr sr ii iii iv".split()
)
LOCATION_KEEP = frozenset(
    """st street ave avenue rd road blvd boulevard dr drive ln lane way ct court pl place
    pkwy parkway hwy highway cir circle ter terrace apt apartment suite ste unit fl floor
    bldg building po box n s e w ne nw se sw north south east west usa us""".split()
)
HOSPITAL_KEEP = frozenset(
    """hospital hospitals medical center centre clinic clinics health healthcare care
    university of the and at for memorial general regional community childrens children's
    institute cancer heart eye rehabilitation rehab surgery surgical emergency department
    dept unit icu er nursing home hospice center's pediatric pediatrics women's womens
    veterans va county state city valley""".split()
)
WEB_KEEP = frozenset("http https www com org net edu gov mailto html htm io us co uk".split())

PLACE_WORDS = (
    "Alder", "Briar", "Cedar", "Dunmore", "Elmwood", "Fernhill", "Glenrock", "Harrow",
    "Inverness", "Juniper", "Kestrel", "Larkspur", "Maple", "Northgate", "Oakridge",
    "Pinecrest", "Quarry", "Rivermead", "Stonebridge", "Thornbury", "Upton", "Willowmere",
)
HOSPITAL_WORDS = (
    "Ashford", "Bramble", "Crestview", "Dalton", "Evergreen", "Foxglove", "Granite",
    "Hillcrest", "Ivywood", "Lakeshore", "Meadowbrook", "Northfield", "Orchard", "Prairie",
    "Riverside", "Summit", "Tamarack", "Westbrook",
)
STATE_CODES = (
    "AK", "AL", "AZ", "CO", "CT", "DE", "ID", "IA", "KS", "KY", "ME", "MN", "MT", "NE",
    "NH", "NM", "ND", "OK", "OR", "RI", "SD", "UT", "VT", "WV", "WY",
)

SURROGATE_CATEGORIES = frozenset(
    {Category.PATIENT, Category.DOCTOR, Category.ID, Category.PHONE, Category.LOCATION,
     Category.AGE, Category.WEB, Category.HOSPITAL}
)


@dataclass(frozen=True)
class SurrogateKey:
    secret: bytes
    first_names: tuple[str, ...]
    last_names: tuple[str, ...]
    salt: bytes = b""

    def __post_init__(self) -> None:
        if not self.secret:
            raise ValidationError("surrogate secret must be non-empty")
        if not self.first_names or not self.last_names:
            raise ValidationError("name pool needs both first and last names")
        object.__setattr__(self, "first_names", tuple(self.first_names))
        object.__setattr__(self, "last_names", tuple(self.last_names))

    @classmethod
    def with_default_pool(cls, secret: bytes, salt: bytes = b"") -> SurrogateKey:
        first, last = parse_name_pool(resources.files("phibench").joinpath("data/names.txt").read_text("utf-8"))
        return cls(secret, first, last, salt)


def parse_name_pool(text: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Read a pool with ``FIRST`` / ``LAST`` section headers (brackets optional)."""
    sections: dict[str, list[str]] = {"FIRST": [], "LAST": []}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        header = line.strip("[]").upper()
        if header in sections:
            current = header
            continue
        if current is None:
            raise ValidationError("name pool entry before any FIRST/LAST section")
        sections[current].append(line)
    return tuple(sections["FIRST"]), tuple(sections["LAST"])


def load_key(path: str | Path) -> SurrogateKey:
    """Key file: ``{"secret_hex", "salt_hex", "name_pool_path"}``.

    ``name_pool_path`` is optional (the packaged pool is used) and resolved
    relative to the key file.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text("utf-8"))
        secret = bytes.fromhex(raw["secret_hex"])
        salt = bytes.fromhex(raw.get("salt_hex", ""))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: invalid key file ({exc})") from None
    pool_path = raw.get("name_pool_path")
    if not pool_path:
        return SurrogateKey.with_default_pool(secret, salt)
    first, last = parse_name_pool((path.parent / pool_path).read_text("utf-8"))
    return SurrogateKey(secret, first, last, salt)


# ---------------------------------------------------------------------------
# keyed primitives


def _mac(key: SurrogateKey, *parts: str | bytes) -> bytes:
    msg = b"\x1f".join(p.encode("utf-8") if isinstance(p, str) else p for p in parts)
    return hmac.new(key.secret, key.salt + b"\x1e" + msg, hashlib.sha256).digest()


def _stream(key: SurrogateKey, *parts: str) -> Iterable[int]:
    counter = 0
    while True:
        yield from _mac(key, *parts, str(counter))
        counter += 1


def _index(key: SurrogateKey, size: int, *parts: str) -> int:
    return int.from_bytes(_mac(key, *parts), "big") % size


def derive_jitter(key: SurrogateKey, patient_id: str) -> int:
    """Signed per-patient day offset with magnitude in [3, 90].

    HMAC-SHA256(secret, patient_id) read big-endian gives the magnitude
    ``3 + value % 88``; the low bit of the last digest byte set means a
    backward shift.
    """
    if not patient_id:
        raise ValidationError("patient_id is empty")
    digest = hmac.new(key.secret, patient_id.encode("utf-8"), hashlib.sha256).digest()
    magnitude = JITTER_MIN + int.from_bytes(digest, "big") % (JITTER_MAX - JITTER_MIN + 1)
    return -magnitude if digest[-1] & 1 else magnitude


def patient_hash(key: SurrogateKey, patient_id: str) -> str:
    return hmac.new(key.secret, key.salt + b"\x1dpatient\x1d" + patient_id.encode("utf-8"), hashlib.sha256).hexdigest()


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# per-category surrogates


def _match_case(template: str, word: str) -> str:
    if len(template) > 1 and template.isupper():
        return word.upper()
    if template[:1].isupper():
        return word[:1].upper() + word[1:]
    return word.lower()


def _shaped_letters(key: SurrogateKey, run: str, *context: str) -> str:
    """Keyed letters with the same length and per-character case as ``run``."""
    stream = _stream(key, *context, run.lower())
    out = []
    for ch, b in zip(run, stream):
        letter = chr(ord("a") + b % 26)
        out.append(letter.upper() if ch.isupper() else letter)
    return "".join(out)


def _digits(key: SurrogateKey, digits: str, *context: str) -> str:
    stream = _stream(key, *context, digits)
    return "".join(str(next(stream) % 10) for _ in digits)


def _pool_word(key: SurrogateKey, pool: Sequence[str], word: str, *context: str) -> str:
    i = _index(key, len(pool), *context, word.lower())
    pick = pool[i]
    if pick.lower() == word.lower():
        pick = pool[(i + 1) % len(pool)]
    return _match_case(word, pick)


_RUN_RE = re.compile(r"[A-Za-z]+(?:'[A-Za-z]+)?|\d+|[^A-Za-z\d]+")


def _rewrite_runs(text: str, alpha: Callable[[str], str], digit: Callable[[str], str]) -> str:
    out = []
    for m in _RUN_RE.finditer(text):
        run = m.group()
        if run[0].isdigit():
            out.append(digit(run))
        elif run[0].isalpha():
            out.append(alpha(run))
        else:
            out.append(run)
    return "".join(out)


_NAME_TOKEN_RE = re.compile(r"^([^A-Za-z]*)([A-Za-z][A-Za-z'\-]*?)([^A-Za-z]*)$")


def _name_surrogate(text: str, key: SurrogateKey) -> str:
    pieces = re.split(r"(\s+)", text)
    slots = []  # indices of name tokens
    for i, piece in enumerate(pieces):
        if not piece or piece.isspace():
            continue
        m = _NAME_TOKEN_RE.match(piece)
        if m and m.group(2).lower().rstrip(".") in HONORIFICS:
            continue
        slots.append(i)
    # "Smith, John" puts the surname first
    first = _NAME_TOKEN_RE.match(pieces[slots[0]]) if slots else None
    surname_first = len(slots) > 1 and first is not None and first.group(3).startswith(",")
    for n, i in enumerate(slots):
        piece = pieces[i]
        m = _NAME_TOKEN_RE.match(piece)
        if m is None:
            pieces[i] = _rewrite_runs(piece, lambda r: _shaped_letters(key, r, "NAME"),
                                      lambda r: _digits(key, r, "NAME"))
            continue
        pre, core, post = m.groups()
        if len(core) == 1:
            letter = chr(ord("A") + _index(key, 26, "INITIAL", core.lower()))
            pieces[i] = pre + _match_case(core, letter) + post
            continue
        is_last = n == 0 if surname_first else n == len(slots) - 1
        pool = key.last_names if is_last else key.first_names
        role = "LAST" if is_last else "FIRST"
        pieces[i] = pre + _pool_word(key, pool, core, "NAME", role) + post
    return "".join(pieces)


def age_band(age: int) -> str:
    label = AGE_BANDS[0][1]
    for lower, name in AGE_BANDS:
        if age >= lower:
            label = name
    return label


def surrogate_for(span_text: str, category: Category, key: SurrogateKey) -> str:
    """Surrogate text for one non-date span.

    Names come from the key's pool (same token, same surrogate); IDs become
    keyed hex of the same length; phones keep punctuation with keyed digits;
    locations, hospitals and web addresses keep their shape with keyed or
    pooled content; ages become bands.

    Raises:
        ValidationError: DATE or OTHER (dates go through :func:`shift_date`).
    """
    category = Category(category)
    if category not in SURROGATE_CATEGORIES:
        raise ValidationError(f"no surrogate rule for category {category.value}")
    out = _surrogate(span_text, category, key)
    # short keyed strings can reproduce the input by chance; re-derive
    for attempt in range(1, 4):
        if out != span_text or category is Category.AGE:
            break
        out = _surrogate(span_text, category, replace(key, salt=key.salt + f"#{attempt}".encode()))
    return out


def _surrogate(span_text: str, category: Category, key: SurrogateKey) -> str:
    if category in (Category.PATIENT, Category.DOCTOR):
        out = _name_surrogate(span_text, key)
    elif category is Category.ID:
        norm = re.sub(r"[^0-9A-Za-z]", "", span_text).upper()
        upper = any(c.isupper() for c in span_text) and not any(c.islower() for c in span_text)
        stream = _stream(key, "ID", norm)
        chars = []
        for ch in span_text:
            if ch.isalnum():
                h = "0123456789abcdef"[next(stream) % 16]
                chars.append(h.upper() if upper else h)
            else:
                chars.append(ch)
        out = "".join(chars)
    elif category is Category.PHONE:
        norm = re.sub(r"\D", "", span_text)
        stream = _stream(key, "PHONE", norm)
        out = "".join(str(next(stream) % 10) if ch.isdigit() else ch for ch in span_text)
    elif category is Category.LOCATION:
        def alpha(run: str) -> str:
            if run.lower() in LOCATION_KEEP:
                return run
            if len(run) == 2 and run.isupper():
                return _pool_word(key, STATE_CODES, run, "STATE")
            return _pool_word(key, PLACE_WORDS, run, "PLACE")

        out = _rewrite_runs(span_text, alpha, lambda r: _digits(key, r, "LOCATION"))
    elif category is Category.HOSPITAL:
        def alpha(run: str) -> str:
            if run.lower() in HOSPITAL_KEEP:
                return run
            if len(run) > 1 and run.isupper():
                return _shaped_letters(key, run, "HOSPITAL")
            return _pool_word(key, HOSPITAL_WORDS, run, "HOSPITAL")

        out = _rewrite_runs(span_text, alpha, lambda r: _digits(key, r, "HOSPITAL"))
    elif category is Category.WEB:
        out = _rewrite_runs(
            span_text,
            lambda r: r if r.lower() in WEB_KEEP else _shaped_letters(key, r, "WEB"),
            lambda r: _digits(key, r, "WEB"),
        )
    else:  # AGE
        m = re.search(r"\d+", span_text)
        if m is None:
            return "UNKNOWN"
        return span_text[: m.start()] + age_band(int(m.group())) + span_text[m.end():]
    return out


# ---------------------------------------------------------------------------
# document pipeline


@dataclass(frozen=True)
class Replacement:
    orig_start: int
    orig_end: int
    start: int  # offsets in the output text
    end: int
    text: str
    category: Category


@dataclass(frozen=True)
class SurrogatePlan:
    doc_id: str
    replacements: tuple[Replacement, ...]
    output_text: str
    output_spans: tuple[PhiSpan, ...]
    text_hash: str
    patient_hash: str
    flags: tuple[str, ...] = ()
    jitter: int | None = None
    surrogated: bool = True

    def to_document(self, source: Document) -> Document:
        extra = dict(source.extra)
        extra.update(
            text_hash=self.text_hash,
            patient_hash=self.patient_hash,
            flags=list(self.flags),
            surrogated=True,
        )
        return Document(
            doc_id=source.doc_id,
            patient_id=self.patient_hash,
            text=self.output_text,
            note_type=source.note_type,
            demographics=dict(source.demographics),
            spans=self.output_spans,
            extra=extra,
        )

    def audit_records(self) -> list[dict]:
        """Lengths only, never the original text."""
        return [
            {"doc_id": self.doc_id, "category": r.category.value,
             "orig_len": r.orig_end - r.orig_start, "new_len": r.end - r.start}
            for r in self.replacements
        ]


def _shift_span_dates(text: str, jitter: int, reference_year: int | None) -> tuple[str, list[str]]:
    dates = parse_dates(text)
    if not dates:
        return text, ["no recognisable date"]
    out, flags, pos = [], [], 0
    for d in dates:
        out.append(text[pos : d.start])
        try:
            out.append(shift_date(d, jitter, reference_year))
        except UnshiftableDate as exc:
            flags.append(str(exc))
            out.append(d.text)
        pos = d.end
    out.append(text[pos:])
    return "".join(out), flags


def apply_surrogates(doc: Document, key: SurrogateKey, reference_year: int | None = None) -> SurrogatePlan:
    """Rewrite every span of ``doc`` and realign offsets.

    DATE spans are shifted by the patient's jitter; dates that cannot be
    shifted (no year and no ``reference_year``) stay as written and are
    listed in ``flags``, as are OTHER spans, which are left untouched.

    Raises:
        ValidationError: the document was already surrogated, or two spans
            overlap.
    """
    if doc.extra.get("surrogated"):
        raise ValidationError(f"{doc.doc_id} is already surrogated")
    spans = sorted(doc.spans, key=lambda s: (s.start, s.end))
    for a, b in zip(spans, spans[1:]):
        if b.start < a.end:
            raise ValidationError(f"overlapping replacements in {doc.doc_id} at {a.start} and {b.start}")

    jitter = None
    if any(s.category is Category.DATE for s in spans):
        jitter = derive_jitter(key, doc.patient_id)

    pieces, replacements, out_spans, flags = [], [], [], []
    pos = offset = 0
    for s in spans:
        original = doc.text[s.start : s.end]
        cat = Category(s.category)
        if cat is Category.DATE:
            new, problems = _shift_span_dates(original, jitter, reference_year)
            flags.extend(f"DATE {s.start}-{s.end}: {p}" for p in problems)
        elif cat is Category.OTHER:
            new = original
            flags.append(f"OTHER {s.start}-{s.end}: retained")
        else:
            new = surrogate_for(original, cat, key)
        pieces.append(doc.text[pos : s.start])
        new_start = s.start + offset
        pieces.append(new)
        offset += len(new) - len(original)
        pos = s.end
        replacements.append(Replacement(s.start, s.end, new_start, new_start + len(new), new, cat))
        if new:
            out_spans.append(PhiSpan(new_start, new_start + len(new), cat, s.confidence))
    pieces.append(doc.text[pos:])
    output = "".join(pieces)
    return SurrogatePlan(
        doc_id=doc.doc_id,
        replacements=tuple(replacements),
        output_text=output,
        output_spans=tuple(out_spans),
        text_hash=text_hash(output),
        patient_hash=patient_hash(key, doc.patient_id),
        flags=tuple(flags),
        jitter=jitter,
    )
