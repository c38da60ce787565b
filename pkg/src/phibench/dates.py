"""Date recognition and format-preserving day shifting.

Recognised forms: ``YYYY-MM-DD`` (the date part of ISO timestamps),
``MM/DD/YYYY``, ``M/D/YY``, ``M/D``, ``MM-DD-YYYY`` and
``Month DD, YYYY`` / ``Mon DD YYYY``. Times, weekday names and relative
words are never matched.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass

from phibench.errors import ValidationError

MONTHS = (
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)
_MONTH_LOOKUP = {m.lower(): i + 1 for i, m in enumerate(MONTHS)}
_MONTH_LOOKUP.update({m[:3].lower(): i + 1 for i, m in enumerate(MONTHS)})

# Validity check for dates without a year accepts Feb 29.
LEAP_REFERENCE_YEAR = 2000

_FULL_MONTHS = frozenset(m.lower() for m in MONTHS)

_month_alt = "|".join(MONTHS) + "|" + "|".join(m[:3] for m in MONTHS)

_DATE_RE = re.compile(
    rf"""
    (?P<iso>(?<![\w/.-])(?P<iy>\d{{4}})-(?P<im>\d{{2}})-(?P<id>\d{{2}})(?![\d]|-\d))
    |
    (?P<slash>(?<![\w/.-])(?P<sm>\d{{1,2}})/(?P<sd>\d{{1,2}})(?:/(?P<sy>\d{{4}}|\d{{2}}))?(?![\w/]|[.-]\d))
    |
    (?P<dash>(?<![\w/.-])(?P<dm>\d{{1,2}})-(?P<dd>\d{{1,2}})-(?P<dy>\d{{4}})(?![\w-]))
    |
    (?P<named>\b(?P<mon>(?i:{_month_alt}))(?P<dot>\.)?(?P<s1>[ \t]+)(?P<nd>\d{{1,2}})
        (?P<s2>,?[ \t]+)(?P<ny>\d{{4}})(?!\d))
    """,
    re.VERBOSE,
)


class UnshiftableDate(ValidationError):
    pass


@dataclass(frozen=True)
class ParsedDate:
    """A date found in text, with what is needed to re-render it.

    ``year`` is None for partial dates such as ``4/12``. ``fmt`` is the
    format tag, e.g. ``M/D/YY`` or ``Month DD, YYYY``.
    """

    text: str
    start: int
    end: int
    year: int | None
    month: int
    day: int
    fmt: str
    pad: bool = False
    sep: str = "/"
    year_digits: int = 4
    month_style: str = ""  # "full" / "abbr" for named months
    upper: bool = False
    dot: bool = False
    s1: str = " "
    s2: str = ", "


def _two_digit_year(yy: int) -> int:
    # POSIX strptime %y pivot
    return 2000 + yy if yy < 69 else 1900 + yy


def _valid(year: int | None, month: int, day: int) -> bool:
    try:
        dt.date(year if year is not None else LEAP_REFERENCE_YEAR, month, day)
    except ValueError:
        return False
    return True


def _from_match(m: re.Match) -> ParsedDate | None:
    text, start, end = m.group(), m.start(), m.end()
    if m.group("iso"):
        y, mo, d = int(m["iy"]), int(m["im"]), int(m["id"])
        parsed = ParsedDate(text, start, end, y, mo, d, "YYYY-MM-DD", pad=True, sep="-")
    elif m.group("slash") or m.group("dash"):
        if m.group("slash"):
            ms, ds, ys, sep = m["sm"], m["sd"], m["sy"], "/"
        else:
            ms, ds, ys, sep = m["dm"], m["dd"], m["dy"], "-"
        pad = ms.startswith("0") or ds.startswith("0")
        if ys is None:
            year, digits = None, 0
        elif len(ys) == 2:
            year, digits = _two_digit_year(int(ys)), 2
        else:
            year, digits = int(ys), 4
        fmt = ("MM" if pad else "M") + sep + ("DD" if pad else "D") + (sep + "Y" * digits if digits else "")
        parsed = ParsedDate(text, start, end, year, int(ms), int(ds), fmt, pad=pad, sep=sep, year_digits=digits)
    else:
        mon = m["mon"]
        if not (mon.istitle() or mon.isupper()):
            return None
        # "May" is both forms; treat it as the full name
        full = mon.lower() in _FULL_MONTHS
        comma = "," in m["s2"]
        fmt = ("Month" if full else "Mon") + (" DD," if comma else " DD") + " YYYY"
        parsed = ParsedDate(
            text, start, end, int(m["ny"]), _MONTH_LOOKUP[mon.lower()], int(m["nd"]), fmt,
            pad=m["nd"].startswith("0"), month_style="full" if full else "abbr",
            upper=mon.isupper() and len(mon) > 1, dot=bool(m["dot"]), s1=m["s1"], s2=m["s2"],
        )
    return parsed if _valid(parsed.year, parsed.month, parsed.day) else None


def parse_dates(text: str) -> list[ParsedDate]:
    """Every recognisable date in ``text``, left to right, non-overlapping."""
    out = []
    for m in _DATE_RE.finditer(text):
        parsed = _from_match(m)
        if parsed is not None:
            out.append(parsed)
    return out


def render_date(d: ParsedDate, value: dt.date) -> str:
    """Render ``value`` in the layout ``d`` was written in."""
    if d.fmt == "YYYY-MM-DD":
        return value.isoformat()
    if d.month_style:
        name = MONTHS[value.month - 1]
        if d.month_style == "abbr":
            name = name[:3]
        if d.upper:
            name = name.upper()
        day = f"{value.day:02d}" if d.pad else str(value.day)
        return f"{name}{'.' if d.dot else ''}{d.s1}{day}{d.s2}{value.year}"
    fmt2 = "{:02d}" if d.pad else "{}"
    parts = [fmt2.format(value.month), fmt2.format(value.day)]
    if d.year_digits == 4:
        parts.append(f"{value.year:04d}")
    elif d.year_digits == 2:
        parts.append(f"{value.year % 100:02d}")
    return d.sep.join(parts)


def shift_date(d: ParsedDate, jitter: int, reference_year: int | None = None) -> str:
    """Move ``d`` by ``jitter`` days and re-render it in its own format.

    Partial dates are resolved against ``reference_year`` for the arithmetic
    and rendered back without a year.

    Raises:
        UnshiftableDate: partial date with no reference year, or a Feb 29
            that does not exist in the reference year.
    """
    year = d.year if d.year is not None else reference_year
    if year is None:
        raise UnshiftableDate(f"partial date at {d.start} has no reference year")
    try:
        base = dt.date(year, d.month, d.day)
    except ValueError:
        raise UnshiftableDate(f"date at {d.start} does not exist in {year}") from None
    return render_date(d, base + dt.timedelta(days=jitter))


def to_date(d: ParsedDate, reference_year: int | None = None) -> dt.date:
    year = d.year if d.year is not None else reference_year
    if year is None:
        raise UnshiftableDate(f"partial date at {d.start} has no reference year")
    return dt.date(year, d.month, d.day)
