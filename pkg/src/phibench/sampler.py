"""Greedy set-cover diversity sampling over per-axis demographic strata.

Each document falls into one bin on every axis (age, sex, race, ethnicity,
note type, note length). The sampler repeatedly picks the note covering the
most uncovered (axis, bin) pairs, then optionally keeps picking to raise the
least-represented stratum until a budget is spent.
"""

from __future__ import annotations

import bisect
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Mapping, Sequence

import numpy as np

from phibench.corpus import Corpus, Document
from phibench.errors import ValidationError

logger = logging.getLogger(__name__)

AXIS_NAMES = ("age", "sex", "race", "ethnicity", "note_type", "note_length")
UNKNOWN = "UNKNOWN"

DEFAULT_AGE_EDGES = (18, 30, 45, 60, 75, 90)
DEFAULT_AGE_LABELS = ("0-17", "18-29", "30-44", "45-59", "60-74", "75-89", "90+")

Stratum = tuple[str, str]


def _edge(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:g}"


@dataclass(frozen=True)
class Axis:
    """One stratification axis.

    ``edges`` is None for categorical axes. Numeric bins are half-open:
    ``[e_i, e_{i+1})``, with an open bin below the first edge and above the
    last. Labels default to ``<e0``, ``e0-e1``, ..., ``ek+``.
    """

    name: str
    edges: tuple[float, ...] | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.name not in AXIS_NAMES:
            raise ValidationError(f"unknown axis {self.name!r}; expected one of {AXIS_NAMES}")
        if self.edges is None:
            return
        edges = tuple(float(e) for e in self.edges)
        if not edges or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValidationError(f"bin edges for {self.name} must be strictly increasing")
        object.__setattr__(self, "edges", edges)
        if self.labels is None:
            labels = [f"<{_edge(edges[0])}"]
            labels += [f"{_edge(a)}-{_edge(b)}" for a, b in zip(edges, edges[1:])]
            labels.append(f"{_edge(edges[-1])}+")
            object.__setattr__(self, "labels", tuple(labels))
        elif len(self.labels) != len(edges) + 1:
            raise ValidationError(f"{self.name}: need {len(edges) + 1} labels for {len(edges)} edges")
        else:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def categorical(self) -> bool:
        return self.edges is None

    def bin(self, value: float) -> str:
        assert self.edges is not None and self.labels is not None
        return self.labels[bisect.bisect_right(self.edges, value)]


@dataclass(frozen=True)
class StrataSpec:
    axes: tuple[Axis, ...]
    missing: str = "unknown"  # or "error"

    def __post_init__(self) -> None:
        object.__setattr__(self, "axes", tuple(self.axes))
        if self.missing not in ("unknown", "error"):
            raise ValidationError("missing policy must be 'unknown' or 'error'")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate axis in strata spec")

    @classmethod
    def from_json(cls, raw: Mapping) -> StrataSpec:
        axes = []
        for item in raw.get("axes", []):
            bins = item.get("bins", "categorical")
            if bins == "categorical":
                axes.append(Axis(item["name"]))
            else:
                labels = item.get("labels")
                axes.append(Axis(item["name"], tuple(bins), tuple(labels) if labels else None))
        return cls(tuple(axes), raw.get("missing", "unknown"))

    def to_json(self) -> dict:
        axes = []
        for a in self.axes:
            if a.categorical:
                axes.append({"name": a.name, "bins": "categorical"})
            else:
                axes.append({"name": a.name, "bins": list(a.edges), "labels": list(a.labels)})
        return {"axes": axes, "missing": self.missing}


def load_strata_spec(path: str | Path) -> StrataSpec:
    with open(path, encoding="utf-8") as f:
        return StrataSpec.from_json(json.load(f))


def note_length_quintiles(corpus: Corpus) -> tuple[float, ...]:
    lengths = np.array([len(d.text) for d in corpus], dtype=float)
    if lengths.size == 0:
        raise ValidationError("empty corpus")
    edges = np.quantile(lengths, [0.2, 0.4, 0.6, 0.8])
    return tuple(sorted({float(np.round(e)) for e in edges}))


def default_spec(corpus: Corpus) -> StrataSpec:
    """Age bands 0-17 ... 90+, note-length quintiles of ``corpus``, rest categorical."""
    return StrataSpec(
        (
            Axis("age", DEFAULT_AGE_EDGES, DEFAULT_AGE_LABELS),
            Axis("sex"),
            Axis("race"),
            Axis("ethnicity"),
            Axis("note_type"),
            Axis("note_length", note_length_quintiles(corpus)),
        )
    )


def _raw_value(doc: Document, axis: str) -> str | None:
    if axis == "note_type":
        value = doc.note_type or doc.demographics.get("note_type")
    else:
        value = doc.demographics.get(axis)
    return value if value not in (None, "") else None


def strata_of(doc: Document, spec: StrataSpec) -> frozenset[Stratum]:
    out = set()
    for axis in spec.axes:
        if axis.name == "note_length":
            value: str | None = str(len(doc.text))
        else:
            value = _raw_value(doc, axis.name)
        if value is None:
            if spec.missing == "error":
                raise ValidationError(f"{doc.doc_id}: missing value for axis {axis.name}")
            out.add((axis.name, UNKNOWN))
            continue
        if axis.categorical:
            out.add((axis.name, value))
            continue
        try:
            num = float(value)
        except ValueError:
            if spec.missing == "error":
                raise ValidationError(f"{doc.doc_id}: non-numeric {axis.name} {value!r}") from None
            out.add((axis.name, UNKNOWN))
            continue
        out.add((axis.name, axis.bin(num)))
    return frozenset(out)


@dataclass
class CoverageState:
    target_strata: frozenset[Stratum]
    covered: set[Stratum] = field(default_factory=set)
    selected: list[str] = field(default_factory=list)
    gains: list[int] = field(default_factory=list)  # new strata per cover-phase pick
    strata: Mapping[str, frozenset] = field(default_factory=dict, repr=False)

    @property
    def uncovered(self) -> set[Stratum]:
        return set(self.target_strata) - self.covered

    @property
    def complete(self) -> bool:
        return self.covered >= self.target_strata


def greedy_cover(sets: Mapping[str, frozenset], budget: int | None = None) -> CoverageState:
    """Greedy cover of the union of ``sets`` (keyed by doc_id).

    Cover phase: most new elements first, ties by doc_id. Once everything
    is covered and budget remains, the balancing phase picks the document
    that maximises the resulting minimum per-element count; ties go to the
    document touching the most elements at the current minimum, then the
    lowest summed count over its elements, then doc_id.
    """
    if budget is not None and budget < 1:
        raise ValidationError("budget must be >= 1")
    if not sets:
        raise ValidationError("nothing to sample from")
    target = frozenset().union(*sets.values())
    state = CoverageState(target, strata=dict(sets))
    remaining = dict(sorted(sets.items()))
    limit = len(remaining) if budget is None else min(budget, len(remaining))

    while len(state.selected) < limit and not state.complete:
        best_id, best_gain = None, 0
        for doc_id, strata in remaining.items():
            gain = len(strata - state.covered)
            if gain > best_gain:
                best_id, best_gain = doc_id, gain
        if best_id is None:
            break
        state.selected.append(best_id)
        state.gains.append(best_gain)
        state.covered |= remaining.pop(best_id)

    if budget is None or len(state.selected) >= limit:
        return state

    counts = {s: 0 for s in target}
    for doc_id in state.selected:
        for s in sets[doc_id]:
            counts[s] += 1
    while len(state.selected) < limit and remaining:
        floor = min(counts.values())
        n_floor = sum(1 for c in counts.values() if c == floor)
        best_key, best_id = None, None
        for doc_id, strata in remaining.items():
            at_floor = [s for s in strata if counts[s] == floor]
            new_floor = floor + 1 if len(at_floor) == n_floor else floor
            key = (-new_floor, -len(at_floor), sum(counts[s] for s in strata), doc_id)
            if best_key is None or key < best_key:
                best_key, best_id = key, doc_id
        state.selected.append(best_id)
        for s in remaining.pop(best_id):
            counts[s] += 1
    return state


def sample_set_cover(corpus: Corpus, spec: StrataSpec | None = None, budget: int | None = None) -> CoverageState:
    if len(corpus) == 0:
        raise ValidationError("cannot sample from an empty corpus")
    spec = spec or default_spec(corpus)
    sets = {d.doc_id: strata_of(d, spec) for d in corpus}
    state = greedy_cover(sets, budget)
    logger.info("selected %d documents covering %d/%d strata",
                len(state.selected), len(state.covered), len(state.target_strata))
    return state


def _stratum_key(s) -> tuple[str, str]:
    return (str(s[0]), str(s[1])) if isinstance(s, tuple) and len(s) == 2 else ("", str(s))


@dataclass(frozen=True)
class CoverageRow:
    stratum: Hashable
    count: int

    @property
    def covered(self) -> bool:
        return self.count > 0

    @property
    def axis(self) -> str:
        return _stratum_key(self.stratum)[0]

    @property
    def bin(self) -> str:
        return _stratum_key(self.stratum)[1]


def coverage_report(state: CoverageState) -> list[CoverageRow]:
    """Selected-document count per target stratum; zero count flags a gap."""
    counts = {s: 0 for s in state.target_strata}
    for doc_id in state.selected:
        for s in state.strata[doc_id]:
            counts[s] = counts.get(s, 0) + 1
    return [CoverageRow(s, counts[s]) for s in sorted(counts, key=_stratum_key)]


def write_selection(state: CoverageState, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(f"{doc_id}\n" for doc_id in state.selected)


def write_coverage_csv(rows: Sequence[CoverageRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["axis", "bin", "count", "covered"])
        for r in rows:
            w.writerow([r.axis, r.bin, r.count, "true" if r.covered else "false"])
