from __future__ import annotations

import itertools
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _synth import exhaustive_min_cover
from phibench.corpus import Corpus, Document
from phibench.errors import ValidationError
from phibench.sampler import (
    UNKNOWN,
    Axis,
    CoverageState,
    StrataSpec,
    coverage_report,
    default_spec,
    greedy_cover,
    load_strata_spec,
    sample_set_cover,
    strata_of,
    write_coverage_csv,
)

ABC = {"doc1": frozenset("ab"), "doc2": frozenset("bc"), "doc3": frozenset("c")}


def _doc(doc_id, text="x" * 700, note_type="progress", **demo):
    return Document(doc_id, "p", text, note_type=note_type, demographics=demo)


def test_one_pair_per_axis():
    doc = _doc("d", sex="F", race="Asian", ethnicity="Non-Hispanic", age="44")
    spec = StrataSpec(tuple(Axis(n) for n in ("sex", "race", "ethnicity", "note_type"))
                      + (Axis("age", (18, 30, 45)), Axis("note_length", (500, 2000))))
    strata = strata_of(doc, spec)
    assert len(strata) == 6
    assert ("note_length", "500-2000") in strata
    assert ("age", "30-45") in strata
    assert ("sex", "F") in strata


def test_missing_value_policy():
    doc = _doc("d", sex="M")
    assert ("ethnicity", UNKNOWN) in strata_of(doc, StrataSpec((Axis("ethnicity"),)))
    with pytest.raises(ValidationError):
        strata_of(doc, StrataSpec((Axis("ethnicity"),), missing="error"))


def test_axis_validation():
    with pytest.raises(ValidationError):
        Axis("zodiac")
    with pytest.raises(ValidationError):
        Axis("age", (30, 18))
    assert Axis("age", (18,)).bin(18) == "18+"
    assert Axis("age", (18,)).bin(17.9) == "<18"


def test_spec_json_round_trip(tmp_path):
    spec = StrataSpec((Axis("sex"), Axis("age", (18, 65))))
    path = tmp_path / "s.json"
    path.write_text(json.dumps(spec.to_json()), "utf-8")
    assert load_strata_spec(path) == spec


def test_abc_example():
    state = greedy_cover(ABC)
    assert state.selected == ["doc1", "doc2"]
    assert state.complete
    assert exhaustive_min_cover(ABC) == 2
    counts = {r.stratum: r.count for r in coverage_report(state)}
    assert counts == {"a": 1, "b": 2, "c": 1}


def test_single_document():
    state = greedy_cover({"only": frozenset("xyz")})
    assert state.selected == ["only"] and state.covered == set("xyz")


def test_budget_one_picks_largest_then_doc_id():
    sets = {"b": frozenset("xyz"), "a": frozenset("uvw"), "c": frozenset("q")}
    assert greedy_cover(sets, budget=1).selected == ["a"]
    rng = random.Random(0)
    for _ in range(30):
        sets = {f"d{i}": frozenset(rng.sample("abcdefgh", rng.randint(1, 5))) for i in range(6)}
        best = max(sorted(sets), key=lambda k: (len(sets[k]), -int(k[1:])))
        assert greedy_cover(sets, budget=1).selected == [best]


def test_balancing_phase_fills_budget():
    state = greedy_cover(ABC, budget=3)
    assert state.selected == ["doc1", "doc2", "doc3"]
    rows = coverage_report(state)
    assert {r.stratum: r.count for r in rows} == {"a": 1, "b": 2, "c": 2}


def test_full_cover_has_no_gaps_and_empty_selection_flags_all(tmp_path):
    state = greedy_cover(ABC)
    assert all(r.covered for r in coverage_report(state))
    empty = CoverageState(frozenset("abc"), strata=ABC)
    assert [r.covered for r in coverage_report(empty)] == [False, False, False]


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.sampled_from([f"d{i:02d}" for i in range(10)]),
                       st.frozensets(st.integers(0, 9), min_size=1, max_size=5), min_size=1))
def test_cover_properties(sets):
    state = greedy_cover(sets)
    assert state.complete
    assert len(state.selected) == len(set(state.selected))
    assert all(g > 0 for g in state.gains)
    # gains never increase
    assert all(a >= b for a, b in zip(state.gains, state.gains[1:]))
    opt = exhaustive_min_cover(sets)
    largest = max(len(s) for s in sets.values())
    harmonic = sum(1 / k for k in range(1, largest + 1))
    assert len(state.selected) <= opt * harmonic + 1e-9


def test_budget_never_exceeded():
    rng = random.Random(1)
    sets = {f"d{i}": frozenset(rng.sample(range(20), 4)) for i in range(12)}
    for budget in range(1, 13):
        assert len(greedy_cover(sets, budget).selected) == min(budget, 12)
    with pytest.raises(ValidationError):
        greedy_cover(sets, 0)


def test_sample_corpus_and_csv(tmp_path):
    docs = [_doc(f"n{i}", text="w " * (50 * (i + 1)), sex=s, race=r, age=str(a))
            for i, (s, r, a) in enumerate(itertools.product("FM", ["A", "B"], [20, 70]))]
    corpus = Corpus("c", tuple(docs))
    state = sample_set_cover(corpus, default_spec(corpus))
    assert state.complete
    write_coverage_csv(coverage_report(state), tmp_path / "cov.csv")
    lines = (tmp_path / "cov.csv").read_text("utf-8").splitlines()
    assert lines[0] == "axis,bin,count,covered"
    assert "age,18-29" in "\n".join(lines)
