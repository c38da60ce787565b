from __future__ import annotations

import json

import numpy as np
import pytest

from _synth import perturbed_predictions, random_eval_corpus, write_jsonl, write_key
from phibench.cli import main
from phibench.corpus import Corpus, Document, PhiSpan, load_corpus
from phibench.divergence import EmbeddingSet, save_embeddings


@pytest.fixture
def corpora(tmp_path):
    gold = random_eval_corpus(1, 12)
    pred = perturbed_predictions(gold, 2)
    return write_jsonl(gold, tmp_path / "gold.jsonl"), write_jsonl(pred, tmp_path / "pred.jsonl")


def _csv(path):
    return path.read_text("utf-8").splitlines()


def test_eval_identical(tmp_path, corpora, capsys):
    gold, _ = corpora
    out = tmp_path / "o"
    assert main(["eval", str(gold), str(gold), "--out", str(out), "--json"]) == 0
    rows = _csv(out / "report.csv")[1:]
    assert rows and all(",1.00,1.00," in r for r in rows)
    assert _csv(out / "micro.csv") == ["precision,recall", "1.00,1.00"]
    manifest = json.loads((out / "manifest.json").read_text("utf-8"))
    assert manifest["command"] == "eval" and str(gold) in manifest["inputs"]
    assert json.loads((out / "report.json").read_text("utf-8"))["micro"]["recall"] == 1.0
    assert "recall=1.00" in capsys.readouterr().out


def test_eval_token_level_and_map(tmp_path):
    doc = Document("d", "p", "MRN 123 seen", spans=(PhiSpan(4, 7, "MEDICALRECORD"),))
    path = write_jsonl(Corpus("c", (doc,)), tmp_path / "src.jsonl")
    out = tmp_path / "o"
    assert main(["eval", str(path), str(path), "--map", "i2b2", "--level", "token", "--out", str(out)]) == 0
    assert _csv(out / "report.csv")[1] == "ID,1.00,1.00,1"


def test_eval_mismatched_ids(tmp_path, corpora, capsys):
    gold, _ = corpora
    other = write_jsonl(Corpus("x", (Document("zzz", "p", "t"),)), tmp_path / "x.jsonl")
    assert main(["eval", str(gold), str(other), "--out", str(tmp_path / "o")]) == 2
    assert "zzz" in capsys.readouterr().err


def test_missing_input_is_exit_2(tmp_path, capsys):
    assert main(["eval", str(tmp_path / "nope.jsonl"), str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 2


def test_bootstrap_paired_same_model(tmp_path, corpora):
    gold, pred = corpora
    out = tmp_path / "o"
    assert main(["bootstrap", str(gold), str(pred), str(pred), "--resamples", "100", "--out", str(out)]) == 0
    for row in _csv(out / "paired.csv")[1:]:
        cat, delta, p, p_adj, sig = row.split(",")
        assert delta in ("0.000000", "") and p == "1.000000" and sig == "false"
    assert json.loads((out / "manifest.json").read_text("utf-8"))["seeds"] == {"bootstrap": 42}


def test_bootstrap_reports_are_reproducible(tmp_path, corpora):
    gold, pred = corpora
    for name in ("a", "b"):
        assert main(["bootstrap", str(gold), str(pred), "--resamples", "50", "--threads", "2",
                     "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "ci.csv").read_bytes() == (tmp_path / "b" / "ci.csv").read_bytes()


def test_diverge_ftd_self_and_pairs(tmp_path):
    rng = np.random.default_rng(0)
    paths = []
    for name in ("a", "b", "c"):
        emb = EmbeddingSet(name, rng.normal(size=(20, 3)), tuple(f"{name}{i}" for i in range(20)))
        save_embeddings(emb, tmp_path / f"{name}.jsonl")
        paths.append(str(tmp_path / f"{name}.jsonl"))
    out = tmp_path / "o"
    assert main(["diverge", "--metric", "ftd", paths[0], paths[0], "--resamples", "20", "--out", str(out)]) == 0
    first = _csv(out / "divergence.csv")[1].split(",")
    assert first[1] == "ftd" and abs(float(first[-1])) < 1e-9
    assert main(["diverge", "--metric", "ftd", *paths, "--resamples", "10", "--out", str(out)]) == 0
    pairs = {r.split(",")[0] for r in _csv(out / "divergence.csv")[1:]}
    assert len(pairs) == 3


def test_diverge_jsd_disjoint(tmp_path):
    a = write_jsonl(Corpus("a", (Document("a1", "p", "x y"),)), tmp_path / "a.jsonl")
    b = write_jsonl(Corpus("b", (Document("b1", "p", "z w"),)), tmp_path / "b.jsonl")
    out = tmp_path / "o"
    assert main(["diverge", "--metric", "jsd", str(a), str(b), "--resamples", "10", "--out", str(out)]) == 0
    row = _csv(out / "divergence.csv")[1].split(",")
    assert row[:2] == ["a vs b", "jsd"] and row[-1] == "0.693147"


def test_sample(tmp_path):
    docs = tuple(Document(f"d{i}", "p", "w " * (i + 1), note_type=t, demographics={"sex": s})
                 for i, (t, s) in enumerate([("a", "F"), ("b", "F"), ("b", "M")]))
    path = write_jsonl(Corpus("c", docs), tmp_path / "c.jsonl")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"axes": [{"name": "sex"}, {"name": "note_type"}]}), "utf-8")
    out = tmp_path / "o"
    assert main(["sample", str(path), "--spec", str(spec), "--out", str(out)]) == 0
    selected = (out / "selected.txt").read_text("utf-8").split()
    assert len(selected) == 2
    assert all(r.endswith(",true") for r in _csv(out / "coverage.csv")[1:])


def test_surrogate(tmp_path):
    docs = (Document("d1", "p1", "seen 2023-03-05 by Dr. Smith", spans=(PhiSpan(5, 15, "DATE"), PhiSpan(19, 28, "DOCTOR"))),
            Document("d2", "p2", "call (650) 555-0192", spans=(PhiSpan(5, 19, "PHONE"),)))
    path = write_jsonl(Corpus("c", docs), tmp_path / "c.jsonl")
    key = write_key(tmp_path / "key.json")
    out = tmp_path / "o"
    assert main(["surrogate", str(path), "--key", str(key), "--out", str(out)]) == 0
    released = load_corpus(out / "surrogate.jsonl")
    assert all(d.extra["surrogated"] for d in released)
    assert "Smith" not in (out / "surrogate.jsonl").read_text("utf-8")
    assert len((out / "audit.jsonl").read_text("utf-8").splitlines()) == 3
    assert (out / "manifest.json").exists()
    # a second pass over released output is refused
    assert main(["surrogate", str(out / "surrogate.jsonl"), "--key", str(key), "--out", str(tmp_path / "o2")]) == 2


def test_align_empty_responses(tmp_path):
    notes = write_jsonl(Corpus("n", (Document("a", "p", "hello there"),)), tmp_path / "n.jsonl")
    responses = tmp_path / "r.jsonl"
    responses.write_text(json.dumps({"doc_id": "a", "response": "{}"}) + "\n", "utf-8")
    out = tmp_path / "o"
    assert main(["align", str(notes), str(responses), "--out", str(out)]) == 0
    assert load_corpus(out / "grounded.jsonl").documents[0].spans == ()
    assert (out / "bio.conll").read_text("utf-8") == "hello\tO\nthere\tO\n\n"


def test_cost_prints_total(capsys):
    assert main(["cost", "--input-chars", "633e9", "--output-tokens", "536e9"]) == 0
    out = capsys.readouterr().out
    assert "$693,738" in out and "$23,738" in out and "$670,000" in out


def test_cost_distillation_with_report(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["cost", "--input-tokens", "13e6", "--output-tokens", "6.5e6", "--out", str(out)]) == 0
    assert "$10.08" in capsys.readouterr().out
    assert _csv(out / "cost.csv")[-1] == "total,,,10.08"


def test_cost_rejects_both_inputs():
    with pytest.raises(SystemExit):
        main(["cost", "--input-chars", "1", "--input-tokens", "1", "--output-tokens", "1"])


def test_map_labels(tmp_path):
    doc = Document("d", "p", "nurse from Acme", spans=(PhiSpan(0, 5, "PROFESSION"), PhiSpan(11, 15, "VENDOR")))
    path = write_jsonl(Corpus("c", (doc,)), tmp_path / "c.jsonl")
    out = tmp_path / "m" / "mapped.jsonl"
    assert main(["map-labels", str(path), "--map", "aimi", "--out", str(out)]) == 2  # PROFESSION unmapped
    assert main(["map-labels", str(path), "--map", "i2b2", "--drop-other", "--out", str(out)]) == 2  # VENDOR unmapped
    doc = Document("d", "p", "nurse from Acme", spans=(PhiSpan(11, 15, "VENDOR"),))
    path = write_jsonl(Corpus("c", (doc,)), tmp_path / "c.jsonl")
    assert main(["map-labels", str(path), "--map", "aimi", "--out", str(out)]) == 0
    assert [s.category.value for s in load_corpus(out).documents[0].spans] == ["HOSPITAL"]
