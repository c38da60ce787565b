from __future__ import annotations

import numpy as np
import pytest

from _synth import perturbed_predictions, random_eval_corpus, without_spans
from phibench.corpus import Category, Corpus
from phibench.errors import ValidationError
from phibench.span_eval import document_span_counts, merge_stats
from phibench.stats import (
    BootstrapConfig,
    CiEstimate,
    bonferroni,
    bootstrap_ci,
    format_ci,
    paired_bootstrap_test,
    resample_indices,
    write_ci_csv,
    write_paired_csv,
)

SMALL = BootstrapConfig(resamples=200)


def test_resample_indices_depend_only_on_seed_and_iteration():
    a = resample_indices(30, 42, 7)
    assert np.array_equal(a, resample_indices(30, 42, 7))
    assert not np.array_equal(a, resample_indices(30, 42, 8))
    assert not np.array_equal(a, resample_indices(30, 43, 7))
    assert a.min() >= 0 and a.max() < 30


def test_ci_matches_naive_loop():
    gold = random_eval_corpus(11, 15)
    pred = perturbed_predictions(gold, 12)
    cfg = BootstrapConfig(resamples=100, seed=5)
    per_doc = [document_span_counts(g, p) for g, p in zip(gold, pred)]
    boots = []
    for i in range(cfg.resamples):
        stats = merge_stats(per_doc[j] for j in resample_indices(len(per_doc), cfg.seed, i))
        boots.append(stats.metric(Category.DATE, "recall"))
    pool = np.array([b for b in boots if b is not None])
    est = {e.category: e for e in bootstrap_ci(gold, pred, "recall", cfg)}[Category.DATE]
    assert est.lower == pytest.approx(np.percentile(pool, 2.5), abs=1e-12)
    assert est.upper == pytest.approx(np.percentile(pool, 97.5), abs=1e-12)
    assert est.lower <= est.point <= est.upper


def test_perfect_model_ci():
    gold = random_eval_corpus(13, 20)
    for metric in ("precision", "recall"):
        for e in bootstrap_ci(gold, gold, metric, SMALL):
            assert (e.point, e.lower, e.upper) == (1.0, 1.0, 1.0)
            assert format_ci(e) == "1.00 [1.00--1.00]"


def test_single_document_degenerate():
    gold = random_eval_corpus(14, 1)
    pred = perturbed_predictions(gold, 1)
    for e in bootstrap_ci(gold, pred, "recall", SMALL):
        if e.defined:
            assert e.lower == e.point == e.upper


def test_seed_determinism_and_sensitivity():
    gold = random_eval_corpus(15, 30)
    pred = perturbed_predictions(gold, 16)
    a = bootstrap_ci(gold, pred, "recall", BootstrapConfig(resamples=300, seed=42))
    b = bootstrap_ci(gold, pred, "recall", BootstrapConfig(resamples=300, seed=42))
    c = bootstrap_ci(gold, pred, "recall", BootstrapConfig(resamples=300, seed=43))
    assert a == b
    assert a != c


def test_threads_do_not_change_results():
    gold = random_eval_corpus(17, 20)
    pred = perturbed_predictions(gold, 18)
    a = bootstrap_ci(gold, pred, "precision", BootstrapConfig(resamples=150, workers=1))
    b = bootstrap_ci(gold, pred, "precision", BootstrapConfig(resamples=150, workers=4))
    assert a == b


def test_paired_identical_models():
    gold = random_eval_corpus(19, 20)
    pred = perturbed_predictions(gold, 20)
    for r in paired_bootstrap_test(gold, pred, pred, "recall", SMALL):
        # recall is undefined for categories that only appear as false positives
        assert r.delta in (0.0, None)
        assert r.p_value == 1.0
        assert not r.significant


def test_paired_strictly_better():
    gold = random_eval_corpus(21, 20)
    results = paired_bootstrap_test(gold, without_spans(gold), gold, "recall", SMALL)
    assert results
    for r in results:
        assert r.delta == 1.0
        assert r.p_value == 1 / SMALL.resamples
        assert r.significant


def test_bonferroni():
    assert bonferroni(0.001) == pytest.approx(0.009)
    assert bonferroni(0.5) == 1.0


@pytest.mark.parametrize(
    "triple, text",
    [((0.921, 0.904, 0.932), "0.92 [0.90--0.93]"),
     ((1, 1, 1), "1.00 [1.00--1.00]"),
     ((0.5, 0.48, 0.59), "0.50 [0.48--0.59]")],
)
def test_format_ci(triple, text):
    assert format_ci(CiEstimate(Category.DATE, "recall", *triple)) == text


def test_format_ci_undefined():
    with pytest.raises(ValidationError):
        format_ci(CiEstimate(Category.DATE, "precision", None, None, None))


def test_config_validation():
    with pytest.raises(ValidationError):
        BootstrapConfig(resamples=0)
    with pytest.raises(ValidationError):
        bootstrap_ci(Corpus("a", ()), Corpus("b", ()), "recall")
    with pytest.raises(ValidationError):
        bootstrap_ci(random_eval_corpus(1, 2), random_eval_corpus(1, 2), "f1")


def test_csv_writers(tmp_path):
    gold = random_eval_corpus(22, 10)
    est = bootstrap_ci(gold, without_spans(gold), "precision", SMALL)
    write_ci_csv(est, tmp_path / "ci.csv")
    lines = (tmp_path / "ci.csv").read_text("utf-8").splitlines()
    assert lines[0] == "category,metric,point,lower,upper,formatted"
    assert all(line.endswith(",precision,,,,") for line in lines[1:])
    res = paired_bootstrap_test(gold, without_spans(gold), gold, "recall", SMALL)
    write_paired_csv(res, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text("utf-8").splitlines()
    assert lines[0] == "category,delta,p_value,p_adjusted,significant"
    assert lines[1].endswith(",1.000000,0.005000,0.045000,true")
