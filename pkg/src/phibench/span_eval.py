"""Span- and token-level precision/recall.

A prediction matches a gold span when both carry the same category and the
prediction alone covers at least ``threshold`` of the gold span's characters.
Matching is one-to-one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from phibench.corpus import EVALUATED_CATEGORIES, Category, Corpus, Document, PhiSpan, whitespace_tokens
from phibench.errors import ValidationError

DEFAULT_THRESHOLD = 0.8


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int], ...]  # (gold index, pred index)
    false_negatives: tuple[int, ...]
    false_positives: tuple[int, ...]

    @property
    def tp(self) -> int:
        return len(self.pairs)


@dataclass
class CategoryCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def precision(self) -> float | None:
        denom = self.tp + self.fp
        return self.tp / denom if denom else None

    @property
    def recall(self) -> float | None:
        denom = self.tp + self.fn
        return self.tp / denom if denom else None


@dataclass
class PRStats:
    """Per-category counts; categories absent from both sides are omitted."""

    counts: dict[Category, CategoryCounts] = field(default_factory=dict)

    def __getitem__(self, cat: Category) -> CategoryCounts:
        return self.counts[cat]

    def __contains__(self, cat: object) -> bool:
        return cat in self.counts

    def categories(self) -> list[Category]:
        return sorted(self.counts, key=lambda c: c.value)

    def add(self, cat: Category, tp: int = 0, fp: int = 0, fn: int = 0) -> None:
        c = self.counts.setdefault(cat, CategoryCounts())
        c.tp += tp
        c.fp += fp
        c.fn += fn

    def metric(self, cat: Category, name: str) -> float | None:
        c = self.counts.get(cat)
        if c is None:
            return None
        return getattr(c, name)


def _check_threshold(threshold: float) -> None:
    if not (0.0 < threshold <= 1.0):
        raise ValidationError(f"threshold must be in (0, 1], got {threshold}")


def eligible_pairs(gold: Sequence[PhiSpan], pred: Sequence[PhiSpan], threshold: float) -> list[tuple[int, int, int]]:
    """All (overlap, gold index, pred index) triples that satisfy the coverage rule."""
    out = []
    for gi, g in enumerate(gold):
        need = threshold * len(g)
        for pi, p in enumerate(pred):
            if p.category != g.category:
                continue
            ov = g.overlap(p)
            # float slack keeps 8/10 >= 0.8*10 exact
            if ov > 0 and ov >= need - 1e-9:
                out.append((ov, gi, pi))
    return out


def match_spans(gold: Sequence[PhiSpan], pred: Sequence[PhiSpan], threshold: float = DEFAULT_THRESHOLD) -> MatchResult:
    """One-to-one matching of predictions to gold spans within one document.

    Eligible pairs are taken greedily by descending overlap length, ties by
    (gold start, pred start). Greedy alone can strand a gold span whose only
    eligible prediction was taken by a neighbour, so unmatched gold spans are
    then offered augmenting paths; this keeps every greedy pair's preference
    where possible and makes the match count the maximum achievable.
    """
    _check_threshold(threshold)
    triples = eligible_pairs(gold, pred, threshold)
    triples.sort(key=lambda t: (-t[0], gold[t[1]].start, pred[t[2]].start, t[1], t[2]))

    gold_to_pred: dict[int, int] = {}
    pred_to_gold: dict[int, int] = {}
    for _, gi, pi in triples:
        if gi in gold_to_pred or pi in pred_to_gold:
            continue
        gold_to_pred[gi] = pi
        pred_to_gold[pi] = gi

    adjacency: dict[int, list[int]] = {}
    for _, gi, pi in triples:
        adjacency.setdefault(gi, []).append(pi)

    def augment(gi: int, visited: set[int]) -> bool:
        for pi in adjacency.get(gi, ()):
            if pi in visited:
                continue
            visited.add(pi)
            owner = pred_to_gold.get(pi)
            if owner is None or augment(owner, visited):
                gold_to_pred[gi] = pi
                pred_to_gold[pi] = gi
                return True
        return False

    for gi in sorted(adjacency, key=lambda i: (gold[i].start, i)):
        if gi not in gold_to_pred:
            augment(gi, set())

    pairs = tuple(sorted(gold_to_pred.items()))
    fn = tuple(i for i in range(len(gold)) if i not in gold_to_pred)
    fp = tuple(i for i in range(len(pred)) if i not in pred_to_gold)
    return MatchResult(pairs, fn, fp)


def _scored(spans: Iterable[PhiSpan]) -> list[PhiSpan]:
    return [s for s in spans if s.category is not Category.OTHER]


def paired_documents(gold: Corpus, pred: Corpus) -> list[tuple[Document, Document]]:
    """Align two corpora by doc_id, in gold order.

    Raises:
        ValidationError: the doc_id sets differ; the message lists the
            symmetric difference.
    """
    g_ids, p_ids = set(gold.doc_ids), set(pred.doc_ids)
    if g_ids != p_ids:
        diff = sorted(g_ids ^ p_ids)
        raise ValidationError(f"doc_id mismatch between corpora: {', '.join(diff)}")
    p_by_id = pred.by_id()
    return [(d, p_by_id[d.doc_id]) for d in gold]


def document_span_counts(gold_doc: Document, pred_doc: Document, threshold: float = DEFAULT_THRESHOLD) -> PRStats:
    gold, pred = _scored(gold_doc.spans), _scored(pred_doc.spans)
    result = match_spans(gold, pred, threshold)
    stats = PRStats()
    for gi, _ in result.pairs:
        stats.add(gold[gi].category, tp=1)
    for gi in result.false_negatives:
        stats.add(gold[gi].category, fn=1)
    for pi in result.false_positives:
        stats.add(pred[pi].category, fp=1)
    return stats


def merge_stats(parts: Iterable[PRStats]) -> PRStats:
    total = PRStats()
    for part in parts:
        for cat, c in part.counts.items():
            total.add(cat, c.tp, c.fp, c.fn)
    return total


def evaluate_spans(gold_corpus: Corpus, pred_corpus: Corpus, threshold: float = DEFAULT_THRESHOLD) -> PRStats:
    _check_threshold(threshold)
    pairs = paired_documents(gold_corpus, pred_corpus)
    return merge_stats(document_span_counts(g, p, threshold) for g, p in pairs)


def micro_average(stats: PRStats) -> tuple[float | None, float | None]:
    """Pooled precision and recall over the evaluated categories.

    Precision is ``None`` when nothing was predicted at all, recall when
    there is no gold support.
    """
    tp = fp = fn = 0
    for cat in EVALUATED_CATEGORIES:
        c = stats.counts.get(cat)
        if c is None:
            continue
        tp, fp, fn = tp + c.tp, fp + c.fp, fn + c.fn
    if tp + fp == 0 and tp + fn == 0:
        raise ValidationError("micro average undefined: all counts are zero")
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    return precision, recall


# ---------------------------------------------------------------------------
# token level


def token_labels(doc: Document) -> list[Category | None]:
    """Category per whitespace token, or ``None`` for outside.

    A token takes the category of the span covering more than half of its
    characters; when several do, the one with the larger overlap wins, then
    the earlier start.
    """
    spans = _scored(doc.spans)
    labels: list[Category | None] = []
    for _, start, end in whitespace_tokens(doc.text):
        best: tuple[int, int] | None = None
        best_cat = None
        length = end - start
        for s in spans:
            ov = max(0, min(end, s.end) - max(start, s.start))
            if 2 * ov <= length:
                continue
            key = (-ov, s.start)
            if best is None or key < best:
                best, best_cat = key, s.category
        labels.append(best_cat)
    return labels


def document_token_counts(gold_doc: Document, pred_doc: Document) -> PRStats:
    if gold_doc.text != pred_doc.text:
        raise ValidationError(f"text differs between gold and prediction for {gold_doc.doc_id}")
    stats = PRStats()
    for g, p in zip(token_labels(gold_doc), token_labels(pred_doc)):
        if g is not None and g == p:
            stats.add(g, tp=1)
            continue
        if g is not None:
            stats.add(g, fn=1)
        if p is not None:
            stats.add(p, fp=1)
    return stats


def evaluate_tokens(gold_corpus: Corpus, pred_corpus: Corpus) -> PRStats:
    pairs = paired_documents(gold_corpus, pred_corpus)
    return merge_stats(document_token_counts(g, p) for g, p in pairs)


# ---------------------------------------------------------------------------
# reports


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def report_rows(stats: PRStats) -> list[list[str]]:
    return [
        [cat.value, _fmt(stats[cat].precision), _fmt(stats[cat].recall), str(stats[cat].support)]
        for cat in stats.categories()
        if cat is not Category.OTHER
    ]


def export_report(stats: PRStats, path: str | Path) -> None:
    """Write ``category,precision,recall,support``; undefined values are empty."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["category", "precision", "recall", "support"])
        writer.writerows(report_rows(stats))


def stats_to_dict(stats: PRStats) -> Mapping[str, dict]:
    return {
        cat.value: {
            "tp": c.tp,
            "fp": c.fp,
            "fn": c.fn,
            "precision": c.precision,
            "recall": c.recall,
            "support": c.support,
        }
        for cat, c in sorted(stats.counts.items(), key=lambda kv: kv[0].value)
    }
