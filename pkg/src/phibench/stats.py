"""Document-level bootstrap CIs and paired bootstrap significance tests."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from phibench.corpus import EVALUATED_CATEGORIES, Category, Corpus
from phibench.errors import ValidationError
from phibench.span_eval import DEFAULT_THRESHOLD, document_span_counts, paired_documents

METRICS = ("precision", "recall")
ALPHA = 0.05
N_COMPARISONS = len(EVALUATED_CATEGORIES)


@dataclass(frozen=True)
class BootstrapConfig:
    resamples: int = 2000
    seed: int = 42
    ci_level: float = 0.95
    threshold: float = DEFAULT_THRESHOLD
    workers: int = 1

    def __post_init__(self) -> None:
        if self.resamples < 1:
            raise ValidationError("resamples must be >= 1")
        if not (0.0 < self.ci_level < 1.0):
            raise ValidationError("ci_level must be in (0, 1)")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


@dataclass(frozen=True)
class CiEstimate:
    category: Category
    metric: str
    point: float | None
    lower: float | None
    upper: float | None

    @property
    def defined(self) -> bool:
        return self.point is not None and self.lower is not None and self.upper is not None


@dataclass(frozen=True)
class PairedTestResult:
    category: Category
    metric: str
    delta: float | None
    p_value: float
    p_adjusted: float
    significant: bool


def resample_indices(n: int, seed: int, iteration: int) -> np.ndarray:
    """Document draw for one iteration; depends only on (seed, iteration)."""
    rng = np.random.default_rng([seed, iteration])
    return rng.integers(0, n, size=n)


def resample_weights(n: int, seed: int, iteration: int) -> np.ndarray:
    return np.bincount(resample_indices(n, seed, iteration), minlength=n)


def _weight_matrix(n: int, cfg: BootstrapConfig) -> np.ndarray:
    """(resamples, n) multiplicities, row i drawn from stream (seed, i)."""
    def chunk(bounds: tuple[int, int]) -> np.ndarray:
        lo, hi = bounds
        return np.stack([resample_weights(n, cfg.seed, i) for i in range(lo, hi)])

    step = max(1, -(-cfg.resamples // cfg.workers))
    bounds = [(lo, min(lo + step, cfg.resamples)) for lo in range(0, cfg.resamples, step)]
    if cfg.workers == 1:
        parts = [chunk(b) for b in bounds]
    else:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(chunk, bounds))
    return np.concatenate(parts, axis=0)


def count_tensor(gold: Corpus, pred: Corpus, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Per-document (tp, fp, fn) for each evaluated category: shape (docs, 9, 3)."""
    pairs = paired_documents(gold, pred)
    if not pairs:
        raise ValidationError("cannot bootstrap an empty corpus")
    out = np.zeros((len(pairs), len(EVALUATED_CATEGORIES), 3), dtype=np.int64)
    for d, (g, p) in enumerate(pairs):
        stats = document_span_counts(g, p, threshold)
        for k, cat in enumerate(EVALUATED_CATEGORIES):
            c = stats.counts.get(cat)
            if c is not None:
                out[d, k] = (c.tp, c.fp, c.fn)
    return out


def _metric(totals: np.ndarray, metric: str) -> np.ndarray:
    """Metric from (..., 3) summed counts; NaN where undefined."""
    tp = totals[..., 0].astype(float)
    other = totals[..., 1] if metric == "precision" else totals[..., 2]
    denom = tp + other
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, tp / np.where(denom > 0, denom, 1), np.nan)


def _check_metric(metric: str) -> None:
    if metric not in METRICS:
        raise ValidationError(f"metric must be one of {METRICS}, got {metric!r}")


def _present(counts: np.ndarray) -> list[int]:
    """Indices of categories with any gold or predicted span in the full data."""
    totals = counts.sum(axis=0)
    return [k for k in range(totals.shape[0]) if totals[k].sum() > 0]


def _opt(x: float) -> float | None:
    return None if np.isnan(x) else float(x)


def bootstrap_ci(gold: Corpus, pred: Corpus, metric: str, cfg: BootstrapConfig = BootstrapConfig()) -> list[CiEstimate]:
    """Percentile CIs per category from document resampling.

    Resamples in which the metric is undefined for a category (no predictions
    for precision, no gold for recall) are left out of that category's pool.
    """
    _check_metric(metric)
    counts = count_tensor(gold, pred, cfg.threshold)
    weights = _weight_matrix(counts.shape[0], cfg)
    boot = _metric(np.einsum("rd,dkc->rkc", weights, counts), metric)
    full = _metric(counts.sum(axis=0), metric)
    tail = (1.0 - cfg.ci_level) / 2.0 * 100.0
    out = []
    for k in _present(counts):
        pool = boot[:, k]
        pool = pool[~np.isnan(pool)]
        lower = upper = None
        if pool.size:
            lower = float(np.percentile(pool, tail))
            upper = float(np.percentile(pool, 100.0 - tail))
        out.append(CiEstimate(EVALUATED_CATEGORIES[k], metric, _opt(full[k]), lower, upper))
    return sorted(out, key=lambda e: e.category.value)


def bonferroni(p_value: float, n_comparisons: int = N_COMPARISONS) -> float:
    return min(1.0, p_value * n_comparisons)


def paired_bootstrap_test(
    gold: Corpus,
    pred_a: Corpus,
    pred_b: Corpus,
    metric: str = "recall",
    cfg: BootstrapConfig = BootstrapConfig(),
    alpha: float = ALPHA,
    n_comparisons: int = N_COMPARISONS,
) -> list[PairedTestResult]:
    """Two-sided sign-flip test on delta = metric(B) - metric(A).

    Both models see the same document draw on every resample. The p-value is
    the share of resamples whose delta is zero or has the opposite sign to
    the full-data delta, floored at ``1 / resamples``; resamples where the
    metric is undefined for either model are skipped.
    """
    _check_metric(metric)
    counts_a = count_tensor(gold, pred_a, cfg.threshold)
    counts_b = count_tensor(gold, pred_b, cfg.threshold)
    weights = _weight_matrix(counts_a.shape[0], cfg)
    boot_a = _metric(np.einsum("rd,dkc->rkc", weights, counts_a), metric)
    boot_b = _metric(np.einsum("rd,dkc->rkc", weights, counts_b), metric)
    full_delta = _metric(counts_b.sum(axis=0), metric) - _metric(counts_a.sum(axis=0), metric)

    present = sorted(set(_present(counts_a)) | set(_present(counts_b)))
    floor = 1.0 / cfg.resamples
    out = []
    for k in present:
        observed = full_delta[k]
        if np.isnan(observed):
            p = 1.0
        else:
            deltas = boot_b[:, k] - boot_a[:, k]
            deltas = deltas[~np.isnan(deltas)]
            if deltas.size == 0:
                p = 1.0
            else:
                flips = np.count_nonzero((deltas == 0) | (np.sign(deltas) != np.sign(observed)))
                p = max(floor, flips / deltas.size)
        p_adj = bonferroni(p, n_comparisons)
        out.append(
            PairedTestResult(EVALUATED_CATEGORIES[k], metric, _opt(observed), p, p_adj, p_adj < alpha)
        )
    return sorted(out, key=lambda r: r.category.value)


def format_ci(est: CiEstimate) -> str:
    """``0.92 [0.90--0.93]``."""
    if not est.defined:
        raise ValidationError(f"undefined estimate for {est.category.value} {est.metric}")
    return f"{est.point:.2f} [{est.lower:.2f}--{est.upper:.2f}]"


def _num(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def write_ci_csv(estimates: Sequence[CiEstimate], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["category", "metric", "point", "lower", "upper", "formatted"])
        for e in estimates:
            w.writerow([e.category.value, e.metric, _num(e.point), _num(e.lower), _num(e.upper),
                        format_ci(e) if e.defined else ""])


def write_paired_csv(results: Sequence[PairedTestResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["category", "delta", "p_value", "p_adjusted", "significant"])
        for r in results:
            w.writerow([r.category.value, _num(r.delta), _num(r.p_value), _num(r.p_adjusted),
                        "true" if r.significant else "false"])
