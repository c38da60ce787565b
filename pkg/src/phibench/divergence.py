"""Corpus divergence: Frechet text distance over document embeddings and
Jensen-Shannon divergence over whitespace unigrams.

Both come with bootstrap means and percentile intervals. Reported point
values are the bootstrap means; full-data values are kept for diagnostics.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from phibench.corpus import Corpus, whitespace_tokens
from phibench.errors import ValidationError

LN2 = math.log(2.0)
EMB_MAGIC = b"EMB1"


# ---------------------------------------------------------------------------
# embeddings


@dataclass(frozen=True)
class EmbeddingSet:
    corpus_name: str
    vectors: np.ndarray
    doc_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[1] < 1:
            raise ValidationError("embedding matrix must be 2-D with dim >= 1")
        if len(self.doc_ids) != vecs.shape[0]:
            raise ValidationError("doc_ids do not align with embedding rows")
        if not np.all(np.isfinite(vecs)):
            raise ValidationError(f"non-finite values in embeddings of {self.corpus_name}")
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


def load_embeddings(path: str | Path, name: str | None = None) -> EmbeddingSet:
    """Read ``.jsonl`` (``{"doc_id", "vector"}`` per line) or the EMB1 binary."""
    path = Path(path)
    name = name or path.stem
    with path.open("rb") as f:
        head = f.read(4)
    if head == EMB_MAGIC:
        return _load_emb_binary(path, name)
    ids, rows = [], []
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ids.append(str(rec["doc_id"]))
                rows.append([float(x) for x in rec["vector"]])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad embedding record ({exc})") from None
    if not rows:
        raise ValidationError(f"{path}: no embeddings")
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: inconsistent vector dimensions")
    return EmbeddingSet(name, np.array(rows), tuple(ids))


def _load_emb_binary(path: Path, name: str) -> EmbeddingSet:
    data = path.read_bytes()
    try:
        _, dim, count = struct.unpack_from("<4sII", data, 0)
        off = 12
        ids, rows = [], np.empty((count, dim), dtype=np.float64)
        for i in range(count):
            (id_len,) = struct.unpack_from("<H", data, off)
            off += 2
            ids.append(data[off : off + id_len].decode("utf-8"))
            off += id_len
            rows[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
            off += 4 * dim
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise ValidationError(f"{path}: truncated or corrupt EMB1 file ({exc})") from None
    if off != len(data):
        raise ValidationError(f"{path}: {len(data) - off} trailing bytes after {count} records")
    return EmbeddingSet(name, rows, tuple(ids))


def save_embeddings(emb: EmbeddingSet, path: str | Path, binary: bool = False) -> None:
    if binary:
        with open(path, "wb") as f:
            f.write(struct.pack("<4sII", EMB_MAGIC, emb.dim, len(emb)))
            for doc_id, row in zip(emb.doc_ids, emb.vectors):
                raw = doc_id.encode("utf-8")
                f.write(struct.pack("<H", len(raw)))
                f.write(raw)
                f.write(row.astype("<f4").tobytes())
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc_id, row in zip(emb.doc_ids, emb.vectors):
            f.write(json.dumps({"doc_id": doc_id, "vector": row.tolist()}) + "\n")


# ---------------------------------------------------------------------------
# Frechet text distance


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_gaussian(emb: EmbeddingSet | np.ndarray) -> GaussianSummary:
    """Column means and unbiased (n-1) covariance, symmetrised."""
    x = emb.vectors if isinstance(emb, EmbeddingSet) else np.asarray(emb, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValidationError("need at least 2 embeddings to fit a Gaussian")
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite embedding values")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    return GaussianSummary(mean, (cov + cov.T) / 2.0)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class FtdComponents:
    total: float
    mean_shift: float
    cov_divergence: float


def ftd(a: GaussianSummary, b: GaussianSummary) -> FtdComponents:
    """Frechet distance split into mean shift and covariance divergence.

    tr((Sa Sb)^1/2) is taken from the eigenvalues of the symmetric
    conjugate Sa^1/2 Sb Sa^1/2, which has the same spectrum.
    """
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    mean_shift = float(diff @ diff)
    try:
        root_a = _psd_sqrt(a.covariance)
        inner = root_a @ b.covariance @ root_a
        eig = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"eigendecomposition failed: {exc}") from None
    tr_sqrt = float(np.sqrt(np.clip(eig, 0.0, None)).sum())
    cov_div = float(np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * tr_sqrt)
    return FtdComponents(mean_shift + cov_div, mean_shift, cov_div)


@dataclass(frozen=True)
class Interval:
    """Bootstrap mean with percentile bounds."""

    mean: float
    lower: float
    upper: float


def _summarise(samples: np.ndarray, ci_level: float = 0.95) -> Interval:
    tail = (1.0 - ci_level) / 2.0 * 100.0
    return Interval(
        float(samples.mean()),
        float(np.percentile(samples, tail)),
        float(np.percentile(samples, 100.0 - tail)),
    )


@dataclass(frozen=True)
class FtdResult:
    full: FtdComponents
    total: Interval
    mean_shift: Interval
    cov_divergence: Interval
    resamples: int


def _rng(seed: int, iteration: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, iteration, stream])


def ftd_bootstrap(a: EmbeddingSet, b: EmbeddingSet, resamples: int = 1000, seed: int = 42,
                  ci_level: float = 0.95) -> FtdResult:
    """Resample each corpus to its own size with replacement and refit."""
    if resamples < 1:
        raise ValidationError("resamples must be >= 1")
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")
    full = ftd(fit_gaussian(a), fit_gaussian(b))
    draws = np.empty((resamples, 3))
    na, nb = len(a), len(b)
    for i in range(resamples):
        ia = _rng(seed, i, 0).integers(0, na, size=na)
        ib = _rng(seed, i, 1).integers(0, nb, size=nb)
        r = ftd(fit_gaussian(a.vectors[ia]), fit_gaussian(b.vectors[ib]))
        draws[i] = (r.total, r.mean_shift, r.cov_divergence)
    return FtdResult(
        full,
        _summarise(draws[:, 0], ci_level),
        _summarise(draws[:, 1], ci_level),
        _summarise(draws[:, 2], ci_level),
        resamples,
    )


# ---------------------------------------------------------------------------
# Jensen-Shannon divergence


@dataclass(frozen=True)
class UnigramDist:
    counts: Mapping[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def probabilities(self) -> dict[str, float]:
        t = self.total
        return {w: c / t for w, c in self.counts.items()}


def unigram_dist(corpus: Corpus | Iterable[str]) -> UnigramDist:
    """Raw whitespace unigrams: case kept, punctuation attached."""
    texts = [d.text for d in corpus] if isinstance(corpus, Corpus) else list(corpus)
    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(tok for tok, _, _ in whitespace_tokens(text))
    if not counts:
        raise ValidationError("corpus has no tokens")
    return UnigramDist(dict(counts))


def _kl(p: np.ndarray, m: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / m[mask])))


def jsd_vectors(p: np.ndarray, q: np.ndarray, weights: tuple[float, float] | None = None,
                mixture_only: bool = False) -> float:
    """JSD between two count (or probability) vectors over a shared vocabulary.

    With ``weights`` the mixture is ``wa*P + wb*Q`` and, unless
    ``mixture_only``, the KL terms are weighted the same way, which keeps the
    result in ``[0, ln 2]``.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    sp, sq = p.sum(), q.sum()
    if sp <= 0 or sq <= 0:
        raise ValidationError("JSD needs two distributions with positive mass")
    p, q = p / sp, q / sq
    if weights is None:
        wa = wb = 0.5
    else:
        wa, wb = weights
        if wa <= 0 or wb <= 0 or abs(wa + wb - 1.0) > 1e-9:
            raise ValidationError(f"weights must be positive and sum to 1, got {weights}")
    m = wa * p + wb * q
    ka, kb = (0.5, 0.5) if mixture_only else (wa, wb)
    value = ka * _kl(p, m) + kb * _kl(q, m)
    if -1e-12 < value < 0.0:
        value = 0.0
    elif LN2 < value < LN2 + 1e-12:
        value = LN2
    return value


def _aligned(p: UnigramDist, q: UnigramDist) -> tuple[np.ndarray, np.ndarray]:
    vocab = sorted(set(p.counts) | set(q.counts))
    return (
        np.array([p.counts.get(w, 0) for w in vocab], dtype=np.float64),
        np.array([q.counts.get(w, 0) for w in vocab], dtype=np.float64),
    )


def jsd(p: UnigramDist, q: UnigramDist, weights: tuple[float, float] | None = None,
        mixture_only: bool = False) -> float:
    if p.total <= 0 or q.total <= 0:
        raise ValidationError("JSD needs non-empty distributions")
    pv, qv = _aligned(p, q)
    return jsd_vectors(pv, qv, weights, mixture_only)


def size_weights(total_a: float, total_b: float) -> tuple[float, float]:
    s = total_a + total_b
    return total_a / s, total_b / s


@dataclass(frozen=True)
class JsdResult:
    full_standard: float
    full_weighted: float
    standard: Interval
    weighted: Interval
    resamples: int


def _doc_term(corpus: Corpus, index: dict[str, int]) -> sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for r, doc in enumerate(corpus):
        c = Counter(tok for tok, _, _ in whitespace_tokens(doc.text))
        for tok, n in c.items():
            rows.append(r)
            cols.append(index[tok])
            vals.append(n)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(corpus), len(index)), dtype=np.float64)


def jsd_bootstrap(a: Corpus, b: Corpus, resamples: int = 1000, seed: int = 42, ci_level: float = 0.95,
                  mixture_only: bool = False) -> JsdResult:
    """Document-level resampling of both corpora; weights follow token totals."""
    if resamples < 1:
        raise ValidationError("resamples must be >= 1")
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("JSD bootstrap needs non-empty corpora")
    ua, ub = unigram_dist(a), unigram_dist(b)
    vocab = sorted(set(ua.counts) | set(ub.counts))
    index = {w: i for i, w in enumerate(vocab)}
    xa, xb = _doc_term(a, index), _doc_term(b, index)
    pa, pb = np.asarray(xa.sum(axis=0)).ravel(), np.asarray(xb.sum(axis=0)).ravel()
    full_std = jsd_vectors(pa, pb)
    full_w = jsd_vectors(pa, pb, size_weights(pa.sum(), pb.sum()), mixture_only)

    na, nb = len(a), len(b)
    std = np.empty(resamples)
    wtd = np.empty(resamples)
    for i in range(resamples):
        wa = np.bincount(_rng(seed, i, 0).integers(0, na, size=na), minlength=na)
        wb = np.bincount(_rng(seed, i, 1).integers(0, nb, size=nb), minlength=nb)
        va = xa.T @ wa
        vb = xb.T @ wb
        if va.sum() <= 0 or vb.sum() <= 0:
            raise ValidationError("resample drew only empty documents; corpora too sparse to bootstrap")
        std[i] = jsd_vectors(va, vb)
        wtd[i] = jsd_vectors(va, vb, size_weights(va.sum(), vb.sum()), mixture_only)
    return JsdResult(full_std, full_w, _summarise(std, ci_level), _summarise(wtd, ci_level), resamples)


# ---------------------------------------------------------------------------
# report


def pair_label(a: str, b: str) -> str:
    return f"{a} vs {b}"


def divergence_rows(pair: str, result: FtdResult | JsdResult) -> list[list[str]]:
    if isinstance(result, FtdResult):
        items = [
            ("ftd", result.total, result.full.total),
            ("mean_shift", result.mean_shift, result.full.mean_shift),
            ("cov_divergence", result.cov_divergence, result.full.cov_divergence),
        ]
    else:
        items = [
            ("jsd", result.standard, result.full_standard),
            ("jsd_weighted", result.weighted, result.full_weighted),
        ]
    return [
        [pair, name, f"{iv.mean:.6f}", f"{iv.lower:.6f}", f"{iv.upper:.6f}", f"{full:.6f}"]
        for name, iv, full in items
    ]


def write_divergence_csv(rows: Sequence[Sequence[str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["pair", "metric", "bootstrap_mean", "lower", "upper", "full_data"])
        w.writerows(rows)
