"""``phibench`` command line.

Exit codes: 0 success, 2 input validation failure, 1 internal error.
Every command writes ``manifest.json`` next to its reports; report files
themselves carry no timestamps, so fixed inputs and seeds reproduce them
byte for byte.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import itertools
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Sequence

from phibench import __version__
from phibench.corpus import Corpus, apply_label_map, load_corpus, resolve_label_map, save_corpus
from phibench.errors import ValidationError

logger = logging.getLogger("phibench")


@dataclass
class RunManifest:
    command: str
    arguments: dict
    seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)  # path -> sha256
    tool_version: str = __version__
    timestamp: str = ""

    def write(self, out_dir: Path) -> None:
        self.timestamp = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
        (out_dir / "manifest.json").write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", "utf-8")


def sha256_file(path: str | Path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(path.rglob("*")):
            if p.is_file():
                h.update(p.relative_to(path).as_posix().encode())
                h.update(p.read_bytes())
        return h.hexdigest()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(args: argparse.Namespace, inputs: Sequence[str], seeds: dict | None = None) -> RunManifest:
    arguments = {k: v if isinstance(v, (int, float, bool, type(None))) else str(v)
                 for k, v in sorted(vars(args).items()) if k != "func"}
    arguments = {k: ([str(x) for x in v] if isinstance(v, list) else v) for k, v in arguments.items()}
    return RunManifest(args.command, arguments, seeds or {}, {str(p): sha256_file(p) for p in inputs})


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(path: str, label_map: str | None) -> Corpus:
    if label_map is None:
        return load_corpus(path)
    corpus = load_corpus(path, strict_labels=False)
    return apply_label_map(corpus, resolve_label_map(label_map))


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_eval(args: argparse.Namespace) -> int:
    from phibench import span_eval

    gold, pred = _load(args.gold, args.map), _load(args.pred, args.map)
    if args.level == "span":
        stats = span_eval.evaluate_spans(gold, pred, args.threshold)
    else:
        stats = span_eval.evaluate_tokens(gold, pred)
    out = _out_dir(args)
    span_eval.export_report(stats, out / "report.csv")
    precision, recall = span_eval.micro_average(stats)
    fmt = lambda x: "" if x is None else f"{x:.2f}"  # noqa: E731
    (out / "micro.csv").write_text(f"precision,recall\n{fmt(precision)},{fmt(recall)}\n", "utf-8")
    if args.json:
        _write_json(out / "report.json", {"categories": span_eval.stats_to_dict(stats),
                                          "micro": {"precision": precision, "recall": recall}})
    _manifest(args, [args.gold, args.pred]).write(out)
    print(f"micro precision={fmt(precision)} recall={fmt(recall)}")
    return 0


def cmd_bootstrap(args: argparse.Namespace) -> int:
    from phibench import stats

    cfg = stats.BootstrapConfig(resamples=args.resamples, seed=args.seed, ci_level=args.ci_level,
                                threshold=args.threshold, workers=args.threads)
    gold, pred_a = _load(args.gold, args.map), _load(args.pred_a, args.map)
    out = _out_dir(args)
    metrics = stats.METRICS if args.metric == "both" else (args.metric,)
    estimates = [e for m in metrics for e in stats.bootstrap_ci(gold, pred_a, m, cfg)]
    stats.write_ci_csv(estimates, out / "ci.csv")
    inputs = [args.gold, args.pred_a]
    payload: dict = {"ci": [dict(asdict(e), category=e.category.value) for e in estimates]}
    if args.pred_b:
        pred_b = _load(args.pred_b, args.map)
        results = stats.paired_bootstrap_test(gold, pred_a, pred_b, args.paired_metric, cfg)
        stats.write_paired_csv(results, out / "paired.csv")
        inputs.append(args.pred_b)
        payload["paired"] = [dict(asdict(r), category=r.category.value) for r in results]
        for r in results:
            if r.significant:
                print(f"{r.category.value}: delta={r.delta:+.2f} p_adj={r.p_adjusted:.4f} significant")
    if args.json:
        _write_json(out / "bootstrap.json", payload)
    _manifest(args, inputs, {"bootstrap": args.seed}).write(out)
    return 0


def cmd_diverge(args: argparse.Namespace) -> int:
    from phibench import divergence as dv

    if len(args.inputs) < 2:
        raise ValidationError("diverge needs at least two inputs")
    if args.metric == "ftd":
        sets = [dv.load_embeddings(p) for p in args.inputs]
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise ValidationError(f"dimension mismatch across embedding files: {sorted(dims)}")
    else:
        sets = [load_corpus(p, strict_labels=False) for p in args.inputs]
    rows = []
    payload = []
    for a, b in itertools.combinations(sets, 2):
        name_a = a.corpus_name if args.metric == "ftd" else a.name
        name_b = b.corpus_name if args.metric == "ftd" else b.name
        if args.metric == "ftd":
            result = dv.ftd_bootstrap(a, b, args.resamples, args.seed)
        else:
            result = dv.jsd_bootstrap(a, b, args.resamples, args.seed, mixture_only=args.mixture_only)
        pair = dv.pair_label(name_a, name_b)
        rows.extend(dv.divergence_rows(pair, result))
        payload.append({"pair": pair, **asdict(result)})
    out = _out_dir(args)
    dv.write_divergence_csv(rows, out / "divergence.csv")
    if args.json:
        _write_json(out / "divergence.json", payload)
    _manifest(args, args.inputs, {"bootstrap": args.seed}).write(out)
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    from phibench import sampler

    corpus = load_corpus(args.corpus, strict_labels=False)
    spec = sampler.load_strata_spec(args.spec) if args.spec else sampler.default_spec(corpus)
    state = sampler.sample_set_cover(corpus, spec, args.budget)
    out = _out_dir(args)
    sampler.write_selection(state, out / "selected.txt")
    rows = sampler.coverage_report(state)
    sampler.write_coverage_csv(rows, out / "coverage.csv")
    _write_json(out / "strata_spec.json", spec.to_json())
    inputs = [args.corpus] + ([args.spec] if args.spec else [])
    _manifest(args, inputs).write(out)
    print(f"selected {len(state.selected)} documents; {len(state.uncovered)} strata uncovered")
    return 0


def cmd_surrogate(args: argparse.Namespace) -> int:
    from phibench import surrogate

    key = surrogate.load_key(args.key)
    corpus = _load(args.corpus, args.map)
    out = _out_dir(args)
    docs, audit = [], []
    for doc in corpus:
        plan = surrogate.apply_surrogates(doc, key, args.reference_year)
        docs.append(plan.to_document(doc))
        audit.extend(plan.audit_records())
    save_corpus(docs, out / "surrogate.jsonl")
    with open(out / "audit.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for rec in audit:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    _manifest(args, [args.corpus, args.key]).write(out)
    return 0


def cmd_align(args: argparse.Namespace) -> int:
    from phibench import align

    notes = load_corpus(args.notes, strict_labels=False)
    responses = align.load_responses(args.responses)
    grounded, report = align.align_corpus(notes, responses, args.min_confidence)
    out = _out_dir(args)
    save_corpus(grounded, out / "grounded.jsonl")
    align.write_conll(grounded, out / "bio.conll", include_other=args.include_other)
    _write_json(out / "align_report.json", asdict(report))
    _manifest(args, [args.notes, args.responses]).write(out)
    return 0


def _decimal(text: str) -> Decimal:
    try:
        return Decimal(text)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def cmd_cost(args: argparse.Namespace) -> int:
    from phibench import cost

    base = cost.SHEETS[args.tier]
    sheet = cost.PriceSheet(
        args.price_in if args.price_in is not None else base.input_per_million,
        args.price_out if args.price_out is not None else base.output_per_million,
        args.chars_per_token,
    )
    est = cost.estimate_cost(args.output_tokens, sheet, input_chars=args.input_chars, input_tokens=args.input_tokens)
    lines = [
        ("input", est.input_tokens, sheet.input_per_million, est.input_cost),
        ("output", est.output_tokens, sheet.output_per_million, est.output_cost),
    ]
    for name, tokens, price, amount in lines:
        print(f"{name:<8}{cost.format_tokens(tokens):>10}  ${price}/1M  {cost.format_usd(amount):>14}")
    print(f"{'total':<8}{'':>10}  {'':>8}  {cost.format_usd(est.total):>14}")
    if args.out:
        out = _out_dir(args)
        with open(out / "cost.csv", "w", encoding="utf-8", newline="\n") as f:
            f.write("component,tokens,price_per_million,cost\n")
            for name, tokens, price, amount in lines:
                f.write(f"{name},{tokens},{price},{cost.to_cents(amount)}\n")
            f.write(f"total,,,{cost.to_cents(est.total)}\n")
        _manifest(args, []).write(out)
    return 0


def cmd_map_labels(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus, strict_labels=False)
    mapped = apply_label_map(corpus, resolve_label_map(args.map), drop_other=args.drop_other)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(mapped, out)
    _manifest(args, [args.corpus]).write(out.parent)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phibench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--json", action="store_true", help="also write a JSON mirror of the report")
        p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")

    p = sub.add_parser("eval", help="span- or token-level precision/recall")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--level", choices=("span", "token"), default="span")
    p.add_argument("--map", help="label map applied to both corpora: i2b2, aimi, identity or a JSON file")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bootstrap", help="bootstrap CIs and paired significance tests")
    p.add_argument("gold")
    p.add_argument("pred_a")
    p.add_argument("pred_b", nargs="?")
    p.add_argument("--resamples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--metric", choices=("precision", "recall", "both"), default="both")
    p.add_argument("--paired-metric", choices=("precision", "recall"), default="recall")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--map")
    common(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("diverge", help="FTD or JSD between every pair of inputs")
    p.add_argument("inputs", nargs="+", help="embedding files (ftd) or corpora (jsd)")
    p.add_argument("--metric", choices=("ftd", "jsd"), required=True)
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--mixture-only", action="store_true",
                   help="weighted JSD: weight only the mixture, not the KL terms")
    common(p)
    p.set_defaults(func=cmd_diverge)

    p = sub.add_parser("sample", help="greedy set-cover diversity sample")
    p.add_argument("corpus")
    p.add_argument("--spec", help="strata spec JSON; default: age bands, categorical axes, length quintiles")
    p.add_argument("--budget", type=int)
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("surrogate", help="surrogate replacement for release")
    p.add_argument("corpus")
    p.add_argument("--key", required=True)
    p.add_argument("--reference-year", type=int, help="year used to shift dates written without one")
    p.add_argument("--map")
    common(p)
    p.set_defaults(func=cmd_surrogate)

    p = sub.add_parser("align", help="ground LLM responses into spans and BIO tags")
    p.add_argument("notes")
    p.add_argument("responses", help="JSONL of {doc_id, response} or a directory of per-note files")
    p.add_argument("--min-confidence", type=float, default=0.0)
    p.add_argument("--include-other", action="store_true")
    common(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("cost", help="LLM API cost estimate")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input-chars", type=_decimal)
    src.add_argument("--input-tokens", type=_decimal)
    p.add_argument("--output-tokens", type=_decimal, required=True)
    p.add_argument("--tier", choices=sorted(("flex", "standard", "priority")), default="flex")
    p.add_argument("--price-in", type=_decimal)
    p.add_argument("--price-out", type=_decimal)
    p.add_argument("--chars-per-token", type=_decimal, default=Decimal(4))
    common(p, out_required=False)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("map-labels", help="map a source corpus onto the unified taxonomy")
    p.add_argument("corpus")
    p.add_argument("--map", required=True)
    p.add_argument("--drop-other", action="store_true")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_map_labels)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, OSError, UnicodeDecodeError) as exc:
        print(f"phibench {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal error", exc_info=True)
        print(f"phibench {args.command}: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
