"""Command line interface.

Subcommands: ingest, train, infer, export-vectors, baseline, eval.
Option values resolve as CLI flag > config file > built-in default; the
config file is flat ``key = value`` lines with ``#`` comments, keys named
after the long flags.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

from . import baselines, corpus, models, training
from .codes import read_codes, read_vectors, write_codes, write_vectors
from .evaluate import (
    CodeIndex,
    RelevanceJudge,
    evaluate as run_evaluate,
    format_eval_report,
    write_eval_report,
    write_pr_csv,
)
from .errors import (
    BpvError,
    ConfigError,
    DataError,
    IdMismatch,
    IncompatibleModel,
    NumericError,
    UsageError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_MODEL_NAMES = {
    "binary-pvdbow": models.BINARY_PVDBOW,
    "binary-pvdm": models.BINARY_PVDM,
    "real-binary": models.REAL_BINARY_PVDBOW,
    "plain-pvdbow": models.PLAIN_PVDBOW,
}

_JUDGE_NAMES = {
    "newsgroup": "same-label",
    "overlap": "label-overlap-fraction",
    "shared": "shared-any-label",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # map argparse usage errors to exit 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass(frozen=True)
class Opt:
    flag: str
    kind: Callable | None  # None marks a boolean flag
    default: object = None
    required: bool = False
    choices: tuple | None = None
    help: str = ""

    @property
    def key(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")


def _add_opts(parser: argparse.ArgumentParser, opts: Sequence[Opt]) -> None:
    parser.add_argument("--config", default=None, help="flat key=value config file")
    for o in opts:
        if o.kind is None:
            parser.add_argument(o.flag, action="store_true", default=None, help=o.help)
        else:
            parser.add_argument(
                o.flag,
                type=o.kind,
                default=None,
                choices=o.choices,
                help=o.help,
            )


def _read_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    return values


def _coerce(raw: str, o: Opt) -> object:
    if o.kind is None:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config key {o.key}: boolean expected, got {raw!r}")
    try:
        value = o.kind(raw)
    except ValueError as exc:
        raise UsageError(f"config key {o.key}: {exc}") from exc
    if o.choices is not None and value not in o.choices:
        raise UsageError(f"config key {o.key}: must be one of {o.choices}")
    return value


def _resolve(args: argparse.Namespace, opts: Sequence[Opt]) -> argparse.Namespace:
    config = _read_config(args.config) if args.config else {}
    known = {o.key for o in opts}
    for key in config:
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
    for o in opts:
        value = getattr(args, o.key)
        if value is None and o.key in config:
            value = _coerce(config[o.key], o)
        if value is None:
            value = o.default
        if value is None and o.required:
            raise UsageError(f"missing required option {o.flag}")
        setattr(args, o.key, value)
    if getattr(args, "deterministic", False) and getattr(args, "workers", 1) != 1:
        print("deterministic mode forces --workers 1", file=sys.stderr)
        args.workers = 1
    return args


def _train_config(args: argparse.Namespace, epochs_key: str = "epochs") -> training.TrainConfig:
    return training.TrainConfig(
        epochs=getattr(args, epochs_key),
        learning_rate=args.lr,
        adagrad_epsilon=getattr(args, "adagrad_eps", 1e-8),
        dropout=getattr(args, "dropout", 0.0),
        negative_samples=args.neg,
        context_window=getattr(args, "window", 1),
        proposal_power=getattr(args, "proposal_power", 0.75),
        seed=args.seed,
        workers=args.workers,
    )


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

_INGEST_OPTS = (
    Opt("--format", str, required=True, choices=("jsonl", "20ng-dir", "rcv1"),
        help="input layout"),
    Opt("--source", str, required=True,
        help="input path (rcv1: comma-separated token files)"),
    Opt("--source-test", str, help="second jsonl file holding a reference test split"),
    Opt("--qrels", str, help="rcv1 topic assignments: '<topic> <doc-id> 1' lines"),
    Opt("--out", str, required=True, help="output prefix"),
    Opt("--bigrams", None, default=False, help="add bigram terms"),
    Opt("--min-count", int, default=1, help="frequency threshold for vocabulary terms"),
    Opt("--test-fraction", float, help="fraction held out for test (random splits)"),
    Opt("--min-label-docs", int, default=0,
        help="drop test labels carried by fewer documents, then unlabeled docs"),
    Opt("--seed", int, default=0),
)


def cmd_ingest(args: argparse.Namespace) -> int:
    if args.format == "20ng-dir":
        train_raw, test_raw = corpus.load_newsgroup_dirs(args.source)
    elif args.format == "rcv1":
        paths = [p for p in args.source.split(",") if p]
        train_raw = corpus.load_tokenized_collection(paths, args.qrels)
        test_raw = None
    else:
        train_raw = corpus.load_jsonl(args.source)
        test_raw = corpus.load_jsonl(args.source_test) if args.source_test else None
    if test_raw is None:
        if args.test_fraction is None:
            raise UsageError(
                "this input has no reference split; provide --test-fraction"
            )
        train_raw, test_raw = corpus.split_fraction(
            train_raw, args.test_fraction, args.seed
        )
    if args.min_label_docs > 0:
        before = len(test_raw)
        test_raw = corpus.filter_test_labels(test_raw, args.min_label_docs)
        print(f"label filter kept {len(test_raw)} of {before} test documents")

    vocab = corpus.build_vocabulary(
        (corpus.tokenize(doc.text) for doc in train_raw),
        min_count=args.min_count,
        include_bigrams=args.bigrams,
    )
    encoded_train, dropped = corpus.encode_documents(train_raw, vocab)
    kept_ids = {doc.doc_id for doc in encoded_train}
    train_out = [doc for doc in train_raw if doc.doc_id in kept_ids]

    vocab.save(f"{args.out}.vocab")
    corpus.write_jsonl(f"{args.out}.train.jsonl", train_out)
    corpus.write_jsonl(f"{args.out}.test.jsonl", test_raw)
    labels = {lab for doc in test_raw for lab in doc.labels}
    print(f"vocabulary terms {vocab.size}")
    print(f"train documents {len(train_out)} (dropped empty {len(dropped)})")
    print(f"test documents {len(test_raw)}")
    print(f"test labels {len(labels)}")
    print(f"wrote {args.out}.vocab, {args.out}.train.jsonl, {args.out}.test.jsonl")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_TRAIN_OPTS = (
    Opt("--corpus", str, required=True, help="training documents (jsonl)"),
    Opt("--vocab", str, required=True, help="vocabulary file"),
    Opt("--model", str, default="binary-pvdbow",
        choices=tuple(_MODEL_NAMES), help="model variant"),
    Opt("--bits", int, default=128, help="code width"),
    Opt("--dim", int, help="document embedding width (real-binary, plain-pvdbow)"),
    Opt("--window", int, default=1, help="one-sided context width (binary-pvdm)"),
    Opt("--epochs", int, default=10),
    Opt("--lr", float, default=0.1),
    Opt("--dropout", float, default=0.1),
    Opt("--neg", int, default=64, help="negative samples; 0 selects the full softmax"),
    Opt("--adagrad-eps", float, default=1e-8),
    Opt("--proposal-power", float, default=0.75),
    Opt("--seed", int, default=0),
    Opt("--workers", int, default=1),
    Opt("--deterministic", None, default=False,
        help="single worker, zeroed wall times in reports"),
    Opt("--model-out", str, required=True),
    Opt("--report", str, help="write per-epoch JSONL stats here"),
    Opt("--checkpoint-dir", str, help="write a container per epoch"),
)


def cmd_train(args: argparse.Namespace) -> int:
    vocab = corpus.Vocabulary.load(args.vocab)
    raw = corpus.load_jsonl(args.corpus)
    docs, dropped = corpus.encode_documents(raw, vocab)
    if dropped:
        print(f"dropped {len(dropped)} empty documents")
    kind = _MODEL_NAMES[args.model]
    if kind == models.BINARY_PVDM and vocab.include_bigrams:
        raise ConfigError("binary-pvdm does not support bigram vocabularies")
    dim = args.dim
    if kind == models.REAL_BINARY_PVDBOW and dim is None:
        dim = 300
    config = _train_config(args)
    checkpoint = None
    if args.checkpoint_dir:
        os.makedirs(args.checkpoint_dir, exist_ok=True)

        def checkpoint(params: models.ModelParams, st: training.EpochStats) -> None:
            models.save_model(
                os.path.join(args.checkpoint_dir, f"epoch{st.epoch:03d}.bpv1"), params
            )

    params, stats = training.train(
        docs,
        vocab,
        kind,
        code_bits=args.bits,
        dim=dim,
        config=config,
        checkpoint=checkpoint,
    )
    models.save_model(args.model_out, params)
    if args.report:
        training.write_train_report(args.report, stats, zero_seconds=args.deterministic)
    for st in stats:
        secs = 0.0 if args.deterministic else st.seconds
        print(f"epoch {st.epoch} mean_loss {st.mean_loss:.6f} seconds {secs:.2f}")
    print(f"wrote {args.model_out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# infer and export-vectors
# ---------------------------------------------------------------------------

_INFER_OPTS = (
    Opt("--model", str, required=True),
    Opt("--corpus", str, required=True, help="documents to infer (jsonl)"),
    Opt("--codes-out", str, help="write packed codes here"),
    Opt("--vectors-out", str, help="write real vectors here"),
    Opt("--epochs", int, default=10, help="inference epochs per document"),
    Opt("--lr", float, default=0.1),
    Opt("--neg", int, default=64),
    Opt("--adagrad-eps", float, default=1e-8),
    Opt("--proposal-power", float, default=0.75),
    Opt("--seed", int, default=0),
    Opt("--workers", int, default=1),
    Opt("--deterministic", None, default=False),
)


def _load_trainable(path: str) -> models.ModelParams:
    params = models.load_model(path)
    if not isinstance(params, models.ModelParams):
        raise IncompatibleModel(f"{path}: not a trainable model container")
    return params


def _run_inference(args: argparse.Namespace) -> tuple[training.InferenceResult, models.ModelParams]:
    params = _load_trainable(args.model)
    raw = corpus.load_jsonl(args.corpus)
    docs = [corpus.encode_document(r, params.vocabulary) for r in raw]
    config = _train_config(args)
    result = training.infer_codes(params, docs, config)
    if result.empty_ids:
        shown = ", ".join(result.empty_ids[:5])
        more = "" if len(result.empty_ids) <= 5 else ", ..."
        print(
            f"flagged {len(result.empty_ids)} documents with no usable terms "
            f"({shown}{more})"
        )
    return result, params


def cmd_infer(args: argparse.Namespace) -> int:
    if not args.codes_out and not args.vectors_out:
        raise UsageError("provide --codes-out and/or --vectors-out")
    result, params = _run_inference(args)
    if args.codes_out:
        if result.code_words is None:
            raise IncompatibleModel(
                f"model kind {params.kind!r} produces no binary codes; "
                "use --vectors-out"
            )
        write_codes(args.codes_out, result.doc_ids, result.code_words, result.code_width)
        print(f"wrote {len(result.doc_ids)} codes of {result.code_width} bits to {args.codes_out}")
    if args.vectors_out:
        write_vectors(args.vectors_out, result.doc_ids, result.vectors)
        print(f"wrote {len(result.doc_ids)} vectors to {args.vectors_out}")
    return EXIT_OK


_EXPORT_OPTS = tuple(o for o in _INFER_OPTS if o.flag != "--codes-out")


def cmd_export_vectors(args: argparse.Namespace) -> int:
    if not args.vectors_out:
        raise UsageError("missing required option --vectors-out")
    result, _ = _run_inference(args)
    write_vectors(args.vectors_out, result.doc_ids, result.vectors)
    print(f"wrote {len(result.doc_ids)} vectors to {args.vectors_out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# baseline
# ---------------------------------------------------------------------------

_BASELINE_OPTS = (
    Opt("--method", str, required=True, choices=("rhp", "itq")),
    Opt("--vectors", str, required=True, help="vectors to hash (BPV-VECS file)"),
    Opt("--fit-vectors", str,
        help="vectors to fit ITQ on (defaults to --vectors)"),
    Opt("--bits", int, required=True),
    Opt("--itq-iterations", int, default=50),
    Opt("--seed", int, default=0),
    Opt("--codes-out", str, required=True),
    Opt("--model-out", str, help="save the fitted hasher"),
)


def cmd_baseline(args: argparse.Namespace) -> int:
    ids, vecs = read_vectors(args.vectors)
    if args.method == "rhp":
        hasher = baselines.RandomHyperplaneHasher.create(
            vecs.shape[1], args.bits, args.seed
        )
    else:
        fit_vecs = vecs
        if args.fit_vectors:
            _, fit_vecs = read_vectors(args.fit_vectors)
        hasher = baselines.itq_fit(fit_vecs, args.bits, args.itq_iterations)
    code_words = hasher.hash(vecs)
    write_codes(args.codes_out, ids, code_words, args.bits)
    if args.model_out:
        baselines.save_baseline(args.model_out, hasher)
        print(f"wrote {args.model_out}")
    print(f"wrote {len(ids)} codes of {args.bits} bits to {args.codes_out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

_EVAL_OPTS = (
    Opt("--codes", str, help="codes file (hamming and filter-rerank modes)"),
    Opt("--vectors", str, help="vectors file (cosine and filter-rerank modes)"),
    Opt("--labels", str, required=True, help="jsonl documents carrying labels"),
    Opt("--mode", str, default="hamming",
        choices=("hamming", "cosine", "filter-rerank")),
    Opt("--radius", int, help="Hamming radius for filter-rerank"),
    Opt("--judge", str, default="newsgroup", choices=tuple(_JUDGE_NAMES)),
    Opt("--overlap-denominator", str, default="union", choices=("union", "query")),
    Opt("--ndcg-k", int, default=10),
    Opt("--max-queries", int, help="evaluate only the first N queries by id"),
    Opt("--report", str, help="write the flat text report here"),
    Opt("--pr-csv", str, help="write recall,precision points here"),
)


def cmd_eval(args: argparse.Namespace) -> int:
    if args.mode in ("hamming", "filter-rerank") and not args.codes:
        raise UsageError(f"--mode {args.mode} needs --codes")
    if args.mode in ("cosine", "filter-rerank") and not args.vectors:
        raise UsageError(f"--mode {args.mode} needs --vectors")
    if args.mode == "filter-rerank" and args.radius is None:
        raise UsageError("--mode filter-rerank needs --radius")

    ids = None
    code_words = width = None
    vectors = None
    if args.codes:
        ids, code_words, width = read_codes(args.codes)
    if args.vectors:
        vec_ids, vec_matrix = read_vectors(args.vectors)
        if ids is None:
            ids, vectors = vec_ids, vec_matrix
        else:
            if set(vec_ids) != set(ids):
                raise IdMismatch("codes and vectors hold different document ids")
            by_id = {doc_id: i for i, doc_id in enumerate(vec_ids)}
            vectors = vec_matrix[[by_id[doc_id] for doc_id in ids]]
    index = CodeIndex.build(
        ids, code_words=code_words, code_width=width, vectors=vectors
    )

    label_docs = corpus.load_jsonl(args.labels)
    known = {doc.doc_id for doc in label_docs}
    missing = [doc_id for doc_id in index.ids if doc_id not in known]
    if missing:
        raise IdMismatch(
            f"{len(missing)} indexed documents missing from {args.labels} "
            f"(first: {missing[0]!r})"
        )
    judge = RelevanceJudge.from_docs(
        label_docs, _JUDGE_NAMES[args.judge], args.overlap_denominator
    )
    queries = index.ids[: args.max_queries] if args.max_queries else None
    run = run_evaluate(
        index,
        judge,
        query_ids=queries,
        mode=args.mode,
        radius=args.radius,
        ndcg_k=args.ndcg_k,
    )
    text = format_eval_report(run)
    if args.report:
        write_eval_report(args.report, run)
    sys.stdout.write(text)
    if args.pr_csv:
        write_pr_csv(args.pr_csv, run)
    return EXIT_OK


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------

_COMMANDS = {
    "ingest": (cmd_ingest, _INGEST_OPTS, "tokenize, split, and encode a corpus"),
    "train": (cmd_train, _TRAIN_OPTS, "fit a model on a training corpus"),
    "infer": (cmd_infer, _INFER_OPTS, "infer codes for unseen documents"),
    "export-vectors": (cmd_export_vectors, _EXPORT_OPTS,
                       "infer and save real document vectors"),
    "baseline": (cmd_baseline, _BASELINE_OPTS, "hash vectors with rhp or itq"),
    "eval": (cmd_eval, _EVAL_OPTS, "score retrieval against labels"),
}


def build_parser() -> _Parser:
    parser = _Parser(prog="bpv", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, (fn, opts, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _add_opts(p, opts)
        p.set_defaults(func=fn, opts=opts)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = _resolve(args, args.opts)
        return args.func(args)
    except UsageError as exc:
        print(f"bpv {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"bpv {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, BpvError) as exc:
        print(f"bpv {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"bpv {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
