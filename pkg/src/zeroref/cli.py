"""Command-line entry points.

Subcommands: prep (synthetic corpus, stripping, stats), train (presets
or single-stage configs), predict (two-stage chaining or one-stage),
evaluate (coreference or empty-node metrics), ensemble (k-model
averaged prediction), zshot (excluded-language config generation).

Exit codes: 0 ok, 1 usage, 2 data error, 3 model error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import torch

from . import datasets as dataset_registry
from .checkpoint import CheckpointError, ensure_same_tokenizer, load_checkpoint
from .conllu import ConlluParseError, parse_conllu, serialize_conllu, strip_empty_nodes
from .coref_scoring import ALIGN_MODES, score
from .enode_scoring import format_enode_table, score_empty_node_documents
from .pipeline import ModelMismatchError, ensure_compatible, predict_document, run_two_stage
from .spantags import encode_spans
from .synthetic import write_corpus
from .training import (
    DataError,
    PRESETS,
    TrainConfig,
    run_experiment,
    train_coref,
    train_enode,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MODEL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _data_root(args) -> Path:
    root = args.data_root or os.environ.get("ZEROREF_DATA_ROOT")
    if not root:
        raise DataError(
            "no data root given: pass --data-root or set ZEROREF_DATA_ROOT"
        )
    return Path(root)


def _check_device(name: str) -> None:
    if name != "cpu" and not torch.cuda.is_available():
        raise CheckpointError(f"device {name!r} is not available")


def _read_documents(path: str, dataset_id: str = ""):
    try:
        return parse_conllu(Path(path).read_text(), dataset_id)
    except FileNotFoundError:
        raise DataError(f"input file not found: {path}")
    except ConlluParseError as error:
        raise DataError(f"{path}: {error}")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_prep(args) -> int:
    if args.make_synthetic:
        root = _data_root(args)
        written = write_corpus(root, n_train=args.n_train, n_dev=args.n_dev,
                               seed=args.seed)
        print(f"wrote {len(written)} corpus files under {root}")
        return EXIT_OK
    if args.strip:
        docs = _read_documents(args.strip, args.dataset)
        stripped = []
        n_targets = 0
        for doc in docs:
            result = strip_empty_nodes(doc)
            stripped.append(result.document)
            n_targets += len(result.targets)
        Path(args.output).write_text(serialize_conllu(stripped))
        print(f"stripped {n_targets} empty nodes from {len(docs)} documents")
        return EXIT_OK
    if args.stats:
        docs = _read_documents(args.stats, args.dataset)
        totals = {"documents": len(docs), "sentences": 0, "tokens": 0,
                  "empty_nodes": 0, "entities": 0, "mentions": 0,
                  "unencodable_spans": 0}
        for doc in docs:
            totals["sentences"] += len(doc.sentences)
            totals["tokens"] += len(doc.tokens())
            totals["empty_nodes"] += sum(t.is_empty for t in doc.tokens())
            totals["entities"] += len(doc.entities)
            totals["mentions"] += sum(len(e.mentions) for e in doc.entities)
            offsets = doc.token_offsets()
            for si, sent in enumerate(doc.sentences):
                base = offsets[si]
                n = len(sent.tokens)
                spans = set()
                for ent in doc.entities:
                    for m in ent.mentions:
                        if base <= m.start and m.end < base + n:
                            spans.add((m.start - base + 1, m.end - base + 1))
                _, report = encode_spans(n, spans)
                totals["unencodable_spans"] += len(report.dropped)
        for key, value in totals.items():
            print(f"{key}\t{value}")
        return EXIT_OK
    raise SystemExit(EXIT_USAGE)


def cmd_train(args) -> int:
    root = _data_root(args)
    run_dir = Path(args.run_dir)
    if args.preset:
        scores = run_experiment(args.preset, root, run_dir, seed=args.seed)
        for dataset_id, value in scores.items():
            print(f"{dataset_id}\t{value:.2f}")
        if scores:
            print(f"avg\t{sum(scores.values()) / len(scores):.2f}")
        return EXIT_OK
    if not args.config:
        raise DataError("train needs --preset or --stage with --config")
    config = TrainConfig.from_dict(json.loads(Path(args.config).read_text()))
    if args.stage:
        config.stage = args.stage
    if args.seed is not None:
        config.seed = args.seed
    if args.max_len is not None:
        config.max_len = args.max_len
    if config.stage == "enode":
        path = train_enode(config, root, run_dir)
    else:
        path = train_coref(config, root, run_dir)
    print(f"checkpoint written to {path}")
    return EXIT_OK


def _load_coref_checkpoints(paths: list[str]):
    loaded = [load_checkpoint(p) for p in paths]
    ensure_same_tokenizer([config for _, _, config in loaded])
    models = [model for model, _, _ in loaded]
    ensure_compatible(models)
    return models, loaded[0][1]


def _predict(args, checkpoint_paths: list[str]) -> int:
    _check_device(args.device)
    models, tokenizer = _load_coref_checkpoints(checkpoint_paths)
    enode_model = enode_tokenizer = None
    if args.enode_ckpt:
        enode_model, enode_tokenizer, enode_config = load_checkpoint(args.enode_ckpt)
        if enode_config["variant"] != "enode":
            raise CheckpointError(
                f"--enode-ckpt has variant {enode_config['variant']!r}"
            )
        if models[0].variant == "one_stage":
            raise CheckpointError(
                "one-stage checkpoints predict empty nodes themselves; "
                "--enode-ckpt does not apply"
            )
    docs = _read_documents(args.input, args.dataset)
    max_len = args.max_len or dataset_registry.infer_max_len(args.dataset)
    if models[0].variant == "coref" and enode_model is not None:
        out = run_two_stage(enode_model, models, docs, tokenizer,
                            enode_tokenizer, args.threshold, max_len,
                            args.lookahead)
    else:
        out = [predict_document(models, doc, tokenizer, max_len,
                                args.lookahead) for doc in docs]
    Path(args.output).write_text(serialize_conllu(out))
    print(f"wrote {len(out)} documents to {args.output}")
    return EXIT_OK


def cmd_predict(args) -> int:
    return _predict(args, [args.coref_ckpt])


def cmd_ensemble(args) -> int:
    return _predict(args, args.ckpt)


def cmd_evaluate(args) -> int:
    gold = _read_documents(args.gold, args.dataset)
    pred = _read_documents(args.pred, args.dataset)
    if args.enode:
        stats = score_empty_node_documents(gold, pred)
        print(format_enode_table({args.dataset or "all": stats}), end="")
        return EXIT_OK
    report = score(gold, pred, mode=args.mode,
                   with_singletons=not args.without_singletons)
    print("metric\tprecision\trecall\tf1")
    for name, prf in (("muc", report.muc), ("b_cubed", report.b_cubed),
                      ("ceaf_e", report.ceaf_e)):
        print(f"{name}\t{prf.precision:.2f}\t{prf.recall:.2f}\t{prf.f1:.2f}")
    print(f"conll\t\t\t{report.conll:.2f}")
    return EXIT_OK


def cmd_zshot(args) -> int:
    if args.preset not in PRESETS:
        raise DataError(
            f"unknown preset {args.preset!r}; available: "
            + ", ".join(sorted(PRESETS))
        )
    preset = PRESETS[args.preset]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for stage_name, config in (("enode", preset.enode), ("coref", preset.coref)):
        if config is None:
            continue
        excluded = dataclasses.replace(config)
        excluded.excluded_languages = list(config.excluded_languages)
        if args.language not in excluded.excluded_languages:
            excluded.excluded_languages.append(args.language)
        from .training import apply_exclusions

        remaining = apply_exclusions(excluded)  # errors if nothing is left
        path = out_dir / f"zshot-{args.language}-{excluded.stage}.json"
        path.write_text(excluded.to_json())
        written.append((path, len(config.datasets) - len(remaining)))
    for path, removed in written:
        print(f"{path}\tremoved {removed} datasets")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="zeroref", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--data-root", help="dataset root (or ZEROREF_DATA_ROOT)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--max-len", type=int, default=None)
        p.add_argument("--device", default="cpu")
        p.add_argument("--threshold", type=float, default=0.5,
                       help="empty-node existence threshold")
        p.add_argument("--lookahead", type=int, default=50)
        p.add_argument("--dataset", default="",
                       help="dataset id of the processed file")

    prep = sub.add_parser("prep", help="corpus preparation and statistics")
    common(prep)
    prep.add_argument("--make-synthetic", action="store_true",
                      help="generate the bundled synthetic corpus")
    prep.add_argument("--n-train", type=int, default=24)
    prep.add_argument("--n-dev", type=int, default=8)
    prep.add_argument("--strip", metavar="IN",
                      help="remove empty nodes from a CoNLL-U file")
    prep.add_argument("--stats", metavar="IN",
                      help="print corpus statistics for a CoNLL-U file")
    prep.add_argument("--output", help="output file for --strip")
    prep.set_defaults(func=cmd_prep)

    train = sub.add_parser("train", help="train a stage or run a preset")
    common(train)
    train.add_argument("--stage", choices=["enode", "coref", "one_stage"])
    train.add_argument("--config", help="TrainConfig JSON file")
    train.add_argument("--preset", help="experiment preset "
                       f"({', '.join(sorted(PRESETS))})")
    train.add_argument("--run-dir", required=True)
    train.set_defaults(func=cmd_train)

    predict = sub.add_parser("predict", help="annotate a CoNLL-U file")
    common(predict)
    predict.add_argument("--coref-ckpt", required=True)
    predict.add_argument("--enode-ckpt")
    predict.add_argument("--input", required=True)
    predict.add_argument("--output", required=True)
    predict.set_defaults(func=cmd_predict)

    ensemble = sub.add_parser("ensemble", help="k-model averaged prediction")
    common(ensemble)
    ensemble.add_argument("--ckpt", action="append", required=True,
                          help="checkpoint directory (repeatable)")
    ensemble.add_argument("--enode-ckpt")
    ensemble.add_argument("--input", required=True)
    ensemble.add_argument("--output", required=True)
    ensemble.set_defaults(func=cmd_ensemble)

    evaluate = sub.add_parser("evaluate", help="score predictions against gold")
    common(evaluate)
    evaluate.add_argument("--gold", required=True)
    evaluate.add_argument("--pred", required=True)
    evaluate.add_argument("--mode", choices=list(ALIGN_MODES), default="head")
    evaluate.add_argument("--without-singletons", action="store_true")
    evaluate.add_argument("--enode", action="store_true",
                          help="empty-node intrinsic metrics instead")
    evaluate.set_defaults(func=cmd_evaluate)

    zshot = sub.add_parser("zshot",
                           help="write excluded-language training configs")
    common(zshot)
    zshot.add_argument("--language", required=True)
    zshot.add_argument("--preset", required=True)
    zshot.add_argument("--out-dir", required=True)
    zshot.set_defaults(func=cmd_zshot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as error:
        print(f"data error: {error}", file=sys.stderr)
        return EXIT_DATA
    except (CheckpointError, ModelMismatchError) as error:
        print(f"model error: {error}", file=sys.stderr)
        return EXIT_MODEL
    except ValueError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
