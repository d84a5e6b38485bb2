"""Command-line entry point: ``qeew <subcommand> [options]``.

Exit codes are 0 on success, 1 on runtime or I/O failure and 2 on usage
errors.  ``--defaults FILE`` loads a JSON object whose keys are option
names (``learning_rate``, ``k`` ...) and whose values replace the built-in
defaults; flags given on the command line still win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager

from .catalog import CatalogError, dump_jsonl, read_catalog, read_pairs
from .eekb import Eekb, EekbFormatError, build_eekb, load_eekb, save_eekb
from .embedder import ContrastiveEncoder, encode_text
from .evaluation import CONFIGS, DEFAULT_K_SET, Pipeline, model_weights, oracle_weights, run_ablation
from .expansion import expand_query
from .retrieval import (AdjustConfig, EmbeddingIndex, build_index, expanded_tokens,
                        important_entities, index_from_dict, index_to_dict, parse_candidates,
                        rank_embedding, rank_lexical, ranked_to_dict)
from .serialization import ModelFormatError
from .synthetic import generate_synthetic
from .weights.estimator import EntityWeighter
from .weights.training import label_pairs, predict_weights

logger = logging.getLogger("qeew")

DEFAULT_SEED = 7


class CliError(Exception):
    """A runtime failure reported as a one-line message and exit code 1."""


@contextmanager
def _open(path, mode="r"):
    try:
        fh = open(path, mode, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        yield fh


def _load_catalog(path, max_error_rate):
    with _open(path) as fh:
        entries, report = read_catalog(fh, max_error_rate=max_error_rate)
    return entries, report


def _load_pairs(path):
    with _open(path) as fh:
        return read_pairs(fh)[0]


def _load_eekb(path):
    with _open(path) as fh:
        return load_eekb(fh)


def _load_candidates(path):
    with _open(path) as fh:
        return parse_candidates(fh)


def _load_index(path):
    with _open(path) as fh:
        try:
            return index_from_dict(json.load(fh))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CliError(f"{path}: not an index file ({exc})") from exc


def _load_weighter(path):
    with _open(path) as fh:
        return EntityWeighter.load(fh)


def _load_encoder(path):
    with _open(path) as fh:
        return ContrastiveEncoder.load(fh).encoder_


def _write_json(path, obj):
    with _open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, ensure_ascii=False, indent=1)
        fh.write("\n")


def cmd_ingest(args):
    entries, report = _load_catalog(args.catalog, args.max_error_rate)
    with _open(args.out, "w") as fh:
        dump_jsonl(entries, fh)
    print(json.dumps({"lines": report.lines, "accepted": report.accepted,
                      "unsatisfied": report.unsatisfied, "dropped_entities": report.dropped_entities,
                      "malformed": len(report.errors)}, sort_keys=True))


def cmd_build_eekb(args):
    entries, _ = _load_catalog(args.catalog, args.max_error_rate)
    kb = build_eekb(entries)
    with _open(args.out, "w") as fh:
        save_eekb(kb, fh)
    logger.info("EEKB with %d nodes and %d edges", len(kb.nodes), len(kb.edges))


def cmd_expand(args):
    kb = _load_eekb(args.eekb)
    pairs = _load_pairs(args.pairs)
    out = [expand_query(p.query, p.query_entities, kb, args.k) for p in pairs]
    if args.out:
        with _open(args.out, "w") as fh:
            dump_jsonl(out, fh)
    else:
        dump_jsonl(out, sys.stdout)


def _weighter_from(args):
    keys = ("embed_dim", "vocab_buckets", "attention_heads", "attn_dropout", "clf_dropout",
            "learning_rate", "weight_decay", "epochs", "patience", "batch_size")
    return EntityWeighter(**{k: getattr(args, k) for k in keys}, seed=args.seed)


def cmd_train_weights(args):
    kb = _load_eekb(args.eekb)
    X, y = label_pairs(_load_pairs(args.train), kb, args.k)
    est = _weighter_from(args)
    if args.val:
        X_val, y_val = label_pairs(_load_pairs(args.val), kb, args.k)
        est.fit(X, y, X_val, y_val)
    else:
        est.fit(X, y)
    with _open(args.out, "w") as fh:
        est.save(fh)
    best = est.history_[est.best_epoch_ - 1] if est.best_epoch_ else {}
    print(json.dumps({"best_epoch": est.best_epoch_, **best}, sort_keys=True))


def cmd_train_embedder(args):
    est = ContrastiveEncoder(dim=args.dim, vocab_buckets=args.vocab_buckets, margin=args.margin,
                             learning_rate=args.learning_rate, weight_decay=args.weight_decay,
                             epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    est.fit(_load_pairs(args.pairs))
    with _open(args.out, "w") as fh:
        est.save(fh)


def cmd_index(args):
    cands = _load_candidates(args.candidates)
    _write_json(args.out, index_to_dict(build_index(cands, k1=args.k1, b=args.b)))


def _weights_fn(args):
    if getattr(args, "oracle", False):
        return oracle_weights
    if args.model:
        return model_weights(_load_weighter(args.model).model_)
    return None


def cmd_retrieve(args):
    index = _load_index(args.index)
    kb = _load_eekb(args.eekb) if args.eekb else None
    model = _load_weighter(args.model).model_ if args.model else None
    adjust = AdjustConfig(args.lexical_alpha, args.embedding_alpha)
    emb = None
    if args.mode == "embedding":
        if not args.encoder:
            raise CliError("--mode embedding needs --encoder")
        encoder = _load_encoder(args.encoder)
        emb = EmbeddingIndex.build(encoder, list(index.candidates.values()))
    pairs = _load_pairs(args.pairs)
    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for pair in pairs:
            k = args.k if kb is not None else 0
            xq = expand_query(pair.query, pair.query_entities, kb or Eekb(), k)
            weights = predict_weights(model, xq) if model is not None else None
            boost = important_entities(xq, weights)
            if args.mode == "lexical":
                ranked = rank_lexical(index, expanded_tokens(xq), boost, adjust, args.n)
            else:
                text = " ".join([xq.query] + [e.surface for e in xq.expansions()])
                ranked = rank_embedding(emb, encode_text(encoder, text), boost, adjust, args.n)
            sink.write(json.dumps(ranked_to_dict(pair.query, ranked), sort_keys=True) + "\n")
    finally:
        if sink is not sys.stdout:
            sink.close()


def cmd_eval(args):
    configs = args.config or list(CONFIGS)
    index = _load_index(args.index)
    pipe = Pipeline(eekb=_load_eekb(args.eekb) if args.eekb else None, k=args.k,
                    weight_fn=_weights_fn(args), index=index,
                    adjust=AdjustConfig(args.lexical_alpha, args.embedding_alpha))
    if args.mode == "embedding":
        if not args.encoder:
            raise CliError("--mode embedding needs --encoder")
        pipe.encoder = _load_encoder(args.encoder)
        pipe.embedding_index = EmbeddingIndex.build(pipe.encoder, list(index.candidates.values()))
    report = run_ablation(_load_pairs(args.pairs), pipe, configs, args.k_set, args.mode)
    if args.out:
        _write_json(args.out, report.to_dict())
        print(report.table())
    else:
        print(report.to_json())
        print(report.table(), file=sys.stderr)


def cmd_synth(args):
    corpus = generate_synthetic(args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    files = {"catalog.jsonl": corpus.catalog, "train.jsonl": corpus.train, "val.jsonl": corpus.val,
             "test.jsonl": corpus.test,
             "candidates.jsonl": [{"id": c.id, "text": c.text} for c in corpus.candidates]}
    for name, records in files.items():
        with _open(os.path.join(args.out_dir, name), "w") as fh:
            dump_jsonl(records, fh)


def _k_set(text):
    try:
        ks = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("K values must be positive")
    return ks


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--defaults", metavar="FILE", help="JSON object of option defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qeew", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    def catalog_opts(p):
        p.add_argument("--catalog", required=True)
        p.add_argument("--max-error-rate", type=float, default=0.1)

    def alpha_opts(p):
        p.add_argument("--lexical-alpha", type=float, default=1.5)
        p.add_argument("--embedding-alpha", type=float, default=1.2)

    p = add("ingest", cmd_ingest, "validate a catalog and write the accepted records")
    catalog_opts(p)
    p.add_argument("--out", required=True)

    p = add("build-eekb", cmd_build_eekb, "build the entity expansion knowledge base")
    catalog_opts(p)
    p.add_argument("--out", required=True)

    p = add("expand", cmd_expand, "dump expanded queries as JSON lines")
    p.add_argument("--eekb", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out")

    p = add("train-weights", cmd_train_weights, "train the entity weight model")
    p.add_argument("--eekb", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--vocab-buckets", type=int, default=4096)
    p.add_argument("--attention-heads", type=int, default=4)
    p.add_argument("--attn-dropout", type=float, default=0.3)
    p.add_argument("--clf-dropout", type=float, default=0.5)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=16)

    p = add("train-embedder", cmd_train_embedder, "train the contrastive text encoder")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--vocab-buckets", type=int, default=4096)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)

    p = add("index", cmd_index, "index reformulation candidates")
    p.add_argument("--candidates", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)

    p = add("retrieve", cmd_retrieve, "rank candidates for every query of a pairs file")
    p.add_argument("--index", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--eekb")
    p.add_argument("--model")
    p.add_argument("--encoder")
    p.add_argument("--mode", choices=("lexical", "embedding"), default="lexical")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--out")
    alpha_opts(p)

    p = add("eval", cmd_eval, "P@K ablation over baseline / expansion / weight / full")
    p.add_argument("--index", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--eekb")
    weights = p.add_mutually_exclusive_group()
    weights.add_argument("--model")
    weights.add_argument("--oracle", action="store_true", help="use gold labels as weights")
    p.add_argument("--encoder")
    p.add_argument("--config", action="append", choices=CONFIGS,
                   help="configuration to evaluate (repeatable; default all)")
    p.add_argument("--mode", choices=("lexical", "embedding"), default="lexical")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--k-set", type=_k_set, default=DEFAULT_K_SET)
    p.add_argument("--out")
    alpha_opts(p)

    p = add("synth", cmd_synth, "write the synthetic corpus")
    p.add_argument("--out-dir", default=".")
    return parser


def _apply_defaults(parser, argv):
    """Re-parse with defaults from ``--defaults FILE`` when it is given."""
    args = parser.parse_args(argv)
    if not args.defaults:
        return args
    try:
        with open(args.defaults, encoding="utf-8") as fh:
            overrides = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot open {args.defaults}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.defaults}: invalid JSON ({exc})") from exc
    if not isinstance(overrides, dict):
        raise CliError(f"{args.defaults}: expected a JSON object")
    overrides = {k.replace("-", "_"): v for k, v in overrides.items()}
    unknown = sorted(set(overrides) - set(vars(args)) - {"func"})
    if unknown:
        parser.error(f"unknown keys in {args.defaults}: {', '.join(unknown)}")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**overrides)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_defaults(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except (CliError, CatalogError, EekbFormatError, ModelFormatError, OSError, ValueError) as exc:
        print(f"qeew: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
